//! Labelled synthetic scenarios: a zoned three-layer topology, background
//! noise incidents, and injected cascading failures whose affected nodes
//! either report incidents or stay silent while their KPIs deviate.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::codec::{self, Label};
use crate::error::{Error, Result};
use crate::model::{
    FailureWindow, IncidentLog, IncidentRecord, Interner, KpiId, KpiSeries, KpiStore, Layer,
    Minute, NodeId, Topology, TopologyBuilder, TypeId,
};

/// KPI names carried by every node; failure class `k` disturbs `KPIS[k % 2]`.
pub const KPIS: [&str; 2] = ["cpu_util", "mem_util"];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub zones: usize,
    /// Nodes per zone in the application, platform and infrastructure layers.
    pub layers: [usize; 3],
    /// Probability of a dependency edge between two same-layer nodes of a zone.
    pub dep_prob: f64,
    /// Most lower-layer hosts per node (placement edges).
    pub placement: usize,
    /// Background incidents per node per minute.
    pub noise_rate: f64,
    pub noise_types: usize,
    /// Let background noise also draw failure incident types.
    pub shared_noise: bool,
    pub n_failures: usize,
    pub n_classes: usize,
    /// Incident types per failure class.
    pub types_per_class: usize,
    /// Inject failures in pairs starting at the same minute in different zones.
    pub failure_overlap: bool,
    pub silent_prob: f64,
    pub attenuation: f64,
    pub max_hops: u32,
    pub incidents_per_failure_node: f64,
    pub burst_minutes: u32,
    /// The first `n_ramp` failures rise slowly instead of bursting.
    pub n_ramp: usize,
    pub ramp_minutes: u32,
    /// Incidents per minute at the top of a ramp.
    pub ramp_peak: f64,
    pub kpi_lag_max: u32,
    pub kpi_height: f64,
    pub warmup_minutes: u32,
    pub failure_gap: u32,
    /// Total stream length; 0 derives it from warmup and failure slots.
    pub duration_minutes: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            zones: 4,
            layers: [6, 5, 4],
            dep_prob: 0.25,
            placement: 2,
            noise_rate: 0.01,
            noise_types: 40,
            shared_noise: false,
            n_failures: 25,
            n_classes: 5,
            types_per_class: 9,
            failure_overlap: false,
            silent_prob: 0.3,
            attenuation: 0.7,
            max_hops: 4,
            incidents_per_failure_node: 3.0,
            burst_minutes: 3,
            n_ramp: 0,
            ramp_minutes: 40,
            ramp_peak: 30.0,
            kpi_lag_max: 3,
            kpi_height: 0.4,
            warmup_minutes: 750,
            failure_gap: 150,
            duration_minutes: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn n_nodes(&self) -> usize {
        self.zones * self.layers.iter().sum::<usize>()
    }

    fn slots(&self) -> usize {
        if self.failure_overlap {
            self.n_failures.div_ceil(2)
        } else {
            self.n_failures
        }
    }

    fn failure_len(&self) -> u32 {
        if self.n_ramp > 0 {
            self.burst_minutes.max(self.ramp_minutes)
        } else {
            self.burst_minutes
        }
    }

    pub fn duration(&self) -> Minute {
        if self.duration_minutes > 0 {
            self.duration_minutes
        } else {
            self.warmup_minutes + self.slots() as u32 * self.failure_gap
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0,1], got {p}")))
            }
        };
        prob("silent_prob", self.silent_prob)?;
        prob("dep_prob", self.dep_prob)?;
        prob("attenuation", self.attenuation)?;
        if self.n_failures > 0 && self.n_nodes() == 0 {
            return Err(Error::Config("failures need at least one node".into()));
        }
        if self.n_failures > 0 && (self.n_classes == 0 || self.types_per_class == 0) {
            return Err(Error::Config("failures need classes and types".into()));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return Err(Error::Config("noise_rate must be non-negative".into()));
        }
        if self.noise_rate > 0.0 && self.noise_types == 0 {
            return Err(Error::Config("noise needs noise_types > 0".into()));
        }
        if !(self.incidents_per_failure_node >= 1.0 && self.incidents_per_failure_node.is_finite())
        {
            return Err(Error::Config(
                "incidents_per_failure_node must be at least 1".into(),
            ));
        }
        if self.burst_minutes == 0 || self.ramp_minutes == 0 {
            return Err(Error::Config("failure durations must be positive".into()));
        }
        if self.n_ramp > self.n_failures {
            return Err(Error::Config("n_ramp exceeds n_failures".into()));
        }
        if !(self.ramp_peak >= 0.0 && self.kpi_height > 0.0) {
            return Err(Error::Config(
                "ramp_peak and kpi_height must be positive".into(),
            ));
        }
        if self.failure_overlap && self.zones < 2 {
            return Err(Error::Config("overlapping failures need two zones".into()));
        }
        let need = self.failure_len() + self.kpi_lag_max + self.failure_gap / 4;
        if self.n_failures > 0 && self.failure_gap <= need {
            return Err(Error::Config(format!(
                "failure_gap {} too short for failures of {} minutes",
                self.failure_gap,
                self.failure_len()
            )));
        }
        if self.n_failures > 0
            && self.duration() < self.warmup_minutes + self.slots() as u32 * self.failure_gap
        {
            return Err(Error::Config(
                "duration_minutes cannot hold all failures".into(),
            ));
        }
        if self.duration() == 0 {
            return Err(Error::Config("duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureTruth {
    pub id: u32,
    pub class: usize,
    pub root: NodeId,
    pub window: FailureWindow,
    /// Sorted; includes the root.
    pub affected: Vec<NodeId>,
    /// Sorted subset of `affected` that reported nothing.
    pub silent: Vec<NodeId>,
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// One label per incident record.
    pub labels: Vec<Label>,
    pub failures: Vec<FailureTruth>,
}

impl GroundTruth {
    pub fn windows(&self) -> Vec<FailureWindow> {
        let mut w: Vec<FailureWindow> = self.failures.iter().map(|f| f.window).collect();
        w.sort();
        w.dedup();
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub log: IncidentLog,
    pub kpis: KpiStore,
    pub truth: GroundTruth,
    pub duration: Minute,
}

fn node_name(zone: usize, layer: Layer, i: usize) -> String {
    let tag = match layer {
        Layer::Application => "app",
        Layer::Platform => "plat",
        Layer::Infrastructure => "infra",
    };
    format!("z{zone}-{tag}-{i}")
}

/// `zone_nodes[z][layer]` node ids.
type ZoneNodes = Vec<[Vec<NodeId>; 3]>;

fn build_topology(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<(Topology, ZoneNodes)> {
    let mut tb = TopologyBuilder::new();
    let mut zones: ZoneNodes = Vec::new();
    for z in 0..cfg.zones {
        let mut per: [Vec<NodeId>; 3] = Default::default();
        for (li, layer) in Layer::ALL.iter().enumerate() {
            for i in 0..cfg.layers[li] {
                per[li].push(tb.add_node(&node_name(z, *layer, i), Some(*layer))?);
            }
        }
        zones.push(per);
    }
    for per in &zones {
        // placement: each upper node sits on 1..=placement lower nodes
        for li in 0..2 {
            let lower = &per[li + 1];
            if lower.is_empty() {
                continue;
            }
            for &u in &per[li] {
                let k = rng.random_range(1..=cfg.placement.max(1)).min(lower.len());
                for &v in lower.choose_multiple(rng, k) {
                    tb.add_edge(u, v)?;
                }
            }
        }
        // dependencies inside a layer
        for nodes in &per[..2] {
            for a in 0..nodes.len() {
                for b in a + 1..nodes.len() {
                    if rng.random_bool(cfg.dep_prob) {
                        tb.add_edge(nodes[a], nodes[b])?;
                    }
                }
            }
        }
        for w in per[2].windows(2) {
            tb.add_edge(w[0], w[1])?;
        }
    }
    // zone ring over the infrastructure layer
    if cfg.zones > 1 {
        for z in 0..cfg.zones {
            let nz = (z + 1) % cfg.zones;
            if nz == z || (cfg.zones == 2 && z == 1) {
                continue;
            }
            let pick =
                |per: &[Vec<NodeId>; 3]| per.iter().rev().find(|l| !l.is_empty()).map(|l| l[0]);
            if let (Some(a), Some(b)) = (pick(&zones[z]), pick(&zones[nz])) {
                tb.add_edge(a, b)?;
            }
        }
    }
    Ok((tb.build(), zones))
}

/// BFS spread inside the root's zone: each affected node within `max_hops`
/// of the root passes the failure to each unaffected neighbour with
/// probability `attenuation`.
fn spread(
    topo: &Topology,
    zone_of: &[usize],
    root: NodeId,
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<NodeId> {
    let mut affected = BTreeSet::from([root]);
    let mut queue = VecDeque::from([(root, 0u32)]);
    while let Some((u, hop)) = queue.pop_front() {
        if hop >= cfg.max_hops {
            continue;
        }
        for &v in topo.neighbors(u) {
            if affected.contains(&v) || zone_of[v.index()] != zone_of[root.index()] {
                continue;
            }
            if rng.random_bool(cfg.attenuation) {
                affected.insert(v);
                queue.push_back((v, hop + 1));
            }
        }
    }
    affected.into_iter().collect()
}

struct PendingIncident {
    minute: Minute,
    key: u64,
    node: NodeId,
    itype: TypeId,
    severity: u8,
    label: Label,
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Generates a scenario; a pure function of the configuration.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (topo, zones) = build_topology(cfg, &mut rng)?;
    let mut zone_of = vec![0usize; topo.node_count()];
    for (z, per) in zones.iter().enumerate() {
        for &n in per.iter().flatten() {
            zone_of[n.index()] = z;
        }
    }
    let duration = cfg.duration();

    // vocabularies
    let mut types = Interner::new();
    let class_types: Vec<Vec<TypeId>> = (0..cfg.n_classes)
        .map(|k| {
            (0..cfg.types_per_class)
                .map(|j| TypeId(types.intern(&format!("f{k}-{j}"))))
                .collect()
        })
        .collect();
    let failure_types: Vec<TypeId> = (0..types.len() as u32).map(TypeId).collect();
    let noise_types: Vec<TypeId> = (0..cfg.noise_types)
        .map(|j| TypeId(types.intern(&format!("noise-{j}"))))
        .collect();

    // each class recurs at a fixed root inside its home zone
    let class_roots: Vec<NodeId> = (0..cfg.n_classes)
        .map(|k| {
            let z = k % cfg.zones.max(1);
            let all: Vec<NodeId> = zones[z].iter().flatten().copied().collect();
            *all.choose(&mut rng).expect("zone has nodes")
        })
        .collect();

    let mut pending: Vec<PendingIncident> = Vec::new();
    let mut failures: Vec<FailureTruth> = Vec::new();
    // (node, kpi, onset, length)
    let mut pulses: Vec<(NodeId, usize, Minute, u32)> = Vec::new();

    let mut slot_start = 0;
    for f in 0..cfg.n_failures {
        let paired = cfg.failure_overlap && f % 2 == 1;
        let class = if paired {
            let prev_zone = failures[f - 1].class % cfg.zones;
            let options: Vec<usize> = (0..cfg.n_classes)
                .filter(|k| k % cfg.zones != prev_zone)
                .collect();
            *options
                .choose(&mut rng)
                .ok_or_else(|| Error::Config("overlap needs classes in two zones".into()))?
        } else {
            f % cfg.n_classes
        };
        if !paired {
            let slot = if cfg.failure_overlap { f / 2 } else { f } as u32;
            let jitter = rng.random_range(0..=cfg.failure_gap / 4);
            slot_start = cfg.warmup_minutes + slot * cfg.failure_gap + jitter;
        }
        let start = slot_start;
        let ramp = f < cfg.n_ramp;
        let len = if ramp {
            cfg.ramp_minutes
        } else {
            cfg.burst_minutes
        };
        let window = FailureWindow::new(start, start + len - 1)?;

        let root = class_roots[class];
        let affected = spread(&topo, &zone_of, root, cfg, &mut rng);
        let mut reporting = Vec::new();
        let mut silent = Vec::new();
        for &n in &affected {
            if n != root && rng.random_bool(cfg.silent_prob) {
                silent.push(n);
            } else {
                reporting.push(n);
            }
        }
        let kpi = class % KPIS.len();
        for &n in &affected {
            let lag = rng.random_range(0..=cfg.kpi_lag_max);
            pulses.push((n, kpi, start + lag, len));
        }
        let vocab = &class_types[class];
        let label = Label::Failure(f as u32);
        if ramp {
            let mut order = reporting.clone();
            order.shuffle(&mut rng);
            let mut emitted = 0usize;
            for t in 0..len {
                let rate = cfg.ramp_peak * (t + 1) as f64 / len as f64;
                let count = poisson(&mut rng, rate);
                for _ in 0..count {
                    let n = if emitted < order.len() {
                        order[emitted]
                    } else {
                        *order.choose(&mut rng).expect("root reports")
                    };
                    emitted += 1;
                    let itype = *vocab.choose(&mut rng).expect("types");
                    pending.push(PendingIncident {
                        minute: start + t,
                        key: rng.random(),
                        node: n,
                        itype,
                        severity: rng.random_range(1..=4),
                        label,
                    });
                }
            }
        } else {
            for &n in &reporting {
                let count = 1 + poisson(&mut rng, cfg.incidents_per_failure_node - 1.0);
                for _ in 0..count {
                    let itype = *vocab.choose(&mut rng).expect("types");
                    pending.push(PendingIncident {
                        minute: start + rng.random_range(0..len),
                        key: rng.random(),
                        node: n,
                        itype,
                        severity: rng.random_range(1..=4),
                        label,
                    });
                }
            }
        }
        let mut vocabulary: Vec<String> =
            vocab.iter().map(|&t| types.name(t.0).to_string()).collect();
        vocabulary.sort();
        failures.push(FailureTruth {
            id: f as u32,
            class,
            root,
            window,
            affected,
            silent,
            vocabulary,
        });
    }

    // background noise
    let n_nodes = topo.node_count();
    if cfg.noise_rate > 0.0 && n_nodes > 0 {
        let shared: Vec<TypeId> = if cfg.shared_noise {
            noise_types.iter().chain(&failure_types).copied().collect()
        } else {
            noise_types.clone()
        };
        for m in 0..duration {
            let count = poisson(&mut rng, cfg.noise_rate * n_nodes as f64);
            for _ in 0..count {
                pending.push(PendingIncident {
                    minute: m,
                    key: rng.random(),
                    node: NodeId(rng.random_range(0..n_nodes as u32)),
                    itype: *shared.choose(&mut rng).expect("noise types"),
                    severity: rng.random_range(1..=2),
                    label: Label::Noise,
                });
            }
        }
    }
    pending.retain(|p| p.minute < duration);
    pending.sort_by_key(|p| (p.minute, p.key));
    let labels: Vec<Label> = pending.iter().map(|p| p.label).collect();
    let records: Vec<IncidentRecord> = pending
        .iter()
        .map(|p| IncidentRecord {
            minute: p.minute,
            node: p.node,
            itype: p.itype,
            severity: p.severity,
        })
        .collect();
    let log = IncidentLog::new(types, records)?;

    // KPIs: baseline plus noise, square pulses on affected nodes
    let noise = Normal::new(0.0, 0.05 * cfg.kpi_height)
        .map_err(|e| Error::Config(format!("kpi noise: {e}")))?;
    let mut names = Interner::new();
    for k in KPIS {
        names.intern(k);
    }
    let mut series = Vec::new();
    for n in topo.node_ids() {
        for k in 0..KPIS.len() {
            let base = rng.random_range(0.2..0.5);
            let mut values: Vec<f64> = (0..duration)
                .map(|_| base + noise.sample(&mut rng))
                .collect();
            for &(pn, pk, onset, plen) in &pulses {
                if pn != n || pk != k {
                    continue;
                }
                let hi = (onset + plen).min(duration);
                for v in &mut values[onset.min(duration) as usize..hi as usize] {
                    *v += cfg.kpi_height;
                }
            }
            let values = values.into_iter().map(round3).collect();
            series.push(KpiSeries::new(n, KpiId(k as u32), 0, values)?);
        }
    }
    let kpis = KpiStore::new(names, series);

    Ok(Scenario {
        topology: topo,
        log,
        kpis,
        truth: GroundTruth { labels, failures },
        duration,
    })
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |p| p.sample(rng) as u64)
}

pub fn format_failures(truth: &GroundTruth, topo: &Topology) -> String {
    let join = |ns: &[NodeId]| {
        ns.iter()
            .map(|&n| topo.name(n))
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut out = String::new();
    for f in &truth.failures {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f.id,
            f.class,
            f.window.start,
            f.window.end,
            topo.name(f.root),
            join(&f.affected),
            join(&f.silent)
        );
    }
    out
}

/// File names written by [`write_scenario`].
pub mod files {
    pub const TOPOLOGY: &str = "topology.txt";
    pub const INCIDENTS: &str = "incidents.txt";
    pub const KPIS: &str = "kpis.txt";
    pub const GROUND_TRUTH: &str = "ground_truth.txt";
    pub const TRUTH_WINDOWS: &str = "truth_windows.txt";
    pub const FAILURES: &str = "failures.txt";
}

pub fn write_scenario(dir: &Path, s: &Scenario) -> Result<()> {
    codec::save_topology(&dir.join(files::TOPOLOGY), &s.topology)?;
    codec::write_text(
        &dir.join(files::INCIDENTS),
        &codec::format_incidents(&s.log, &s.topology),
    )?;
    codec::write_text(
        &dir.join(files::KPIS),
        &codec::format_kpis(&s.kpis, &s.topology),
    )?;
    codec::write_text(
        &dir.join(files::GROUND_TRUTH),
        &codec::format_labels(&s.truth.labels),
    )?;
    codec::write_text(
        &dir.join(files::TRUTH_WINDOWS),
        &codec::format_windows(&s.truth.windows()),
    )?;
    codec::write_text(
        &dir.join(files::FAILURES),
        &format_failures(&s.truth, &s.topology),
    )?;
    Ok(())
}
