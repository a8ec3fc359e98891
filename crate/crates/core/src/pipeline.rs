//! End-to-end run: simulate, detect, build impact graphs, embed, aggregate
//! online and score.

use std::fmt;
use std::path::{Path, PathBuf};

use log::info;

use crate::aggregator::{aggregate_stream, group_rows, AggregatorConfig};
use crate::codec::{self, Label};
use crate::config::{self, KvConfig};
use crate::detector::{count_per_minute, detect_failures, EvtConfig, EvtDetector};
use crate::embedding::{generate_walks, train, WalkConfig};
use crate::error::{Error, Result};
use crate::impact::{build_all, ImpactConfig};
use crate::metrics::{label_clustering, nmi, score_detection};
use crate::model::{FailureWindow, HopDistances, IncidentLog, KpiStore, Minute, Topology};
use crate::simulator::{self, generate_scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    NoCompletion,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoCompletion => "no-completion",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "full" => Ok(Mode::Full),
            "no-completion" => Ok(Mode::NoCompletion),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub evt: EvtConfig,
    pub impact: ImpactConfig,
    pub walk: WalkConfig,
    pub aggregator: AggregatorConfig,
    /// Fraction of the timeline used for learning; the rest is evaluated.
    pub split: f64,
    /// Directory with existing `topology.txt`, `incidents.txt`, `kpis.txt`
    /// and optionally `ground_truth.txt` / `truth_windows.txt`; replaces the
    /// simulated scenario.
    pub data_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenario: ScenarioConfig::default(),
            evt: EvtConfig::default(),
            impact: ImpactConfig::default(),
            walk: WalkConfig::default(),
            aggregator: AggregatorConfig::default(),
            split: 0.833,
            data_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Applies every key of a flat config; `seed` drives all stages.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut c = PipelineConfig::default();
        kv.set("seed", &mut c.seed)?;
        config::apply_scenario(kv, &mut c.scenario)?;
        config::apply_evt(kv, &mut c.evt)?;
        config::apply_impact(kv, &mut c.impact)?;
        config::apply_walk(kv, &mut c.walk)?;
        config::apply_aggregator(kv, &mut c.aggregator)?;
        kv.set("split", &mut c.split)?;
        if let Some(d) = kv.get_str("data_dir") {
            c.data_dir = Some(PathBuf::from(d));
        }
        kv.finish()?;
        let seed = c.seed;
        Ok(c.with_seed(seed))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvConfig::load(path)?)
    }

    /// Sets the run seed for every stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.scenario.seed = seed;
        self.walk.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!(
                "split must be in (0,1), got {}",
                self.split
            )));
        }
        self.evt.validate()?;
        self.impact.validate()?;
        self.walk.validate()?;
        self.aggregator.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub mode: Mode,
    pub seed: u64,
    pub incidents: usize,
    pub split_minute: Minute,
    pub train_windows: usize,
    pub impact_graphs: usize,
    pub vocabulary: usize,
    pub eval_windows: usize,
    pub groups: usize,
    pub detect_precision: f64,
    pub detect_recall: f64,
    pub detect_f1: f64,
    /// Failure incidents after the split that ended up in a group.
    pub grouped_failure_incidents: usize,
    pub eval_failure_incidents: usize,
    pub nmi: Option<f64>,
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
        writeln!(f, "mode={}", self.mode.as_str())?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "incidents={}", self.incidents)?;
        writeln!(f, "split_minute={}", self.split_minute)?;
        writeln!(f, "train_windows={}", self.train_windows)?;
        writeln!(f, "impact_graphs={}", self.impact_graphs)?;
        writeln!(f, "vocabulary={}", self.vocabulary)?;
        writeln!(f, "eval_windows={}", self.eval_windows)?;
        writeln!(f, "groups={}", self.groups)?;
        writeln!(f, "detect_precision={:.6}", self.detect_precision)?;
        writeln!(f, "detect_recall={:.6}", self.detect_recall)?;
        writeln!(f, "detect_f1={:.6}", self.detect_f1)?;
        writeln!(
            f,
            "grouped_failure_incidents={}",
            self.grouped_failure_incidents
        )?;
        writeln!(f, "eval_failure_incidents={}", self.eval_failure_incidents)?;
        writeln!(f, "nmi={}", opt(self.nmi))
    }
}

struct Inputs {
    topo: Topology,
    log: IncidentLog,
    kpis: KpiStore,
    labels: Option<Vec<Label>>,
    truth_windows: Option<Vec<FailureWindow>>,
    duration: Minute,
}

fn load_inputs(dir: &Path) -> Result<Inputs> {
    let topo = codec::load_topology(&dir.join(simulator::files::TOPOLOGY))?;
    let log = codec::load_incidents(&dir.join(simulator::files::INCIDENTS), &topo)?;
    let kpis = codec::load_kpis(&dir.join(simulator::files::KPIS), &topo)?;
    let gt = dir.join(simulator::files::GROUND_TRUTH);
    let labels = if gt.exists() {
        Some(codec::parse_labels(&codec::read_text(&gt)?, &gt)?)
    } else {
        None
    };
    let tw = dir.join(simulator::files::TRUTH_WINDOWS);
    let truth_windows = if tw.exists() {
        Some(codec::load_windows(&tw)?)
    } else {
        None
    };
    let kpi_end = kpis
        .series()
        .iter()
        .map(|s| s.start_minute + s.values.len() as Minute)
        .max()
        .unwrap_or(0);
    let duration = log.end_minute().max(kpi_end);
    Ok(Inputs {
        topo,
        log,
        kpis,
        labels,
        truth_windows,
        duration,
    })
}

/// Runs every stage; artifacts are written under `out` when given.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    mode: Mode,
    out: Option<&Path>,
) -> Result<PipelineReport> {
    cfg.validate()?;
    let inputs = match &cfg.data_dir {
        Some(d) => load_inputs(d).map_err(|e| e.in_stage("load"))?,
        None => {
            let s = generate_scenario(&cfg.scenario).map_err(|e| e.in_stage("simulate"))?;
            if let Some(o) = out {
                simulator::write_scenario(o, &s).map_err(|e| e.in_stage("simulate"))?;
            }
            let truth_windows = s.truth.windows();
            Inputs {
                topo: s.topology,
                log: s.log,
                kpis: s.kpis,
                labels: Some(s.truth.labels),
                truth_windows: Some(truth_windows),
                duration: s.duration,
            }
        }
    };
    let Inputs {
        topo,
        log,
        kpis,
        labels,
        truth_windows,
        duration,
    } = inputs;
    let split = ((cfg.split * duration as f64).floor() as Minute).max(cfg.evt.calib_n as Minute);
    info!(
        "{} incidents over {duration} minutes, split at {split}",
        log.len()
    );

    // detect on the learning part
    let stage = |s: &'static str| move |e: Error| e.in_stage(s);
    let counts =
        count_per_minute(&log.records, 0, duration.saturating_sub(1)).map_err(stage("detect"))?;
    if counts.len() <= cfg.evt.calib_n {
        return Err(Error::InvalidInput(format!(
            "stream of {} minutes is too short to calibrate on {}",
            counts.len(),
            cfg.evt.calib_n
        ))
        .in_stage("detect"));
    }
    let calib: Vec<f64> = counts[..cfg.evt.calib_n]
        .iter()
        .map(|&c| c as f64)
        .collect();
    let mut det = EvtDetector::new(cfg.evt).map_err(stage("detect"))?;
    det.calibrate(&calib).map_err(stage("detect"))?;
    let train_windows = detect_failures(
        &counts[cfg.evt.calib_n..split as usize],
        cfg.evt.calib_n as Minute,
        &mut det,
    )
    .map_err(stage("detect"))?;
    if let Some(o) = out {
        codec::write_text(
            &o.join("windows.txt"),
            &codec::format_windows(&train_windows),
        )
        .map_err(stage("detect"))?;
    }

    // impact graphs
    let impact_cfg = ImpactConfig {
        completion: mode == Mode::Full,
        ..cfg.impact
    };
    let graphs = build_all(&topo, &log, &kpis, &train_windows, impact_cfg, cfg.seed)
        .map_err(stage("impact"))?;
    if let Some(o) = out {
        codec::save_impact_graphs(&o.join("impact_graphs"), &graphs, &topo)
            .map_err(stage("impact"))?;
    }

    // embedding
    let corpus = generate_walks(&graphs, &topo, &log, &cfg.walk).map_err(stage("train"))?;
    let emb = train(&corpus, &cfg.walk).map_err(stage("train"))?;
    if let Some(o) = out {
        codec::save_embedding(&o.join("embedding.txt"), &emb).map_err(stage("train"))?;
    }

    // online aggregation over the evaluation part
    let hops = HopDistances::new(&topo);
    let outcome = aggregate_stream(
        &log,
        split,
        duration.saturating_sub(1),
        &emb,
        &hops,
        &mut det,
        cfg.aggregator,
    )
    .map_err(stage("aggregate"))?;
    if let Some(o) = out {
        let rows = group_rows(&outcome.groups, &log, &topo);
        codec::write_text(&o.join("groups.txt"), &codec::format_groups(&rows))
            .map_err(stage("aggregate"))?;
    }

    // evaluation
    let (mut p, mut r, mut f1) = (f64::NAN, f64::NAN, f64::NAN);
    if let Some(tw) = &truth_windows {
        let mut predicted = train_windows.clone();
        predicted.extend(outcome.windows.iter().copied());
        let relevant: Vec<FailureWindow> = tw
            .iter()
            .filter(|w| w.end >= cfg.evt.calib_n as Minute)
            .copied()
            .collect();
        let s = score_detection(&predicted, &relevant);
        (p, r, f1) = (s.precision, s.recall, s.f1);
    }
    let (mut grouped, mut eval_failure, mut score) = (0, 0, None);
    if let Some(labels) = &labels {
        let (omega, classes) = label_clustering(&outcome.groups, labels).map_err(stage("eval"))?;
        grouped = omega.len();
        let range = log.indices_in(split, duration);
        eval_failure = range
            .filter(|&i| matches!(labels[i], Label::Failure(_)))
            .count();
        if !omega.is_empty() {
            score = Some(nmi(&omega, &classes).map_err(stage("eval"))?);
        }
    }
    let report = PipelineReport {
        mode,
        seed: cfg.seed,
        incidents: log.len(),
        split_minute: split,
        train_windows: train_windows.len(),
        impact_graphs: graphs.len(),
        vocabulary: emb.len(),
        eval_windows: outcome.windows.len(),
        groups: outcome.groups.len(),
        detect_precision: p,
        detect_recall: r,
        detect_f1: f1,
        grouped_failure_incidents: grouped,
        eval_failure_incidents: eval_failure,
        nmi: score,
    };
    if let Some(o) = out {
        codec::write_text(&o.join("report.txt"), &report.to_string()).map_err(stage("eval"))?;
    }
    Ok(report)
}
