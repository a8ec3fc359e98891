use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use incagg::aggregator::{aggregate_stream, group_rows, AggregatorConfig, OnlineAggregator};
use incagg::codec::{self, Label};
use incagg::config::{self, KvConfig};
use incagg::detector::{
    count_per_minute, detect_partitioned, detect_series, fixed_threshold_detect, merge_windows,
    EvtConfig, EvtDetector,
};
use incagg::embedding::{generate_walks, train, WalkConfig};
use incagg::impact::{build_all, ImpactConfig};
use incagg::metrics::{nmi, score_detection};
use incagg::model::{HopDistances, IncidentLog, Minute, Topology, TopologyBuilder};
use incagg::pipeline::{run_pipeline, Mode, PipelineConfig};
use incagg::simulator::{generate_scenario, write_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "incagg",
    version,
    about = "Incident aggregation over cloud topologies"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectMode {
    Evt,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionKey {
    None,
    /// Node name up to its first `-`.
    NodePrefix,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Detect,
    Aggregate,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunMode {
    Full,
    NoCompletion,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labelled synthetic scenario.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find failure windows in an incident stream.
    Detect {
        #[arg(long)]
        incidents: PathBuf,
        /// Node table; derived from the incident file when absent.
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "evt")]
        mode: DetectMode,
        #[arg(long, default_value_t = 50)]
        threshold: u64,
        #[arg(long, default_value_t = 1e-3)]
        risk_q: f64,
        #[arg(long, default_value_t = 0.02)]
        peak_frac: f64,
        #[arg(long, default_value_t = 288)]
        calib_minutes: usize,
        #[arg(long, value_enum, default_value = "none")]
        partition: PartitionKey,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build failure-impact graphs for each window.
    Impact {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        incidents: PathBuf,
        #[arg(long)]
        kpis: PathBuf,
        #[arg(long)]
        windows: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reporting nodes only, no silent-node completion.
        #[arg(long)]
        no_completion: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn incident-type embeddings from impact graphs.
    Train {
        #[arg(long)]
        impact_graphs: PathBuf,
        #[arg(long)]
        topology: PathBuf,
        /// Incident file the graphs index into.
        #[arg(long)]
        incidents: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Group incidents online.
    Aggregate {
        #[arg(long)]
        incidents: PathBuf,
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        lambda: f64,
        #[arg(long, default_value_t = 4)]
        tau: u32,
        /// Group only inside these windows instead of detecting online.
        #[arg(long)]
        windows: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        risk_q: f64,
        #[arg(long, default_value_t = 288)]
        calib_minutes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score windows or groups against ground truth.
    Eval {
        #[arg(long, value_enum)]
        mode: EvalMode,
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Incident file the groups were built from (aggregate mode).
        #[arg(long)]
        incidents: Option<PathBuf>,
        #[arg(long)]
        topology: Option<PathBuf>,
    },
    /// Run every stage end to end.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        mode: RunMode,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate { config, out } => simulate(&config, &out),
        Cmd::Detect {
            incidents,
            topology,
            mode,
            threshold,
            risk_q,
            peak_frac,
            calib_minutes,
            partition,
            out,
        } => {
            let cfg = EvtConfig {
                risk_q,
                peak_frac,
                calib_n: calib_minutes,
            };
            detect(
                &incidents,
                topology.as_deref(),
                mode,
                threshold,
                cfg,
                partition,
                &out,
            )
        }
        Cmd::Impact {
            topology,
            incidents,
            kpis,
            windows,
            seed,
            no_completion,
            out,
        } => {
            let topo = codec::load_topology(&topology)?;
            let log = codec::load_incidents(&incidents, &topo)?;
            let kpis = codec::load_kpis(&kpis, &topo)?;
            let windows = codec::load_windows(&windows)?;
            let cfg = ImpactConfig {
                completion: !no_completion,
                ..ImpactConfig::default()
            };
            let graphs = build_all(&topo, &log, &kpis, &windows, cfg, seed)?;
            codec::save_impact_graphs(&out, &graphs, &topo)?;
            println!("windows={} impact_graphs={}", windows.len(), graphs.len());
            Ok(())
        }
        Cmd::Train {
            impact_graphs,
            topology,
            incidents,
            config,
            out,
        } => {
            let mut cfg = WalkConfig::default();
            if let Some(p) = config {
                let kv = KvConfig::load(&p)?;
                config::apply_walk(&kv, &mut cfg)?;
                kv.finish()?;
            }
            let topo = codec::load_topology(&topology)?;
            let log = codec::load_incidents(&incidents, &topo)?;
            let graphs = codec::load_impact_graphs(&impact_graphs, &topo)?;
            let corpus = generate_walks(&graphs, &topo, &log, &cfg)?;
            let emb = train(&corpus, &cfg)?;
            codec::save_embedding(&out, &emb)?;
            println!("sequences={} vocabulary={}", corpus.len(), emb.len());
            Ok(())
        }
        Cmd::Aggregate {
            incidents,
            embedding,
            topology,
            lambda,
            tau,
            windows,
            risk_q,
            calib_minutes,
            out,
        } => {
            let cfg = AggregatorConfig { lambda, tau };
            let evt = EvtConfig {
                risk_q,
                calib_n: calib_minutes,
                ..EvtConfig::default()
            };
            aggregate(
                &incidents,
                &embedding,
                &topology,
                cfg,
                windows.as_deref(),
                evt,
                &out,
            )
        }
        Cmd::Eval {
            mode,
            predicted,
            truth,
            incidents,
            topology,
        } => {
            let line = match mode {
                EvalMode::Detect => eval_detect(&predicted, &truth)?,
                EvalMode::Aggregate => {
                    let incidents = incidents
                        .context("aggregate evaluation needs --incidents to align groups")?;
                    eval_aggregate(&predicted, &truth, &incidents, topology.as_deref())?
                }
            };
            println!("{line}");
            Ok(())
        }
        Cmd::Pipeline { config, mode, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let mode = match mode {
                RunMode::Full => Mode::Full,
                RunMode::NoCompletion => Mode::NoCompletion,
            };
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let report = run_pipeline(&cfg, mode, Some(&out))?;
            print!("{report}");
            Ok(())
        }
    }
}

fn simulate(config: &Path, out: &Path) -> Result<()> {
    let kv = KvConfig::load(config)?;
    let mut cfg = ScenarioConfig::default();
    config::apply_scenario(&kv, &mut cfg)?;
    kv.finish()?;
    let s = generate_scenario(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_scenario(out, &s)?;
    println!(
        "nodes={} incidents={} failures={} minutes={}",
        s.topology.node_count(),
        s.log.len(),
        s.truth.failures.len(),
        s.duration
    );
    Ok(())
}

/// Topology given on the command line, or one unconnected node per name
/// seen in the incident file.
fn topology_for(incidents: &Path, topology: Option<&Path>) -> Result<Topology> {
    if let Some(p) = topology {
        return Ok(codec::load_topology(p)?);
    }
    let text = codec::read_text(incidents)?;
    let mut tb = TopologyBuilder::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if let Some(node) = line.split(',').nth(1) {
            if tb.node(node).is_none() {
                tb.add_node(node, None)?;
            }
        }
    }
    Ok(tb.build())
}

fn detect(
    incidents: &Path,
    topology: Option<&Path>,
    mode: DetectMode,
    threshold: u64,
    cfg: EvtConfig,
    partition: PartitionKey,
    out: &Path,
) -> Result<()> {
    let topo = topology_for(incidents, topology)?;
    let log = codec::load_incidents(incidents, &topo)?;
    let end = log.end_minute();
    let windows = match (mode, partition) {
        (DetectMode::Fixed, PartitionKey::None) => {
            fixed_threshold_detect(&count_per_minute(&log.records, 0, end)?, 0, threshold)
        }
        (DetectMode::Fixed, PartitionKey::NodePrefix) => {
            let mut parts: BTreeMap<&str, Vec<_>> = BTreeMap::new();
            for r in &log.records {
                parts.entry(prefix(topo.name(r.node))).or_default().push(*r);
            }
            let mut lists = Vec::new();
            for recs in parts.values() {
                lists.push(fixed_threshold_detect(
                    &count_per_minute(recs, 0, end)?,
                    0,
                    threshold,
                ));
            }
            merge_windows(lists)
        }
        (DetectMode::Evt, PartitionKey::None) => {
            detect_series(&count_per_minute(&log.records, 0, end)?, 0, cfg)?.0
        }
        (DetectMode::Evt, PartitionKey::NodePrefix) => {
            let parts = detect_partitioned(&log.records, 0, end, cfg, |r| {
                prefix(topo.name(r.node)).to_string()
            })?;
            merge_windows(parts.into_values())
        }
    };
    codec::write_text(out, &codec::format_windows(&windows))?;
    println!("windows={}", windows.len());
    Ok(())
}

fn prefix(name: &str) -> &str {
    name.split_once('-').map_or(name, |(p, _)| p)
}

fn aggregate(
    incidents: &Path,
    embedding: &Path,
    topology: &Path,
    cfg: AggregatorConfig,
    windows: Option<&Path>,
    evt: EvtConfig,
    out: &Path,
) -> Result<()> {
    let topo = codec::load_topology(topology)?;
    let log = codec::load_incidents(incidents, &topo)?;
    let emb = codec::load_embedding(embedding)?;
    let hops = HopDistances::new(&topo);
    let groups = match windows {
        Some(w) => {
            let mut agg = OnlineAggregator::new(&emb, &hops, &log, cfg)?;
            for w in codec::load_windows(w)? {
                for i in log.indices_in(w.start, w.end) {
                    agg.push(i, log.records[i]);
                }
                agg.close_window();
            }
            agg.finish()
        }
        None => {
            let end = log.end_minute();
            let counts = count_per_minute(&log.records, 0, end)?;
            if counts.len() <= evt.calib_n {
                bail!(
                    "stream of {} minutes is too short to calibrate on {}",
                    counts.len(),
                    evt.calib_n
                );
            }
            let sample: Vec<f64> = counts[..evt.calib_n].iter().map(|&c| c as f64).collect();
            let mut det = EvtDetector::new(evt)?;
            det.calibrate(&sample)?;
            aggregate_stream(&log, evt.calib_n as Minute, end, &emb, &hops, &mut det, cfg)?.groups
        }
    };
    let rows = group_rows(&groups, &log, &topo);
    codec::write_text(out, &codec::format_groups(&rows))?;
    println!("groups={} incidents={}", groups.len(), rows.len());
    Ok(())
}

fn eval_detect(predicted: &Path, truth: &Path) -> Result<String> {
    let p = codec::load_windows(predicted)?;
    let t = codec::load_windows(truth)?;
    let s = score_detection(&p, &t);
    Ok(format!(
        "tp={} fp={} fn={} precision={:.6} recall={:.6} f1={:.6}",
        s.tp, s.fp, s.fn_, s.precision, s.recall, s.f1
    ))
}

/// Matches group rows back to incident indices: rows with the same
/// (minute, node, type) take the matching records in stream order.
fn eval_aggregate(
    predicted: &Path,
    truth: &Path,
    incidents: &Path,
    topology: Option<&Path>,
) -> Result<String> {
    let topo = topology_for(incidents, topology)?;
    let log: IncidentLog = codec::load_incidents(incidents, &topo)?;
    let labels = codec::parse_labels(&codec::read_text(truth)?, truth)?;
    if labels.len() != log.len() {
        bail!("{} labels for {} incidents", labels.len(), log.len());
    }
    let mut slots: HashMap<(Minute, &str, &str), VecDeque<usize>> = HashMap::new();
    for (i, r) in log.records.iter().enumerate() {
        slots
            .entry((r.minute, topo.name(r.node), log.type_name(r.itype)))
            .or_default()
            .push_back(i);
    }
    let rows = codec::parse_groups(&codec::read_text(predicted)?, predicted)?;
    let mut pairs = Vec::new();
    let mut groups = BTreeSet::new();
    for r in &rows {
        let i = slots
            .get_mut(&(r.minute, r.node.as_str(), r.itype.as_str()))
            .and_then(VecDeque::pop_front)
            .with_context(|| {
                format!(
                    "group row {},{},{} matches no remaining incident",
                    r.minute, r.node, r.itype
                )
            })?;
        groups.insert(r.group_id);
        if let Label::Failure(f) = labels[i] {
            pairs.push((i, r.group_id, f));
        }
    }
    pairs.sort_unstable();
    let (omega, classes): (Vec<usize>, Vec<u32>) =
        pairs.into_iter().map(|(_, g, f)| (g, f)).unzip();
    let score = if omega.is_empty() {
        "NA".to_string()
    } else {
        format!("{:.6}", nmi(&omega, &classes)?)
    };
    Ok(format!(
        "nmi={score} groups={} grouped={} failure_incidents={}",
        groups.len(),
        rows.len(),
        omega.len()
    ))
}
