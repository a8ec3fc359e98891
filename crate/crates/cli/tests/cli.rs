use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use incagg::codec;
use incagg::pipeline::PipelineConfig;

const SIM: &str = "seed=3\nzones=2\nlayers=4,3,2\nn_failures=6\nn_classes=3\nwarmup_minutes=300\n";

fn incagg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_incagg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = incagg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path) -> PathBuf {
    let cfg = dir.join("sim.cfg");
    fs::write(&cfg, SIM).unwrap();
    let data = dir.join("data");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    data
}

#[test]
fn stages_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let data = simulate(d);
    let topo_f = data.join("topology.txt");
    let inc_f = data.join("incidents.txt");
    let topo = codec::load_topology(&topo_f).unwrap();
    let log = codec::load_incidents(&inc_f, &topo).unwrap();
    codec::load_kpis(&data.join("kpis.txt"), &topo).unwrap();
    let labels = codec::parse_labels(
        &fs::read_to_string(data.join("ground_truth.txt")).unwrap(),
        Path::new("gt"),
    )
    .unwrap();
    assert_eq!(labels.len(), log.len());

    let win = d.join("win.txt");
    ok(&[
        "detect",
        "--incidents",
        s(&inc_f),
        "--calib-minutes",
        "300",
        "--out",
        s(&win),
    ]);
    let windows = codec::load_windows(&win).unwrap();
    assert!(!windows.is_empty());
    for line in fs::read_to_string(&win).unwrap().lines() {
        let (a, b) = line.split_once(',').unwrap();
        assert!(a.parse::<u32>().unwrap() <= b.parse::<u32>().unwrap());
    }
    let report = ok(&[
        "eval",
        "--mode",
        "detect",
        "--predicted",
        s(&win),
        "--truth",
        s(&data.join("truth_windows.txt")),
    ]);
    assert_eq!(report.lines().count(), 1);
    assert!(report.contains("recall=1.000000"), "{report}");

    let graphs = d.join("graphs");
    ok(&[
        "impact",
        "--topology",
        s(&topo_f),
        "--incidents",
        s(&inc_f),
        "--kpis",
        s(&data.join("kpis.txt")),
        "--windows",
        s(&win),
        "--seed",
        "3",
        "--out",
        s(&graphs),
    ]);
    let loaded = codec::load_impact_graphs(&graphs, &topo).unwrap();
    assert!(!loaded.is_empty());
    for g in &loaded {
        g.validate(&topo, &log).unwrap();
    }

    let walk = d.join("walk.cfg");
    fs::write(&walk, "dim=16\nepochs=2\n").unwrap();
    let emb_f = d.join("emb.txt");
    ok(&[
        "train",
        "--impact-graphs",
        s(&graphs),
        "--topology",
        s(&topo_f),
        "--incidents",
        s(&inc_f),
        "--config",
        s(&walk),
        "--out",
        s(&emb_f),
    ]);
    let emb = codec::load_embedding(&emb_f).unwrap();
    assert_eq!(emb.dim(), 16);

    let groups = d.join("groups.txt");
    ok(&[
        "aggregate",
        "--incidents",
        s(&inc_f),
        "--embedding",
        s(&emb_f),
        "--topology",
        s(&topo_f),
        "--lambda",
        "0.7",
        "--tau",
        "4",
        "--windows",
        s(&data.join("truth_windows.txt")),
        "--out",
        s(&groups),
    ]);
    let rows = codec::parse_groups(&fs::read_to_string(&groups).unwrap(), &groups).unwrap();
    assert!(!rows.is_empty());
    let report = ok(&[
        "eval",
        "--mode",
        "aggregate",
        "--predicted",
        s(&groups),
        "--truth",
        s(&data.join("ground_truth.txt")),
        "--incidents",
        s(&inc_f),
        "--topology",
        s(&topo_f),
    ]);
    let nmi: f64 = report
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("nmi="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(nmi >= 0.8, "{report}");
}

#[test]
fn detect_eval_report_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, t) = (tmp.path().join("p.txt"), tmp.path().join("t.txt"));
    fs::write(&p, "11,11\n20,20\n").unwrap();
    fs::write(&t, "10,12\n40,40\n").unwrap();
    let out = ok(&[
        "eval",
        "--mode",
        "detect",
        "--predicted",
        s(&p),
        "--truth",
        s(&t),
    ]);
    assert_eq!(
        out,
        "tp=1 fp=1 fn=1 precision=0.500000 recall=0.500000 f1=0.500000\n"
    );
}

#[test]
fn fixed_and_partitioned_detection() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path());
    let inc = data.join("incidents.txt");
    let topo = data.join("topology.txt");
    for extra in [
        vec!["--mode", "fixed", "--threshold", "5"],
        vec!["--partition", "node-prefix", "--calib-minutes", "300"],
    ] {
        let out = tmp.path().join("w.txt");
        let mut args = vec!["detect", "--incidents", s(&inc), "--topology", s(&topo)];
        args.extend(extra);
        args.extend(["--out", s(&out)]);
        ok(&args);
        let w = codec::load_windows(&out).unwrap();
        assert!(w.windows(2).all(|p| p[0].end < p[1].start));
    }
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (da, db) = (simulate(a.path()), simulate(b.path()));
    for f in [
        "topology.txt",
        "incidents.txt",
        "kpis.txt",
        "ground_truth.txt",
        "truth_windows.txt",
    ] {
        assert_eq!(
            fs::read(da.join(f)).unwrap(),
            fs::read(db.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn pipeline_writes_reloadable_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("p.cfg");
    fs::write(&cfg, format!("{SIM}epochs=2\ndim=32\n")).unwrap();
    PipelineConfig::load(&cfg).unwrap();
    let out = tmp.path().join("run");
    let stdout = ok(&[
        "pipeline",
        "--config",
        s(&cfg),
        "--mode",
        "no-completion",
        "--out",
        s(&out),
    ]);
    assert!(stdout.starts_with("mode=no-completion\n"));
    assert_eq!(stdout, fs::read_to_string(out.join("report.txt")).unwrap());
    let topo = codec::load_topology(&out.join("topology.txt")).unwrap();
    let log = codec::load_incidents(&out.join("incidents.txt"), &topo).unwrap();
    codec::load_kpis(&out.join("kpis.txt"), &topo).unwrap();
    codec::load_windows(&out.join("windows.txt")).unwrap();
    for g in codec::load_impact_graphs(&out.join("impact_graphs"), &topo).unwrap() {
        g.validate(&topo, &log).unwrap();
    }
    codec::load_embedding(&out.join("embedding.txt")).unwrap();
    let groups = out.join("groups.txt");
    codec::parse_groups(&fs::read_to_string(&groups).unwrap(), &groups).unwrap();
}

#[test]
fn failures_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "seed=1\nnot_a_key=2\n").unwrap();
    let out = incagg(&["simulate", "--config", s(&bad), "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));

    let missing = tmp.path().join("none.txt");
    let out = incagg(&["detect", "--incidents", s(&missing), "--out", s(&bad)]);
    assert!(!out.status.success());

    let unsorted = tmp.path().join("inc.txt");
    fs::write(&unsorted, "5,a,t,1\n3,a,t,1\n").unwrap();
    let out = incagg(&["detect", "--incidents", s(&unsorted), "--out", s(&bad)]);
    assert!(!out.status.success());

    let out = incagg(&["pipeline", "--config", s(&bad), "--out", s(tmp.path())]);
    assert!(!out.status.success());
}
