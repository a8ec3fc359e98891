//! Line-oriented text codecs for every artifact the pipeline reads or writes.
//!
//! Writers render to a `String` so callers can compare artifacts byte for
//! byte; readers report the 1-based line number of the first malformed row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    FailureImpactGraph, FailureWindow, IncidentEmbedding, IncidentLog, IncidentRecord, Interner,
    KpiId, KpiSeries, KpiStore, Layer, Minute, NodeId, Topology, TopologyBuilder, TypeId,
};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("bad {what} `{field}`")))
}

// ---------------------------------------------------------------- topology

pub fn format_topology(g: &Topology) -> String {
    let mut out = String::new();
    for id in g.node_ids() {
        let layer = g.layer(id).map_or("", Layer::as_str);
        let _ = writeln!(out, "N,{},{}", g.name(id), layer);
    }
    for &(a, b) in g.edges() {
        let _ = writeln!(out, "E,{},{}", g.name(a), g.name(b));
    }
    out
}

pub fn parse_topology(text: &str, path: &Path) -> Result<Topology> {
    let mut b = TopologyBuilder::new();
    let mut edges = Vec::new();
    for (no, line) in lines(text) {
        let fields: Vec<&str> = line.split(',').collect();
        match fields.as_slice() {
            ["N", id, layer] => {
                let layer =
                    match layer.trim() {
                        "" => None,
                        s => Some(Layer::parse(s).ok_or_else(|| {
                            Error::parse(path, no, format!("unknown layer `{s}`"))
                        })?),
                    };
                if let Some(existing) = b.node(id) {
                    // identical duplicate rows collapse; conflicting ones do not
                    if b.layer(existing) == layer {
                        continue;
                    }
                    return Err(Error::parse(
                        path,
                        no,
                        format!("conflicting rows for node `{id}`"),
                    ));
                }
                b.add_node(id, layer)
                    .map_err(|e| Error::parse(path, no, e.to_string()))?;
            }
            ["E", src, dst] => {
                if src == dst {
                    return Err(Error::parse(path, no, format!("self-loop on `{src}`")));
                }
                edges.push((no, *src, *dst));
            }
            _ => {
                return Err(Error::parse(
                    path,
                    no,
                    format!("malformed topology row `{line}`"),
                ))
            }
        }
    }
    for (no, src, dst) in edges {
        match b.add_edge_by_name(src, dst) {
            Ok(_) => {}
            Err(Error::UnknownNode(n)) => {
                return Err(Error::Validation(format!(
                    "{}:{no}: edge endpoint `{n}` is not a declared node",
                    path.display()
                )))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(b.build())
}

pub fn load_topology(path: &Path) -> Result<Topology> {
    parse_topology(&read_text(path)?, path)
}

pub fn save_topology(path: &Path, g: &Topology) -> Result<()> {
    write_text(path, &format_topology(g))
}

// --------------------------------------------------------------- incidents

pub fn format_incidents(log: &IncidentLog, topo: &Topology) -> String {
    let mut out = String::with_capacity(log.len() * 24);
    for r in &log.records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.minute,
            topo.name(r.node),
            log.type_name(r.itype),
            r.severity
        );
    }
    out
}

/// Parses an incident stream. Fields after the severity (free-text titles)
/// are accepted and ignored.
pub fn parse_incidents(text: &str, path: &Path, topo: &Topology) -> Result<IncidentLog> {
    let mut types = Interner::new();
    let mut records = Vec::new();
    let mut last: Minute = 0;
    for (no, line) in lines(text) {
        let fields: Vec<&str> = line.splitn(5, ',').collect();
        if fields.len() < 4 {
            return Err(Error::parse(
                path,
                no,
                format!("malformed incident row `{line}`"),
            ));
        }
        let minute: Minute = parse_num(path, no, fields[0], "minute")?;
        let node = topo
            .node(fields[1])
            .map_err(|_| Error::parse(path, no, format!("unknown node `{}`", fields[1])))?;
        if fields[2].is_empty() {
            return Err(Error::parse(path, no, "empty incident type"));
        }
        let severity: u8 = parse_num(path, no, fields[3], "severity")?;
        if minute < last {
            return Err(Error::parse(
                path,
                no,
                "incident stream is not sorted by minute",
            ));
        }
        last = minute;
        records.push(IncidentRecord {
            minute,
            node,
            itype: TypeId(types.intern(fields[2])),
            severity,
        });
    }
    IncidentLog::new(types, records)
}

pub fn load_incidents(path: &Path, topo: &Topology) -> Result<IncidentLog> {
    parse_incidents(&read_text(path)?, path, topo)
}

// --------------------------------------------------------------------- kpis

pub fn format_kpis(store: &KpiStore, topo: &Topology) -> String {
    let mut out = String::new();
    for s in store.series() {
        let _ = write!(
            out,
            "{},{},{},",
            topo.name(s.node),
            store.kpi_name(s.kpi),
            s.start_minute
        );
        for (i, v) in s.values.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            // shortest representation that parses back to the same f64
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_kpis(text: &str, path: &Path, topo: &Topology) -> Result<KpiStore> {
    let mut names = Interner::new();
    let mut series = Vec::new();
    for (no, line) in lines(text) {
        let fields: Vec<&str> = line.splitn(4, ',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                no,
                format!("malformed KPI row `{line}`"),
            ));
        }
        let node = topo
            .node(fields[0])
            .map_err(|_| Error::parse(path, no, format!("unknown node `{}`", fields[0])))?;
        if fields[1].is_empty() {
            return Err(Error::parse(path, no, "empty KPI name"));
        }
        let kpi = KpiId(names.intern(fields[1]));
        let start: Minute = parse_num(path, no, fields[2], "start minute")?;
        let values = fields[3]
            .split(';')
            .map(|v| parse_num::<f64>(path, no, v, "KPI value"))
            .collect::<Result<Vec<_>>>()?;
        let s = KpiSeries::new(node, kpi, start, values)
            .map_err(|e| Error::parse(path, no, e.to_string()))?;
        series.push(s);
    }
    Ok(KpiStore::new(names, series))
}

pub fn load_kpis(path: &Path, topo: &Topology) -> Result<KpiStore> {
    parse_kpis(&read_text(path)?, path, topo)
}

// ---------------------------------------------------------------- embedding

/// Header `<vocab> <dim>`, then `<type> <f_1> ... <f_dim>` with nine
/// significant digits (exact for `f32`).
pub fn format_embedding(emb: &IncidentEmbedding) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", emb.len(), emb.dim());
    for (i, name) in emb.types().names().iter().enumerate() {
        out.push_str(name);
        for v in emb.vector(i) {
            let _ = write!(out, " {v:.8e}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_embedding(text: &str, path: &Path) -> Result<IncidentEmbedding> {
    let mut it = lines(text);
    let (no, header) = it
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing embedding header"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(Error::parse(
            path,
            no,
            "header must be `<vocab_size> <dim>`",
        ));
    }
    let vocab: usize = parse_num(path, no, head[0], "vocab size")?;
    let dim: usize = parse_num(path, no, head[1], "dimension")?;
    let mut types = Interner::new();
    let mut vectors = Vec::with_capacity(vocab * dim);
    for (no, line) in it {
        let mut fields = line.split_whitespace();
        let name = fields.next().unwrap_or_default();
        if types.get(name).is_some() {
            return Err(Error::parse(path, no, format!("duplicate type `{name}`")));
        }
        types.intern(name);
        let before = vectors.len();
        for f in fields {
            vectors.push(parse_num::<f32>(path, no, f, "embedding value")?);
        }
        if vectors.len() - before != dim {
            return Err(Error::parse(
                path,
                no,
                format!("expected {dim} values, got {}", vectors.len() - before),
            ));
        }
    }
    if types.len() != vocab {
        return Err(Error::Validation(format!(
            "{}: header declares {vocab} types, found {}",
            path.display(),
            types.len()
        )));
    }
    IncidentEmbedding::new(dim, types, vectors)
}

pub fn load_embedding(path: &Path) -> Result<IncidentEmbedding> {
    parse_embedding(&read_text(path)?, path)
}

pub fn save_embedding(path: &Path, emb: &IncidentEmbedding) -> Result<()> {
    write_text(path, &format_embedding(emb))
}

// ------------------------------------------------------------------ windows

pub fn format_windows(windows: &[FailureWindow]) -> String {
    windows
        .iter()
        .map(|w| format!("{},{}\n", w.start, w.end))
        .collect()
}

pub fn parse_windows(text: &str, path: &Path) -> Result<Vec<FailureWindow>> {
    lines(text)
        .map(|(no, line)| {
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(path, no, format!("malformed window `{line}`")))?;
            FailureWindow::new(
                parse_num(path, no, a, "start")?,
                parse_num(path, no, b, "end")?,
            )
            .map_err(|e| Error::parse(path, no, e.to_string()))
        })
        .collect()
}

pub fn load_windows(path: &Path) -> Result<Vec<FailureWindow>> {
    parse_windows(&read_text(path)?, path)
}

// ------------------------------------------------------------- ground truth

/// Per-incident ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Failure(u32),
    Noise,
}

pub fn format_labels(labels: &[Label]) -> String {
    let mut out = String::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Label::Failure(f) => {
                let _ = writeln!(out, "{i},{f}");
            }
            Label::Noise => {
                let _ = writeln!(out, "{i},NOISE");
            }
        }
    }
    out
}

pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<Label>> {
    let mut out = Vec::new();
    for (no, line) in lines(text) {
        let (idx, label) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, no, format!("malformed label row `{line}`")))?;
        let idx: usize = parse_num(path, no, idx, "incident index")?;
        if idx != out.len() {
            return Err(Error::parse(
                path,
                no,
                format!("expected index {}, got {idx}", out.len()),
            ));
        }
        out.push(match label.trim() {
            "NOISE" => Label::Noise,
            s => Label::Failure(parse_num(path, no, s, "failure id")?),
        });
    }
    Ok(out)
}

// ------------------------------------------------------------- impact graph

pub fn format_impact_graph(g: &FailureImpactGraph, topo: &Topology) -> String {
    let join_nodes = |ns: &[NodeId]| {
        ns.iter()
            .map(|&n| topo.name(n))
            .collect::<Vec<_>>()
            .join(";")
    };
    let incidents = g
        .incidents
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";");
    format!(
        "window,{},{}\nnodes,{}\nboundary,{}\nincidents,{}\n",
        g.window.start,
        g.window.end,
        join_nodes(&g.nodes),
        join_nodes(&g.boundary),
        incidents
    )
}

pub fn parse_impact_graph(text: &str, path: &Path, topo: &Topology) -> Result<FailureImpactGraph> {
    let mut window = None;
    let mut nodes = Vec::new();
    let mut boundary = Vec::new();
    let mut incidents = Vec::new();
    let node_list = |no: usize, s: &str| -> Result<Vec<NodeId>> {
        let mut v = s
            .split(';')
            .filter(|x| !x.is_empty())
            .map(|x| {
                topo.node(x)
                    .map_err(|_| Error::parse(path, no, format!("unknown node `{x}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        v.sort_unstable();
        Ok(v)
    };
    for (no, line) in lines(text) {
        let (key, rest) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, no, format!("malformed row `{line}`")))?;
        match key {
            "window" => {
                let (a, b) = rest
                    .split_once(',')
                    .ok_or_else(|| Error::parse(path, no, "window needs start,end"))?;
                window = Some(
                    FailureWindow::new(
                        parse_num(path, no, a, "start")?,
                        parse_num(path, no, b, "end")?,
                    )
                    .map_err(|e| Error::parse(path, no, e.to_string()))?,
                );
            }
            "nodes" => nodes = node_list(no, rest)?,
            "boundary" => boundary = node_list(no, rest)?,
            "incidents" => {
                incidents = rest
                    .split(';')
                    .filter(|x| !x.is_empty())
                    .map(|x| parse_num(path, no, x, "incident index"))
                    .collect::<Result<Vec<usize>>>()?;
                incidents.sort_unstable();
            }
            other => return Err(Error::parse(path, no, format!("unknown key `{other}`"))),
        }
    }
    let window = window.ok_or_else(|| Error::parse(path, 1, "missing window row"))?;
    Ok(FailureImpactGraph {
        window,
        nodes,
        boundary,
        incidents,
    })
}

/// Writes `graph_00000.txt`, `graph_00001.txt`, ... into `dir`.
pub fn save_impact_graphs(
    dir: &Path,
    graphs: &[FailureImpactGraph],
    topo: &Topology,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, g) in graphs.iter().enumerate() {
        write_text(
            &dir.join(format!("graph_{i:05}.txt")),
            &format_impact_graph(g, topo),
        )?;
    }
    Ok(())
}

/// Loads every `graph_*.txt` in `dir`, in file-name order.
pub fn load_impact_graphs(dir: &Path, topo: &Topology) -> Result<Vec<FailureImpactGraph>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("graph_") && n.ends_with(".txt"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| parse_impact_graph(&read_text(p)?, p, topo))
        .collect()
}

// ------------------------------------------------------------------- groups

/// One row of a groups file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupRow {
    pub group_id: usize,
    pub minute: Minute,
    pub node: String,
    pub itype: String,
}

pub fn format_groups(rows: &[GroupRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.group_id, r.minute, r.node, r.itype);
    }
    out
}

pub fn parse_groups(text: &str, path: &Path) -> Result<Vec<GroupRow>> {
    lines(text)
        .map(|(no, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::parse(
                    path,
                    no,
                    format!("malformed group row `{line}`"),
                ));
            }
            Ok(GroupRow {
                group_id: parse_num(path, no, f[0], "group id")?,
                minute: parse_num(path, no, f[1], "minute")?,
                node: f[2].to_owned(),
                itype: f[3].to_owned(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.txt")
    }

    #[test]
    fn topology_from_text() {
        let g = parse_topology("N,a,application\nN,b,platform\nN,c,\nE,a,b\nE,b,c\n", p()).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.layer(g.node("c").unwrap()), None);
        assert_eq!(parse_topology(&format_topology(&g), p()).unwrap(), g);
    }

    #[test]
    fn topology_errors() {
        let e = parse_topology("N,a,\nE,a,a\n", p()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_topology("N,a,\nX,a\n", p()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_topology("N,a,\nE,a,zz\n", p()).unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
        let e = parse_topology("N,a,cloud\n", p()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn incidents_must_be_sorted() {
        let g = parse_topology("N,a,\n", p()).unwrap();
        let log = parse_incidents("1,a,t1,2\n1,a,t2,0,some title, with comma\n", p(), &g).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.type_name(log.records[1].itype), "t2");
        let e = parse_incidents("5,a,t,0\n4,a,t,0\n", p(), &g).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(parse_incidents("5,zz,t,0\n", p(), &g).is_err());
    }

    #[test]
    fn embedding_round_trip_is_exact() {
        let mut types = Interner::new();
        types.intern("A");
        types.intern("B");
        let vals = vec![
            0.1f32,
            -3.4028235e38,
            1.0e-30,
            123456.79,
            f32::MIN_POSITIVE,
            -0.0,
        ];
        let emb = IncidentEmbedding::new(3, types, vals).unwrap();
        let text = format_embedding(&emb);
        assert!(text.starts_with("2 3\nA "));
        let back = parse_embedding(&text, p()).unwrap();
        assert_eq!(back, emb);
        for (a, b) in back.vector(1).iter().zip(emb.vector(1)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn embedding_header_mismatch() {
        assert!(parse_embedding("3 2\nA 1 2\n", p()).is_err());
        assert!(parse_embedding("1 2\nA 1\n", p()).is_err());
    }

    #[test]
    fn labels_and_windows() {
        let labels = vec![Label::Noise, Label::Failure(3), Label::Failure(0)];
        assert_eq!(parse_labels(&format_labels(&labels), p()).unwrap(), labels);
        let w = vec![
            FailureWindow::new(1, 2).unwrap(),
            FailureWindow::new(9, 9).unwrap(),
        ];
        assert_eq!(parse_windows(&format_windows(&w), p()).unwrap(), w);
        assert!(parse_windows("5,3\n", p()).is_err());
    }
}
