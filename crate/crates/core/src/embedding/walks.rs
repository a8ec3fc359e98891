//! Hierarchical random walks over failure-impact graphs.
//!
//! Each step first moves to a uniformly chosen neighbour inside the impact
//! graph (staying put when there is none) and then emits an incident type
//! drawn uniformly from the current node's window incidents, so duplicate
//! types weigh proportionally. Nodes without incidents are traversed but
//! emit nothing.

use std::collections::BTreeMap;

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::WalkConfig;
use crate::error::{Error, Result};
use crate::model::{FailureImpactGraph, IncidentLog, Interner, Topology, TypeId};

/// Incident-type sequences over a local vocabulary sorted by type name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WalkCorpus {
    pub vocab: Interner,
    pub sequences: Vec<Vec<u32>>,
}

impl WalkCorpus {
    /// Builds a corpus from named sequences; ids follow sorted name order.
    pub fn from_named<S: AsRef<str>>(sequences: &[Vec<S>]) -> Self {
        let mut names: Vec<&str> = sequences.iter().flatten().map(|s| s.as_ref()).collect();
        names.sort_unstable();
        names.dedup();
        let mut vocab = Interner::new();
        for n in &names {
            vocab.intern(n);
        }
        let sequences = sequences
            .iter()
            .map(|s| {
                s.iter()
                    .map(|t| vocab.get(t.as_ref()).expect("interned"))
                    .collect()
            })
            .collect();
        Self { vocab, sequences }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    /// Occurrence count of each vocabulary entry.
    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.vocab.len()];
        for &t in self.sequences.iter().flatten() {
            c[t as usize] += 1;
        }
        c
    }

    pub fn named(&self, seq: usize) -> Vec<&str> {
        self.sequences[seq]
            .iter()
            .map(|&t| self.vocab.name(t))
            .collect()
    }
}

/// Local view of one impact graph: in-graph adjacency and per-node types.
struct GraphView {
    adj: Vec<Vec<usize>>,
    types: Vec<Vec<TypeId>>,
    /// Whether the node's in-graph component holds any incident.
    productive: Vec<bool>,
}

impl GraphView {
    fn new(g: &FailureImpactGraph, topo: &Topology, log: &IncidentLog) -> Result<Self> {
        let n = g.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for (i, &u) in g.nodes.iter().enumerate() {
            for v in topo.neighbors(u) {
                if let Ok(j) = g.nodes.binary_search(v) {
                    adj[i].push(j);
                }
            }
        }
        let mut types = vec![Vec::new(); n];
        for &idx in &g.incidents {
            let r = log
                .records
                .get(idx)
                .ok_or_else(|| Error::Validation(format!("incident index {idx} out of range")))?;
            let i = g
                .nodes
                .binary_search(&r.node)
                .map_err(|_| Error::Validation(format!("incident {idx} on non-member node")))?;
            types[i].push(r.itype);
        }
        let mut productive = vec![false; n];
        let mut comp = vec![usize::MAX; n];
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut members = vec![s];
            comp[s] = s;
            let mut k = 0;
            while k < members.len() {
                for &v in &adj[members[k]] {
                    if comp[v] == usize::MAX {
                        comp[v] = s;
                        members.push(v);
                    }
                }
                k += 1;
            }
            let any = members.iter().any(|&m| !types[m].is_empty());
            for m in members {
                productive[m] = any;
            }
        }
        Ok(Self {
            adj,
            types,
            productive,
        })
    }

    fn walk(&self, start: usize, len: usize, rng: &mut ChaCha8Rng) -> Option<Vec<TypeId>> {
        let max_steps = len.saturating_mul(1000).max(10_000);
        let mut out = Vec::with_capacity(len);
        let mut cur = start;
        for _ in 0..max_steps {
            let nb = &self.adj[cur];
            if !nb.is_empty() {
                cur = nb[rng.random_range(0..nb.len())];
            }
            let ts = &self.types[cur];
            if !ts.is_empty() {
                out.push(ts[rng.random_range(0..ts.len())]);
                if out.len() == len {
                    return Some(out);
                }
            }
        }
        None
    }
}

/// Walks from every node of every graph, `walks_per_start` times each.
///
/// Graph `k` draws from its own stream of the seeded generator, so the
/// corpus does not depend on thread scheduling. Graphs without incidents
/// are skipped with a warning.
pub fn generate_walks(
    graphs: &[FailureImpactGraph],
    topo: &Topology,
    log: &IncidentLog,
    cfg: &WalkConfig,
) -> Result<WalkCorpus> {
    cfg.validate()?;
    let per_graph = graphs
        .par_iter()
        .enumerate()
        .map(|(k, g)| -> Result<Vec<Vec<TypeId>>> {
            if g.incidents.is_empty() {
                warn!("impact graph {k} has no incidents; skipped");
                return Ok(Vec::new());
            }
            let view = GraphView::new(g, topo, log)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let mut seqs = Vec::with_capacity(g.nodes.len() * cfg.walks_per_start);
            for start in 0..g.nodes.len() {
                if !view.productive[start] {
                    warn!(
                        "impact graph {k}: node {} cannot reach any incident",
                        topo.name(g.nodes[start])
                    );
                    continue;
                }
                for _ in 0..cfg.walks_per_start {
                    match view.walk(start, cfg.walk_length, &mut rng) {
                        Some(s) => seqs.push(s),
                        None => warn!("impact graph {k}: walk exceeded step budget"),
                    }
                }
            }
            Ok(seqs)
        })
        .collect::<Result<Vec<_>>>()?;

    // local vocabulary in name order
    let mut used: BTreeMap<&str, TypeId> = BTreeMap::new();
    for &t in per_graph.iter().flatten().flatten() {
        used.entry(log.type_name(t)).or_insert(t);
    }
    let mut vocab = Interner::new();
    let mut remap: BTreeMap<TypeId, u32> = BTreeMap::new();
    for (name, t) in used {
        remap.insert(t, vocab.intern(name));
    }
    let sequences = per_graph
        .into_iter()
        .flatten()
        .map(|s| s.into_iter().map(|t| remap[&t]).collect())
        .collect();
    Ok(WalkCorpus { vocab, sequences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FailureWindow, IncidentRecord, NodeId, TopologyBuilder};

    fn setup(types_per_node: &[&[&str]]) -> (Topology, IncidentLog, FailureImpactGraph) {
        let mut tb = TopologyBuilder::new();
        let ids: Vec<NodeId> = (0..types_per_node.len())
            .map(|i| tb.add_node(&format!("n{i}"), None).unwrap())
            .collect();
        for w in ids.windows(2) {
            tb.add_edge(w[0], w[1]).unwrap();
        }
        let topo = tb.build();
        let mut names = Interner::new();
        let mut recs = Vec::new();
        for (i, ts) in types_per_node.iter().enumerate() {
            for t in *ts {
                recs.push(IncidentRecord {
                    minute: 5,
                    node: ids[i],
                    itype: TypeId(names.intern(t)),
                    severity: 0,
                });
            }
        }
        let n = recs.len();
        let log = IncidentLog::new(names, recs).unwrap();
        let g = FailureImpactGraph {
            window: FailureWindow::new(5, 5).unwrap(),
            nodes: ids,
            boundary: vec![],
            incidents: (0..n).collect(),
        };
        (topo, log, g)
    }

    #[test]
    fn multiplicity_weights_emission() {
        let (topo, log, g) = setup(&[&["A", "A", "B"]]);
        let cfg = WalkConfig {
            walk_length: 1000,
            walks_per_start: 100,
            window: 5,
            ..WalkConfig::default()
        };
        let c = generate_walks(&[g], &topo, &log, &cfg).unwrap();
        let counts = c.counts();
        let a = counts[c.vocab.get("A").unwrap() as usize] as f64;
        let b = counts[c.vocab.get("B").unwrap() as usize] as f64;
        assert_eq!(a + b, 100_000.0);
        assert!((a / b - 2.0).abs() < 0.06, "ratio {}", a / b);
    }

    #[test]
    fn silent_node_traversed_but_mute() {
        let (topo, log, g) = setup(&[&["X", "Y"], &[]]);
        let c = generate_walks(&[g], &topo, &log, &WalkConfig::default()).unwrap();
        assert_eq!(c.len(), 2 * 10);
        assert!(c.sequences.iter().all(|s| s.len() == 40));
        assert_eq!(c.vocab.names(), &["X".to_string(), "Y".to_string()]);
    }

    #[test]
    fn empty_graph_skipped() {
        let (topo, log, mut g) = setup(&[&["X"]]);
        g.incidents.clear();
        let c = generate_walks(&[g], &topo, &log, &WalkConfig::default()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn deterministic() {
        let (topo, log, g) = setup(&[&["X", "Y"], &["Z"], &[], &["X"]]);
        let cfg = WalkConfig::default();
        let a = generate_walks(&[g.clone(), g.clone()], &topo, &log, &cfg).unwrap();
        let b = generate_walks(&[g.clone(), g], &topo, &log, &cfg).unwrap();
        assert_eq!(a, b);
        // graphs draw from separate streams
        assert_ne!(a.sequences[0], a.sequences[40]);
    }
}
