//! Shared domain types: topology, incidents, KPI series, failure windows,
//! impact graphs and incident-type embeddings.
//!
//! All string identifiers are interned to dense `u32` ids at load time so
//! the graph, walk and aggregation loops only touch integers.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};

/// Minutes since epoch.
pub type Minute = u32;

/// Bijective string <-> dense id table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

dense_id!(
    /// Interned topology node (cloud component).
    NodeId
);
dense_id!(
    /// Interned incident type.
    TypeId
);
dense_id!(
    /// Interned KPI name.
    KpiId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Application,
    Platform,
    Infrastructure,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Application, Layer::Platform, Layer::Infrastructure];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Application => "application",
            Layer::Platform => "platform",
            Layer::Infrastructure => "infrastructure",
        }
    }

    pub fn parse(s: &str) -> Option<Layer> {
        match s {
            "application" => Some(Layer::Application),
            "platform" => Some(Layer::Platform),
            "infrastructure" => Some(Layer::Infrastructure),
            _ => None,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Undirected component graph. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    nodes: Interner,
    layers: Vec<Option<Layer>>,
    adj: Vec<Vec<NodeId>>,
    edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Default)]
pub struct TopologyBuilder {
    nodes: Interner,
    layers: Vec<Option<Layer>>,
    edges: Vec<(NodeId, NodeId)>,
    seen: std::collections::HashSet<(u32, u32)>,
}

impl TopologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node; re-adding an existing name is an error.
    pub fn add_node(&mut self, name: &str, layer: Option<Layer>) -> Result<NodeId> {
        if name.is_empty() {
            return Err(Error::Validation("empty node id".into()));
        }
        if self.nodes.get(name).is_some() {
            return Err(Error::Validation(format!("duplicate node `{name}`")));
        }
        let id = self.nodes.intern(name);
        self.layers.push(layer);
        Ok(NodeId(id))
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.nodes.get(name).map(NodeId)
    }

    /// Adds an undirected edge. Returns `false` if it was already present.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> Result<bool> {
        if a == b {
            return Err(Error::Validation(format!(
                "self-loop on `{}`",
                self.nodes.name(a.0)
            )));
        }
        let n = self.nodes.len() as u32;
        if a.0 >= n || b.0 >= n {
            return Err(Error::Validation("edge endpoint out of range".into()));
        }
        let key = (a.0.min(b.0), a.0.max(b.0));
        if !self.seen.insert(key) {
            return Ok(false);
        }
        self.edges.push((a, b));
        Ok(true)
    }

    pub fn add_edge_by_name(&mut self, a: &str, b: &str) -> Result<bool> {
        if a == b {
            return Err(Error::Validation(format!("self-loop on `{a}`")));
        }
        let ia = self
            .node(a)
            .ok_or_else(|| Error::UnknownNode(a.to_owned()))?;
        let ib = self
            .node(b)
            .ok_or_else(|| Error::UnknownNode(b.to_owned()))?;
        self.add_edge(ia, ib)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn layer(&self, id: NodeId) -> Option<Layer> {
        self.layers[id.index()]
    }

    pub fn build(self) -> Topology {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a.index()].push(b);
            adj[b.index()].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Topology {
            nodes: self.nodes,
            layers: self.layers,
            adj,
            edges: self.edges,
        }
    }
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in insertion order.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.nodes
            .get(name)
            .map(NodeId)
            .ok_or_else(|| Error::UnknownNode(name.to_owned()))
    }

    pub fn name(&self, id: NodeId) -> &str {
        self.nodes.name(id.0)
    }

    pub fn layer(&self, id: NodeId) -> Option<Layer> {
        self.layers[id.index()]
    }

    /// Sorted neighbor list.
    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adj[id.index()]
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adj[a.index()].binary_search(&b).is_ok()
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.index() < self.node_count() {
            Ok(())
        } else {
            Err(Error::UnknownNode(format!("#{}", id.0)))
        }
    }

    /// BFS hop distances from `src`; `None` marks unreachable nodes.
    pub fn bfs_from(&self, src: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[src.index()] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.index()].unwrap_or(0);
            for &v in self.neighbors(u) {
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Shortest path length in hops, `None` when unreachable.
    pub fn shortest_hop_distance(&self, a: NodeId, b: NodeId) -> Result<Option<u32>> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Ok(Some(0));
        }
        Ok(self.bfs_from(a)[b.index()])
    }
}

/// All-pairs hop distances, computed once per topology by repeated BFS.
#[derive(Debug, Clone)]
pub struct HopDistances {
    n: usize,
    dist: Vec<u32>,
}

impl HopDistances {
    const UNREACHABLE: u32 = u32::MAX;

    pub fn new(topo: &Topology) -> Self {
        use rayon::prelude::*;
        let n = topo.node_count();
        let rows: Vec<Vec<u32>> = (0..n as u32)
            .into_par_iter()
            .map(|s| {
                topo.bfs_from(NodeId(s))
                    .into_iter()
                    .map(|d| d.unwrap_or(Self::UNREACHABLE))
                    .collect()
            })
            .collect();
        Self {
            n,
            dist: rows.concat(),
        }
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<u32> {
        let d = self.dist[a.index() * self.n + b.index()];
        (d != Self::UNREACHABLE).then_some(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IncidentRecord {
    pub minute: Minute,
    pub node: NodeId,
    pub itype: TypeId,
    /// Informational only.
    pub severity: u8,
}

/// Minute-sorted incident stream plus its type table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IncidentLog {
    pub types: Interner,
    pub records: Vec<IncidentRecord>,
}

impl IncidentLog {
    pub fn new(types: Interner, records: Vec<IncidentRecord>) -> Result<Self> {
        if records.windows(2).any(|w| w[0].minute > w[1].minute) {
            return Err(Error::InvalidInput(
                "incident stream is not sorted by minute".into(),
            ));
        }
        Ok(Self { types, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn type_name(&self, t: TypeId) -> &str {
        self.types.name(t.0)
    }

    /// Record indices whose minute lies in the inclusive window.
    pub fn indices_in(&self, start: Minute, end: Minute) -> Range<usize> {
        let lo = self.records.partition_point(|r| r.minute < start);
        let hi = self.records.partition_point(|r| r.minute <= end);
        lo..hi.max(lo)
    }

    /// One past the last minute in the stream (0 when empty).
    pub fn end_minute(&self) -> Minute {
        self.records.last().map_or(0, |r| r.minute + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpiSeries {
    pub node: NodeId,
    pub kpi: KpiId,
    pub start_minute: Minute,
    pub values: Vec<f64>,
}

impl KpiSeries {
    pub fn new(node: NodeId, kpi: KpiId, start_minute: Minute, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("empty KPI series".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite KPI value".into()));
        }
        Ok(Self {
            node,
            kpi,
            start_minute,
            values,
        })
    }

    /// Values for minutes in `[start, end]`, clipped to the series extent.
    pub fn slice(&self, start: Minute, end: Minute) -> &[f64] {
        let first = self.start_minute;
        let last = first + self.values.len() as Minute; // exclusive
        let lo = start.max(first);
        let hi = (end.saturating_add(1)).min(last);
        if lo >= hi {
            return &[];
        }
        &self.values[(lo - first) as usize..(hi - first) as usize]
    }
}

/// All KPI series of a run, indexed by node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KpiStore {
    pub names: Interner,
    series: Vec<KpiSeries>,
    by_node: HashMap<NodeId, Vec<usize>>,
}

impl KpiStore {
    pub fn new(names: Interner, series: Vec<KpiSeries>) -> Self {
        let mut by_node: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for (i, s) in series.iter().enumerate() {
            by_node.entry(s.node).or_default().push(i);
        }
        Self {
            names,
            series,
            by_node,
        }
    }

    pub fn series(&self) -> &[KpiSeries] {
        &self.series
    }

    pub fn for_node(&self, node: NodeId) -> impl Iterator<Item = &KpiSeries> {
        self.by_node
            .get(&node)
            .into_iter()
            .flatten()
            .map(move |&i| &self.series[i])
    }

    pub fn get(&self, node: NodeId, kpi: KpiId) -> Option<&KpiSeries> {
        self.for_node(node).find(|s| s.kpi == kpi)
    }

    pub fn kpi_name(&self, k: KpiId) -> &str {
        self.names.name(k.0)
    }
}

/// Inclusive minute interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FailureWindow {
    pub start: Minute,
    pub end: Minute,
}

impl FailureWindow {
    pub fn new(start: Minute, end: Minute) -> Result<Self> {
        if start > end {
            return Err(Error::Validation(format!(
                "window start {start} > end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, m: Minute) -> bool {
        self.start <= m && m <= self.end
    }

    pub fn overlaps(&self, other: &FailureWindow) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Minutes covered; a window is never empty.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }
}

/// One recovered failure scope: its window, member nodes and the indices
/// (into the originating [`IncidentLog`]) of its member incidents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureImpactGraph {
    pub window: FailureWindow,
    /// Sorted.
    pub nodes: Vec<NodeId>,
    /// Member nodes with positive weight into another community.
    pub boundary: Vec<NodeId>,
    /// Sorted record indices.
    pub incidents: Vec<usize>,
}

impl FailureImpactGraph {
    /// Checks the window/member invariants against the log and topology.
    pub fn validate(&self, topo: &Topology, log: &IncidentLog) -> Result<()> {
        for &i in &self.incidents {
            let r = log
                .records
                .get(i)
                .ok_or_else(|| Error::Validation(format!("incident index {i} out of range")))?;
            if !self.window.contains(r.minute) {
                return Err(Error::Validation(format!("incident {i} outside window")));
            }
            if self.nodes.binary_search(&r.node).is_err() {
                return Err(Error::Validation(format!(
                    "incident {i} on non-member node"
                )));
            }
        }
        if !is_connected(topo, &self.nodes) {
            return Err(Error::Validation(
                "impact graph nodes are not connected".into(),
            ));
        }
        Ok(())
    }
}

/// Whether `nodes` (sorted) induce a connected subgraph.
pub fn is_connected(topo: &Topology, nodes: &[NodeId]) -> bool {
    connected_components(topo, nodes).len() <= 1
}

/// Connected components of the subgraph induced by sorted `nodes`.
pub fn connected_components(topo: &Topology, nodes: &[NodeId]) -> Vec<Vec<NodeId>> {
    let mut seen = vec![false; nodes.len()];
    let mut out = Vec::new();
    for start in 0..nodes.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![nodes[start]];
        let mut stack = vec![nodes[start]];
        while let Some(u) = stack.pop() {
            for v in topo.neighbors(u) {
                if let Ok(j) = nodes.binary_search(v) {
                    if !seen[j] {
                        seen[j] = true;
                        comp.push(*v);
                        stack.push(*v);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Map from incident type name to a fixed-dimension vector.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidentEmbedding {
    dim: usize,
    types: Interner,
    vectors: Vec<f32>,
}

impl IncidentEmbedding {
    pub fn new(dim: usize, types: Interner, vectors: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation(
                "embedding dimension must be positive".into(),
            ));
        }
        if vectors.len() != dim * types.len() {
            return Err(Error::Validation(format!(
                "expected {} values for {} types of dim {dim}, got {}",
                dim * types.len(),
                types.len(),
                vectors.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite embedding value".into()));
        }
        Ok(Self {
            dim,
            types,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn types(&self) -> &Interner {
        &self.types
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.types.get(name).map(|i| i as usize)
    }

    pub fn vector(&self, idx: usize) -> &[f32] {
        &self.vectors[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn vector_of(&self, name: &str) -> Result<&[f32]> {
        self.index_of(name)
            .map(|i| self.vector(i))
            .ok_or_else(|| Error::UnknownType(name.to_owned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Topology {
        let mut b = TopologyBuilder::new();
        let ids: Vec<_> = (0..n)
            .map(|i| b.add_node(&format!("n{i}"), None).unwrap())
            .collect();
        for w in ids.windows(2) {
            b.add_edge(w[0], w[1]).unwrap();
        }
        b.build()
    }

    #[test]
    fn hop_distance_on_path() {
        let g = path(3);
        let a = g.node("n0").unwrap();
        let c = g.node("n2").unwrap();
        assert_eq!(g.shortest_hop_distance(a, a).unwrap(), Some(0));
        assert_eq!(g.shortest_hop_distance(a, c).unwrap(), Some(2));
        assert_eq!(g.shortest_hop_distance(c, a).unwrap(), Some(2));
    }

    #[test]
    fn unreachable_and_unknown() {
        let mut b = TopologyBuilder::new();
        let a = b.add_node("a", None).unwrap();
        let c = b.add_node("c", None).unwrap();
        let g = b.build();
        assert_eq!(g.shortest_hop_distance(a, c).unwrap(), None);
        assert!(matches!(
            g.shortest_hop_distance(a, NodeId(9)),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn self_loop_rejected() {
        let mut b = TopologyBuilder::new();
        b.add_node("a", None).unwrap();
        assert!(b.add_edge_by_name("a", "a").is_err());
    }

    #[test]
    fn duplicate_edge_is_ignored() {
        let mut b = TopologyBuilder::new();
        b.add_node("a", None).unwrap();
        b.add_node("b", None).unwrap();
        assert!(b.add_edge_by_name("a", "b").unwrap());
        assert!(!b.add_edge_by_name("b", "a").unwrap());
        assert_eq!(b.build().edge_count(), 1);
    }

    #[test]
    fn interner_is_bijective() {
        let mut i = Interner::new();
        for name in ["x", "y", "x", "z"] {
            let id = i.intern(name);
            assert_eq!(i.name(id), name);
            assert_eq!(i.get(i.name(id)), Some(id));
        }
        assert_eq!(i.len(), 3);
    }

    #[test]
    fn kpi_slice_clips() {
        let s = KpiSeries::new(NodeId(0), KpiId(0), 10, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.slice(0, 10), &[1.0]);
        assert_eq!(s.slice(11, 100), &[2.0, 3.0]);
        assert!(s.slice(20, 30).is_empty());
        assert!(KpiSeries::new(NodeId(0), KpiId(0), 0, vec![f64::NAN]).is_err());
    }

    #[test]
    fn components_of_induced_subgraph() {
        let g = path(5);
        let nodes = vec![NodeId(0), NodeId(1), NodeId(3), NodeId(4)];
        let comps = connected_components(&g, &nodes);
        assert_eq!(
            comps,
            vec![vec![NodeId(0), NodeId(1)], vec![NodeId(3), NodeId(4)]]
        );
    }
}
