//! Failure-impact graph construction.
//!
//! For every failure window the candidate nodes (incident reporters plus
//! silent neighbours whose KPIs turned abnormal) are linked by a weighted
//! similarity graph over topology edges and partitioned with Louvain. Each
//! community with at least one incident becomes a [`FailureImpactGraph`].

pub mod louvain;
pub mod similarity;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;

use crate::detector::{EvtConfig, EvtDetector, Verdict};
use crate::error::{Error, Result};
use crate::model::{
    connected_components, FailureImpactGraph, FailureWindow, IncidentLog, KpiId, KpiStore, Minute,
    NodeId, Topology, TypeId,
};

pub use louvain::{louvain, modularity, Partition, SimilarityGraph};
pub use similarity::{
    dtw_distance, edge_weight, incident_similarity, mean_trend_similarity, trend_similarity,
    z_normalize, BOTH_REPORT_ALPHA,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactConfig {
    /// Weight of incident similarity when both endpoints report.
    pub alpha: f64,
    /// Minutes before the window used to learn normal KPI behaviour and as
    /// the head of the DTW comparison range.
    pub lookback: Minute,
    /// Minutes after the window end still inspected for KPI deviation.
    pub kpi_grace: Minute,
    pub kpi_risk_q: f64,
    pub kpi_peak_frac: f64,
    /// Admit silent-but-abnormal neighbours. Off reproduces the
    /// incident-only graph.
    pub completion: bool,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        Self {
            alpha: BOTH_REPORT_ALPHA,
            lookback: 120,
            kpi_grace: 5,
            kpi_risk_q: 1e-3,
            kpi_peak_frac: 0.02,
            completion: true,
        }
    }
}

impl ImpactConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if self.lookback < 2 {
            return Err(Error::Config("lookback must be at least 2 minutes".into()));
        }
        EvtConfig {
            risk_q: self.kpi_risk_q,
            peak_frac: self.kpi_peak_frac,
            calib_n: 1,
        }
        .validate()
    }
}

/// Per-window view over incidents and KPIs.
pub struct WindowContext<'a> {
    pub topo: &'a Topology,
    pub log: &'a IncidentLog,
    pub kpis: &'a KpiStore,
    pub window: FailureWindow,
    pub cfg: ImpactConfig,
    /// Reporting nodes and their incident indices within the window.
    reports: BTreeMap<NodeId, Vec<usize>>,
}

impl<'a> WindowContext<'a> {
    pub fn new(
        topo: &'a Topology,
        log: &'a IncidentLog,
        kpis: &'a KpiStore,
        window: FailureWindow,
        cfg: ImpactConfig,
    ) -> Self {
        let mut reports: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for i in log.indices_in(window.start, window.end) {
            reports.entry(log.records[i].node).or_default().push(i);
        }
        Self {
            topo,
            log,
            kpis,
            window,
            cfg,
            reports,
        }
    }

    pub fn reporting_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.reports.keys().copied()
    }

    pub fn reports(&self, node: NodeId) -> bool {
        self.reports.contains_key(&node)
    }

    pub fn incident_indices(&self, node: NodeId) -> &[usize] {
        self.reports.get(&node).map_or(&[], |v| v.as_slice())
    }

    /// Incident types reported by `node` in the window, with multiplicity.
    pub fn incident_types(&self, node: NodeId) -> Vec<TypeId> {
        self.incident_indices(node)
            .iter()
            .map(|&i| self.log.records[i].itype)
            .collect()
    }

    /// Inclusive minute range used for KPI trend comparison.
    pub fn comparison_range(&self) -> (Minute, Minute) {
        (
            self.window.start.saturating_sub(self.cfg.lookback),
            self.window.end.saturating_add(self.cfg.kpi_grace),
        )
    }

    /// KPIs of `node` that deviate during the window: the detector learns
    /// from the lookback before the window and any anomalous point from the
    /// window start to the end of the grace period marks the KPI abnormal.
    pub fn abnormal_kpis(&self, node: NodeId) -> Result<Vec<KpiId>> {
        let mut out = Vec::new();
        if self.window.start == 0 {
            return Ok(out);
        }
        let (lo, hi) = self.comparison_range();
        for s in self.kpis.for_node(node) {
            let calib = s.slice(lo, self.window.start - 1);
            if calib.len() < 2 {
                continue;
            }
            let mut det = EvtDetector::new(EvtConfig {
                risk_q: self.cfg.kpi_risk_q,
                peak_frac: self.cfg.kpi_peak_frac,
                calib_n: calib.len(),
            })?;
            det.calibrate(calib)?;
            for &x in s.slice(self.window.start, hi) {
                if det.observe(x)? == Verdict::Anomalous {
                    out.push(s.kpi);
                    break;
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Mean trend similarity over KPIs abnormal at both nodes.
    pub fn kpi_trend_similarity(
        &self,
        a: NodeId,
        b: NodeId,
        abnormal_a: &[KpiId],
        abnormal_b: &[KpiId],
    ) -> Result<f64> {
        let (lo, hi) = self.comparison_range();
        let pairs: Vec<(&[f64], &[f64])> = abnormal_a
            .iter()
            .filter(|k| abnormal_b.binary_search(k).is_ok())
            .filter_map(|&k| {
                let sa = self.kpis.get(a, k)?;
                let sb = self.kpis.get(b, k)?;
                Some((sa.slice(lo, hi), sb.slice(lo, hi)))
            })
            .collect();
        mean_trend_similarity(pairs)
    }
}

/// Reporting nodes plus, when completion is on, silent nodes reachable from
/// them through topology edges along which every admitted silent node has an
/// abnormal KPI. Returns the sorted candidates and their abnormal KPIs.
pub fn candidate_nodes(ctx: &WindowContext<'_>) -> Result<BTreeMap<NodeId, Vec<KpiId>>> {
    let mut admitted: BTreeMap<NodeId, Vec<KpiId>> = BTreeMap::new();
    let mut queue: VecDeque<NodeId> = VecDeque::new();
    for n in ctx.reporting_nodes() {
        admitted.insert(n, ctx.abnormal_kpis(n)?);
        queue.push_back(n);
    }
    if !ctx.cfg.completion {
        return Ok(admitted);
    }
    let mut rejected: BTreeSet<NodeId> = BTreeSet::new();
    while let Some(u) = queue.pop_front() {
        for &v in ctx.topo.neighbors(u) {
            if admitted.contains_key(&v) || rejected.contains(&v) {
                continue;
            }
            let ab = ctx.abnormal_kpis(v)?;
            if ab.is_empty() {
                rejected.insert(v);
            } else {
                admitted.insert(v, ab);
                queue.push_back(v);
            }
        }
    }
    Ok(admitted)
}

/// Similarity graph over the candidates: one edge per topology edge between
/// members.
pub fn similarity_graph(
    ctx: &WindowContext<'_>,
    candidates: &BTreeMap<NodeId, Vec<KpiId>>,
) -> Result<SimilarityGraph> {
    let nodes: Vec<NodeId> = candidates.keys().copied().collect();
    let abnormal: Vec<&Vec<KpiId>> = candidates.values().collect();
    let types: Vec<Vec<TypeId>> = nodes.iter().map(|&n| ctx.incident_types(n)).collect();
    let mut pairs = Vec::new();
    for (i, &u) in nodes.iter().enumerate() {
        for &v in ctx.topo.neighbors(u) {
            if v <= u {
                continue;
            }
            if let Ok(j) = nodes.binary_search(&v) {
                pairs.push((i, j));
            }
        }
    }
    let both_alpha = ctx.cfg.alpha;
    // without completion every member reports; weigh as if both did
    let force_both = !ctx.cfg.completion;
    let edges = pairs
        .par_iter()
        .map(|&(i, j)| {
            let kpi = ctx.kpi_trend_similarity(nodes[i], nodes[j], abnormal[i], abnormal[j])?;
            let both = force_both || (!types[i].is_empty() && !types[j].is_empty());
            let jac = incident_similarity(&types[i], &types[j]);
            Ok((i, j, edge_weight(jac, kpi, both, both_alpha)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityGraph::new(nodes, edges))
}

/// Impact graphs of one window, ordered by smallest member node.
pub fn build_impact_graphs(ctx: &WindowContext<'_>, seed: u64) -> Result<Vec<FailureImpactGraph>> {
    let candidates = candidate_nodes(ctx)?;
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let g = similarity_graph(ctx, &candidates)?;
    let part = louvain(&g, seed);

    // boundary: positive weight into another community
    let mut boundary = vec![false; g.len()];
    for &(a, b, w) in &g.edges {
        if w > 0.0 && part.assignment[a] != part.assignment[b] {
            boundary[a] = true;
            boundary[b] = true;
        }
    }

    let mut out = Vec::new();
    for members in part.communities() {
        let ids: Vec<NodeId> = members.iter().map(|&i| g.nodes[i]).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        for comp in connected_components(ctx.topo, &sorted) {
            let mut incidents: Vec<usize> = comp
                .iter()
                .flat_map(|&n| ctx.incident_indices(n).iter().copied())
                .collect();
            if incidents.is_empty() {
                continue;
            }
            incidents.sort_unstable();
            let bnd = comp
                .iter()
                .filter(|n| boundary[g.nodes.binary_search(n).unwrap_or(0)])
                .copied()
                .collect();
            out.push(FailureImpactGraph {
                window: ctx.window,
                nodes: comp,
                boundary: bnd,
                incidents,
            });
        }
    }
    out.sort_by(|a, b| a.nodes[0].cmp(&b.nodes[0]));
    Ok(out)
}

/// Impact graphs for all windows, processed in parallel and concatenated
/// in window order.
pub fn build_all(
    topo: &Topology,
    log: &IncidentLog,
    kpis: &KpiStore,
    windows: &[FailureWindow],
    cfg: ImpactConfig,
    seed: u64,
) -> Result<Vec<FailureImpactGraph>> {
    cfg.validate()?;
    let per_window = windows
        .par_iter()
        .enumerate()
        .map(|(wi, &w)| {
            let ctx = WindowContext::new(topo, log, kpis, w, cfg);
            build_impact_graphs(&ctx, seed.wrapping_add(wi as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_window.into_iter().flatten().collect())
}
