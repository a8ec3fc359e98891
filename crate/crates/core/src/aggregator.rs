//! Online incident aggregation.
//!
//! While the burst detector reports an active failure, each arriving
//! incident joins the open group it is most similar to, provided that
//! similarity reaches `lambda`; otherwise it opens a new group. Similarity
//! is the cosine of the type embeddings damped by hop distance.

use std::collections::BTreeSet;

use crate::codec::GroupRow;
use crate::detector::{EvtDetector, Verdict};
use crate::error::{Error, Result};
use crate::model::{
    FailureWindow, HopDistances, IncidentEmbedding, IncidentLog, IncidentRecord, Minute, NodeId,
    Topology,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatorConfig {
    pub lambda: f64,
    pub tau: u32,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            lambda: 0.7,
            tau: 4,
        }
    }
}

impl AggregatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must be in [0,1], got {}",
                self.lambda
            )));
        }
        if self.tau == 0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(())
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn historical_closeness(a: &[f32], b: &[f32]) -> f64 {
    let (mut d, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        d += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    d / (na.sqrt() * nb.sqrt())
}

/// Cosine between two named types; `None` when either is out of vocabulary.
pub fn historical_closeness_of(emb: &IncidentEmbedding, a: &str, b: &str) -> Option<f64> {
    let ia = emb.index_of(a)?;
    let ib = emb.index_of(b)?;
    Some(historical_closeness(emb.vector(ia), emb.vector(ib)))
}

/// `1 / max(1, d - tau)`.
pub fn topological_rescaling(d: u32, tau: u32) -> f64 {
    1.0 / (d.saturating_sub(tau)).max(1) as f64
}

/// `TR * HC`, with unreachable pairs at an effectively infinite distance.
/// `None` when the closeness is undefined (out-of-vocabulary type).
pub fn similarity(hc: Option<f64>, hops: Option<u32>, tau: u32) -> Option<f64> {
    let hc = hc?;
    Some(topological_rescaling(hops.unwrap_or(u32::MAX), tau) * hc)
}

/// 1 iff `sim >= lambda`; undefined similarity is never correlated.
pub fn decide_correlation(sim: Option<f64>, lambda: f64) -> bool {
    sim.is_some_and(|s| s >= lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMember {
    /// Index into the originating incident log.
    pub index: usize,
    pub record: IncidentRecord,
    /// Row of the type in the embedding, `None` when out of vocabulary.
    pub emb_row: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidentGroup {
    pub id: usize,
    /// In arrival order.
    pub members: Vec<GroupMember>,
    /// Distinct (node, embedding row) pairs among the members.
    keys: BTreeSet<(NodeId, usize)>,
}

impl IncidentGroup {
    pub fn new(id: usize, m: GroupMember) -> Self {
        let mut keys = BTreeSet::new();
        if let Some(r) = m.emb_row {
            keys.insert((m.record.node, r));
        }
        Self {
            id,
            members: vec![m],
            keys,
        }
    }

    pub fn push(&mut self, m: GroupMember) {
        if let Some(r) = m.emb_row {
            self.keys.insert((m.record.node, r));
        }
        self.members.push(m);
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Largest similarity between the incident and any group member.
pub fn incident_to_group_similarity(
    emb: &IncidentEmbedding,
    hops: &HopDistances,
    node: NodeId,
    emb_row: Option<usize>,
    group: &IncidentGroup,
    tau: u32,
) -> Option<f64> {
    let row = emb_row?;
    let v = emb.vector(row);
    let mut best: Option<f64> = None;
    for &(n, r) in &group.keys {
        let s = similarity(
            Some(historical_closeness(v, emb.vector(r))),
            hops.get(node, n),
            tau,
        );
        best = match (best, s) {
            (Some(b), Some(s)) => Some(b.max(s)),
            (None, s) => s,
            (b, None) => b,
        };
    }
    best
}

/// Streaming grouper for one incident partition.
pub struct OnlineAggregator<'a> {
    emb: &'a IncidentEmbedding,
    hops: &'a HopDistances,
    cfg: AggregatorConfig,
    /// Log type id -> embedding row.
    type_rows: Vec<Option<usize>>,
    open: Vec<IncidentGroup>,
    done: Vec<IncidentGroup>,
    next_id: usize,
}

impl<'a> OnlineAggregator<'a> {
    pub fn new(
        emb: &'a IncidentEmbedding,
        hops: &'a HopDistances,
        log: &IncidentLog,
        cfg: AggregatorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let type_rows = log.types.names().iter().map(|n| emb.index_of(n)).collect();
        Ok(Self {
            emb,
            hops,
            cfg,
            type_rows,
            open: Vec::new(),
            done: Vec::new(),
            next_id: 0,
        })
    }

    /// Assigns one incident to a group and returns the group id.
    pub fn push(&mut self, index: usize, record: IncidentRecord) -> usize {
        let emb_row = self.type_rows.get(record.itype.index()).copied().flatten();
        let member = GroupMember {
            index,
            record,
            emb_row,
        };
        let mut best: Option<(usize, f64)> = None;
        if emb_row.is_some() {
            for (gi, g) in self.open.iter().enumerate() {
                let s = incident_to_group_similarity(
                    self.emb,
                    self.hops,
                    record.node,
                    emb_row,
                    g,
                    self.cfg.tau,
                );
                if !decide_correlation(s, self.cfg.lambda) {
                    continue;
                }
                let s = s.unwrap_or(f64::NEG_INFINITY);
                // strict: ties stay with the older group
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((gi, s));
                }
            }
        }
        match best {
            Some((gi, _)) => {
                self.open[gi].push(member);
                self.open[gi].id
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                self.open.push(IncidentGroup::new(id, member));
                id
            }
        }
    }

    /// Finalizes every open group.
    pub fn close_window(&mut self) {
        self.done.append(&mut self.open);
    }

    pub fn open_groups(&self) -> &[IncidentGroup] {
        &self.open
    }

    /// All groups ordered by id, closing any still open.
    pub fn finish(mut self) -> Vec<IncidentGroup> {
        self.close_window();
        self.done.sort_by_key(|g| g.id);
        self.done
    }
}

/// Groups-file rows: by group id, members in arrival order.
pub fn group_rows(groups: &[IncidentGroup], log: &IncidentLog, topo: &Topology) -> Vec<GroupRow> {
    let mut rows = Vec::new();
    for g in groups {
        for m in &g.members {
            rows.push(GroupRow {
                group_id: g.id,
                minute: m.record.minute,
                node: topo.name(m.record.node).to_string(),
                itype: log.type_name(m.record.itype).to_string(),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutcome {
    pub groups: Vec<IncidentGroup>,
    /// Windows during which aggregation was active.
    pub windows: Vec<FailureWindow>,
}

/// Runs the detector minute by minute over `[start, end]` and groups the
/// incidents of anomalous minutes. The detector must be calibrated and keeps
/// its state afterwards.
pub fn aggregate_stream(
    log: &IncidentLog,
    start: Minute,
    end: Minute,
    emb: &IncidentEmbedding,
    hops: &HopDistances,
    detector: &mut EvtDetector,
    cfg: AggregatorConfig,
) -> Result<StreamOutcome> {
    let mut agg = OnlineAggregator::new(emb, hops, log, cfg)?;
    let mut windows = Vec::new();
    let mut active: Option<Minute> = None;
    let range = log.indices_in(start, end);
    let mut i = range.start;
    if start <= end {
        for m in start..=end {
            let lo = i;
            while i < range.end && log.records[i].minute == m {
                i += 1;
            }
            let verdict = detector.observe((i - lo) as f64)?;
            if verdict == Verdict::Anomalous {
                active.get_or_insert(m);
                for k in lo..i {
                    agg.push(k, log.records[k]);
                }
            } else if let Some(s) = active.take() {
                windows.push(FailureWindow {
                    start: s,
                    end: m - 1,
                });
                agg.close_window();
            }
        }
    }
    if let Some(s) = active {
        windows.push(FailureWindow { start: s, end });
    }
    Ok(StreamOutcome {
        groups: agg.finish(),
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tr_examples() {
        for d in 0..=5 {
            assert_eq!(topological_rescaling(d, 4), 1.0);
        }
        assert_eq!(topological_rescaling(6, 4), 0.5);
        assert_eq!(topological_rescaling(104, 4), 0.01);
    }

    #[test]
    fn similarity_examples() {
        assert!((similarity(Some(0.9), Some(6), 4).unwrap() - 0.45).abs() < 1e-15);
        assert!(decide_correlation(similarity(Some(0.9), Some(2), 4), 0.7));
        assert!(decide_correlation(Some(0.7), 0.7));
        assert!(!decide_correlation(Some(0.69), 0.7));
        assert!(!decide_correlation(None, 0.7));
        assert!(!decide_correlation(similarity(Some(1.0), None, 4), 0.7));
    }

    #[test]
    fn closeness_examples() {
        let a = [1.0f32, 2.0, 3.0];
        assert!((historical_closeness(&a, &a) - 1.0).abs() < 1e-15);
        assert_eq!(historical_closeness(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert_eq!(historical_closeness(&[0.0, 0.0], &[0.0, 2.0]), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(AggregatorConfig::default().validate().is_ok());
        assert!(AggregatorConfig {
            lambda: 1.5,
            tau: 4
        }
        .validate()
        .is_err());
        assert!(AggregatorConfig {
            lambda: 0.5,
            tau: 0
        }
        .validate()
        .is_err());
    }
}
