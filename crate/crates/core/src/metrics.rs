//! Detection precision/recall/F1 and clustering NMI.

use std::collections::BTreeMap;

use crate::aggregator::IncidentGroup;
use crate::codec::Label;
use crate::error::{Error, Result};
use crate::model::FailureWindow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Greedy one-to-one matching by start time: each predicted window takes the
/// earliest unmatched truth window it overlaps. When both lists are empty
/// the score is perfect.
pub fn score_detection(predicted: &[FailureWindow], truth: &[FailureWindow]) -> DetectionScore {
    let mut pred = predicted.to_vec();
    pred.sort();
    let mut truth = truth.to_vec();
    truth.sort();
    let mut used = vec![false; truth.len()];
    let mut tp = 0;
    for p in &pred {
        if let Some(k) = (0..truth.len()).find(|&k| !used[k] && truth[k].overlaps(p)) {
            used[k] = true;
            tp += 1;
        }
    }
    let fp = pred.len() - tp;
    let fn_ = truth.len() - tp;
    if pred.is_empty() && truth.is_empty() {
        return DetectionScore {
            tp,
            fp,
            fn_,
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionScore {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
    }
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `2 I(omega; c) / (H(omega) + H(c))` in nats. 1 when both entropies are
/// zero, 0 when exactly one is.
pub fn nmi<A: Ord + Clone, B: Ord + Clone>(omega: &[A], c: &[B]) -> Result<f64> {
    if omega.len() != c.len() {
        return Err(Error::InvalidInput(format!(
            "label vectors differ in length: {} vs {}",
            omega.len(),
            c.len()
        )));
    }
    if omega.is_empty() {
        return Err(Error::InvalidInput("NMI of empty labelings".into()));
    }
    let n = omega.len() as f64;
    let mut joint: BTreeMap<(A, B), usize> = BTreeMap::new();
    let mut ca: BTreeMap<A, usize> = BTreeMap::new();
    let mut cb: BTreeMap<B, usize> = BTreeMap::new();
    for (a, b) in omega.iter().zip(c) {
        *joint.entry((a.clone(), b.clone())).or_default() += 1;
        *ca.entry(a.clone()).or_default() += 1;
        *cb.entry(b.clone()).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for ((a, b), &nij) in &joint {
        let nij = nij as f64;
        mi += nij / n * (n * nij / (ca[a] as f64 * cb[b] as f64)).ln();
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Aligned (cluster, class) labels for every grouped failure incident.
/// Incidents labelled as noise are left out.
pub fn label_clustering(
    groups: &[IncidentGroup],
    truth: &[Label],
) -> Result<(Vec<usize>, Vec<u32>)> {
    let mut pairs: Vec<(usize, usize, u32)> = Vec::new();
    for g in groups {
        for m in &g.members {
            let label = truth
                .get(m.index)
                .ok_or_else(|| Error::InvalidInput(format!("incident {} has no label", m.index)))?;
            if let Label::Failure(f) = label {
                pairs.push((m.index, g.id, *f));
            }
        }
    }
    pairs.sort_unstable();
    Ok(pairs.into_iter().map(|(_, g, f)| (g, f)).unzip())
}
