//! Pairwise node similarities: multiset Jaccard over reported incident
//! types and DTW-based KPI trend similarity.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::TypeId;

/// Multiset Jaccard: `sum_t min(a_t, b_t) / sum_t max(a_t, b_t)`, where
/// `x_t` is the multiplicity of type `t`. Zero when both are empty.
pub fn incident_similarity(a: &[TypeId], b: &[TypeId]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let (mut i, mut j) = (0, 0);
    let (mut inter, mut union) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                union += 1;
                i += 1;
            }
            Ordering::Greater => {
                union += 1;
                j += 1;
            }
            Ordering::Equal => {
                inter += 1;
                union += 1;
                i += 1;
                j += 1;
            }
        }
    }
    union += (a.len() - i) + (b.len() - j);
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// DTW with absolute-difference local cost over the full window.
///
/// Among warping paths of minimal total cost the shortest is taken; the
/// result is that cost divided by the path length.
pub fn dtw_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::InvalidInput("DTW needs non-empty sequences".into()));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("DTW needs finite values".into()));
    }
    let m = v.len();
    // rolling rows of (cost, path length)
    let mut prev = vec![(f64::INFINITY, 0u32); m];
    let mut cur = vec![(f64::INFINITY, 0u32); m];
    for (i, &ui) in u.iter().enumerate() {
        for j in 0..m {
            let c = (ui - v[j]).abs();
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, u32::MAX);
                if i > 0 {
                    best = lex_min(best, prev[j]);
                    if j > 0 {
                        best = lex_min(best, prev[j - 1]);
                    }
                }
                if j > 0 {
                    best = lex_min(best, cur[j - 1]);
                }
                best
            };
            cur[j] = (c + best.0, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, len) = prev[m - 1];
    Ok(cost / len as f64)
}

#[inline]
fn lex_min(a: (f64, u32), b: (f64, u32)) -> (f64, u32) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Z-normalization; a constant series maps to all zeros.
pub fn z_normalize(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-12 * mean.abs().max(1.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|x| (x - mean) / sd).collect()
}

/// `1 / (1 + dtw)` between the z-normalized series.
pub fn trend_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    let d = dtw_distance(&z_normalize(u), &z_normalize(v))?;
    Ok(1.0 / (1.0 + d))
}

/// Mean trend similarity over shared abnormal KPI pairs; 0 when there are none.
pub fn mean_trend_similarity<'a>(
    pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut k = 0usize;
    for (u, v) in pairs {
        if u.is_empty() || v.is_empty() {
            continue;
        }
        sum += trend_similarity(u, v)?;
        k += 1;
    }
    Ok(if k == 0 { 0.0 } else { sum / k as f64 })
}

/// Balance between incident and KPI similarity when both nodes report.
pub const BOTH_REPORT_ALPHA: f64 = 0.5;

/// `alpha * jaccard + (1 - alpha) * kpi` with `alpha` = `both_alpha` when
/// both nodes reported incidents and 0 otherwise.
pub fn edge_weight(jaccard: f64, kpi_similarity: f64, both_report: bool, both_alpha: f64) -> f64 {
    let alpha = if both_report { both_alpha } else { 0.0 };
    alpha * jaccard + (1.0 - alpha) * kpi_similarity
}
