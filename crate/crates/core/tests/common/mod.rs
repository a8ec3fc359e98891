//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use incagg::impact::louvain::{modularity, Partition, SimilarityGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random weighted graph on `n` nodes; weights are multiples of 1/8.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> SimilarityGraph {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                edges.push((a, b, rng.random_range(1..=8) as f64 / 8.0));
            }
        }
    }
    SimilarityGraph::from_edges(n, edges)
}

/// Every set partition of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur.push(c);
            rec(i + 1, n, cur, max.max(c), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut cur = vec![0];
    rec(1, n, &mut cur, 0, &mut out);
    out
}

/// Largest modularity over every partition.
pub fn best_modularity(g: &SimilarityGraph) -> f64 {
    set_partitions(g.len())
        .into_iter()
        .map(|a| modularity(g, &Partition { assignment: a }))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// DTW by enumerating every monotone warping path: the path of least cost,
/// ties broken by the shorter path, normalised by its length.
pub fn dtw_enumerate(u: &[f64], v: &[f64]) -> f64 {
    fn walk(
        u: &[f64],
        v: &[f64],
        i: usize,
        j: usize,
        cost: f64,
        len: usize,
        best: &mut (f64, usize),
    ) {
        let cost = cost + (u[i] - v[j]).abs();
        let len = len + 1;
        if i + 1 == u.len() && j + 1 == v.len() {
            if cost < best.0 || (cost == best.0 && len < best.1) {
                *best = (cost, len);
            }
            return;
        }
        if i + 1 < u.len() {
            walk(u, v, i + 1, j, cost, len, best);
        }
        if j + 1 < v.len() {
            walk(u, v, i, j + 1, cost, len, best);
        }
        if i + 1 < u.len() && j + 1 < v.len() {
            walk(u, v, i + 1, j + 1, cost, len, best);
        }
    }
    let mut best = (f64::INFINITY, usize::MAX);
    walk(u, v, 0, 0, 0.0, 0, &mut best);
    best.0 / best.1 as f64
}

/// All-pairs hop distances; `None` when unreachable.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<u32>>> {
    let inf = u32::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d.into_iter()
        .map(|r| r.into_iter().map(|x| (x < inf).then_some(x)).collect())
        .collect()
}

/// NMI from an explicit contingency table, in bits.
pub fn nmi_table(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut t: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, f64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *t.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let h =
        |m: &BTreeMap<usize, f64>| -> f64 { m.values().map(|c| -(c / n) * (c / n).log2()).sum() };
    let (ha, hb) = (h(&ra), h(&rb));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &t {
        let pxy = c / n;
        mi += pxy * (pxy / ((ra[&x] / n) * (rb[&y] / n))).log2();
    }
    2.0 * mi / (ha + hb)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
