//! Weighted modularity and two-phase Louvain community detection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::NodeId;

/// Weighted undirected graph over a subset of topology nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    /// Topology id of each local vertex.
    pub nodes: Vec<NodeId>,
    /// `(a, b, w)` with `a < b` local indices, `0 <= w <= 1`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl SimilarityGraph {
    pub fn new(nodes: Vec<NodeId>, edges: Vec<(usize, usize, f64)>) -> Self {
        let edges = edges
            .into_iter()
            .map(|(a, b, w)| if a < b { (a, b, w) } else { (b, a, w) })
            .collect();
        Self { nodes, edges }
    }

    /// Unlabelled graph on `n` vertices; node ids are the local indices.
    pub fn from_edges(n: usize, edges: Vec<(usize, usize, f64)>) -> Self {
        Self::new((0..n as u32).map(NodeId).collect(), edges)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted degrees `k_i`.
    pub fn degrees(&self) -> Vec<f64> {
        let mut k = vec![0.0; self.len()];
        for &(a, b, w) in &self.edges {
            k[a] += w;
            k[b] += w;
        }
        k
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        let (a, b) = (a.min(b), a.max(b));
        self.edges
            .iter()
            .filter(|e| e.0 == a && e.1 == b)
            .map(|e| e.2)
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            nodes: self.nodes.clone(),
            edges: self.edges.iter().map(|&(a, b, w)| (a, b, w * c)).collect(),
        }
    }
}

/// Hard assignment of every local vertex to a community id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<usize>,
}

impl Partition {
    pub fn singletons(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
        }
    }

    pub fn community_count(&self) -> usize {
        let mut ids = self.assignment.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Members of each community, ordered by smallest member.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = Vec::new();
        let mut members: std::collections::HashMap<usize, Vec<usize>> = Default::default();
        for (v, &c) in self.assignment.iter().enumerate() {
            let entry = members.entry(c).or_default();
            if entry.is_empty() {
                order.push(c);
            }
            entry.push(v);
        }
        order
            .into_iter()
            .map(|c| members.remove(&c).unwrap_or_default())
            .collect()
    }
}

/// `M = (1/2m) sum_{i,j} [W_ij - k_i k_j / 2m] delta(c_i, c_j)` over ordered
/// pairs including `i = j` with `W_ii = 0`. Zero when the graph has no weight.
pub fn modularity(g: &SimilarityGraph, p: &Partition) -> f64 {
    assert_eq!(
        p.assignment.len(),
        g.len(),
        "partition does not cover the graph"
    );
    let k = g.degrees();
    let two_m: f64 = k.iter().sum();
    if two_m <= 0.0 {
        return 0.0;
    }
    let n_comm = p.assignment.iter().max().map_or(0, |&c| c + 1);
    let mut inside = vec![0.0; n_comm];
    let mut total = vec![0.0; n_comm];
    for &(a, b, w) in &g.edges {
        if p.assignment[a] == p.assignment[b] {
            // both (a,b) and (b,a) in the ordered sum
            inside[p.assignment[a]] += 2.0 * w;
        }
    }
    for (v, &c) in p.assignment.iter().enumerate() {
        total[c] += k[v];
    }
    inside
        .iter()
        .zip(&total)
        .map(|(&w_in, &tot)| w_in / two_m - (tot / two_m) * (tot / two_m))
        .sum()
}

struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_w: Vec<f64>,
    k: Vec<f64>,
}

impl Level {
    fn from_graph(g: &SimilarityGraph) -> Self {
        let n = g.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, b, w) in &g.edges {
            if a == b {
                continue;
            }
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for list in &mut adj {
            list.sort_by_key(|e| e.0);
        }
        let k = g.degrees();
        Self {
            adj,
            self_w: vec![0.0; n],
            k,
        }
    }

    fn len(&self) -> usize {
        self.k.len()
    }

    /// Greedy local moving from `init` (singletons when `None`). Returns
    /// compact community ids and whether any vertex changed community.
    fn local_moving(
        &self,
        init: Option<&[usize]>,
        two_m: f64,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut comm: Vec<usize> = init.map_or_else(|| (0..n).collect(), |a| a.to_vec());
        let mut tot = vec![0.0; n];
        for (i, &c) in comm.iter().enumerate() {
            tot[c] += self.k[i];
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut w_to = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moved_any = false;
        let eps = 1e-12;

        for _pass in 0..10_000 {
            let mut moved = false;
            for &i in &order {
                let ci = comm[i];
                let ki = self.k[i];
                for &(j, w) in &self.adj[i] {
                    let cj = comm[j];
                    if w_to[cj] == 0.0 && !touched.contains(&cj) {
                        touched.push(cj);
                    }
                    w_to[cj] += w;
                }
                tot[ci] -= ki;
                // gain of inserting i into c, in units of 1/m
                let gain = |c: usize, w: f64| (w - tot[c] * ki / two_m) / two_m;
                let mut best = ci;
                let mut best_gain = gain(ci, w_to[ci]);
                for &c in &touched {
                    if c == ci {
                        continue;
                    }
                    let g = gain(c, w_to[c]);
                    if g > best_gain + eps {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += ki;
                if best != ci {
                    comm[i] = best;
                    moved = true;
                    moved_any = true;
                }
                for &c in &touched {
                    w_to[c] = 0.0;
                }
                w_to[ci] = 0.0;
                touched.clear();
            }
            if !moved {
                break;
            }
        }

        // renumber by first appearance in vertex order
        let mut remap = vec![usize::MAX; n];
        let mut next = 0;
        for c in comm.iter_mut() {
            if remap[*c] == usize::MAX {
                remap[*c] = next;
                next += 1;
            }
            *c = remap[*c];
        }
        (comm, moved_any)
    }

    fn aggregate(&self, comm: &[usize]) -> Level {
        let n_comm = comm.iter().max().map_or(0, |&c| c + 1);
        let mut self_w = vec![0.0; n_comm];
        let mut k = vec![0.0; n_comm];
        let mut between: Vec<std::collections::BTreeMap<usize, f64>> =
            vec![Default::default(); n_comm];
        for i in 0..self.len() {
            let ci = comm[i];
            self_w[ci] += self.self_w[i];
            k[ci] += self.k[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if ci == cj {
                    // each internal edge is seen from both ends
                    self_w[ci] += w / 2.0;
                } else {
                    *between[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        let adj = between
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect();
        Level { adj, self_w, k }
    }
}

/// Two-phase Louvain: local moving until no positive-gain move remains,
/// then community contraction, repeated to a fixed point. The result is then
/// refined by local moving of single vertices on the original graph and, if
/// that moved anything, contracted again. Vertex visit order is shuffled per
/// level; equal-gain moves keep the current community.
///
/// Runs [`RESTARTS`] times with visit orders derived from `seed` and keeps
/// the partition of highest modularity (the earliest run on ties).
pub fn louvain(g: &SimilarityGraph, seed: u64) -> Partition {
    let mut best = louvain_once(g, seed);
    let mut best_q = modularity(g, &best);
    for r in 1..RESTARTS {
        let p = louvain_once(g, seed.wrapping_add(r.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let q = modularity(g, &p);
        if q > best_q + 1e-12 {
            best = p;
            best_q = q;
        }
    }
    best
}

/// Independent orderings tried by [`louvain`].
pub const RESTARTS: u64 = 8;

fn louvain_once(g: &SimilarityGraph, seed: u64) -> Partition {
    let n = g.len();
    let two_m: f64 = g.degrees().iter().sum();
    if n == 0 || two_m <= 0.0 {
        return Partition::singletons(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Level::from_graph(g);
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut level = base.aggregate(&assignment);
    loop {
        loop {
            let (comm, moved) = level.local_moving(None, two_m, &mut rng);
            if !moved {
                break;
            }
            for a in assignment.iter_mut() {
                *a = comm[*a];
            }
            level = level.aggregate(&comm);
            if level.len() == 1 {
                break;
            }
        }
        let (refined, moved) = base.local_moving(Some(&assignment), two_m, &mut rng);
        if !moved {
            break;
        }
        assignment = refined;
        level = base.aggregate(&assignment);
    }
    Partition { assignment }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> SimilarityGraph {
        SimilarityGraph::from_edges(
            6,
            vec![
                (0, 1, 1.0),
                (1, 2, 1.0),
                (0, 2, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (3, 5, 1.0),
            ],
        )
    }

    #[test]
    fn one_community_is_zero() {
        let g = two_triangles();
        let p = Partition {
            assignment: vec![0; 6],
        };
        assert!(modularity(&g, &p).abs() < 1e-15);
    }

    #[test]
    fn natural_triangles() {
        let g = two_triangles();
        let p = Partition {
            assignment: vec![0, 0, 0, 1, 1, 1],
        };
        assert!((modularity(&g, &p) - 0.5).abs() < 1e-12);
        let found = louvain(&g, 7);
        assert_eq!(found.community_count(), 2);
        assert!((modularity(&g, &found) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn relabeling_invariant() {
        let g = two_triangles();
        let a = Partition {
            assignment: vec![0, 0, 1, 1, 2, 2],
        };
        let b = Partition {
            assignment: vec![5, 5, 3, 3, 0, 0],
        };
        assert_eq!(modularity(&g, &a), modularity(&g, &b));
    }

    #[test]
    fn empty_weight_graph() {
        let g = SimilarityGraph::from_edges(3, vec![(0, 1, 0.0)]);
        assert_eq!(modularity(&g, &Partition::singletons(3)), 0.0);
        assert_eq!(louvain(&g, 1), Partition::singletons(3));
        let single = SimilarityGraph::from_edges(1, vec![]);
        assert_eq!(louvain(&single, 0).community_count(), 1);
    }

    #[test]
    fn planted_groups_with_weak_bridge() {
        // two 5-cliques joined by one weak edge
        let mut edges = Vec::new();
        for base in [0, 5] {
            for a in 0..5 {
                for b in a + 1..5 {
                    edges.push((base + a, base + b, 0.8));
                }
            }
        }
        edges.push((4, 5, 0.1));
        let g = SimilarityGraph::from_edges(10, edges);
        for seed in 0..5 {
            let p = louvain(&g, seed);
            assert_eq!(p.community_count(), 2);
            assert!(p.assignment[..5].iter().all(|&c| c == p.assignment[0]));
            assert!(p.assignment[5..].iter().all(|&c| c == p.assignment[5]));
        }
    }
}
