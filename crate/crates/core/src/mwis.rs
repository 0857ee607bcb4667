//! Greedy and exact maximal-weight independent sets.

use std::cmp::Ordering;

use thiserror::Error;

/// Default vertex cap for [`exact_mwis`].
pub const DEFAULT_EXACT_CAP: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MwisError {
    #[error("graph has {vertices} vertices, above the exact-solver cap of {cap}")]
    TooLarge { vertices: usize, cap: usize },
}

/// The view of a graph the solvers need.
pub trait IndependenceGraph {
    fn vertex_count(&self) -> usize;
    fn weight(&self, v: usize) -> f64;
    fn is_adjacent(&self, a: usize, b: usize) -> bool;

    /// Final tie-break key, smaller wins.
    fn tie_key(&self, v: usize) -> [u64; 4] {
        [v as u64, 0, 0, 0]
    }

    /// For every live vertex, the summed weight of the other live vertices
    /// it is NOT adjacent to. Dead entries are `0`.
    fn weighted_degrees_within(&self, alive: &[bool]) -> Vec<f64> {
        naive_weighted_degrees(self, alive)
    }
}

/// Quadratic reference for [`IndependenceGraph::weighted_degrees_within`].
pub fn naive_weighted_degrees<G: IndependenceGraph + ?Sized>(g: &G, alive: &[bool]) -> Vec<f64> {
    let n = g.vertex_count();
    let mut out = vec![0.0; n];
    for v in (0..n).filter(|&v| alive[v]) {
        out[v] = (0..n)
            .filter(|&u| u != v && alive[u] && !g.is_adjacent(v, u))
            .map(|u| g.weight(u))
            .sum();
    }
    out
}

/// Weighted degree of `v` over the whole graph.
pub fn weighted_degree<G: IndependenceGraph + ?Sized>(g: &G, v: usize) -> f64 {
    (0..g.vertex_count())
        .filter(|&u| u != v && !g.is_adjacent(v, u))
        .map(|u| g.weight(u))
        .sum()
}

/// A set of pairwise non-adjacent vertices with its summed weight.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndependentSet {
    pub vertices: Vec<usize>,
    pub weight: f64,
}

impl IndependentSet {
    fn from_vertices<G: IndependenceGraph + ?Sized>(g: &G, mut vertices: Vec<usize>) -> Self {
        vertices.sort_unstable();
        let weight = vertices.iter().map(|&v| g.weight(v)).sum();
        Self { vertices, weight }
    }

    pub fn is_independent<G: IndependenceGraph + ?Sized>(&self, g: &G) -> bool {
        self.vertices
            .iter()
            .enumerate()
            .all(|(a, &u)| self.vertices[a + 1..].iter().all(|&v| u != v && !g.is_adjacent(u, v)))
    }

    pub fn is_maximal<G: IndependenceGraph + ?Sized>(&self, g: &G) -> bool {
        (0..g.vertex_count())
            .filter(|v| !self.vertices.contains(v))
            .all(|v| self.vertices.iter().any(|&u| g.is_adjacent(u, v)))
    }
}

/// Greedy selection on modified weights `ω·g`, recomputed inside the
/// surviving subgraph after every pick. Ties go to the larger original
/// weight, then to the smaller [`IndependenceGraph::tie_key`]. When every
/// modified weight is zero this reduces to picking the heaviest vertex.
pub fn greedy_mwis<G: IndependenceGraph + ?Sized>(g: &G) -> IndependentSet {
    let n = g.vertex_count();
    let mut alive = vec![true; n];
    let mut remaining = n;
    let mut chosen = Vec::new();
    while remaining > 0 {
        let degrees = g.weighted_degrees_within(&alive);
        let mut best: Option<(usize, f64)> = None;
        for v in (0..n).filter(|&v| alive[v]) {
            let m = g.weight(v) * degrees[v];
            let better = match best {
                None => true,
                Some((b, bm)) => match m.total_cmp(&bm) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => match g.weight(v).total_cmp(&g.weight(b)) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => g.tie_key(v) < g.tie_key(b),
                    },
                },
            };
            if better {
                best = Some((v, m));
            }
        }
        let (pick, _) = best.expect("a live vertex exists");
        chosen.push(pick);
        for u in 0..n {
            if alive[u] && (u == pick || g.is_adjacent(u, pick)) {
                alive[u] = false;
                remaining -= 1;
            }
        }
    }
    IndependentSet::from_vertices(g, chosen)
}

/// Maximum-weight independent set by branch and bound, padded to a maximal
/// set. Refuses graphs above `cap` vertices (at most 64).
pub fn exact_mwis<G: IndependenceGraph + ?Sized>(g: &G, cap: usize) -> Result<IndependentSet, MwisError> {
    let n = g.vertex_count();
    let cap = cap.min(64);
    if n > cap {
        return Err(MwisError::TooLarge { vertices: n, cap });
    }
    let adj: Vec<u64> = (0..n)
        .map(|v| (0..n).filter(|&u| g.is_adjacent(v, u)).fold(0u64, |m, u| m | 1 << u))
        .collect();
    let w: Vec<f64> = (0..n).map(|v| g.weight(v).max(0.0)).collect();

    struct Search<'a> {
        adj: &'a [u64],
        w: &'a [f64],
        best: f64,
        best_set: u64,
    }
    impl Search<'_> {
        fn go(&mut self, cand: u64, cur: u64, cur_w: f64) {
            if cand == 0 {
                if cur_w > self.best {
                    self.best = cur_w;
                    self.best_set = cur;
                }
                return;
            }
            let bound: f64 = cur_w + bits(cand).map(|v| self.w[v]).sum::<f64>();
            if bound <= self.best {
                return;
            }
            let v = cand.trailing_zeros() as usize;
            let bit = 1u64 << v;
            self.go(cand & !bit & !self.adj[v], cur | bit, cur_w + self.w[v]);
            self.go(cand & !bit, cur, cur_w);
        }
    }
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut s = Search { adj: &adj, w: &w, best: -1.0, best_set: 0 };
    s.go(all, 0, 0.0);

    let mut set = s.best_set;
    for v in 0..n {
        if set & adj[v] == 0 && set & (1 << v) == 0 {
            set |= 1 << v;
        }
    }
    Ok(IndependentSet::from_vertices(g, bits(set).collect()))
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        (m != 0).then(|| {
            let v = m.trailing_zeros() as usize;
            m &= m - 1;
            v
        })
    })
}

/// An explicit weighted graph with a dense adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericGraph {
    weights: Vec<f64>,
    adj: Vec<bool>,
}

impl GenericGraph {
    pub fn new(weights: Vec<f64>, edges: &[(usize, usize)]) -> Self {
        let n = weights.len();
        let mut adj = vec![false; n * n];
        for &(a, b) in edges {
            if a != b {
                adj[a * n + b] = true;
                adj[b * n + a] = true;
            }
        }
        Self { weights, adj }
    }
}

impl IndependenceGraph for GenericGraph {
    fn vertex_count(&self) -> usize {
        self.weights.len()
    }

    fn weight(&self, v: usize) -> f64 {
        self.weights[v]
    }

    fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.weights.len() + b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique(w: Vec<f64>) -> GenericGraph {
        let n = w.len();
        let edges: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        GenericGraph::new(w, &edges)
    }

    #[test]
    fn weighted_degree_examples() {
        let c = clique(vec![1.0, 2.0, 3.0]);
        assert_eq!(weighted_degree(&c, 0), 0.0);
        let pair = GenericGraph::new(vec![3.0, 5.0], &[]);
        assert_eq!(weighted_degree(&pair, 0), 5.0);
        let single = GenericGraph::new(vec![4.0], &[]);
        assert_eq!(weighted_degree(&single, 0), 0.0);
    }

    #[test]
    fn greedy_examples() {
        let single = GenericGraph::new(vec![4.0], &[]);
        assert_eq!(greedy_mwis(&single).vertices, vec![0]);
        let c = clique(vec![1.0, 3.0, 2.0]);
        let is = greedy_mwis(&c);
        assert_eq!(is.vertices, vec![1]);
        assert_eq!(is.weight, 3.0);
        let empty = GenericGraph::new(vec![], &[]);
        assert!(greedy_mwis(&empty).vertices.is_empty());
    }

    #[test]
    fn clique_ties_go_to_lowest_key() {
        let c = clique(vec![2.0, 2.0, 2.0]);
        assert_eq!(greedy_mwis(&c).vertices, vec![0]);
    }

    #[test]
    fn exact_examples() {
        let free = GenericGraph::new(vec![1.0, 2.0, 0.5], &[]);
        assert_eq!(exact_mwis(&free, 20).unwrap().vertices, vec![0, 1, 2]);
        let pair = GenericGraph::new(vec![1.0, 2.0], &[]);
        assert_eq!(exact_mwis(&pair, 20).unwrap().weight, 3.0);
        let big = GenericGraph::new(vec![1.0; 21], &[]);
        assert_eq!(exact_mwis(&big, 20), Err(MwisError::TooLarge { vertices: 21, cap: 20 }));
    }

    #[test]
    fn greedy_can_be_suboptimal_on_a_star() {
        // centre 0 joined to leaves 1..4; centre heavy enough to win the greedy pick
        let g = GenericGraph::new(vec![10.0, 3.0, 3.0, 3.0, 3.0], &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let gr = greedy_mwis(&g);
        let ex = exact_mwis(&g, 20).unwrap();
        assert!(ex.weight >= gr.weight);
        assert_eq!(ex.weight, 12.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn graph() -> impl Strategy<Value = GenericGraph> {
            (1usize..14).prop_flat_map(|n| {
                (
                    proptest::collection::vec(0.1f64..10.0, n),
                    proptest::collection::vec(any::<bool>(), n * n),
                )
                    .prop_map(move |(w, m)| {
                        let edges: Vec<_> = (0..n)
                            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                            .filter(|&(a, b)| m[a * n + b])
                            .collect();
                        GenericGraph::new(w, &edges)
                    })
            })
        }

        proptest! {
            #[test]
            fn greedy_is_maximal_and_exact_dominates(g in graph()) {
                let gr = greedy_mwis(&g);
                prop_assert!(gr.is_independent(&g));
                prop_assert!(gr.is_maximal(&g));
                let ex = exact_mwis(&g, 20).unwrap();
                prop_assert!(ex.is_independent(&g));
                prop_assert!(ex.is_maximal(&g));
                prop_assert!(ex.weight >= gr.weight - 1e-9);
                prop_assert_eq!(greedy_mwis(&g), gr);
            }
        }
    }
}
