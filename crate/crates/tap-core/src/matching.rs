//! Maximum cardinality matching in general graphs (blossom algorithm),
//! plus the leaf-to-leaf link graph it is run on.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::instance::{Link, NodeId, TapInstance};

/// Simple undirected graph on `0..vertex_count`, no loops, no multi-edges.
#[derive(Debug, Clone, Default)]
pub struct SimpleGraph {
    vertex_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl SimpleGraph {
    pub fn new(vertex_count: usize) -> SimpleGraph {
        SimpleGraph {
            vertex_count,
            edges: BTreeSet::new(),
        }
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        assert!(a != b && a < self.vertex_count && b < self.vertex_count);
        self.edges.insert((a.min(b), a.max(b)));
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Sorted adjacency lists; the scan order of the matcher.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }
}

/// A set of vertex-disjoint edges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    pub edges: BTreeSet<(usize, usize)>,
}

impl Matching {
    pub fn size(&self) -> usize {
        self.edges.len()
    }

    pub fn covers(&self, v: usize) -> bool {
        self.edges.iter().any(|&(a, b)| a == v || b == v)
    }

    pub fn is_valid(&self, g: &SimpleGraph) -> bool {
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.edges {
            if !g.has_edge(a, b) || !seen.insert(a) || !seen.insert(b) {
                return false;
            }
        }
        true
    }
}

const NONE: usize = usize::MAX;

struct Blossom<'a> {
    adj: &'a [Vec<usize>],
    mate: &'a mut [usize],
    p: Vec<usize>,
    base: Vec<usize>,
    used: Vec<bool>,
}

impl<'a> Blossom<'a> {
    fn lca(&self, mut a: usize, mut b: usize) -> usize {
        let n = self.adj.len();
        let mut seen = vec![false; n];
        loop {
            a = self.base[a];
            seen[a] = true;
            if self.mate[a] == NONE {
                break;
            }
            a = self.p[self.mate[a]];
        }
        loop {
            b = self.base[b];
            if seen[b] {
                return b;
            }
            b = self.p[self.mate[b]];
        }
    }

    fn mark_path(&mut self, blossom: &mut [bool], mut v: usize, b: usize, mut child: usize) {
        while self.base[v] != b {
            blossom[self.base[v]] = true;
            blossom[self.base[self.mate[v]]] = true;
            self.p[v] = child;
            child = self.mate[v];
            v = self.p[self.mate[v]];
        }
    }

    /// BFS for an augmenting path from the exposed `root`; returns its far end.
    fn find_path(&mut self, root: usize) -> usize {
        let n = self.adj.len();
        self.p.iter_mut().for_each(|x| *x = NONE);
        self.used.iter_mut().for_each(|x| *x = false);
        for (i, b) in self.base.iter_mut().enumerate() {
            *b = i;
        }
        let mut q = VecDeque::new();
        self.used[root] = true;
        q.push_back(root);
        while let Some(v) = q.pop_front() {
            for idx in 0..self.adj[v].len() {
                let to = self.adj[v][idx];
                if self.base[v] == self.base[to] || self.mate[v] == to {
                    continue;
                }
                if to == root || (self.mate[to] != NONE && self.p[self.mate[to]] != NONE) {
                    // Odd cycle: shrink the blossom onto the common base.
                    let curbase = self.lca(v, to);
                    let mut in_blossom = vec![false; n];
                    self.mark_path(&mut in_blossom, v, curbase, to);
                    self.mark_path(&mut in_blossom, to, curbase, v);
                    for u in 0..n {
                        if in_blossom[self.base[u]] {
                            self.base[u] = curbase;
                            if !self.used[u] {
                                self.used[u] = true;
                                q.push_back(u);
                            }
                        }
                    }
                } else if self.p[to] == NONE {
                    self.p[to] = v;
                    if self.mate[to] == NONE {
                        return to;
                    }
                    let m = self.mate[to];
                    self.used[m] = true;
                    q.push_back(m);
                }
            }
        }
        NONE
    }

    fn augment(&mut self, mut v: usize) {
        while v != NONE {
            let pv = self.p[v];
            let ppv = self.mate[pv];
            self.mate[v] = pv;
            self.mate[pv] = v;
            v = ppv;
        }
    }
}

fn run_blossom(g: &SimpleGraph, mate: &mut [usize]) -> usize {
    let adj = g.adjacency();
    let n = g.vertex_count();
    let mut augmented = 0;
    let mut state = Blossom {
        adj: &adj,
        mate,
        p: vec![NONE; n],
        base: (0..n).collect(),
        used: vec![false; n],
    };
    for root in 0..n {
        if state.mate[root] == NONE {
            let end = state.find_path(root);
            if end != NONE {
                state.augment(end);
                augmented += 1;
            }
        }
    }
    augmented
}

/// Maximum cardinality matching. Deterministic: roots and neighbours are
/// scanned in ascending vertex order.
pub fn maximum_matching(g: &SimpleGraph) -> Matching {
    let mut mate = vec![NONE; g.vertex_count()];
    run_blossom(g, &mut mate);
    collect(&mate)
}

fn collect(mate: &[usize]) -> Matching {
    let mut edges = BTreeSet::new();
    for (v, &m) in mate.iter().enumerate() {
        if m != NONE && v < m {
            edges.insert((v, m));
        }
    }
    Matching { edges }
}

/// One-shot maximality test: valid matching and no augmenting path exists.
pub fn is_maximum_matching(g: &SimpleGraph, m: &Matching) -> bool {
    if !m.is_valid(g) {
        return false;
    }
    let mut mate = vec![NONE; g.vertex_count()];
    for &(a, b) in &m.edges {
        mate[a] = b;
        mate[b] = a;
    }
    run_blossom(g, &mut mate) == 0
}

/// The graph `(L, E(L))`: vertices are the leaves of `T` (the root is excluded
/// even at degree one), edges are the links with both ends leaves. Returns the
/// graph and the vertex-index-to-node map.
pub fn leaf_link_graph(inst: &TapInstance) -> (SimpleGraph, Vec<NodeId>) {
    let leaves = inst.leaves();
    let mut index = vec![usize::MAX; inst.node_count() as usize];
    for (i, &v) in leaves.iter().enumerate() {
        index[v as usize] = i;
    }
    let mut g = SimpleGraph::new(leaves.len());
    for &l in inst.links() {
        let (iu, iv) = (index[l.u as usize], index[l.v as usize]);
        if iu != usize::MAX && iv != usize::MAX {
            g.add_edge(iu, iv);
        }
    }
    (g, leaves)
}

/// Deterministic maximum matching of the leaf-to-leaf links, as `Link`s.
pub fn leaf_matching(inst: &TapInstance) -> BTreeSet<Link> {
    let (g, map) = leaf_link_graph(inst);
    maximum_matching(&g)
        .edges
        .into_iter()
        .map(|(a, b)| Link::new(map[a], map[b]))
        .collect()
}

/// Errors for externally supplied matchings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchingError {
    /// An edge is not a leaf-to-leaf link, or two edges share a vertex.
    NotAMatching(Link),
    /// Valid matching but an augmenting path exists.
    NotMaximum,
}

/// Checks that `m` is a maximum matching of the leaf-to-leaf link graph.
pub fn verify_leaf_matching(inst: &TapInstance, m: &BTreeSet<Link>) -> Result<(), MatchingError> {
    let (g, map) = leaf_link_graph(inst);
    let mut index = vec![usize::MAX; inst.node_count() as usize];
    for (i, &v) in map.iter().enumerate() {
        index[v as usize] = i;
    }
    let mut edges = BTreeSet::new();
    for &l in m {
        let (iu, iv) = (index[l.u as usize], index[l.v as usize]);
        if iu == usize::MAX || iv == usize::MAX {
            return Err(MatchingError::NotAMatching(l));
        }
        edges.insert((iu.min(iv), iu.max(iv)));
    }
    let cand = Matching { edges };
    if !cand.is_valid(&g) {
        return Err(MatchingError::NotAMatching(*m.iter().next().unwrap()));
    }
    if !is_maximum_matching(&g, &cand) {
        return Err(MatchingError::NotMaximum);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gens::{gen_fixture, Fixture};

    /// Exhaustive maximum matching size, for cross-checking (≤ ~20 edges).
    pub(crate) fn brute_force_max_matching(g: &SimpleGraph) -> usize {
        let edges: Vec<(usize, usize)> = g.edges().collect();
        fn go(edges: &[(usize, usize)], used: u64, i: usize) -> usize {
            if i == edges.len() {
                return 0;
            }
            let skip = go(edges, used, i + 1);
            let (a, b) = edges[i];
            if used & (1 << a) == 0 && used & (1 << b) == 0 {
                let take = 1 + go(edges, used | (1 << a) | (1 << b), i + 1);
                skip.max(take)
            } else {
                skip
            }
        }
        go(&edges, 0, 0)
    }

    #[test]
    fn triangle() {
        let mut g = SimpleGraph::new(3);
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        g.add_edge(0, 2);
        assert_eq!(maximum_matching(&g).size(), 1);
    }

    #[test]
    fn path4() {
        let mut g = SimpleGraph::new(4);
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        g.add_edge(2, 3);
        let m = maximum_matching(&g);
        assert_eq!(m.size(), 2);
        assert!(m.edges.contains(&(0, 1)) && m.edges.contains(&(2, 3)));
    }

    #[test]
    fn blossom_needed() {
        // 5-cycle with a pendant forcing an augmentation through the odd cycle.
        let mut g = SimpleGraph::new(6);
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (2, 5)] {
            g.add_edge(a, b);
        }
        let m = maximum_matching(&g);
        assert_eq!(m.size(), brute_force_max_matching(&g));
        assert_eq!(m.size(), 3);
    }

    #[test]
    fn five_cycle_with_chord() {
        let mut g = SimpleGraph::new(5);
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)] {
            g.add_edge(a, b);
        }
        let m = maximum_matching(&g);
        assert!(m.is_valid(&g));
        assert_eq!(m.size(), 2);
    }

    #[test]
    fn random_graphs_agree_with_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..400 {
            let n = rng.gen_range(2..=9usize);
            let mut g = SimpleGraph::new(n);
            for a in 0..n {
                for b in a + 1..n {
                    if rng.gen_bool(0.4) {
                        g.add_edge(a, b);
                    }
                }
            }
            let m = maximum_matching(&g);
            assert!(m.is_valid(&g));
            assert_eq!(m.size(), brute_force_max_matching(&g), "graph {g:?}");
            assert!(is_maximum_matching(&g, &m));
        }
    }

    #[test]
    fn leaf_graph_star4() {
        let inst = gen_fixture(Fixture::Star4);
        let (g, map) = leaf_link_graph(&inst);
        assert_eq!(map, vec![1, 2, 3, 4]);
        assert_eq!(g.edge_count(), 2);
        let m = leaf_matching(&inst);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn leaf_graph_path3_has_single_vertex() {
        let inst = gen_fixture(Fixture::Path3).shadow_close();
        let (g, map) = leaf_link_graph(&inst);
        assert_eq!(map, vec![2]);
        assert_eq!(g.edge_count(), 0);
        assert!(leaf_matching(&inst).is_empty());
    }

    #[test]
    fn forced_matching_verification() {
        let inst = gen_fixture(Fixture::Def3);
        // Both {2-5} and {2-4} are maximum; {0-5} is not leaf-to-leaf.
        let ok: BTreeSet<Link> = [Link::new(2, 5)].into_iter().collect();
        assert!(verify_leaf_matching(&inst, &ok).is_ok());
        let alt: BTreeSet<Link> = [Link::new(2, 4)].into_iter().collect();
        assert!(verify_leaf_matching(&inst, &alt).is_ok());
        let bad: BTreeSet<Link> = [Link::new(0, 5)].into_iter().collect();
        assert!(matches!(
            verify_leaf_matching(&inst, &bad),
            Err(MatchingError::NotAMatching(_))
        ));
        let empty: BTreeSet<Link> = BTreeSet::new();
        assert_eq!(
            verify_leaf_matching(&inst, &empty),
            Err(MatchingError::NotMaximum)
        );
    }
}
