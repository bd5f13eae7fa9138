//! Immutable TAP instance: rooted tree, link set, shadows, stems.

use alloc::collections::BTreeSet;
use alloc::fmt;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Dense node index, `0..node_count`.
pub type NodeId = u32;

/// An undirected non-tree edge, stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub u: NodeId,
    pub v: NodeId,
}

impl Link {
    /// Normalizes endpoint order. Panics on a self-loop; links join distinct nodes.
    pub fn new(a: NodeId, b: NodeId) -> Link {
        assert!(a != b, "link endpoints must differ");
        if a < b {
            Link { u: a, v: b }
        } else {
            Link { u: b, v: a }
        }
    }

    pub fn ends(&self) -> (NodeId, NodeId) {
        (self.u, self.v)
    }

    pub fn other(&self, x: NodeId) -> NodeId {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }

    pub fn is_incident(&self, x: NodeId) -> bool {
        self.u == x || self.v == x
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.u, self.v)
    }
}

/// Structural errors raised while building an instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceError {
    /// Fewer than two nodes.
    TooSmall,
    /// A node id out of `0..node_count`.
    NodeOutOfRange(NodeId),
    /// Wrong number of tree edges, a cycle, or a disconnected edge set.
    NotATree(String),
}

impl fmt::Display for InstanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceError::TooSmall => write!(f, "instance needs at least 2 nodes"),
            InstanceError::NodeOutOfRange(v) => write!(f, "node id {v} out of range"),
            InstanceError::NotATree(msg) => write!(f, "not a tree: {msg}"),
        }
    }
}

/// Stems found in the tree, each with the twin link witnessing it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StemReport {
    pub stems: Vec<(NodeId, Link)>,
}

impl StemReport {
    pub fn is_stemless(&self) -> bool {
        self.stems.is_empty()
    }
}

/// Coverage diagnostics from [`TapInstance::validate`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Tree edges, given as `(parent, child)`, not covered by any link.
    pub uncovered_edges: Vec<(NodeId, NodeId)>,
}

impl Diagnostics {
    pub fn ok(&self) -> bool {
        self.uncovered_edges.is_empty()
    }
}

/// A rooted spanning tree plus a deduplicated link set.
///
/// Immutable after construction; `parent`, `depth` and `children` are derived
/// once and shared read-only.
#[derive(Debug, Clone)]
pub struct TapInstance {
    node_count: u32,
    root: NodeId,
    tree_edges: Vec<(NodeId, NodeId)>,
    links: BTreeSet<Link>,
    parent: Vec<NodeId>,
    depth: Vec<u32>,
    children: Vec<Vec<NodeId>>,
    tree_degree: Vec<u32>,
    shadow_closed: bool,
}

impl TapInstance {
    /// Builds and structurally checks an instance. Link coverage is not
    /// required here; see [`TapInstance::validate`].
    pub fn new(
        node_count: u32,
        root: NodeId,
        tree_edges: Vec<(NodeId, NodeId)>,
        links: impl IntoIterator<Item = Link>,
    ) -> Result<TapInstance, InstanceError> {
        if node_count < 2 {
            return Err(InstanceError::TooSmall);
        }
        if root >= node_count {
            return Err(InstanceError::NodeOutOfRange(root));
        }
        if tree_edges.len() != node_count as usize - 1 {
            return Err(InstanceError::NotATree(alloc::format!(
                "expected {} tree edges, got {}",
                node_count - 1,
                tree_edges.len()
            )));
        }
        let n = node_count as usize;
        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut edge_set: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        for &(a, b) in &tree_edges {
            if a >= node_count {
                return Err(InstanceError::NodeOutOfRange(a));
            }
            if b >= node_count {
                return Err(InstanceError::NodeOutOfRange(b));
            }
            if a == b {
                return Err(InstanceError::NotATree(alloc::format!("self-loop at {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !edge_set.insert(key) {
                return Err(InstanceError::NotATree(alloc::format!(
                    "duplicate tree edge {}-{}",
                    key.0,
                    key.1
                )));
            }
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        // BFS from the root; n-1 distinct edges + full reach <=> tree.
        let mut parent = vec![u32::MAX; n];
        let mut depth = vec![0u32; n];
        let mut order = Vec::with_capacity(n);
        parent[root as usize] = root;
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &w in &adj[v as usize] {
                if parent[w as usize] == u32::MAX {
                    parent[w as usize] = v;
                    depth[w as usize] = depth[v as usize] + 1;
                    order.push(w);
                }
            }
        }
        if order.len() != n {
            return Err(InstanceError::NotATree(alloc::format!(
                "{} of {} nodes reachable from root",
                order.len(),
                n
            )));
        }
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for v in 0..node_count {
            if v != root {
                children[parent[v as usize] as usize].push(v);
            }
        }
        for c in &mut children {
            c.sort_unstable();
        }
        let mut tree_degree = vec![0u32; n];
        for &(a, b) in &tree_edges {
            tree_degree[a as usize] += 1;
            tree_degree[b as usize] += 1;
        }
        // The model is a multigraph: a link may run parallel to a tree edge
        // (shadow closure routinely creates such links). Parallel links are
        // deduplicated; multiplicity never matters for unweighted covers.
        let mut link_set = BTreeSet::new();
        for l in links {
            if l.v >= node_count {
                return Err(InstanceError::NodeOutOfRange(l.v));
            }
            link_set.insert(l);
        }
        Ok(TapInstance {
            node_count,
            root,
            tree_edges,
            links: link_set,
            parent,
            depth,
            children,
            tree_degree,
            shadow_closed: false,
        })
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn tree_edges(&self) -> &[(NodeId, NodeId)] {
        &self.tree_edges
    }

    pub fn links(&self) -> &BTreeSet<Link> {
        &self.links
    }

    pub fn has_link(&self, l: Link) -> bool {
        self.links.contains(&l)
    }

    pub fn parent(&self, v: NodeId) -> NodeId {
        self.parent[v as usize]
    }

    pub fn depth(&self, v: NodeId) -> u32 {
        self.depth[v as usize]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v as usize]
    }

    /// Number of incident tree edges (root-independent).
    pub fn tree_degree(&self, v: NodeId) -> u32 {
        self.tree_degree[v as usize]
    }

    /// True iff `v` is childless and not the root. The root is never a leaf,
    /// even at tree degree 1.
    pub fn is_leaf(&self, v: NodeId) -> bool {
        v != self.root && self.children[v as usize].is_empty()
    }

    /// All leaves, ascending.
    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.node_count).filter(|&v| self.is_leaf(v)).collect()
    }

    /// Whether shadow closure has been established for this value.
    pub fn is_shadow_closed_flag(&self) -> bool {
        self.shadow_closed
    }

    /// Links incident to `v`, ascending.
    pub fn links_at(&self, v: NodeId) -> Vec<Link> {
        self.links
            .iter()
            .copied()
            .filter(|l| l.is_incident(v))
            .collect()
    }

    /// Lowest common ancestor by parent climbing.
    pub fn lca(&self, mut a: NodeId, mut b: NodeId) -> NodeId {
        while self.depth(a) > self.depth(b) {
            a = self.parent(a);
        }
        while self.depth(b) > self.depth(a) {
            b = self.parent(b);
        }
        while a != b {
            a = self.parent(a);
            b = self.parent(b);
        }
        a
    }

    /// The unique tree path from `u` to `v`, inclusive.
    pub fn tree_path(&self, u: NodeId, v: NodeId) -> Vec<NodeId> {
        let m = self.lca(u, v);
        let mut up = Vec::new();
        let mut x = u;
        while x != m {
            up.push(x);
            x = self.parent(x);
        }
        up.push(m);
        let mut down = Vec::new();
        let mut y = v;
        while y != m {
            down.push(y);
            y = self.parent(y);
        }
        up.extend(down.into_iter().rev());
        up
    }

    /// Tree edges on the path of `l`, each keyed by its child endpoint.
    pub fn path_edge_children(&self, l: Link) -> Vec<NodeId> {
        let m = self.lca(l.u, l.v);
        let mut out = Vec::new();
        for mut x in [l.u, l.v] {
            while x != m {
                out.push(x);
                x = self.parent(x);
            }
        }
        out
    }

    /// True iff node `x` lies on the tree path of `l`.
    pub fn on_path(&self, l: Link, x: NodeId) -> bool {
        let m = self.lca(l.u, l.v);
        if self.depth(x) < self.depth(m) {
            return false;
        }
        // x must be an ancestor of an endpoint, at depth >= depth(lca).
        for end in [l.u, l.v] {
            let mut y = end;
            while self.depth(y) > self.depth(x) {
                y = self.parent(y);
            }
            if y == x {
                return true;
            }
        }
        false
    }

    /// Overlapping pair test: the two paths share a tree edge and an endpoint
    /// of one link lies on the other's path. Symmetric; true for `l1 == l2`.
    pub fn is_overlapping_pair(&self, l1: Link, l2: Link) -> bool {
        let end_on_path = self.on_path(l2, l1.u)
            || self.on_path(l2, l1.v)
            || self.on_path(l1, l2.u)
            || self.on_path(l1, l2.v);
        if !end_on_path {
            return false;
        }
        let e1: BTreeSet<NodeId> = self.path_edge_children(l1).into_iter().collect();
        self.path_edge_children(l2).iter().any(|c| e1.contains(c))
    }

    /// Coverage diagnostics: every tree edge must lie on some link's path.
    pub fn validate(&self) -> Diagnostics {
        let covered = self.coverage_marks(self.links.iter().copied());
        let mut uncovered = Vec::new();
        for v in 0..self.node_count {
            if v != self.root && !covered[v as usize] {
                uncovered.push((self.parent(v), v));
            }
        }
        Diagnostics {
            uncovered_edges: uncovered,
        }
    }

    fn coverage_marks(&self, links: impl IntoIterator<Item = Link>) -> Vec<bool> {
        let mut covered = vec![false; self.node_count as usize];
        for l in links {
            for c in self.path_edge_children(l) {
                covered[c as usize] = true;
            }
        }
        covered
    }

    /// True iff `j` covers every tree edge.
    pub fn is_cover(&self, j: &BTreeSet<Link>) -> bool {
        let covered = self.coverage_marks(j.iter().copied());
        (0..self.node_count).all(|v| v == self.root || covered[v as usize])
    }

    /// Materializes the shadow closure: for every link, every pair of distinct
    /// nodes on its tree path becomes a link (including links parallel to tree
    /// edges). Idempotent. Stemlessness is preserved because a twin link has
    /// both ends at degree-1 nodes and so is never a proper sublink of
    /// anything.
    pub fn shadow_close(&self) -> TapInstance {
        let before_stemless = self.find_stems().is_stemless();
        let mut closed = self.links.clone();
        for &l in &self.links {
            let path = self.tree_path(l.u, l.v);
            for i in 0..path.len() {
                for j in i + 1..path.len() {
                    closed.insert(Link::new(path[i], path[j]));
                }
            }
        }
        let mut out = self.clone();
        out.links = closed;
        out.shadow_closed = true;
        if before_stemless {
            debug_assert!(out.find_stems().is_stemless());
        }
        out
    }

    /// Exhaustive check of the closure property.
    pub fn check_shadow_closed(&self) -> bool {
        for &l in &self.links {
            let path = self.tree_path(l.u, l.v);
            for i in 0..path.len() {
                for j in i + 1..path.len() {
                    if !self.links.contains(&Link::new(path[i], path[j])) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Enumerates stems: a leaf-to-leaf link whose path has exactly one
    /// internal node of tree degree 3 and all other internals at degree 2.
    pub fn find_stems(&self) -> StemReport {
        let mut stems = Vec::new();
        for &l in &self.links {
            if self.tree_degree(l.u) != 1 || self.tree_degree(l.v) != 1 {
                continue;
            }
            let path = self.tree_path(l.u, l.v);
            let mut deg3 = Vec::new();
            let mut pattern = true;
            for &w in &path[1..path.len() - 1] {
                match self.tree_degree(w) {
                    2 => {}
                    3 => deg3.push(w),
                    _ => {
                        pattern = false;
                        break;
                    }
                }
            }
            if pattern && deg3.len() == 1 {
                stems.push((deg3[0], l));
            }
        }
        StemReport { stems }
    }

    /// Copy with extra links inserted (normalized, deduplicated).
    pub fn with_links_added(&self, extra: impl IntoIterator<Item = Link>) -> TapInstance {
        let mut out = self.clone();
        for l in extra {
            out.links.insert(l);
        }
        out.shadow_closed = false;
        out
    }

    /// Copy with the given links removed.
    pub fn with_links_removed(&self, drop: &BTreeSet<Link>) -> TapInstance {
        let mut out = self.clone();
        out.links.retain(|l| !drop.contains(l));
        out.shadow_closed = false;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gens::{gen_fixture, Fixture};

    fn path3() -> TapInstance {
        gen_fixture(Fixture::Path3)
    }

    fn star4() -> TapInstance {
        gen_fixture(Fixture::Star4)
    }

    #[test]
    fn path3_shape() {
        let inst = path3();
        assert_eq!(inst.depth(2), 2);
        assert_eq!(inst.tree_path(0, 2), vec![0, 1, 2]);
        assert_eq!(inst.tree_path(1, 1), vec![1]);
        assert!(inst.validate().ok());
    }

    #[test]
    fn star4_shape() {
        let inst = star4();
        assert_eq!(inst.leaves(), vec![1, 2, 3, 4]);
        assert_eq!(inst.tree_path(1, 3), vec![1, 0, 3]);
        assert!(inst.validate().ok());
    }

    #[test]
    fn cycle_rejected() {
        let err = TapInstance::new(3, 0, vec![(0, 1), (1, 0)], []).unwrap_err();
        assert!(matches!(err, InstanceError::NotATree(_)));
    }

    #[test]
    fn disconnected_rejected() {
        let err = TapInstance::new(4, 0, vec![(0, 1), (2, 3), (1, 0)], []).unwrap_err();
        assert!(matches!(err, InstanceError::NotATree(_)));
    }

    #[test]
    fn validate_reports_uncovered() {
        let inst = TapInstance::new(3, 0, vec![(0, 1), (1, 2)], []).unwrap();
        let d = inst.validate();
        assert_eq!(d.uncovered_edges, vec![(0, 1), (1, 2)]);

        let star = TapInstance::new(
            5,
            0,
            vec![(0, 1), (0, 2), (0, 3), (0, 4)],
            [Link::new(1, 2)],
        )
        .unwrap();
        assert_eq!(star.validate().uncovered_edges, vec![(0, 3), (0, 4)]);
    }

    #[test]
    fn shadow_close_path3() {
        let inst = path3().shadow_close();
        assert_eq!(inst.links().len(), 3);
        assert!(inst.check_shadow_closed());
        // Idempotent.
        assert_eq!(inst.shadow_close().links().len(), 3);
    }

    #[test]
    fn shadow_close_star4() {
        let inst = star4().shadow_close();
        assert_eq!(inst.links().len(), 6);
        for l in [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (3, 4)] {
            assert!(inst.has_link(Link::new(l.0, l.1)));
        }
    }

    #[test]
    fn def3_closure_adds_pairs_along_path() {
        // The 2-5 link runs over the path 2,1,3,5: closure holds all 6 pairs
        // of distinct path nodes as links.
        let inst = gen_fixture(Fixture::Def3);
        let path = inst.tree_path(2, 5);
        assert_eq!(path, vec![2, 1, 3, 5]);
        for (a, b) in [(2, 1), (2, 3), (2, 5), (1, 3), (1, 5), (3, 5)] {
            assert!(inst.has_link(Link::new(a, b)), "missing {a}-{b}");
        }
        assert!(inst.check_shadow_closed());
        assert_eq!(inst.links().len(), 12);
    }

    #[test]
    fn overlapping_pair_cases() {
        let inst = path3().shadow_close();
        let l02 = Link::new(0, 2);
        let l12 = Link::new(1, 2);
        assert!(inst.is_overlapping_pair(l02, l12));
        assert!(inst.is_overlapping_pair(l12, l02));
        assert!(inst.is_overlapping_pair(l02, l02));

        let star = star4().shadow_close();
        // Edge-disjoint paths: not overlapping.
        assert!(!star.is_overlapping_pair(Link::new(1, 2), Link::new(3, 4)));
    }

    #[test]
    fn stems_detected() {
        // r - c, c - l1, c - l2 with the twin link l1-l2.
        let inst = TapInstance::new(4, 0, vec![(0, 1), (1, 2), (1, 3)], [Link::new(2, 3)]).unwrap();
        let rep = inst.find_stems();
        assert_eq!(rep.stems, vec![(1, Link::new(2, 3))]);

        assert!(star4().find_stems().is_stemless());
        assert!(gen_fixture(Fixture::Def3).find_stems().is_stemless());
    }

    #[test]
    fn cover_checks() {
        let inst = path3().shadow_close();
        let mut j = BTreeSet::new();
        j.insert(Link::new(0, 2));
        assert!(inst.is_cover(&j));

        let star = star4().shadow_close();
        let mut j = BTreeSet::new();
        j.insert(Link::new(1, 2));
        assert!(!star.is_cover(&j));
        j.insert(Link::new(3, 4));
        assert!(star.is_cover(&j));
    }

    #[test]
    fn path_length_matches_depth_formula() {
        let inst = gen_fixture(Fixture::Def3);
        for u in 0..inst.node_count() {
            for v in 0..inst.node_count() {
                let m = inst.lca(u, v);
                let expect = inst.depth(u) + inst.depth(v) - 2 * inst.depth(m) + 1;
                assert_eq!(inst.tree_path(u, v).len() as u32, expect);
            }
        }
    }
}
