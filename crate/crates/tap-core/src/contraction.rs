//! The current tree `T' = T/F` under repeated contraction of connected
//! link-path unions, with live link images and rooted-tree indices.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::instance::{Link, NodeId, TapInstance};

/// Index into the contracted-tree node table. Originals occupy `0..n`,
/// compounds are appended.
pub type CNodeId = usize;

/// Canonical image key: endpoint pair ordered by `CNodeId`.
pub type ImageKey = (CNodeId, CNodeId);

pub fn image_key(a: CNodeId, b: CNodeId) -> ImageKey {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CNodeKind {
    Original(NodeId),
    Compound,
}

/// Errors from [`ContractedTree::contract`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContractError {
    EmptyUnion,
    DisconnectedUnion,
    DeadImage(ImageKey),
}

#[derive(Debug, Clone)]
pub struct ContractedTree<'a> {
    origin: &'a TapInstance,
    membership: Vec<CNodeId>,
    kind: Vec<CNodeKind>,
    contained: Vec<Vec<NodeId>>,
    alive: Vec<bool>,
    parent: Vec<CNodeId>,
    depth: Vec<u32>,
    children: Vec<Vec<CNodeId>>,
    root: CNodeId,
    images: BTreeMap<ImageKey, BTreeSet<Link>>,
    alive_count: usize,
}

impl<'a> ContractedTree<'a> {
    /// Identity contraction: every original node is its own `CNode` and the
    /// images are the original links.
    pub fn new(origin: &'a TapInstance) -> ContractedTree<'a> {
        let n = origin.node_count() as usize;
        let mut ct = ContractedTree {
            origin,
            membership: (0..n).collect(),
            kind: (0..n).map(|v| CNodeKind::Original(v as NodeId)).collect(),
            contained: (0..n).map(|v| vec![v as NodeId]).collect(),
            alive: vec![true; n],
            parent: vec![0; n],
            depth: vec![0; n],
            children: vec![Vec::new(); n],
            root: origin.root() as CNodeId,
            images: BTreeMap::new(),
            alive_count: n,
        };
        for &l in origin.links() {
            ct.images
                .entry(image_key(l.u as CNodeId, l.v as CNodeId))
                .or_default()
                .insert(l);
        }
        ct.rebuild_rooted_index();
        ct
    }

    pub fn origin(&self) -> &TapInstance {
        self.origin
    }

    pub fn alive_count(&self) -> usize {
        self.alive_count
    }

    pub fn is_single_node(&self) -> bool {
        self.alive_count == 1
    }

    pub fn root_cnode(&self) -> CNodeId {
        self.root
    }

    pub fn cnode_of(&self, v: NodeId) -> CNodeId {
        self.membership[v as usize]
    }

    pub fn is_alive(&self, c: CNodeId) -> bool {
        self.alive[c]
    }

    pub fn is_compound(&self, c: CNodeId) -> bool {
        matches!(self.kind[c], CNodeKind::Compound)
    }

    /// Sorted original nodes inside `c`.
    pub fn contained(&self, c: CNodeId) -> &[NodeId] {
        &self.contained[c]
    }

    /// Stable printable id: the smallest original node inside.
    pub fn display_id(&self, c: CNodeId) -> NodeId {
        self.contained[c][0]
    }

    pub fn parent_c(&self, c: CNodeId) -> CNodeId {
        self.parent[c]
    }

    pub fn depth_c(&self, c: CNodeId) -> u32 {
        self.depth[c]
    }

    pub fn children_c(&self, c: CNodeId) -> &[CNodeId] {
        &self.children[c]
    }

    /// Leaf of the current tree: alive, childless, not the root.
    pub fn is_leaf_c(&self, c: CNodeId) -> bool {
        self.alive[c] && c != self.root && self.children[c].is_empty()
    }

    pub fn alive_nodes(&self) -> impl Iterator<Item = CNodeId> + '_ {
        (0..self.alive.len()).filter(|&c| self.alive[c])
    }

    /// Alive leaves of `T'`.
    pub fn leaves_c(&self) -> Vec<CNodeId> {
        self.alive_nodes().filter(|&c| self.is_leaf_c(c)).collect()
    }

    /// Live images with their realizing original links.
    pub fn images(&self) -> &BTreeMap<ImageKey, BTreeSet<Link>> {
        &self.images
    }

    /// Images sorted by display ids; the deterministic scan order.
    pub fn images_by_display(&self) -> Vec<(ImageKey, (NodeId, NodeId))> {
        let mut v: Vec<(ImageKey, (NodeId, NodeId))> = self
            .images
            .keys()
            .map(|&k| {
                let (a, b) = (self.display_id(k.0), self.display_id(k.1));
                (k, (a.min(b), a.max(b)))
            })
            .collect();
        v.sort_by_key(|&(_, d)| d);
        v
    }

    /// Image of an original link, if its ends map to distinct `CNode`s.
    pub fn image_of_link(&self, l: Link) -> Option<ImageKey> {
        let a = self.cnode_of(l.u);
        let b = self.cnode_of(l.v);
        if a == b {
            None
        } else {
            Some(image_key(a, b))
        }
    }

    /// Original links realizing a live image.
    pub fn realizers(&self, key: ImageKey) -> Option<&BTreeSet<Link>> {
        self.images.get(&key)
    }

    /// Lexicographically smallest realizing original link.
    pub fn min_realizer(&self, key: ImageKey) -> Option<Link> {
        self.images.get(&key).and_then(|s| s.first().copied())
    }

    pub fn is_ancestor(&self, anc: CNodeId, mut v: CNodeId) -> bool {
        while self.depth[v] > self.depth[anc] {
            v = self.parent[v];
        }
        v == anc
    }

    pub fn lca_c(&self, mut a: CNodeId, mut b: CNodeId) -> CNodeId {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b];
        }
        while a != b {
            a = self.parent[a];
            b = self.parent[b];
        }
        a
    }

    /// Path between two alive `CNode`s in `T'`, inclusive.
    pub fn cnode_path(&self, a: CNodeId, b: CNodeId) -> Vec<CNodeId> {
        let m = self.lca_c(a, b);
        let mut up = Vec::new();
        let mut x = a;
        while x != m {
            up.push(x);
            x = self.parent[x];
        }
        up.push(m);
        let mut down = Vec::new();
        let mut y = b;
        while y != m {
            down.push(y);
            y = self.parent[y];
        }
        up.extend(down.into_iter().rev());
        up
    }

    /// Subtree of `v` in `T'` and its leaves. The root of `T'` is never a leaf.
    pub fn subtree_and_leaves(&self, v: CNodeId) -> (Vec<CNodeId>, Vec<CNodeId>) {
        let mut nodes = vec![v];
        let mut leaves = Vec::new();
        let mut i = 0;
        while i < nodes.len() {
            let x = nodes[i];
            i += 1;
            if self.is_leaf_c(x) {
                leaves.push(x);
            }
            nodes.extend(self.children[x].iter().copied());
        }
        (nodes, leaves)
    }

    /// Alive nodes in postorder, children before parents, siblings by display id.
    pub fn postorder(&self) -> Vec<CNodeId> {
        let mut out = Vec::with_capacity(self.alive_count);
        // Iterative postorder; children lists are already display-sorted.
        let mut stack = vec![(self.root, 0usize)];
        while let Some((v, ci)) = stack.pop() {
            if ci < self.children[v].len() {
                stack.push((v, ci + 1));
                stack.push((self.children[v][ci], 0));
            } else {
                out.push(v);
            }
        }
        out
    }

    /// `up(w)`: among images at `w` accepted by `pred` whose other end is a
    /// proper ancestor of `w` in `T'`, the end nearest the root.
    pub fn up_with(
        &self,
        w: CNodeId,
        mut pred: impl FnMut(ImageKey) -> bool,
    ) -> Option<CNodeId> {
        let mut best: Option<CNodeId> = None;
        for (&key, _) in self.images.range((w, 0)..=(w, usize::MAX)) {
            let other = key.1;
            if self.is_ancestor(other, w) && pred(key) {
                if best.map_or(true, |b| self.depth[other] < self.depth[b]) {
                    best = Some(other);
                }
            }
        }
        // Keys with w as the second coordinate.
        for (&key, _) in self.images.iter() {
            if key.1 == w {
                let other = key.0;
                if self.is_ancestor(other, w) && pred(key) {
                    if best.map_or(true, |b| self.depth[other] < self.depth[b]) {
                        best = Some(other);
                    }
                }
            }
        }
        best
    }

    pub fn up(&self, w: CNodeId) -> Option<CNodeId> {
        self.up_with(w, |_| true)
    }

    /// The set of `CNode`s the given images' path union would absorb,
    /// validating that the union is one connected component.
    pub fn path_union(&self, image_links: &[ImageKey]) -> Result<BTreeSet<CNodeId>, ContractError> {
        if image_links.is_empty() {
            return Err(ContractError::EmptyUnion);
        }
        let mut absorbed: BTreeSet<CNodeId> = BTreeSet::new();
        let mut path_edges: BTreeSet<CNodeId> = BTreeSet::new(); // edge = child end
        for &key in image_links {
            if !self.images.contains_key(&key) {
                return Err(ContractError::DeadImage(key));
            }
            let path = self.cnode_path(key.0, key.1);
            let top = *path.iter().min_by_key(|&&c| self.depth[c]).unwrap();
            for &c in &path {
                absorbed.insert(c);
                if c != top {
                    path_edges.insert(c);
                }
            }
        }
        // The union of the path edge sets is a forest; it is one connected
        // component exactly when #nodes = #edges + 1.
        if absorbed.len() != path_edges.len() + 1 {
            return Err(ContractError::DisconnectedUnion);
        }
        Ok(absorbed)
    }

    /// Contracts the union of the `T'`-paths of the given images into one new
    /// compound node and returns it. The union must be nonempty and connected.
    pub fn contract(&mut self, image_links: &[ImageKey]) -> Result<CNodeId, ContractError> {
        let absorbed = self.path_union(image_links)?;
        self.contract_set(&absorbed)
    }

    fn contract_set(&mut self, absorbed: &BTreeSet<CNodeId>) -> Result<CNodeId, ContractError> {
        let c = self.kind.len();
        let mut members = Vec::new();
        for &x in absorbed {
            members.extend(self.contained[x].iter().copied());
            self.alive[x] = false;
        }
        members.sort_unstable();
        for &v in &members {
            self.membership[v as usize] = c;
        }
        self.kind.push(CNodeKind::Compound);
        self.contained.push(members);
        self.alive.push(true);
        self.parent.push(c);
        self.depth.push(0);
        self.children.push(Vec::new());
        self.alive_count = self.alive_count + 1 - absorbed.len();

        // Re-project images incident to the absorbed set.
        let stale: Vec<ImageKey> = self
            .images
            .keys()
            .copied()
            .filter(|k| absorbed.contains(&k.0) || absorbed.contains(&k.1))
            .collect();
        for key in stale {
            let links = self.images.remove(&key).unwrap();
            for l in links {
                if let Some(new_key) = self.image_of_link(l) {
                    self.images.entry(new_key).or_default().insert(l);
                }
            }
        }
        self.rebuild_rooted_index();
        Ok(c)
    }

    /// Recomputes parent/children/depth over alive nodes from the quotient of
    /// the original tree edges.
    fn rebuild_rooted_index(&mut self) {
        self.root = self.membership[self.origin.root() as usize];
        for c in 0..self.kind.len() {
            self.children[c].clear();
            self.parent[c] = c;
            self.depth[c] = 0;
        }
        // Quotient adjacency, self-loops dropped.
        let mut adj: BTreeMap<CNodeId, Vec<CNodeId>> = BTreeMap::new();
        for &(a, b) in self.origin.tree_edges() {
            let (ca, cb) = (self.cnode_of(a), self.cnode_of(b));
            if ca != cb {
                adj.entry(ca).or_default().push(cb);
                adj.entry(cb).or_default().push(ca);
            }
        }
        let mut queue = vec![self.root];
        let mut seen: BTreeSet<CNodeId> = BTreeSet::new();
        seen.insert(self.root);
        let mut i = 0;
        while i < queue.len() {
            let v = queue[i];
            i += 1;
            if let Some(nbrs) = adj.get(&v) {
                for &w in nbrs {
                    if seen.insert(w) {
                        self.parent[w] = v;
                        self.depth[w] = self.depth[v] + 1;
                        self.children[v].push(w);
                        queue.push(w);
                    }
                }
            }
        }
        debug_assert_eq!(queue.len(), self.alive_count);
        // Deterministic child order by display id.
        for c in queue {
            let key = |x: &CNodeId| self.contained[*x][0];
            self.children[c].sort_by_key(key);
        }
    }

    /// From-scratch consistency check: the partition induced by contracting
    /// the tree paths of all links of `f` must equal the maintained membership.
    pub fn quotient_matches(&self, f: &BTreeSet<Link>) -> bool {
        let n = self.origin.node_count() as usize;
        let mut uf: Vec<usize> = (0..n).collect();
        fn find(uf: &mut Vec<usize>, mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        for &l in f {
            let path = self.origin.tree_path(l.u, l.v);
            for w in path.windows(2) {
                let (a, b) = (find(&mut uf, w[0] as usize), find(&mut uf, w[1] as usize));
                if a != b {
                    uf[a] = b;
                }
            }
        }
        for u in 0..n {
            for v in 0..n {
                let same_uf = find(&mut uf, u) == find(&mut uf, v);
                let same_ct = self.membership[u] == self.membership[v];
                if same_uf != same_ct {
                    return false;
                }
            }
        }
        true
    }

    /// Every live image must be realized by at least one original link whose
    /// endpoint memberships match the key.
    pub fn images_consistent(&self) -> bool {
        for (&key, links) in &self.images {
            if links.is_empty() {
                return false;
            }
            for &l in links {
                if image_key(self.cnode_of(l.u), self.cnode_of(l.v)) != key {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gens::{gen_fixture, Fixture};

    #[test]
    fn init_counts() {
        let star = gen_fixture(Fixture::Star4).shadow_close();
        let ct = ContractedTree::new(&star);
        assert_eq!(ct.alive_count(), 5);
        assert_eq!(ct.images().len(), 6);

        let path = gen_fixture(Fixture::Path3);
        let ct = ContractedTree::new(&path);
        assert_eq!(ct.alive_count(), 3);

        let def3 = gen_fixture(Fixture::Def3);
        let ct = ContractedTree::new(&def3);
        assert_eq!(ct.alive_count(), 6);
        assert_eq!(ct.images().len(), def3.links().len());
        assert_eq!(ct.images().len(), 12);
    }

    #[test]
    fn contract_path3_to_point() {
        let inst = gen_fixture(Fixture::Path3).shadow_close();
        let mut ct = ContractedTree::new(&inst);
        let key = ct.image_of_link(Link::new(0, 2)).unwrap();
        let c = ct.contract(&[key]).unwrap();
        assert!(ct.is_single_node());
        assert_eq!(ct.contained(c), &[0, 1, 2]);
    }

    #[test]
    fn contract_star4_leaf_pair() {
        let inst = gen_fixture(Fixture::Star4).shadow_close();
        let mut ct = ContractedTree::new(&inst);
        let key = ct.image_of_link(Link::new(1, 2)).unwrap();
        let c = ct.contract(&[key]).unwrap();
        assert_eq!(ct.contained(c), &[0, 1, 2]);
        assert_eq!(ct.leaves_c(), vec![3, 4]);
        // 3-4 survives, 1-3 now runs from the compound to 3.
        assert!(ct.image_of_link(Link::new(3, 4)).is_some());
        assert_eq!(ct.image_of_link(Link::new(1, 2)), None);
        let img13 = ct.image_of_link(Link::new(1, 3)).unwrap();
        assert_eq!(img13, image_key(c, 3));
        assert!(ct.images_consistent());
    }

    #[test]
    fn contract_def3_a_path() {
        // Contract the 2-4 image: path 2,1,3,4 collapses, leaf 5 remains.
        let inst = gen_fixture(Fixture::Def3);
        let mut ct = ContractedTree::new(&inst);
        let key = ct.image_of_link(Link::new(2, 4)).unwrap();
        let c = ct.contract(&[key]).unwrap();
        assert_eq!(ct.contained(c), &[1, 2, 3, 4]);
        assert_eq!(ct.leaves_c(), vec![5]);
        assert!(ct.image_of_link(Link::new(0, 5)).is_some());
        assert_eq!(ct.image_of_link(Link::new(2, 5)), Some(image_key(c, 5)));
    }

    #[test]
    fn disconnected_union_rejected() {
        let inst = gen_fixture(Fixture::Def3);
        let mut ct = ContractedTree::new(&inst);
        // Path edges {0-1} and {3-4} do not share a node.
        let k1 = ct.image_of_link(Link::new(0, 1)).unwrap();
        let k2 = ct.image_of_link(Link::new(3, 4)).unwrap();
        assert_eq!(
            ct.contract(&[k1, k2]).unwrap_err(),
            ContractError::DisconnectedUnion
        );
        // Together with 2-5 (path 2,1,3,5) the union becomes one component.
        let k3 = ct.image_of_link(Link::new(2, 5)).unwrap();
        assert!(ct.contract(&[k1, k2, k3]).is_ok());
        assert!(ct.is_single_node());
    }

    #[test]
    fn subtree_and_up_queries() {
        let inst = gen_fixture(Fixture::Def3);
        let ct = ContractedTree::new(&inst);
        let (nodes, leaves) = ct.subtree_and_leaves(1);
        assert_eq!(nodes.len(), 5);
        assert_eq!(leaves, vec![2, 4, 5]);
        let (n2, l2) = ct.subtree_and_leaves(2);
        assert_eq!((n2, l2), (vec![2], vec![2]));

        // Shadows at 4 reach up to 1; at 5 up to the root 0; from 2 only to 1.
        assert_eq!(ct.up(4), Some(1));
        assert_eq!(ct.up(5), Some(0));
        assert_eq!(ct.up(2), Some(1));
    }

    #[test]
    fn quotient_check_after_contractions() {
        let inst = gen_fixture(Fixture::Star4).shadow_close();
        let mut ct = ContractedTree::new(&inst);
        let mut f: BTreeSet<Link> = BTreeSet::new();
        let key = ct.image_of_link(Link::new(1, 2)).unwrap();
        ct.contract(&[key]).unwrap();
        f.insert(Link::new(1, 2));
        assert!(ct.quotient_matches(&f));
        let key = ct.image_of_link(Link::new(3, 4)).unwrap();
        ct.contract(&[key]).unwrap();
        f.insert(Link::new(3, 4));
        assert!(ct.quotient_matches(&f));
        assert!(ct.is_single_node());
    }

    #[test]
    fn postorder_children_first() {
        let inst = gen_fixture(Fixture::Def3);
        let ct = ContractedTree::new(&inst);
        let order = ct.postorder();
        assert_eq!(order, vec![2, 4, 5, 3, 1, 0]);
    }
}
