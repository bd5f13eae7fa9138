//! The contraction algorithm: simple contractions, semiclosed trees,
//! deficient 3-leaf trees and the main loop.

use alloc::collections::BTreeSet;
use alloc::fmt;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::contraction::{image_key, CNodeId, ContractedTree, ImageKey};
use crate::instance::{Diagnostics, Link, NodeId, StemReport, TapInstance};
use crate::matching::{self, MatchingError};

/// The fixed maximum leaf matching `M` and the exposed-leaf set `U`.
#[derive(Debug, Clone)]
pub struct MatchingState {
    m_original: BTreeSet<Link>,
    u_original: BTreeSet<NodeId>,
}

impl MatchingState {
    pub fn new(inst: &TapInstance, m: BTreeSet<Link>) -> MatchingState {
        let mut u: BTreeSet<NodeId> = inst.leaves().into_iter().collect();
        for l in &m {
            u.remove(&l.u);
            u.remove(&l.v);
        }
        MatchingState {
            m_original: m,
            u_original: u,
        }
    }

    pub fn m_links(&self) -> &BTreeSet<Link> {
        &self.m_original
    }

    pub fn exposed(&self) -> &BTreeSet<NodeId> {
        &self.u_original
    }

    /// Images of `M` with distinct ends in the current tree.
    pub fn m_images(&self, ct: &ContractedTree) -> BTreeSet<ImageKey> {
        self.m_original
            .iter()
            .filter_map(|&l| ct.image_of_link(l))
            .collect()
    }

    /// A leaf owning one whole credit: a compound leaf, or an `M`-exposed
    /// original leaf.
    pub fn credited_leaf(&self, ct: &ContractedTree, c: CNodeId) -> bool {
        if !ct.is_leaf_c(c) {
            return false;
        }
        if ct.is_compound(c) {
            return true;
        }
        let v = ct.contained(c)[0];
        self.u_original.contains(&v)
    }
}

/// Which single-link contraction fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimpleKind {
    /// Leaf-to-leaf link with one credit at each end.
    TypeA,
    /// `M`-link whose current path touches a compound node.
    TypeB,
}

/// One main-loop event, with stable display node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    SimpleA {
        u: NodeId,
        w: NodeId,
    },
    SimpleB {
        u: NodeId,
        w: NodeId,
    },
    Semiclosed {
        v: NodeId,
        gamma_size: usize,
        used_m_new: bool,
        deficient_roots: Vec<NodeId>,
    },
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::SimpleA { u, w } => write!(f, "SIMPLE-A {u} {w}"),
            TraceEvent::SimpleB { u, w } => write!(f, "SIMPLE-B {u} {w}"),
            TraceEvent::Semiclosed {
                v,
                gamma_size,
                deficient_roots,
                ..
            } => {
                write!(f, "SEMICLOSED {v} {gamma_size}")?;
                if !deficient_roots.is_empty() {
                    write!(f, " DEFICIENT-HANDLED")?;
                    for r in deficient_roots {
                        write!(f, " {r}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// Branch shape of a 3-leaf subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// One node with three children inside the subtree.
    Deg4(CNodeId),
    /// Two two-child nodes, `u` an ancestor of `q`.
    TwoDeg3(CNodeId, CNodeId),
}

/// A semiclosed 3-leaf subtree that is not good: `M`-link `b1b2`, link `ab1`,
/// and an escaping link at the ceiling leaf `b2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deficient3Tree {
    pub v: CNodeId,
    pub a: CNodeId,
    pub b1: CNodeId,
    pub b2: CNodeId,
    pub branch: Branch,
    pub witness_outside_link: ImageKey,
}

/// Per-contraction bookkeeping for the credit ledger.
#[derive(Debug, Clone)]
pub struct ContractionRecord {
    pub event: TraceEvent,
    pub links_added: Vec<Link>,
    /// Originals newly swallowed by this contraction.
    pub absorbed_originals: Vec<NodeId>,
    /// Number of previously built compounds swallowed.
    pub absorbed_compounds: usize,
    /// `M`-links whose image died at this contraction.
    pub dying_m_links: Vec<Link>,
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub simple_a: usize,
    pub simple_b: usize,
    pub semiclosed: usize,
    pub deficient_trees_handled: usize,
}

/// Output of [`solve`]: the cover, the trace and the ledger records.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub f: Vec<Link>,
    pub trace: Vec<TraceEvent>,
    pub stats: SolveStats,
    pub records: Vec<ContractionRecord>,
    pub matching: BTreeSet<Link>,
    pub exposed: BTreeSet<NodeId>,
}

impl SolveResult {
    pub fn f_set(&self) -> BTreeSet<Link> {
        self.f.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveError {
    NotShadowClosed,
    NotStemless(StemReport),
    Infeasible(Diagnostics),
    BadForcedMatching(MatchingError),
    /// An internal guarantee failed; always a bug, never an input condition.
    Invariant(String),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::NotShadowClosed => write!(f, "instance is not shadow-closed"),
            SolveError::NotStemless(rep) => {
                write!(f, "instance has {} stem(s):", rep.stems.len())?;
                for (s, l) in &rep.stems {
                    write!(f, " stem {s} twin {l}")?;
                }
                Ok(())
            }
            SolveError::Infeasible(d) => {
                write!(f, "{} uncovered tree edge(s)", d.uncovered_edges.len())
            }
            SolveError::BadForcedMatching(e) => write!(f, "forced matching rejected: {e:?}"),
            SolveError::Invariant(msg) => write!(f, "internal invariant violated: {msg}"),
        }
    }
}

/// Solver options. `forced_matching` replaces the computed maximum matching
/// after a validity-and-maximality check.
#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub forced_matching: Option<BTreeSet<Link>>,
}

fn invariant(msg: impl Into<String>) -> SolveError {
    SolveError::Invariant(msg.into())
}

/// Scans images in display order for the first applicable simple contraction,
/// type A before type B.
pub fn find_simple_contraction(
    ct: &ContractedTree,
    ms: &MatchingState,
) -> Option<(SimpleKind, ImageKey)> {
    let images = ct.images_by_display();
    for &(key, _) in &images {
        if ms.credited_leaf(ct, key.0) && ms.credited_leaf(ct, key.1) {
            return Some((SimpleKind::TypeA, key));
        }
    }
    let m_imgs = ms.m_images(ct);
    for &(key, _) in &images {
        if !m_imgs.contains(&key) {
            continue;
        }
        // Endpoints count as path members.
        if ct.cnode_path(key.0, key.1).iter().any(|&c| ct.is_compound(c)) {
            return Some((SimpleKind::TypeB, key));
        }
    }
    None
}

fn display_pair(ct: &ContractedTree, key: ImageKey) -> (NodeId, NodeId) {
    let (a, b) = (ct.display_id(key.0), ct.display_id(key.1));
    (a.min(b), a.max(b))
}

/// Runs one contraction committing the lexicographically smallest realizer of
/// each cover image, and records ledger data.
fn commit_contraction(
    ct: &mut ContractedTree,
    ms: &MatchingState,
    cover: &[ImageKey],
    event: TraceEvent,
    f: &mut Vec<Link>,
) -> Result<ContractionRecord, SolveError> {
    let mut links_added = Vec::new();
    for &key in cover {
        let l = ct
            .min_realizer(key)
            .ok_or_else(|| invariant(format!("cover image {key:?} has no realizer")))?;
        links_added.push(l);
        f.push(l);
    }
    let absorbed = ct
        .path_union(cover)
        .map_err(|e| invariant(format!("contraction rejected: {e:?}")))?;
    let mut absorbed_originals = Vec::new();
    let mut absorbed_compounds = 0usize;
    for &c in &absorbed {
        if ct.is_compound(c) {
            absorbed_compounds += 1;
        } else {
            absorbed_originals.push(ct.contained(c)[0]);
        }
    }
    // An M-link's credit is released when its image dies: both current
    // endpoints fall inside the new compound.
    let mut dying_m_links = Vec::new();
    for &l in ms.m_links() {
        if let Some((a, b)) = ct.image_of_link(l) {
            if absorbed.contains(&a) && absorbed.contains(&b) {
                dying_m_links.push(l);
            }
        }
    }
    let before_alive = ct.alive_count();
    ct.contract(cover)
        .map_err(|e| invariant(format!("contraction rejected: {e:?}")))?;
    if ct.alive_count() >= before_alive {
        return Err(invariant("node count did not decrease"));
    }
    Ok(ContractionRecord {
        event,
        links_added,
        absorbed_originals,
        absorbed_compounds,
        dying_m_links,
    })
}

/// Applies simple contractions until none applies, then checks the two
/// post-exhaustion assertions on `M`.
pub fn exhaust_simple_contractions(
    ct: &mut ContractedTree,
    ms: &MatchingState,
    f: &mut Vec<Link>,
    trace: &mut Vec<TraceEvent>,
    records: &mut Vec<ContractionRecord>,
) -> Result<usize, SolveError> {
    let mut count = 0;
    while let Some((kind, key)) = find_simple_contraction(ct, ms) {
        let (du, dw) = display_pair(ct, key);
        let event = match kind {
            SimpleKind::TypeA => TraceEvent::SimpleA { u: du, w: dw },
            SimpleKind::TypeB => TraceEvent::SimpleB { u: du, w: dw },
        };
        let rec = commit_contraction(ct, ms, &[key], event.clone(), f)?;
        trace.push(event);
        records.push(rec);
        count += 1;
    }
    // Assertions on M after exhaustion.
    for &l in ms.m_links() {
        if let Some(key) = ct.image_of_link(l) {
            let path = ct.cnode_path(key.0, key.1);
            if path.iter().any(|&c| ct.is_compound(c)) {
                return Err(invariant(format!(
                    "M-link {l} image path touches a compound after exhaustion"
                )));
            }
            for end in [key.0, key.1] {
                if !ct.is_leaf_c(end) {
                    return Err(invariant(format!(
                        "M-link {l} image end is not a leaf after exhaustion"
                    )));
                }
            }
        }
    }
    for (&key, _) in ct.images() {
        if ms.credited_leaf(ct, key.0) && ms.credited_leaf(ct, key.1) {
            return Err(invariant(
                "link between two M-exposed leaves after exhaustion",
            ));
        }
    }
    Ok(count)
}

/// Direct semiclosed test of `T'_v` w.r.t. an arbitrary leaf matching given
/// as image pairs.
pub fn is_semiclosed(ct: &ContractedTree, mbar: &BTreeSet<ImageKey>, v: CNodeId) -> bool {
    let (nodes, leaves) = ct.subtree_and_leaves(v);
    let inside: BTreeSet<CNodeId> = nodes.into_iter().collect();
    // (i) no matching link crosses the boundary.
    for &(a, b) in mbar {
        if inside.contains(&a) != inside.contains(&b) {
            return false;
        }
    }
    // (ii) links at exposed leaves stay inside.
    let matched: BTreeSet<CNodeId> = mbar.iter().flat_map(|&(a, b)| [a, b]).collect();
    let exposed: BTreeSet<CNodeId> = leaves
        .into_iter()
        .filter(|c| !matched.contains(c))
        .collect();
    for (&(a, b), _) in ct.images() {
        if (exposed.contains(&a) && !inside.contains(&b))
            || (exposed.contains(&b) && !inside.contains(&a))
        {
            return false;
        }
    }
    true
}

/// Marks, for every `CNode`, whether some semiclosed condition fails, by
/// climbing ancestor chains; `bad[v] == 0` iff `T'_v` is semiclosed.
fn semiclosed_bad_marks(ct: &ContractedTree, mbar: &BTreeSet<ImageKey>) -> Vec<u32> {
    let size = ct_table_len(ct);
    let mut bad = vec![0u32; size];
    let matched: BTreeSet<CNodeId> = mbar.iter().flat_map(|&(a, b)| [a, b]).collect();
    let mut mark_chain = |bad: &mut Vec<u32>, mut x: CNodeId, stop: CNodeId| {
        while x != stop {
            bad[x] += 1;
            x = ct.parent_c(x);
        }
    };
    for &(a, b) in mbar {
        let m = ct.lca_c(a, b);
        mark_chain(&mut bad, a, m);
        mark_chain(&mut bad, b, m);
    }
    for (&(a, b), _) in ct.images() {
        for (w, z) in [(a, b), (b, a)] {
            if ct.is_leaf_c(w) && !matched.contains(&w) {
                let m = ct.lca_c(w, z);
                mark_chain(&mut bad, w, m);
            }
        }
    }
    bad
}

fn ct_table_len(ct: &ContractedTree) -> usize {
    // Alive ids are bounded by originals + compounds built so far.
    ct.alive_nodes().max().map_or(1, |m| m + 1)
}

/// First semiclosed subtree root in postorder; minimal because all proper
/// subtrees are visited earlier. The root makes the fallback.
pub fn find_min_semiclosed(ct: &ContractedTree, mbar: &BTreeSet<ImageKey>) -> CNodeId {
    let bad = semiclosed_bad_marks(ct, mbar);
    for v in ct.postorder() {
        if bad[v] == 0 {
            return v;
        }
    }
    ct.root_cnode()
}

/// `Γ(M̄, T'_v)`: matching links inside plus one up-link per exposed leaf.
/// Requires `T'_v` semiclosed w.r.t. `mbar`.
pub fn gamma(
    ct: &ContractedTree,
    mbar: &BTreeSet<ImageKey>,
    v: CNodeId,
) -> Result<Vec<ImageKey>, SolveError> {
    let (nodes, leaves) = ct.subtree_and_leaves(v);
    let inside: BTreeSet<CNodeId> = nodes.into_iter().collect();
    let mut out: Vec<ImageKey> = Vec::new();
    for &(a, b) in mbar {
        match (inside.contains(&a), inside.contains(&b)) {
            (true, true) => out.push(image_key(a, b)),
            (false, false) => {}
            _ => return Err(invariant("gamma: matching link crosses the subtree")),
        }
    }
    let matched: BTreeSet<CNodeId> = mbar.iter().flat_map(|&(a, b)| [a, b]).collect();
    for w in leaves {
        if matched.contains(&w) {
            continue;
        }
        let up = ct
            .up(w)
            .ok_or_else(|| invariant(format!("gamma: exposed leaf {w} has no up-link")))?;
        if !inside.contains(&up) {
            return Err(invariant("gamma: up-link leaves the subtree"));
        }
        out.push(image_key(w, up));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Tests whether `T'_v` is a deficient 3-leaf tree w.r.t. `M` and labels it.
pub fn detect_deficient_3leaf(
    ct: &ContractedTree,
    ms: &MatchingState,
    v: CNodeId,
) -> Option<Deficient3Tree> {
    let m_imgs = ms.m_images(ct);
    if v == ct.root_cnode() || !is_semiclosed(ct, &m_imgs, v) {
        return None;
    }
    deficient_labeling(ct, ms, &m_imgs, v)
}

/// Labeling step shared with the filtered scan: assumes semiclosed, fails
/// softly on every other condition.
fn deficient_labeling(
    ct: &ContractedTree,
    _ms: &MatchingState,
    m_imgs: &BTreeSet<ImageKey>,
    v: CNodeId,
) -> Option<Deficient3Tree> {
    let (nodes, leaves) = ct.subtree_and_leaves(v);
    if leaves.len() != 3 {
        return None;
    }
    let inside: BTreeSet<CNodeId> = nodes.iter().copied().collect();
    // Exactly one M-link inside, joining two of the three leaves.
    let links_inside: Vec<ImageKey> = m_imgs
        .iter()
        .copied()
        .filter(|&(a, b)| inside.contains(&a) && inside.contains(&b))
        .collect();
    if links_inside.len() != 1 {
        return None;
    }
    let (x, y) = links_inside[0];
    if !leaves.contains(&x) || !leaves.contains(&y) {
        return None;
    }
    let a = *leaves.iter().find(|&&l| l != x && l != y)?;
    // Branch shape.
    let branchy: Vec<CNodeId> = nodes
        .iter()
        .copied()
        .filter(|&c| ct.children_c(c).len() >= 2)
        .collect();
    let branch = match branchy.len() {
        1 if ct.children_c(branchy[0]).len() == 3 => Branch::Deg4(branchy[0]),
        2 => {
            let (p, q) = (branchy[0], branchy[1]);
            if ct.is_ancestor(p, q) {
                Branch::TwoDeg3(p, q)
            } else if ct.is_ancestor(q, p) {
                Branch::TwoDeg3(q, p)
            } else {
                return None;
            }
        }
        _ => return None,
    };
    let has_link = |p: CNodeId, q: CNodeId| ct.images().contains_key(&image_key(p, q));
    let escape = |b2: CNodeId| -> Option<ImageKey> {
        // Deterministic: smallest display id among outside partners.
        let mut best: Option<(NodeId, ImageKey)> = None;
        for (&key, _) in ct.images() {
            let other = if key.0 == b2 {
                Some(key.1)
            } else if key.1 == b2 {
                Some(key.0)
            } else {
                None
            };
            if let Some(o) = other {
                if !inside.contains(&o) {
                    let d = ct.display_id(o);
                    if best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, key));
                    }
                }
            }
        }
        best.map(|(_, k)| k)
    };
    let labeled = |b1: CNodeId, b2: CNodeId| -> Option<Deficient3Tree> {
        if !has_link(a, b1) {
            return None;
        }
        let witness = escape(b2)?;
        Some(Deficient3Tree {
            v,
            a,
            b1,
            b2,
            branch,
            witness_outside_link: witness,
        })
    };
    let found = match branch {
        Branch::TwoDeg3(_, q) => {
            // b1 is the leaf outside T'_q; a and b2 descend from q.
            let under_q: Vec<bool> = [x, y].iter().map(|&l| ct.is_ancestor(q, l)).collect();
            let (b1, b2) = match (under_q[0], under_q[1]) {
                (false, true) => (x, y),
                (true, false) => (y, x),
                // The M-link inside T'_q would be a twin-link shape; both
                // outside contradicts the leaf count.
                _ => return None,
            };
            if !ct.is_ancestor(q, a) {
                return None;
            }
            labeled(b1, b2)
        }
        Branch::Deg4(_) => {
            let first = labeled(x, y);
            let second = labeled(y, x);
            match (first, second) {
                (Some(t), None) => Some(t),
                (None, Some(t)) => Some(t),
                (Some(t1), Some(t2)) => {
                    // Both labelings valid: the ceiling leaf is the one whose
                    // up() reaches nearer the root.
                    let d1 = ct.up(t1.b2).map(|u| ct.depth_c(u)).unwrap_or(u32::MAX);
                    let d2 = ct.up(t2.b2).map(|u| ct.depth_c(u)).unwrap_or(u32::MAX);
                    if d1 < d2 {
                        Some(t1)
                    } else if d2 < d1 {
                        Some(t2)
                    } else if ct.display_id(t1.b2) <= ct.display_id(t2.b2) {
                        Some(t1)
                    } else {
                        Some(t2)
                    }
                }
                (None, None) => None,
            }
        }
    };
    // Lemma 6.3 forces the matched leaves to be original after exhaustion.
    if let Some(t) = &found {
        debug_assert!(!ct.is_compound(t.b1) && !ct.is_compound(t.b2));
    }
    found
}

/// All maximal deficient 3-leaf trees, pairwise disjoint.
pub fn maximal_deficient_trees(
    ct: &ContractedTree,
    ms: &MatchingState,
) -> Result<Vec<Deficient3Tree>, SolveError> {
    let m_imgs = ms.m_images(ct);
    let bad = semiclosed_bad_marks(ct, &m_imgs);
    let mut found: Vec<Deficient3Tree> = Vec::new();
    for v in ct.postorder() {
        if v == ct.root_cnode() || bad[v] != 0 {
            continue;
        }
        if let Some(t) = deficient_labeling(ct, ms, &m_imgs, v) {
            found.push(t);
        }
    }
    // Keep only roots with no deficient proper ancestor.
    let roots: BTreeSet<CNodeId> = found.iter().map(|t| t.v).collect();
    let maximal: Vec<Deficient3Tree> = found
        .into_iter()
        .filter(|t| {
            let mut p = t.v;
            loop {
                let up = ct.parent_c(p);
                if up == p {
                    return true;
                }
                p = up;
                if roots.contains(&p) {
                    return false;
                }
            }
        })
        .collect();
    // Disjointness: subtrees of distinct maximal roots must not nest.
    for (i, t1) in maximal.iter().enumerate() {
        for t2 in maximal.iter().skip(i + 1) {
            if ct.is_ancestor(t1.v, t2.v) || ct.is_ancestor(t2.v, t1.v) {
                return Err(invariant("maximal deficient trees are not disjoint"));
            }
        }
    }
    Ok(maximal)
}

/// The auxiliary matching: swap each maximal deficient tree's `M`-link `b2b1`
/// for `ab1`.
pub fn build_m_new(
    ct: &ContractedTree,
    ms: &MatchingState,
    trees: &[Deficient3Tree],
) -> Result<BTreeSet<ImageKey>, SolveError> {
    let mut m_new = ms.m_images(ct);
    for t in trees {
        let old = image_key(t.b1, t.b2);
        if !m_new.remove(&old) {
            return Err(invariant("deficient tree's M-link image missing"));
        }
        let repl = image_key(t.a, t.b1);
        if !ct.images().contains_key(&repl) {
            return Err(invariant("replacement link a-b1 is not a live image"));
        }
        m_new.insert(repl);
    }
    // Must still be a matching over leaves of the current tree.
    let mut seen: BTreeSet<CNodeId> = BTreeSet::new();
    for &(p, q) in &m_new {
        if !ct.is_leaf_c(p) || !ct.is_leaf_c(q) || !seen.insert(p) || !seen.insert(q) {
            return Err(invariant("M^new is not a leaf-to-leaf matching"));
        }
    }
    Ok(m_new)
}

/// Outcome of the semiclosed-tree search for one main-loop iteration.
pub struct GoodSemiclosed {
    pub v: CNodeId,
    pub cover: Vec<ImageKey>,
    pub used_m_new: bool,
    pub deficient_roots: Vec<NodeId>,
}

/// Algorithm-2 step: build `M^new`, take the minimally semiclosed tree w.r.t.
/// it, and return it with its cover. Verifies the goodness guarantees.
pub fn find_good_semiclosed(
    ct: &ContractedTree,
    ms: &MatchingState,
) -> Result<GoodSemiclosed, SolveError> {
    let trees = maximal_deficient_trees(ct, ms)?;
    let deficient_roots: Vec<NodeId> = trees.iter().map(|t| ct.display_id(t.v)).collect();
    let m_new = build_m_new(ct, ms, &trees)?;
    let v = find_min_semiclosed(ct, &m_new);
    let cover = gamma(ct, &m_new, v)?;

    // The chosen tree must be semiclosed w.r.t. M as well, with an
    // equal-sized basic link set, and must not itself be deficient.
    let m_imgs = ms.m_images(ct);
    if !is_semiclosed(ct, &m_imgs, v) {
        return Err(invariant("chosen subtree is not semiclosed w.r.t. M"));
    }
    let gamma_m = gamma(ct, &m_imgs, v)?;
    if gamma_m.len() != cover.len() {
        return Err(invariant(format!(
            "cover size {} differs from |Gamma(M)| {}",
            cover.len(),
            gamma_m.len()
        )));
    }
    if detect_deficient_3leaf(ct, ms, v).is_some() {
        return Err(invariant("chosen subtree is deficient"));
    }
    // The cover must cover every tree edge of T'_v (edges keyed by child end).
    let (nodes, _) = ct.subtree_and_leaves(v);
    let mut covered: BTreeSet<CNodeId> = BTreeSet::new();
    for &key in &cover {
        let path = ct.cnode_path(key.0, key.1);
        let top = *path.iter().min_by_key(|&&c| ct.depth_c(c)).unwrap();
        for &c in &path {
            if c != top {
                covered.insert(c);
            }
        }
    }
    for &c in &nodes {
        if c != v && !covered.contains(&c) {
            return Err(invariant("Gamma(M^new) does not cover the subtree"));
        }
    }
    Ok(GoodSemiclosed {
        v,
        cover,
        used_m_new: !trees.is_empty(),
        deficient_roots,
    })
}

/// Full run of the main loop on a shadow-closed stemless feasible instance.
pub fn solve(inst: &TapInstance, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    if !inst.is_shadow_closed_flag() && !inst.check_shadow_closed() {
        return Err(SolveError::NotShadowClosed);
    }
    let stems = inst.find_stems();
    if !stems.is_stemless() {
        return Err(SolveError::NotStemless(stems));
    }
    let diag = inst.validate();
    if !diag.ok() {
        return Err(SolveError::Infeasible(diag));
    }

    let m = match &opts.forced_matching {
        Some(m) => {
            matching::verify_leaf_matching(inst, m).map_err(SolveError::BadForcedMatching)?;
            m.clone()
        }
        None => matching::leaf_matching(inst),
    };
    let ms = MatchingState::new(inst, m.clone());
    let mut ct = ContractedTree::new(inst);
    let mut f: Vec<Link> = Vec::new();
    let mut trace: Vec<TraceEvent> = Vec::new();
    let mut records: Vec<ContractionRecord> = Vec::new();
    let mut stats = SolveStats::default();

    while !ct.is_single_node() {
        exhaust_simple_contractions(&mut ct, &ms, &mut f, &mut trace, &mut records)?;
        if ct.is_single_node() {
            break;
        }
        let good = find_good_semiclosed(&ct, &ms)?;
        let event = TraceEvent::Semiclosed {
            v: ct.display_id(good.v),
            gamma_size: good.cover.len(),
            used_m_new: good.used_m_new,
            deficient_roots: good.deficient_roots.clone(),
        };
        stats.deficient_trees_handled += good.deficient_roots.len();
        let rec = commit_contraction(&mut ct, &ms, &good.cover, event.clone(), &mut f)?;
        trace.push(event);
        records.push(rec);
    }

    for e in &trace {
        match e {
            TraceEvent::SimpleA { .. } => stats.simple_a += 1,
            TraceEvent::SimpleB { .. } => stats.simple_b += 1,
            TraceEvent::Semiclosed { .. } => stats.semiclosed += 1,
        }
    }
    stats.iterations = trace.len();

    let f_set = f.iter().copied().collect();
    if !inst.is_cover(&f_set) {
        return Err(invariant("final link set does not cover the tree"));
    }
    if !ct.quotient_matches(&f_set) {
        return Err(invariant("maintained quotient differs from recomputation"));
    }
    Ok(SolveResult {
        f,
        trace,
        stats,
        records,
        matching: m,
        exposed: ms.exposed().clone(),
    })
}
