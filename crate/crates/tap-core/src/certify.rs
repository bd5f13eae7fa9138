//! Executable analysis: the covering LP with overlapping-pair rows, the
//! shadow-shortening procedure, potential function, credit ledger, matching
//! polytope membership, and the auxiliary bipartite graph.
//!
//! Everything here is exact rational arithmetic; no tolerances anywhere.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::contraction::{CNodeId, ContractedTree, ImageKey};
use crate::instance::{Link, NodeId, TapInstance};
use crate::solver::{self, MatchingState, SolveError, SolveOptions, TraceEvent};
use crate::Q;

/// Exact link values in `[0, 1]`; absent means zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FractionalAssignment {
    values: BTreeMap<Link, Q>,
}

impl FractionalAssignment {
    pub fn new() -> FractionalAssignment {
        FractionalAssignment::default()
    }

    /// Indicator vector of a link set.
    pub fn indicator(links: &BTreeSet<Link>) -> FractionalAssignment {
        let mut x = FractionalAssignment::new();
        for &l in links {
            x.set(l, Q::one());
        }
        x
    }

    pub fn set(&mut self, l: Link, value: Q) {
        if value.is_zero() {
            self.values.remove(&l);
        } else {
            self.values.insert(l, value);
        }
    }

    pub fn get(&self, l: Link) -> Q {
        self.values.get(&l).copied().unwrap_or_else(Q::zero)
    }

    /// Links with nonzero value.
    pub fn support(&self) -> impl Iterator<Item = (Link, Q)> + '_ {
        self.values.iter().map(|(&l, &v)| (l, v))
    }

    /// `x(E)`.
    pub fn total(&self) -> Q {
        self.values.values().fold(Q::zero(), |a, &b| a + b)
    }

    /// `x(δ_E(w))`: total value of links incident to `w`.
    pub fn incident_sum(&self, w: NodeId) -> Q {
        self.support()
            .filter(|(l, _)| l.is_incident(w))
            .fold(Q::zero(), |a, (_, v)| a + v)
    }

    /// Ones of `x`: links at value exactly one.
    pub fn ones(&self) -> BTreeSet<Link> {
        self.support()
            .filter(|(_, v)| v.is_one())
            .map(|(l, _)| l)
            .collect()
    }

    pub fn is_integral(&self) -> bool {
        self.support().all(|(_, v)| v.is_zero() || v.is_one())
    }
}

/// Violations of the covering/overlapping/bound constraint families.
#[derive(Debug, Clone, Default)]
pub struct Lp0Report {
    /// `(parent, child, slack)` for covering rows below 1.
    pub covering_violations: Vec<(NodeId, NodeId, Q)>,
    /// `(l1, l2, excess)` for overlapping pairs above 1.
    pub overlapping_violations: Vec<(Link, Link, Q)>,
    /// Links outside `[0, 1]`.
    pub bound_violations: Vec<(Link, Q)>,
}

impl Lp0Report {
    pub fn ok(&self) -> bool {
        self.covering_violations.is_empty()
            && self.overlapping_violations.is_empty()
            && self.bound_violations.is_empty()
    }
}

/// Evaluates all three constraint families exactly. Pair rows are enumerated
/// over all distinct link pairs; quadratic in the link count by design.
pub fn check_lp0(inst: &TapInstance, x: &FractionalAssignment) -> Lp0Report {
    let mut report = Lp0Report::default();
    let one = Q::one();
    // Bounds.
    for (l, v) in x.support() {
        if v < Q::zero() || v > one {
            report.bound_violations.push((l, v));
        }
    }
    // Covering rows, accumulated per tree edge (keyed by child).
    let n = inst.node_count() as usize;
    let mut cover_sum = vec![Q::zero(); n];
    for (l, v) in x.support() {
        for c in inst.path_edge_children(l) {
            cover_sum[c as usize] = cover_sum[c as usize] + v;
        }
    }
    for v in 0..inst.node_count() {
        if v != inst.root() && cover_sum[v as usize] < one {
            report
                .covering_violations
                .push((inst.parent(v), v, one - cover_sum[v as usize]));
        }
    }
    // Overlapping pairs.
    let links: Vec<Link> = inst.links().iter().copied().collect();
    for i in 0..links.len() {
        for j in i + 1..links.len() {
            let s = x.get(links[i]) + x.get(links[j]);
            if s > one && inst.is_overlapping_pair(links[i], links[j]) {
                report
                    .overlapping_violations
                    .push((links[i], links[j], s - one));
            }
        }
    }
    report
}

/// True iff every pair of distinct links in `j` is an overlapping pair.
pub fn overlapping_clique(inst: &TapInstance, j: &BTreeSet<Link>) -> bool {
    let links: Vec<Link> = j.iter().copied().collect();
    for i in 0..links.len() {
        for k in i + 1..links.len() {
            if !inst.is_overlapping_pair(links[i], links[k]) {
                return false;
            }
        }
    }
    true
}

/// The shadow-shortening procedure on an integral cover: while two members
/// form an overlapping pair, the one with an end on the other's path is
/// shortened to the sublink past their shared prefix. Preserves cover-ness;
/// on an optimal cover also the cardinality; the result has no overlapping
/// pair and is therefore LP-feasible as an indicator.
pub fn shadow_minimalize(inst: &TapInstance, cover: &BTreeSet<Link>) -> BTreeSet<Link> {
    let mut j: BTreeSet<Link> = cover.clone();
    'outer: loop {
        let links: Vec<Link> = j.iter().copied().collect();
        for i in 0..links.len() {
            for k in i + 1..links.len() {
                let (l1, l2) = (links[i], links[k]);
                if !inst.is_overlapping_pair(l1, l2) {
                    continue;
                }
                // Orient: pick the first end of the earlier link lying on the
                // other's path.
                let cand = [
                    (l1, l1.u, l2),
                    (l1, l1.v, l2),
                    (l2, l2.u, l1),
                    (l2, l2.v, l1),
                ];
                let (shrink, anchor, other) = cand
                    .into_iter()
                    .find(|&(_, end, oth)| inst.on_path(oth, end))
                    .expect("overlapping pair with no end on the other path");
                let far = shrink.other(anchor);
                // Maximal prefix of the path anchor->far inside P(other).
                let path = inst.tree_path(anchor, far);
                let other_edges: BTreeSet<NodeId> =
                    inst.path_edge_children(other).into_iter().collect();
                let mut stop = anchor;
                for w in path.windows(2) {
                    let child = if inst.parent(w[1]) == w[0] { w[1] } else { w[0] };
                    if other_edges.contains(&child) {
                        stop = w[1];
                    } else {
                        break;
                    }
                }
                j.remove(&shrink);
                if stop != far {
                    j.insert(Link::new(stop, far));
                }
                continue 'outer;
            }
        }
        return j;
    }
}

/// `Φ(x, S) = ½ Σ_{w ∈ S ∩ R} x(δ_E(w))` over original non-leaf nodes.
pub fn phi(inst: &TapInstance, x: &FractionalAssignment, s: &BTreeSet<NodeId>) -> Q {
    let half = Q::new(1, 2);
    s.iter()
        .filter(|&&w| !inst.is_leaf(w))
        .fold(Q::zero(), |acc, &w| acc + half * x.incident_sum(w))
}

/// The potential: `|U| + (3/2)|M| + Φ(x, V)`.
pub fn potential(
    inst: &TapInstance,
    x: &FractionalAssignment,
    m: &BTreeSet<Link>,
    u: &BTreeSet<NodeId>,
) -> Q {
    let all: BTreeSet<NodeId> = (0..inst.node_count()).collect();
    Q::from_integer(u.len() as i64) + Q::new(3, 2) * Q::from_integer(m.len() as i64)
        + phi(inst, x, &all)
}

/// Credit of a semiclosed subtree and whether it is good
/// (credit ≥ |Γ(M, T'_v)| + 1).
pub fn subtree_credit(
    ct: &ContractedTree,
    ms: &MatchingState,
    x: &FractionalAssignment,
    v: CNodeId,
) -> Result<(Q, bool), SolveError> {
    let inst = ct.origin();
    let (nodes, leaves) = ct.subtree_and_leaves(v);
    let inside: BTreeSet<CNodeId> = nodes.iter().copied().collect();
    let m_imgs = ms.m_images(ct);
    let m_inside = m_imgs
        .iter()
        .filter(|&&(a, b)| inside.contains(&a) && inside.contains(&b))
        .count();
    let matched: BTreeSet<CNodeId> = m_imgs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let exposed_leaves = leaves.iter().filter(|c| !matched.contains(c)).count();
    let compound_nonleaf = nodes
        .iter()
        .filter(|&&c| ct.is_compound(c) && !ct.is_leaf_c(c))
        .count();
    let mut credit = Q::new(3, 2) * Q::from_integer(m_inside as i64)
        + Q::from_integer(exposed_leaves as i64)
        + Q::from_integer(compound_nonleaf as i64);
    // Fractional credits of alive original non-leaf members.
    for &c in &nodes {
        if !ct.is_compound(c) && !ct.is_leaf_c(c) {
            let w = ct.contained(c)[0];
            credit = credit + Q::new(1, 2) * x.incident_sum(w);
        }
    }
    // Root bonus: the original root alive, uncontracted, inside the subtree.
    let root_c = ct.cnode_of(inst.root());
    if !ct.is_compound(root_c) && inside.contains(&root_c) {
        credit = credit + Q::one();
    }
    let g = solver::gamma(ct, &m_imgs, v)?;
    let good = credit >= Q::from_integer(g.len() as i64 + 1);
    Ok((credit, good))
}

/// One row of the credit ledger.
#[derive(Debug, Clone)]
pub struct LedgerRow {
    pub event: TraceEvent,
    pub cost: usize,
    pub released: Q,
    pub ok: bool,
}

/// The per-iteration credit ledger of a replayed run.
#[derive(Debug, Clone)]
pub struct CreditReport {
    pub rows: Vec<LedgerRow>,
    pub potential: Q,
    pub total_cost: usize,
    pub final_ok: bool,
}

impl CreditReport {
    pub fn first_bad_row(&self) -> Option<&LedgerRow> {
        self.rows.iter().find(|r| !r.ok)
    }
}

#[derive(Debug, Clone)]
pub enum AuditError {
    /// The assignment is not integral or violates the LP rows.
    BadAssignment(String),
    Solve(SolveError),
}

/// Replays the solver and accounts credits per contraction: each released
/// pool (absorbed exposed leaves, absorbed compounds, fractional credits of
/// absorbed non-leaf originals, dying `M`-link credits, and the root bonus)
/// must pay `|links added| + 1`. Finally `|F| ≤ potential`.
pub fn audit_solve(
    inst: &TapInstance,
    x: &FractionalAssignment,
    opts: &SolveOptions,
) -> Result<CreditReport, AuditError> {
    if !x.is_integral() {
        return Err(AuditError::BadAssignment("assignment not integral".into()));
    }
    let lp = check_lp0(inst, x);
    if !lp.ok() {
        return Err(AuditError::BadAssignment(format!(
            "assignment violates LP rows: {} covering, {} overlapping, {} bounds",
            lp.covering_violations.len(),
            lp.overlapping_violations.len(),
            lp.bound_violations.len()
        )));
    }
    let result = solver::solve(inst, opts).map_err(AuditError::Solve)?;
    let u = &result.exposed;
    let m = &result.matching;
    let half = Q::new(1, 2);
    let mut rows = Vec::new();
    let mut total_cost = 0usize;
    for rec in &result.records {
        let mut released = Q::zero();
        for &w in &rec.absorbed_originals {
            if u.contains(&w) {
                released = released + Q::one();
            }
            if !inst.is_leaf(w) {
                released = released + half * x.incident_sum(w);
            }
            if w == inst.root() {
                released = released + Q::one();
            }
        }
        released = released + Q::from_integer(rec.absorbed_compounds as i64);
        released = released + Q::new(3, 2) * Q::from_integer(rec.dying_m_links.len() as i64);
        let cost = rec.links_added.len() + 1;
        total_cost += rec.links_added.len();
        rows.push(LedgerRow {
            event: rec.event.clone(),
            cost,
            released: released,
            ok: released >= Q::from_integer(cost as i64),
        });
    }
    let pot = potential(inst, x, m, u);
    let final_ok =
        rows.iter().all(|r| r.ok) && Q::from_integer(result.f.len() as i64) <= pot;
    Ok(CreditReport {
        rows,
        potential: pot,
        total_cost,
        final_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolytopeError {
    /// Too many leaves for odd-set enumeration.
    SizeGuard(usize),
}

/// Membership of `x|_{E(L)} / scale` in the matching polytope of the
/// leaf-to-leaf graph, by explicit odd-set enumeration. Guarded at 20 leaves.
pub fn matching_polytope_member(
    inst: &TapInstance,
    x: &FractionalAssignment,
    scale: Q,
) -> Result<bool, PolytopeError> {
    let leaves = inst.leaves();
    if leaves.len() > 20 {
        return Err(PolytopeError::SizeGuard(leaves.len()));
    }
    let mut index = BTreeMap::new();
    for (i, &v) in leaves.iter().enumerate() {
        index.insert(v, i);
    }
    // Leaf-to-leaf support edges with scaled values.
    let mut edges: Vec<(usize, usize, Q)> = Vec::new();
    for (l, v) in x.support() {
        if let (Some(&a), Some(&b)) = (index.get(&l.u), index.get(&l.v)) {
            edges.push((a, b, v / scale));
        }
    }
    let one = Q::one();
    // Degree rows.
    for i in 0..leaves.len() {
        let d: Q = edges
            .iter()
            .filter(|&&(a, b, _)| a == i || b == i)
            .fold(Q::zero(), |acc, &(_, _, v)| acc + v);
        if d > one {
            return Ok(false);
        }
    }
    // Odd-set rows.
    let full: u32 = leaves.len() as u32;
    for mask in 1u32..(1 << full) {
        let size = mask.count_ones();
        if size % 2 == 0 || size < 3 {
            continue;
        }
        let sum: Q = edges
            .iter()
            .filter(|&&(a, b, _)| mask & (1 << a) != 0 && mask & (1 << b) != 0)
            .fold(Q::zero(), |acc, &(_, _, v)| acc + v);
        if sum > Q::new(size as i64 - 1, 2) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A node of the auxiliary graph's right side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AuxNode {
    /// Stands for everything outside the subtree.
    Outside,
    /// An `M`-exposed leaf of the subtree.
    Exposed(CNodeId),
}

/// Bipartite multigraph `AG(T'_v)`: `M`-covered leaves against
/// `{v̄} ∪ U(T'_v)`, one edge per live image.
#[derive(Debug, Clone)]
pub struct AuxiliaryGraph {
    pub ml: Vec<CNodeId>,
    pub au: Vec<AuxNode>,
    /// `(index into ml, index into au, underlying image)`.
    pub edges: Vec<(usize, usize, ImageKey)>,
}

impl AuxiliaryGraph {
    /// Is there a perfect matching whose underlying links cover every tree
    /// edge of `T'_v`? Exhaustive; the graphs here are tiny.
    pub fn has_covering_perfect_matching(&self, ct: &ContractedTree, v: CNodeId) -> bool {
        if self.ml.len() != self.au.len() {
            return false;
        }
        let (nodes, _) = ct.subtree_and_leaves(v);
        let need: BTreeSet<CNodeId> = nodes.into_iter().filter(|&c| c != v).collect();
        let mut chosen: Vec<ImageKey> = Vec::new();
        self.search(0, &mut vec![false; self.au.len()], &mut chosen, ct, &need)
    }

    fn search(
        &self,
        i: usize,
        used: &mut Vec<bool>,
        chosen: &mut Vec<ImageKey>,
        ct: &ContractedTree,
        need: &BTreeSet<CNodeId>,
    ) -> bool {
        if i == self.ml.len() {
            let mut covered: BTreeSet<CNodeId> = BTreeSet::new();
            for &key in chosen.iter() {
                let path = ct.cnode_path(key.0, key.1);
                let top = *path.iter().min_by_key(|&&c| ct.depth_c(c)).unwrap();
                for &c in &path {
                    if c != top {
                        covered.insert(c);
                    }
                }
            }
            return need.iter().all(|c| covered.contains(c));
        }
        for &(mi, ai, key) in &self.edges {
            if mi == i && !used[ai] {
                used[ai] = true;
                chosen.push(key);
                if self.search(i + 1, used, chosen, ct, need) {
                    return true;
                }
                chosen.pop();
                used[ai] = false;
            }
        }
        false
    }
}

/// Builds `AG(T'_v)` for a subtree of the current tree.
pub fn build_aux_graph(ct: &ContractedTree, ms: &MatchingState, v: CNodeId) -> AuxiliaryGraph {
    let (nodes, leaves) = ct.subtree_and_leaves(v);
    let inside: BTreeSet<CNodeId> = nodes.into_iter().collect();
    let m_imgs = ms.m_images(ct);
    let matched: BTreeSet<CNodeId> = m_imgs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let ml: Vec<CNodeId> = leaves
        .iter()
        .copied()
        .filter(|c| matched.contains(c))
        .collect();
    let exposed: Vec<CNodeId> = leaves
        .iter()
        .copied()
        .filter(|c| !matched.contains(c))
        .collect();
    let mut au: Vec<AuxNode> = vec![AuxNode::Outside];
    au.extend(exposed.iter().map(|&c| AuxNode::Exposed(c)));
    let mut edges = Vec::new();
    for (&key, _) in ct.images() {
        for (p, q) in [(key.0, key.1), (key.1, key.0)] {
            if let Some(mi) = ml.iter().position(|&c| c == p) {
                if !inside.contains(&q) {
                    edges.push((mi, 0, key));
                } else if let Some(e) = exposed.iter().position(|&c| c == q) {
                    edges.push((mi, e + 1, key));
                }
            }
        }
    }
    AuxiliaryGraph { ml, au, edges }
}
