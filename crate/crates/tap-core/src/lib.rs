//! Unweighted stemless tree augmentation (TAP).
//!
//! Given a rooted tree `T` and a shadow-closed set of links, the solver picks a
//! small set of links `F` so that `T + F` is 2-edge-connected. The algorithm is
//! the matching-based one: fix a maximum matching `M` on the leaf-to-leaf links,
//! exhaust simple contractions, and repeatedly contract a good semiclosed
//! subtree of the current tree `T' = T/F`, detouring through an auxiliary
//! matching `M^new` whenever deficient 3-leaf trees are present.
//!
//! Alongside the solver this crate carries the analysis as executable checks:
//! the covering LP with overlapping-pair constraints ([`certify::check_lp0`]),
//! the shadow-shortening procedure ([`certify::shadow_minimalize`]), the
//! potential function and per-contraction credit ledger
//! ([`certify::audit_solve`]), matching-polytope membership by odd-set
//! enumeration, an exact branch-and-bound oracle ([`oracle::opt_cover`]), and
//! generators for the standard example families ([`gens`]).
//!
//! The crate is `no_std` + `alloc`; all certification arithmetic is exact
//! rational, never floating point.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod certify;
pub mod contraction;
pub mod gens;
pub mod instance;
pub mod matching;
pub mod oracle;
pub mod solver;

/// Exact rational scalar used by every certification quantity.
pub type Q = num_rational::Ratio<i64>;

/// Convenience constructor for [`Q`].
pub fn q(num: i64, den: i64) -> Q {
    Q::new(num, den)
}

pub use contraction::{CNodeId, ContractedTree};
pub use instance::{Link, NodeId, StemReport, TapInstance};
pub use matching::{Matching, SimpleGraph};
pub use solver::{SolveOptions, SolveResult, TraceEvent};
