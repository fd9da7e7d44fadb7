//! Lazified conditional-gradient solvers for sparse-measure recovery.
//!
//! This crate solves
//!
//! ```text
//!   min_u  F(Ku) + α‖u‖_M     over signed measures u on a box Ω ⊂ ℝ^d,
//! ```
//!
//! where `K` integrates a smooth kernel `κ : Ω → ℝ^m` against `u` and `F` is a
//! smooth convex fidelity. Minimizers are sparse — finite sums of weighted
//! Dirac atoms — and the solvers here exploit that structure.
//!
//! Four drivers share one set of step primitives:
//!
//! * [`drivers::run_pdap`] — classical conditional gradient with exact global
//!   dual search and a full coefficient solve per iteration,
//! * [`drivers::run_lgcg`] — the lazified variant: each iteration may accept
//!   any cheap candidate whose gap estimate clears a running threshold `M ε_k`
//!   instead of solving the global search problem,
//! * [`drivers::run_lpdap`] — lazy search combined with coefficient solves,
//!   dual-certificate recomputation and local support improvement,
//! * [`drivers::run_nlgcg`] — the lazy outer loop wrapped around a semismooth
//!   Newton phase on the finite-dimensional parametrization, with local
//!   merging; locally superlinear once the support stabilizes.
//!
//! Start with [`bench::experiments`] for two ready-made problems (2-d heat
//! source recovery, 1-d sparse frequency estimation) or assemble a
//! [`model::Problem`] from your own [`model::Kernel`] / [`model::Fidelity`]
//! implementations. The `examples/` directory walks through every major
//! capability; the `bench` binary reproduces the benchmark tables.

pub mod bench;
pub mod drivers;
pub mod error;
pub mod fixtures;
pub mod measures;
pub mod model;
pub mod search;
pub mod steps;

pub use drivers::{
    run_lgcg, run_lpdap, run_nlgcg, run_pdap, SolverOptions, Trace, TraceCall, TraceRow,
};
pub use error::{Error, Result};
pub use measures::{Atom, FiniteParam, SparseMeasure};
pub use model::{DomainBox, DualState, Fidelity, HyperParams, Kernel, Problem};
