//! Generic convex solvers used by the resource and association blocks.

pub mod concave;
pub mod sdp;

use serde::Serialize;

pub use concave::{solve_concave, ConcaveObjective, ConcaveOptions, LinearConstraints};
pub use sdp::{min_eigenvalue, solve_sdp, Sense, SdpOptions, SdpProblem, SdpSolution, SymSparse, TraceConstraint};

/// Outcome of one convex solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexStatus {
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
}
