//! Penalty dual decomposition for the double-active design.
//!
//! The rate is lower-bounded with a quadratic transform, the radar SINR
//! constraints are split with five auxiliary families and convexified around
//! the previous radar-signal auxiliary, and the augmented Lagrangian is
//! minimized block by block.

pub mod blocks;
pub mod solver;
pub mod state;

pub use blocks::{
    solve_two_constraint, theta1_subproblem, theta2_subproblem, update_aux_rest, update_aux_u, update_d, update_theta1,
    update_theta2, update_w, update_x, BlockOptions, QuadraticSubproblem,
};
pub use solver::{
    initial_solution, mvdr_filter, pdd_solve, polish_filters, SolveTrace, Solved, SolverOptions, TraceRow,
};
pub use state::{
    al_objective, ccp_linearize, constraint_violation, fp_optimal_x, fp_surrogate, PddState, Problem, Residual, Variant,
};
