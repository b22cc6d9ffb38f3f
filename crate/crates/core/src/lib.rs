//! Gaussian process regression for large dense problems.
//!
//! The training system `(K + sigma^2 I) alpha = y` is solved by greedy
//! block coordinate descent without ever materializing the kernel matrix:
//! kernel columns are recomputed on demand and the active set of each outer
//! iteration is built greedily from the analytically computable per-variable
//! decrease. Baseline solvers (dense Cholesky, conjugate gradient, cyclic
//! and gradient-based block descent, two-coordinate descent) share the same
//! stopping rule and report schema so runs are directly comparable.

pub mod baselines;
pub mod data;
pub mod error;
pub mod gbcd;
pub mod kernel;
pub mod predict;
pub mod problem;
pub mod report;
pub mod solver;

pub use baselines::{
    baseline_solve, bcdc_solve, bcdg_solve, cg_solve, direct_solve, smo_solve, BaselineConfig,
    BaselineMethod, DEFAULT_DIRECT_CAP,
};
pub use data::{
    add_target_noise, apply_standardization, fit_standardization, friedman1_generate,
    friedman1_target, invert_standardization, load_table, split, Dataset, StandardizationParams,
    TableSchema, FRIEDMAN1_DIM,
};
pub use error::{Error, Result};
pub use gbcd::{
    delta_alpha_update, gbcd_solve, gbcd_solve_observed, gbcd_solve_on, greedy_select_block,
    rank_one_inverse_update, ActiveSetWorkspace, SolveConfig, SubproblemFactorization,
};
pub use kernel::{
    kernel_eval, regularized_column, regularized_submatrix, ColumnCache, InputMatrix,
    KernelOperator, KernelSpec,
};
pub use predict::{
    fit, normalized_rmse, relative_variance_rmse, GPModel, PredictionResult,
};
pub use problem::{gradient_from_scratch, objective_value, Problem};
pub use report::{SolveReport, SolverState, TraceRow};
pub use solver::{solve, SolverChoice};
