//! Convergence reports shared by every solver.

/// One row of the per-iteration trace; the column set is the flat table
/// schema exported by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub objective: f64,
    pub grad_inf_norm: f64,
    pub seconds: f64,
    pub kernel_evals: u64,
    /// `‖alpha_{k+1} - alpha_k‖_2^2` for this iteration; 0 for the initial row.
    pub step_norm_sq: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solver: String,
    pub converged: bool,
    pub outer_iters: u64,
    pub final_grad_inf_norm: f64,
    pub objective_trace: Vec<TraceRow>,
    /// Certified lower bound on the smallest eigenvalue of any active-set
    /// block of `K + sigma^2*I`; equals sigma^2.
    pub decrease_bound_factor: f64,
    pub wall_time: f64,
    pub kernel_evals: u64,
    /// Largest `‖g_B‖_inf` observed immediately after a block solve; exact
    /// block minimization drives it to roundoff level.
    pub max_block_residual: f64,
}

impl SolveReport {
    pub fn new(solver: &str, decrease_bound_factor: f64) -> Self {
        Self {
            solver: solver.to_string(),
            converged: false,
            outer_iters: 0,
            final_grad_inf_norm: f64::INFINITY,
            objective_trace: Vec::new(),
            decrease_bound_factor,
            wall_time: 0.0,
            kernel_evals: 0,
            max_block_residual: 0.0,
        }
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().map_or(0.0, |r| r.objective)
    }
}

/// Iterate, gradient and objective of one solve in flight. Exposed to
/// per-iteration observers.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub alpha: Vec<f64>,
    pub grad: Vec<f64>,
    pub outer_iter: u64,
    pub objective: f64,
}

impl SolverState {
    /// Start of every solve: `alpha = 0`, `g = -rhs`, `f = 0`.
    pub fn initial(rhs: &[f64]) -> Self {
        Self {
            alpha: vec![0.0; rhs.len()],
            grad: rhs.iter().map(|y| -y).collect(),
            outer_iter: 0,
            objective: 0.0,
        }
    }

    pub fn grad_inf_norm(&self) -> f64 {
        crate::problem::inf_norm(&self.grad)
    }
}
