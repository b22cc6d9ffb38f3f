//! Reference and comparison solvers for the same regularized system:
//! dense direct factorization, matrix-free conjugate gradient, cyclic and
//! gradient-based block coordinate descent, and two-coordinate descent in
//! the style of sequential minimal optimization. All iterative methods stop
//! on the gradient inf-norm so runs are comparable across solvers.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gbcd::apply_block_step;
use crate::kernel::KernelOperator;
use crate::problem::{inf_norm, Problem};
use crate::report::{SolveReport, SolverState, TraceRow};

/// Dense materialization guard for the direct solver; mirrors the sample
/// sizes where a stored kernel matrix is still practical.
pub const DEFAULT_DIRECT_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Direct,
    Cg,
    Bcdc,
    Bcdg,
    Smo,
}

impl BaselineMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            BaselineMethod::Direct => "direct",
            BaselineMethod::Cg => "cg",
            BaselineMethod::Bcdc => "bcdc",
            BaselineMethod::Bcdg => "bcdg",
            BaselineMethod::Smo => "smo",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub tol: f64,
    /// `None` resolves to a per-method default.
    pub max_iters: Option<usize>,
    /// Active-set size for the block descent variants.
    pub block_size: usize,
    /// Recorded in outputs for parity with the greedy solver; the baseline
    /// methods themselves are deterministic.
    pub rng_seed: u64,
    pub cache_columns: usize,
    pub direct_cap: usize,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod, tol: f64, block_size: usize, rng_seed: u64) -> Self {
        Self {
            method,
            tol,
            max_iters: None,
            block_size,
            rng_seed,
            cache_columns: 0,
            direct_cap: DEFAULT_DIRECT_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be finite and > 0".into()));
        }
        if self.block_size < 1 {
            return Err(Error::InvalidConfig("block_size must be >= 1".into()));
        }
        Ok(())
    }

    fn resolved_max_iters(&self, n: usize, block: usize) -> usize {
        self.max_iters
            .unwrap_or_else(|| 100 * n.div_ceil(block.min(n).max(1)))
    }
}

pub fn baseline_solve(problem: &Problem, config: &BaselineConfig) -> Result<(Vec<f64>, SolveReport)> {
    match config.method {
        BaselineMethod::Direct => direct_solve(problem, config),
        BaselineMethod::Cg => cg_solve(problem, config),
        BaselineMethod::Bcdc => bcdc_solve(problem, config),
        BaselineMethod::Bcdg => bcdg_solve(problem, config),
        BaselineMethod::Smo => smo_solve(problem, config),
    }
}

/// Dense Cholesky factorization of the fully materialized matrix. Refuses
/// problems above `direct_cap`.
pub fn direct_solve(problem: &Problem, config: &BaselineConfig) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    let start = Instant::now();
    let op = problem.operator();
    let mut report = SolveReport::new("direct", problem.spec.sigma_sq());

    let kbar = op.dense(config.direct_cap)?;
    let rhs = DVector::from_column_slice(&problem.rhs);
    let chol = nalgebra::Cholesky::new(kbar.clone()).ok_or(Error::FactorizationFailed)?;
    let alpha = chol.solve(&rhs);

    let grad = &kbar * &alpha - &rhs;
    let objective = 0.5 * alpha.dot(&(&kbar * &alpha)) - rhs.dot(&alpha);

    report.objective_trace.push(TraceRow {
        iteration: 0,
        objective: 0.0,
        grad_inf_norm: inf_norm(&problem.rhs),
        seconds: 0.0,
        kernel_evals: 0,
        step_norm_sq: 0.0,
    });
    report.objective_trace.push(TraceRow {
        iteration: 1,
        objective,
        grad_inf_norm: grad.amax(),
        seconds: start.elapsed().as_secs_f64(),
        kernel_evals: op.eval_count(),
        step_norm_sq: alpha.norm_squared(),
    });
    report.converged = true;
    report.outer_iters = 1;
    report.final_grad_inf_norm = grad.amax();
    report.wall_time = start.elapsed().as_secs_f64();
    report.kernel_evals = op.eval_count();
    Ok((alpha.as_slice().to_vec(), report))
}

/// Conjugate gradient with column-streaming matrix-vector products; each
/// product costs n^2 kernel evaluations.
pub fn cg_solve(problem: &Problem, config: &BaselineConfig) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    let start = Instant::now();
    let op = problem.operator_with_cache(config.cache_columns);
    let n = problem.n();
    let mut report = SolveReport::new("cg", problem.spec.sigma_sq());
    let max_iters = config.max_iters.unwrap_or(10 * n);

    let mut state = SolverState::initial(&problem.rhs);
    // Residual r = rhs - K̄ alpha = -g.
    let mut r = problem.rhs.clone();
    let mut p = r.clone();
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();

    push_trace(&mut report, &state, start, &op, 0.0);

    loop {
        let g_inf = inf_norm(&r);
        if g_inf <= config.tol {
            report.converged = true;
            break;
        }
        if state.outer_iter as usize >= max_iters {
            break;
        }

        let ap = op.matvec(&p)?;
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let step = rs_old / pap;

        let mut step_norm_sq = 0.0;
        for i in 0..n {
            let delta = step * p[i];
            state.alpha[i] += delta;
            step_norm_sq += delta * delta;
            r[i] -= step * ap[i];
            state.grad[i] = -r[i];
        }
        state.objective += -0.5 * step * rs_old;
        state.outer_iter += 1;

        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let dir_scale = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + dir_scale * p[i];
        }
        rs_old = rs_new;

        push_trace(&mut report, &state, start, &op, step_norm_sq);
    }

    finalize(&mut report, &state, start, &op);
    Ok((state.alpha, report))
}

/// Cyclic block coordinate descent: consecutive index windows of size m,
/// wrapping modulo n, each solved exactly.
pub fn bcdc_solve(problem: &Problem, config: &BaselineConfig) -> Result<(Vec<f64>, SolveReport)> {
    let n = problem.n();
    let m = config.block_size.min(n);
    exact_block_descent(problem, config, "bcdc", m, move |_state, iter| {
        let offset = (iter as usize * m) % n;
        (0..m).map(|i| (offset + i) % n).collect()
    })
}

/// Gradient-based block selection: the m entries of largest |g|, ties
/// broken by lowest index.
pub fn bcdg_solve(problem: &Problem, config: &BaselineConfig) -> Result<(Vec<f64>, SolveReport)> {
    let n = problem.n();
    let m = config.block_size.min(n);
    exact_block_descent(problem, config, "bcdg", m, move |state, _iter| {
        top_by_grad_magnitude(&state.grad, m)
    })
}

/// Two-coordinate descent on the pair with largest |g|; the unconstrained
/// analogue of the maximal violating pair rule.
pub fn smo_solve(problem: &Problem, config: &BaselineConfig) -> Result<(Vec<f64>, SolveReport)> {
    let n = problem.n();
    if n < 2 {
        return Err(Error::InvalidConfig("smo requires at least 2 samples".into()));
    }
    exact_block_descent(problem, config, "smo", 2, move |state, _iter| {
        top_by_grad_magnitude(&state.grad, 2)
    })
}

fn top_by_grad_magnitude(grad: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..grad.len()).collect();
    idx.sort_unstable_by(|&a, &b| {
        grad[b]
            .abs()
            .partial_cmp(&grad[a].abs())
            .expect("gradient entries are finite")
            .then(a.cmp(&b))
    });
    idx.truncate(m);
    idx
}

/// Shared outer loop: select a block, assemble its columns, solve the block
/// subproblem exactly by dense factorization, apply the step.
fn exact_block_descent(
    problem: &Problem,
    config: &BaselineConfig,
    tag: &str,
    block: usize,
    mut select: impl FnMut(&SolverState, u64) -> Vec<usize>,
) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    let start = Instant::now();
    let op = problem.operator_with_cache(config.cache_columns);
    let mut report = SolveReport::new(tag, problem.spec.sigma_sq());
    let max_iters = config.resolved_max_iters(problem.n(), block);

    let mut state = SolverState::initial(&problem.rhs);
    push_trace(&mut report, &state, start, &op, 0.0);

    loop {
        if state.grad_inf_norm() <= config.tol {
            report.converged = true;
            break;
        }
        if state.outer_iter as usize >= max_iters {
            break;
        }

        let b = select(&state, state.outer_iter);
        let mut columns = Vec::with_capacity(b.len());
        for &j in &b {
            columns.push(op.column(j)?);
        }
        let t = b.len();
        let block_matrix = DMatrix::from_fn(t, t, |i, j| columns[j][b[i]]);
        let g_b = DVector::from_fn(t, |i, _| state.grad[b[i]]);
        let chol = nalgebra::Cholesky::new(block_matrix).ok_or(Error::FactorizationFailed)?;
        let delta = -(chol.solve(&g_b));

        apply_block_step(&mut state, &b, &columns, delta.as_slice(), &mut report);
        push_trace(&mut report, &state, start, &op, delta.norm_squared());
    }

    finalize(&mut report, &state, start, &op);
    Ok((state.alpha, report))
}

fn push_trace(
    report: &mut SolveReport,
    state: &SolverState,
    start: Instant,
    op: &KernelOperator<'_>,
    step_norm_sq: f64,
) {
    report.objective_trace.push(TraceRow {
        iteration: state.outer_iter,
        objective: state.objective,
        grad_inf_norm: state.grad_inf_norm(),
        seconds: start.elapsed().as_secs_f64(),
        kernel_evals: op.eval_count(),
        step_norm_sq,
    });
}

fn finalize(report: &mut SolveReport, state: &SolverState, start: Instant, op: &KernelOperator<'_>) {
    report.outer_iters = state.outer_iter;
    report.final_grad_inf_norm = state.grad_inf_norm();
    report.wall_time = start.elapsed().as_secs_f64();
    report.kernel_evals = op.eval_count();
}
