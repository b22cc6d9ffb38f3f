//! Multi-solver benchmark runs over one standardized train/test pair.
//! Individual solver failures become table rows; the run continues.

use gbcd::{
    normalized_rmse, solve, Dataset, GPModel, KernelSpec, Problem, SolveReport, SolverChoice,
};

use crate::error::CliResult;
use crate::tables::BenchRow;

pub struct BenchSolverResult {
    pub row: BenchRow,
    pub report: Option<SolveReport>,
}

/// Fits one solver on the training split and scores it on the test split.
pub fn run_solver(
    train: &Dataset,
    test: &Dataset,
    spec: &KernelSpec,
    choice: &SolverChoice,
) -> CliResult<BenchSolverResult> {
    let tag = choice.tag().to_string();
    let problem = Problem::new(train.x.clone(), train.y.clone(), spec.clone())?;
    let train_var = train.target_variance();

    let (alpha, report) = match solve(&problem, choice) {
        Ok(pair) => pair,
        Err(e) => {
            return Ok(BenchSolverResult {
                row: BenchRow {
                    solver: tag,
                    status: format!("failed: {e}"),
                    converged: false,
                    outer_iters: 0,
                    kernel_evals: 0,
                    train_seconds: 0.0,
                    final_grad_inf_norm: f64::NAN,
                    rmse: f64::NAN,
                },
                report: None,
            });
        }
    };

    let model = GPModel {
        problem,
        alpha,
        solver_tag: tag.clone(),
        fit_tol: choice.tol(),
        fit_report: report.clone(),
    };
    let mean = model.predict_mean(&test.x)?;
    let rmse = normalized_rmse(&mean, &test.y, train_var)?;

    Ok(BenchSolverResult {
        row: BenchRow {
            solver: tag,
            status: "ok".to_string(),
            converged: report.converged,
            outer_iters: report.outer_iters,
            kernel_evals: report.kernel_evals,
            train_seconds: report.wall_time,
            final_grad_inf_norm: report.final_grad_inf_norm,
            rmse,
        },
        report: Some(report),
    })
}
