//! Predictive means and variances, plus the evaluation metrics used to
//! compare solvers.
//!
//! The mean needs the one training solve already held by the model; each
//! variance needs one additional linear solve with the cross-covariance
//! vector as the right-hand side, delegated to any configured solver.

use nalgebra::DVector;

use crate::baselines::BaselineMethod;
use crate::error::{Error, Result};
use crate::kernel::{kernel_eval, InputMatrix};
use crate::problem::Problem;
use crate::report::SolveReport;
use crate::solver::{solve, SolverChoice};

/// Variance entries this far below zero are clamped to zero; anything more
/// negative marks the entry invalid.
const VARIANCE_CLAMP: f64 = 1e-8;

/// A fitted model: the training problem together with the solution of the
/// training system.
#[derive(Debug, Clone)]
pub struct GPModel {
    pub problem: Problem,
    pub alpha: Vec<f64>,
    pub solver_tag: String,
    pub fit_tol: f64,
    pub fit_report: SolveReport,
}

/// Solves the training system; non-convergence is an error and the partial
/// model is withheld.
pub fn fit(problem: Problem, choice: &SolverChoice) -> Result<GPModel> {
    let (alpha, report) = solve(&problem, choice)?;
    if !report.converged {
        return Err(Error::NotConverged {
            grad_inf_norm: report.final_grad_inf_norm,
            iters: report.outer_iters,
            report: Box::new(report),
        });
    }
    Ok(GPModel {
        problem,
        alpha,
        solver_tag: choice.tag().to_string(),
        fit_tol: choice.tol(),
        fit_report: report,
    })
}

#[derive(Debug, Clone)]
pub struct PredictionResult {
    pub mean: Vec<f64>,
    /// Per-point predictive variances; an entry is NaN when its inner solve
    /// failed.
    pub variance: Option<Vec<f64>>,
    /// Entries within the clamp tolerance below zero, reset to zero.
    pub clamped: usize,
    /// Entries marked invalid.
    pub failed: usize,
    pub per_point_reports: Option<Vec<SolveReport>>,
}

impl GPModel {
    fn check_test_inputs(&self, xstar: &InputMatrix) -> Result<()> {
        if xstar.n_cols() != self.problem.x.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.problem.x.n_cols(),
                actual: xstar.n_cols(),
                context: "test input attributes",
            });
        }
        Ok(())
    }

    fn cross_covariances(&self, xstar_row: &[f64]) -> Vec<f64> {
        (0..self.problem.n())
            .map(|i| kernel_eval(self.problem.x.row(i), xstar_row, &self.problem.spec))
            .collect()
    }

    /// `mean_j = k_*' alpha`; no noise term enters the cross-covariances.
    pub fn predict_mean(&self, xstar: &InputMatrix) -> Result<Vec<f64>> {
        self.check_test_inputs(xstar)?;
        let mut means = Vec::with_capacity(xstar.n_rows());
        for j in 0..xstar.n_rows() {
            let k_star = self.cross_covariances(xstar.row(j));
            let mean: f64 = k_star.iter().zip(self.alpha.iter()).map(|(k, a)| k * a).sum();
            means.push(mean);
        }
        Ok(means)
    }

    /// `v_j = k(x*, x*) + sigma^2 - k_*' z` with `(K + sigma^2 I) z = k_*`
    /// solved per test point by the configured solver.
    pub fn predict_variance(
        &self,
        xstar: &InputMatrix,
        choice: &SolverChoice,
    ) -> Result<(Vec<f64>, Vec<SolveReport>)> {
        let result = self.predict(xstar, Some(choice))?;
        Ok((
            result.variance.expect("variance requested"),
            result.per_point_reports.expect("variance requested"),
        ))
    }

    pub fn predict(
        &self,
        xstar: &InputMatrix,
        variance_solver: Option<&SolverChoice>,
    ) -> Result<PredictionResult> {
        self.check_test_inputs(xstar)?;
        let n = self.problem.n();
        let t = xstar.n_rows();
        let sigma_sq = self.problem.spec.sigma_sq();

        let mut mean = Vec::with_capacity(t);
        let mut variance = variance_solver.map(|_| Vec::with_capacity(t));
        let mut reports = variance_solver.map(|_| Vec::with_capacity(t));
        let mut clamped = 0usize;
        let mut failed = 0usize;

        // The direct solver factors the training matrix once for the whole
        // batch; iterative solvers run cold per point.
        let direct = match variance_solver {
            Some(SolverChoice::Baseline(cfg)) if cfg.method == BaselineMethod::Direct => {
                let op = self.problem.operator();
                let kbar = op.dense(cfg.direct_cap)?;
                Some(nalgebra::Cholesky::new(kbar).ok_or(Error::FactorizationFailed)?)
            }
            _ => None,
        };
        // Scratch problem sharing the training inputs, one rhs per point.
        let mut scratch = variance_solver.and_then(|_| {
            if direct.is_none() {
                Some(self.problem.clone())
            } else {
                None
            }
        });

        for j in 0..t {
            let row = xstar.row(j);
            let k_star = self.cross_covariances(row);
            mean.push(k_star.iter().zip(self.alpha.iter()).map(|(k, a)| k * a).sum());

            let Some(choice) = variance_solver else { continue };
            let prior = kernel_eval(row, row, &self.problem.spec) + sigma_sq;

            let (z, report) = if let Some(chol) = &direct {
                let z = chol.solve(&DVector::from_column_slice(&k_star));
                let mut rep = SolveReport::new("direct", sigma_sq);
                rep.converged = true;
                rep.outer_iters = 1;
                rep.final_grad_inf_norm = 0.0;
                (Some(z.as_slice().to_vec()), rep)
            } else {
                let problem = scratch.as_mut().expect("scratch problem for iterative solver");
                problem.rhs.clone_from(&k_star);
                match solve(problem, choice) {
                    Ok((z, rep)) if rep.converged => (Some(z), rep),
                    Ok((_, rep)) => (None, rep),
                    Err(Error::NumericalBreakdown { partial, .. }) => {
                        let rep = partial
                            .map(|b| *b)
                            .unwrap_or_else(|| SolveReport::new(choice.tag(), sigma_sq));
                        (None, rep)
                    }
                    Err(e) => return Err(e),
                }
            };

            let v = match z {
                Some(z) => {
                    let fitted: f64 = k_star.iter().zip(z.iter()).map(|(k, zi)| k * zi).sum();
                    let mut v = prior - fitted;
                    if v < 0.0 {
                        if v >= -VARIANCE_CLAMP {
                            clamped += 1;
                            v = 0.0;
                        } else {
                            failed += 1;
                            v = f64::NAN;
                        }
                    }
                    v
                }
                None => {
                    failed += 1;
                    f64::NAN
                }
            };
            variance.as_mut().expect("variance buffer").push(v);
            reports.as_mut().expect("report buffer").push(report);
            let _ = n;
        }

        Ok(PredictionResult {
            mean,
            variance,
            clamped,
            failed,
            per_point_reports: reports,
        })
    }
}

/// `sqrt( mean((target - prediction)^2) / train_target_variance )`.
pub fn normalized_rmse(predictions: &[f64], targets: &[f64], train_target_variance: f64) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            actual: predictions.len(),
            context: "predictions vs targets",
        });
    }
    if predictions.is_empty() {
        return Err(Error::InvalidConfig("empty prediction vector".into()));
    }
    if !(train_target_variance > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let t = predictions.len() as f64;
    let sum_sq: f64 = predictions
        .iter()
        .zip(targets.iter())
        .map(|(m, y)| (y - m) * (y - m))
        .sum();
    Ok((sum_sq / (t * train_target_variance)).sqrt())
}

/// `sqrt( mean( ((v_ref - v_test) / v_ref)^2 ) )`.
pub fn relative_variance_rmse(v_ref: &[f64], v_test: &[f64]) -> Result<f64> {
    if v_ref.len() != v_test.len() {
        return Err(Error::DimensionMismatch {
            expected: v_ref.len(),
            actual: v_test.len(),
            context: "variance vectors",
        });
    }
    if v_ref.is_empty() {
        return Err(Error::InvalidConfig("empty variance vector".into()));
    }
    if v_ref.iter().any(|&v| v == 0.0) {
        return Err(Error::ZeroVariance);
    }
    let t = v_ref.len() as f64;
    let sum_sq: f64 = v_ref
        .iter()
        .zip(v_test.iter())
        .map(|(vr, vt)| {
            let rel = (vr - vt) / vr;
            rel * rel
        })
        .sum();
    Ok((sum_sq / t).sqrt())
}
