//! The regularized linear system `(K + sigma^2*I) alpha = rhs` and the
//! quadratic objective it minimizes.

use crate::error::{Error, Result};
use crate::kernel::{InputMatrix, KernelOperator, KernelSpec};

/// Training inputs, right-hand side and kernel parameters. The right-hand
/// side is the target vector for training systems, or a cross-covariance
/// vector for predictive-variance systems.
#[derive(Debug, Clone)]
pub struct Problem {
    pub x: InputMatrix,
    pub rhs: Vec<f64>,
    pub spec: KernelSpec,
}

impl Problem {
    pub fn new(x: InputMatrix, rhs: Vec<f64>, spec: KernelSpec) -> Result<Self> {
        if rhs.len() != x.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: x.n_rows(),
                actual: rhs.len(),
                context: "rhs length vs input rows",
            });
        }
        if let Some(pos) = rhs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos, col: 0 });
        }
        if x.n_cols() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: x.n_cols(),
                context: "kernel spec vs input attributes",
            });
        }
        Ok(Self { x, rhs, spec })
    }

    pub fn n(&self) -> usize {
        self.x.n_rows()
    }

    pub fn operator(&self) -> KernelOperator<'_> {
        KernelOperator::new(&self.x, &self.spec).expect("dimensions checked at construction")
    }

    pub fn operator_with_cache(&self, budget_columns: usize) -> KernelOperator<'_> {
        KernelOperator::with_cache(&self.x, &self.spec, budget_columns)
            .expect("dimensions checked at construction")
    }
}

/// `f(alpha) = 1/2 alpha' K̄ alpha - rhs' alpha`, streaming one kernel
/// column at a time.
pub fn objective_value(problem: &Problem, alpha: &[f64]) -> Result<f64> {
    let op = problem.operator();
    objective_value_on(&op, &problem.rhs, alpha)
}

pub(crate) fn objective_value_on(op: &KernelOperator<'_>, rhs: &[f64], alpha: &[f64]) -> Result<f64> {
    let q = op.matvec(alpha)?;
    let mut quad = 0.0;
    let mut lin = 0.0;
    for i in 0..alpha.len() {
        quad += alpha[i] * q[i];
        lin += rhs[i] * alpha[i];
    }
    Ok(0.5 * quad - lin)
}

/// `K̄ alpha - rhs` recomputed from scratch; used to audit the gradient a
/// solver maintained incrementally.
pub fn gradient_from_scratch(problem: &Problem, alpha: &[f64]) -> Result<Vec<f64>> {
    let op = problem.operator();
    let mut g = op.matvec(alpha)?;
    for (gi, yi) in g.iter_mut().zip(problem.rhs.iter()) {
        *gi -= yi;
    }
    Ok(g)
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kernel_eval;
    use approx::assert_abs_diff_eq;

    fn one_point_problem(sigma_sq: f64, y: f64) -> Problem {
        let x = InputMatrix::new(1, 1, vec![0.0]).unwrap();
        let spec = KernelSpec::new(vec![1.0], sigma_sq).unwrap();
        Problem::new(x, vec![y], spec).unwrap()
    }

    #[test]
    fn objective_zero_at_origin() {
        let p = one_point_problem(0.5, 3.0);
        assert_eq!(objective_value(&p, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn objective_scalar_case() {
        // K̄ = [2] (sigma_sq = 1 on top of k = 1), y = 4, alpha = 1.
        let p = one_point_problem(1.0, 4.0);
        assert_abs_diff_eq!(objective_value(&p, &[1.0]).unwrap(), -3.0, epsilon = 1e-15);
    }

    #[test]
    fn objective_matches_dense_oracle() {
        let (x, spec) = crate::kernel::tests_support::random_instance(6, 2, 42);
        let n = x.n_rows();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64) - 2.5).collect();
        let alpha: Vec<f64> = (0..n).map(|i| 0.3 * (i as f64) - 1.0).collect();
        let p = Problem::new(x.clone(), rhs.clone(), spec.clone()).unwrap();

        // Brute-force dense assembly.
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut k = kernel_eval(x.row(i), x.row(j), &spec);
                if i == j {
                    k += spec.sigma_sq();
                }
                quad += alpha[i] * k * alpha[j];
            }
        }
        let lin: f64 = rhs.iter().zip(alpha.iter()).map(|(y, a)| y * a).sum();
        let want = 0.5 * quad - lin;

        assert_abs_diff_eq!(objective_value(&p, &alpha).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn problem_rejects_rhs_length_mismatch() {
        let x = InputMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        let spec = KernelSpec::new(vec![1.0], 0.1).unwrap();
        assert!(Problem::new(x, vec![1.0], spec).is_err());
    }
}
