//! Uniform entry point over the greedy solver and the baselines.

use crate::baselines::{baseline_solve, BaselineConfig};
use crate::error::Result;
use crate::gbcd::{gbcd_solve, SolveConfig};
use crate::problem::Problem;
use crate::report::SolveReport;

#[derive(Debug, Clone)]
pub enum SolverChoice {
    Gbcd(SolveConfig),
    Baseline(BaselineConfig),
}

impl SolverChoice {
    pub fn tag(&self) -> &'static str {
        match self {
            SolverChoice::Gbcd(_) => "gbcd",
            SolverChoice::Baseline(cfg) => cfg.method.tag(),
        }
    }

    pub fn tol(&self) -> f64 {
        match self {
            SolverChoice::Gbcd(cfg) => cfg.tol,
            SolverChoice::Baseline(cfg) => cfg.tol,
        }
    }
}

pub fn solve(problem: &Problem, choice: &SolverChoice) -> Result<(Vec<f64>, SolveReport)> {
    match choice {
        SolverChoice::Gbcd(cfg) => gbcd_solve(problem, cfg),
        SolverChoice::Baseline(cfg) => baseline_solve(problem, cfg),
    }
}
