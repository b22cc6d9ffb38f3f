//! Delimited table writers. Every file starts with the manifest header
//! comments and one CSV header line. Timing columns are written as zero
//! unless timing output is enabled, so rerunning a command with identical
//! flags and seed produces bitwise-identical files.

use std::fmt::Write as _;
use std::path::Path;

use gbcd::{SolveReport, TraceRow};

use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy)]
pub struct WriteOptions {
    /// When false, wall-clock columns are emitted as 0 to keep files
    /// reproducible; real timings still go to stderr.
    pub timing: bool,
}

impl WriteOptions {
    pub fn seconds(&self, s: f64) -> f64 {
        if self.timing {
            s
        } else {
            0.0
        }
    }
}

pub fn write_trace(
    path: &Path,
    manifest: &Manifest,
    report: &SolveReport,
    opts: WriteOptions,
) -> std::io::Result<()> {
    let mut out = manifest.file_header();
    out.push_str("iteration,objective,grad_inf_norm,seconds,kernel_evals\n");
    for row in &report.objective_trace {
        let TraceRow {
            iteration,
            objective,
            grad_inf_norm,
            seconds,
            kernel_evals,
            ..
        } = row;
        let _ = writeln!(
            out,
            "{iteration},{objective},{grad_inf_norm},{},{kernel_evals}",
            opts.seconds(*seconds)
        );
    }
    std::fs::write(path, out)
}

pub struct PredictionRows<'a> {
    pub mean: &'a [f64],
    pub variance: Option<&'a [f64]>,
    pub inner_iters: Option<Vec<u64>>,
}

pub fn write_predictions(
    path: &Path,
    manifest: &Manifest,
    rows: &PredictionRows<'_>,
) -> std::io::Result<()> {
    let mut out = manifest.file_header();
    match rows.variance {
        Some(_) => out.push_str("point,mean,variance,inner_iters\n"),
        None => out.push_str("point,mean\n"),
    }
    for (i, m) in rows.mean.iter().enumerate() {
        match rows.variance {
            Some(v) => {
                let iters = rows
                    .inner_iters
                    .as_ref()
                    .map(|it| it[i])
                    .unwrap_or_default();
                let _ = writeln!(out, "{i},{m},{},{iters}", v[i]);
            }
            None => {
                let _ = writeln!(out, "{i},{m}");
            }
        }
    }
    std::fs::write(path, out)
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub solver: String,
    pub status: String,
    pub converged: bool,
    pub outer_iters: u64,
    pub kernel_evals: u64,
    pub train_seconds: f64,
    pub final_grad_inf_norm: f64,
    pub rmse: f64,
}

pub fn write_bench_table(
    path: &Path,
    manifest: &Manifest,
    rows: &[BenchRow],
    opts: WriteOptions,
) -> std::io::Result<()> {
    let mut out = manifest.file_header();
    out.push_str("solver,status,converged,outer_iters,kernel_evals,train_seconds,final_grad_inf_norm,rmse\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.solver,
            r.status,
            r.converged,
            r.outer_iters,
            r.kernel_evals,
            opts.seconds(r.train_seconds),
            r.final_grad_inf_norm,
            r.rmse
        );
    }
    std::fs::write(path, out)
}

pub fn write_histogram(
    path: &Path,
    manifest: &Manifest,
    edges: &[f64],
    counts: &[u64],
) -> std::io::Result<()> {
    let mut out = manifest.file_header();
    out.push_str("bin_lo,bin_hi,count\n");
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{c}", edges[i], edges[i + 1]);
    }
    std::fs::write(path, out)
}

/// Writes a dataset as a delimited table with a header row; round-trips
/// through `load_table` with the header flag set.
pub fn write_dataset(
    path: &Path,
    manifest: &Manifest,
    ds: &gbcd::Dataset,
) -> std::io::Result<()> {
    let mut out = manifest.file_header();
    let d = ds.d();
    for l in 0..d {
        let _ = write!(out, "x{},", l + 1);
    }
    out.push_str("y\n");
    for i in 0..ds.n() {
        for v in ds.x.row(i) {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{}", ds.y[i]);
    }
    std::fs::write(path, out)
}
