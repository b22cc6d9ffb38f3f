//! Plain-text model files. A model file is self-contained: kernel
//! parameters, the fitted coefficient vector, the training inputs it refers
//! to and any standardization fitted at training time. Floats are written
//! in shortest round-trip form so a reloaded model predicts bit-identically.

use std::fmt::Write as _;
use std::path::Path;

use gbcd::{Dataset, GPModel, InputMatrix, KernelSpec, Problem, SolveReport, StandardizationParams};

use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

#[derive(Debug, Clone)]
pub struct StoredModel {
    pub model: GPModel,
    pub standardization: Option<StandardizationParams>,
}

impl StoredModel {
    /// Population variance of the training targets in model space.
    pub fn train_target_variance(&self) -> f64 {
        let y = &self.model.problem.rhs;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    let mut out = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out
}

pub fn write_model(
    path: &Path,
    manifest: &Manifest,
    model: &GPModel,
    standardization: Option<&StandardizationParams>,
) -> std::io::Result<()> {
    let p = &model.problem;
    let mut out = manifest.file_header();
    let _ = writeln!(out, "format=1");
    let _ = writeln!(out, "n={}", p.n());
    let _ = writeln!(out, "d={}", p.x.n_cols());
    let _ = writeln!(out, "solver={}", model.solver_tag);
    let _ = writeln!(out, "fit_tol={}", model.fit_tol);
    let _ = writeln!(out, "converged={}", model.fit_report.converged);
    let _ = writeln!(out, "sigma_sq={}", p.spec.sigma_sq());
    let _ = writeln!(out, "gamma={}", join(p.spec.gamma().iter().copied()));
    match standardization {
        Some(s) => {
            let _ = writeln!(out, "standardized=true");
            let _ = writeln!(out, "input_shift={}", join(s.input_shift.iter().copied()));
            let _ = writeln!(out, "input_scale={}", join(s.input_scale.iter().copied()));
            let _ = writeln!(out, "output_shift={}", s.output_shift);
            let _ = writeln!(out, "output_scale={}", s.output_scale);
        }
        None => {
            let _ = writeln!(out, "standardized=false");
        }
    }
    out.push_str("alpha\n");
    for a in &model.alpha {
        let _ = writeln!(out, "{a}");
    }
    out.push_str("x\n");
    for i in 0..p.n() {
        let _ = writeln!(out, "{}", join(p.x.row(i).iter().copied()));
    }
    out.push_str("y\n");
    for y in &p.rhs {
        let _ = writeln!(out, "{y}");
    }
    std::fs::write(path, out)
}

fn parse_floats(value: &str, what: &str) -> CliResult<Vec<f64>> {
    value
        .split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("model file: bad {what} entry {c:?}")))
        })
        .collect()
}

pub fn read_model(path: &Path) -> CliResult<StoredModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", path.display())))?;
    let mut keys: std::collections::HashMap<String, String> = std::collections::HashMap::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    let mut section = "";

    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "alpha" | "x" | "y" => {
                section = match line {
                    "alpha" => "alpha",
                    "x" => "x",
                    _ => "y",
                };
                continue;
            }
            _ => {}
        }
        match section {
            "alpha" => alpha.push(
                line.parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("model file: bad alpha line {line:?}")))?,
            ),
            "x" => rows.push(parse_floats(line, "input")?),
            "y" => y.push(
                line.parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("model file: bad target line {line:?}")))?,
            ),
            _ => {
                if let Some((k, v)) = line.split_once('=') {
                    keys.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
        }
    }

    let get = |k: &str| -> CliResult<&String> {
        keys.get(k)
            .ok_or_else(|| CliError::Usage(format!("model file: missing key {k}")))
    };
    let n: usize = get("n")?
        .parse()
        .map_err(|_| CliError::Usage("model file: bad n".into()))?;
    let d: usize = get("d")?
        .parse()
        .map_err(|_| CliError::Usage("model file: bad d".into()))?;
    let sigma_sq: f64 = get("sigma_sq")?
        .parse()
        .map_err(|_| CliError::Usage("model file: bad sigma_sq".into()))?;
    let gamma = parse_floats(get("gamma")?, "gamma")?;
    let fit_tol: f64 = get("fit_tol")?
        .parse()
        .map_err(|_| CliError::Usage("model file: bad fit_tol".into()))?;
    let solver_tag = get("solver")?.clone();

    if alpha.len() != n || rows.len() != n || y.len() != n {
        return Err(CliError::Usage(format!(
            "model file: expected {n} rows, found alpha={}, x={}, y={}",
            alpha.len(),
            rows.len(),
            y.len()
        )));
    }

    let mut values = Vec::with_capacity(n * d);
    for row in &rows {
        if row.len() != d {
            return Err(CliError::Usage("model file: inconsistent input width".into()));
        }
        values.extend_from_slice(row);
    }
    let x = InputMatrix::new(n, d, values).map_err(CliError::from)?;
    let spec = KernelSpec::new(gamma, sigma_sq).map_err(CliError::from)?;
    let problem = Problem::new(x, y, spec).map_err(CliError::from)?;

    let standardization = if get("standardized")?.as_str() == "true" {
        Some(StandardizationParams {
            input_shift: parse_floats(get("input_shift")?, "input_shift")?,
            input_scale: parse_floats(get("input_scale")?, "input_scale")?,
            output_shift: get("output_shift")?
                .parse()
                .map_err(|_| CliError::Usage("model file: bad output_shift".into()))?,
            output_scale: get("output_scale")?
                .parse()
                .map_err(|_| CliError::Usage("model file: bad output_scale".into()))?,
            constant_inputs: Vec::new(),
            constant_output: false,
        })
    } else {
        None
    };

    let mut fit_report = SolveReport::new(&solver_tag, sigma_sq);
    fit_report.converged = get("converged")?.as_str() == "true";

    Ok(StoredModel {
        model: GPModel {
            problem,
            alpha,
            solver_tag,
            fit_tol,
            fit_report,
        },
        standardization,
    })
}

/// Standardize test inputs with the model's training-time parameters.
pub fn transform_test_inputs(
    stored: &StoredModel,
    ds: &Dataset,
) -> CliResult<InputMatrix> {
    match &stored.standardization {
        Some(params) => {
            let transformed = gbcd::apply_standardization(ds, params)?;
            Ok(transformed.x)
        }
        None => Ok(ds.x.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gbcd::{fit, BaselineConfig, BaselineMethod, SolverChoice};

    #[test]
    fn model_round_trips_bitwise() {
        let ds = gbcd::friedman1_generate(20, 3);
        let params = gbcd::fit_standardization(&ds);
        let std_ds = gbcd::apply_standardization(&ds, &params).unwrap();
        let spec = KernelSpec::isotropic(0.4, 10, 0.1).unwrap();
        let problem = Problem::new(std_ds.x.clone(), std_ds.y.clone(), spec).unwrap();
        let choice = SolverChoice::Baseline(BaselineConfig::new(BaselineMethod::Direct, 1e-8, 1, 0));
        let model = fit(problem, &choice).unwrap();

        let dir = std::env::temp_dir().join(format!("gbcd-model-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.txt");
        let manifest = Manifest::new("train", 3, "direct");
        write_model(&path, &manifest, &model, Some(&params)).unwrap();
        let stored = read_model(&path).unwrap();
        std::fs::remove_dir_all(&dir).ok();

        assert_eq!(stored.model.alpha, model.alpha);
        assert_eq!(stored.model.problem.rhs, model.problem.rhs);
        assert_eq!(stored.model.problem.x.values(), model.problem.x.values());
        assert_eq!(stored.model.solver_tag, "direct");
        let s = stored.standardization.unwrap();
        assert_eq!(s.input_shift, params.input_shift);
        assert_eq!(s.output_scale, params.output_scale);
    }
}
