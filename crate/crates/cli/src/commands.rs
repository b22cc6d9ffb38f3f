//! Command implementations. Every command writes its artifacts plus a
//! `manifest.txt` into `--out-dir`; wall-clock numbers go to stderr and only
//! enter the files under `--timing`.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gbcd::{
    add_target_noise, apply_standardization, fit, fit_standardization, friedman1_generate,
    load_table, split, BaselineConfig, BaselineMethod, Dataset, InputMatrix, KernelSpec, Problem,
    SolveConfig, SolverChoice, StandardizationParams, SubproblemFactorization, TableSchema,
};

use crate::args::{
    BenchArgs, CorrelateArgs, DataArgs, FactorizationKind, GenDataArgs, KernelArgs, PredictArgs,
    SolverKind, SolverTuning, SystemArg, TrainArgs,
};
use crate::bench::run_solver;
use crate::correlate::{run_diagnostic, CorrelationSpec, SystemKind};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use crate::model_io::{read_model, transform_test_inputs, write_model};
use crate::tables::{
    write_bench_table, write_dataset, write_histogram, write_predictions, write_trace,
    PredictionRows, WriteOptions,
};

// Derived seed streams; see the module docs in `args`.
const NOISE_SEED_OFFSET: u64 = 1;
const SPLIT_SEED_OFFSET: u64 = 2;
const PROBE_SEED_OFFSET: u64 = 3;
const HOLD_OUT_SEED_OFFSET: u64 = 4;

fn resolve_dataset(data: &DataArgs, seed: u64) -> CliResult<Dataset> {
    match (&data.dataset, data.friedman1) {
        (Some(path), None) => {
            let schema = TableSchema {
                has_header: data.header,
                target_col: data.target_col,
            };
            Ok(load_table(path, &schema)?)
        }
        (None, Some(n)) => {
            if n == 0 {
                return Err(CliError::Usage("--friedman1 needs at least one row".into()));
            }
            Ok(friedman1_generate(n, seed))
        }
        (Some(_), Some(_)) => Err(CliError::Usage(
            "--dataset and --friedman1 are mutually exclusive".into(),
        )),
        (None, None) => Err(CliError::Usage(
            "either --dataset or --friedman1 is required".into(),
        )),
    }
}

fn kernel_spec(kernel: &KernelArgs, d: usize) -> CliResult<KernelSpec> {
    let gamma = if kernel.gamma.len() == 1 && d > 1 {
        vec![kernel.gamma[0]; d]
    } else if kernel.gamma.len() == d {
        kernel.gamma.clone()
    } else {
        return Err(CliError::Usage(format!(
            "--gamma needs 1 or {d} values, got {}",
            kernel.gamma.len()
        )));
    };
    Ok(KernelSpec::new(gamma, kernel.sigma_sq)?)
}

fn solver_choice(kind: SolverKind, tuning: &SolverTuning) -> SolverChoice {
    match kind {
        SolverKind::Gbcd => {
            let mut cfg = SolveConfig::new(tuning.m, tuning.kappa, tuning.tol, tuning.seed);
            cfg.max_outer_iters = tuning.max_iters;
            cfg.cache_columns = tuning.cache_columns;
            cfg.factorization = match tuning.factorization {
                FactorizationKind::RankOne => SubproblemFactorization::RankOneInverse,
                FactorizationKind::Cholesky => SubproblemFactorization::CholeskyUpdate,
            };
            SolverChoice::Gbcd(cfg)
        }
        kind => {
            let method = match kind {
                SolverKind::Cg => BaselineMethod::Cg,
                SolverKind::Bcdc => BaselineMethod::Bcdc,
                SolverKind::Bcdg => BaselineMethod::Bcdg,
                SolverKind::Smo => BaselineMethod::Smo,
                SolverKind::Direct => BaselineMethod::Direct,
                SolverKind::Gbcd => unreachable!(),
            };
            let mut cfg = BaselineConfig::new(method, tuning.tol, tuning.m, tuning.seed);
            cfg.max_iters = tuning.max_iters;
            cfg.cache_columns = tuning.cache_columns;
            cfg.direct_cap = tuning.direct_cap;
            SolverChoice::Baseline(cfg)
        }
    }
}

fn push_data_args(m: &mut Manifest, data: &DataArgs) {
    m.push(
        "dataset",
        data.dataset
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "-".into()),
    );
    m.push(
        "friedman1",
        data.friedman1.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
    );
    m.push(
        "target_col",
        data.target_col.map(|c| c.to_string()).unwrap_or_else(|| "last".into()),
    );
    m.push("header", data.header);
    m.push("noise_std", data.noise_std);
}

fn push_kernel_args(m: &mut Manifest, kernel: &KernelArgs) {
    let gamma = kernel
        .gamma
        .iter()
        .map(|g| g.to_string())
        .collect::<Vec<_>>()
        .join(",");
    m.push("gamma", gamma);
    m.push("sigma_sq", kernel.sigma_sq);
}

fn push_tuning_args(m: &mut Manifest, tuning: &SolverTuning) {
    m.push("m", tuning.m);
    m.push("kappa", tuning.kappa);
    m.push("tol", tuning.tol);
    m.push(
        "max_iters",
        tuning.max_iters.map(|v| v.to_string()).unwrap_or_else(|| "auto".into()),
    );
    m.push("cache_columns", tuning.cache_columns);
    m.push(
        "factorization",
        match tuning.factorization {
            FactorizationKind::RankOne => "rank-one",
            FactorizationKind::Cholesky => "cholesky",
        },
    );
    m.push("direct_cap", tuning.direct_cap);
}

fn prepare_out_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn maybe_noise(ds: Dataset, noise_std: f64, seed: u64) -> CliResult<Dataset> {
    if noise_std != 0.0 {
        Ok(add_target_noise(&ds, noise_std, seed)?)
    } else {
        Ok(ds)
    }
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let seed = args.tuning.seed;
    let raw = resolve_dataset(&args.data, seed)?;
    let noisy = maybe_noise(raw, args.data.noise_std, seed.wrapping_add(NOISE_SEED_OFFSET))?;
    let (ds, params): (Dataset, Option<StandardizationParams>) = if args.standardize {
        let p = fit_standardization(&noisy);
        if !p.constant_inputs.is_empty() {
            eprintln!(
                "warning: attributes {:?} are constant on the training data; their scale stays 1",
                p.constant_inputs
            );
        }
        (apply_standardization(&noisy, &p)?, Some(p))
    } else {
        (noisy, None)
    };

    let spec = kernel_spec(&args.kernel, ds.d())?;
    let choice = solver_choice(args.solver, &args.tuning);

    let mut manifest = Manifest::new("train", seed, choice.tag());
    push_data_args(&mut manifest, &args.data);
    manifest.push("standardize", args.standardize);
    push_kernel_args(&mut manifest, &args.kernel);
    push_tuning_args(&mut manifest, &args.tuning);
    manifest.push("timing", args.out.timing);
    manifest.push("n", ds.n());
    manifest.push("d", ds.d());

    prepare_out_dir(&args.out.out_dir)?;
    let opts = WriteOptions { timing: args.out.timing };
    let problem = Problem::new(ds.x.clone(), ds.y.clone(), spec)?;

    match fit(problem, &choice) {
        Ok(model) => {
            write_trace(&args.out.out_dir.join("trace.csv"), &manifest, &model.fit_report, opts)?;
            write_model(
                &args.out.out_dir.join("model.txt"),
                &manifest,
                &model,
                params.as_ref(),
            )?;
            manifest.write(&args.out.out_dir.join("manifest.txt"))?;
            eprintln!(
                "train: solver={} converged in {} iterations, grad_inf_norm={:.3e}, \
                 kernel_evals={}, wall_time={:.3}s",
                model.solver_tag,
                model.fit_report.outer_iters,
                model.fit_report.final_grad_inf_norm,
                model.fit_report.kernel_evals,
                model.fit_report.wall_time
            );
            Ok(())
        }
        Err(gbcd::Error::NotConverged {
            grad_inf_norm,
            iters,
            report,
        }) => {
            write_trace(&args.out.out_dir.join("trace.csv"), &manifest, &report, opts)?;
            manifest.write(&args.out.out_dir.join("manifest.txt"))?;
            Err(CliError::NonConvergence(format!(
                "gradient inf-norm {grad_inf_norm:.3e} after {iters} iterations"
            )))
        }
        Err(gbcd::Error::NumericalBreakdown { schur, partial }) => {
            if let Some(report) = partial {
                write_trace(&args.out.out_dir.join("trace.csv"), &manifest, &report, opts)?;
            }
            manifest.write(&args.out.out_dir.join("manifest.txt"))?;
            Err(CliError::Numerical(format!(
                "subproblem factorization broke down (schur complement {schur:e})"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    if args.data.noise_std != 0.0 {
        return Err(CliError::Usage(
            "--noise-std does not apply to predict; noise the training data instead".into(),
        ));
    }
    let stored = read_model(&args.model)?;
    let test = resolve_dataset(&args.data, args.tuning.seed)?;
    let xstar = transform_test_inputs(&stored, &test)?;

    let mut manifest = Manifest::new("predict", args.tuning.seed, &stored.model.solver_tag);
    manifest.push("model", args.model.display());
    push_data_args(&mut manifest, &args.data);
    manifest.push("variance", args.variance);
    manifest.push("variance_solver", solver_choice(args.solver, &args.tuning).tag());
    push_tuning_args(&mut manifest, &args.tuning);
    manifest.push("timing", args.out.timing);

    let mean_start = Instant::now();
    let mean_model_space = stored.model.predict_mean(&xstar)?;
    let mean_seconds = mean_start.elapsed().as_secs_f64();

    let mut variance_seconds = 0.0;
    let mut variance_model_space: Option<Vec<f64>> = None;
    let mut inner_iters: Option<Vec<u64>> = None;
    let mut clamped = 0usize;
    let mut failed = 0usize;
    if args.variance {
        let choice = solver_choice(args.solver, &args.tuning);
        let variance_start = Instant::now();
        let result = stored.model.predict(&xstar, Some(&choice))?;
        variance_seconds = variance_start.elapsed().as_secs_f64();
        clamped = result.clamped;
        failed = result.failed;
        inner_iters = result
            .per_point_reports
            .as_ref()
            .map(|reps| reps.iter().map(|r| r.outer_iters).collect());
        variance_model_space = result.variance;
    }

    // Report in the original units of the training data.
    let (mean, variance, train_var) = match &stored.standardization {
        Some(p) => (
            mean_model_space.iter().map(|&v| p.destandardize_mean(v)).collect::<Vec<_>>(),
            variance_model_space
                .map(|vs| vs.iter().map(|&v| p.destandardize_variance(v)).collect::<Vec<_>>()),
            stored.train_target_variance() * p.output_scale * p.output_scale,
        ),
        None => (
            mean_model_space,
            variance_model_space,
            stored.train_target_variance(),
        ),
    };
    let rmse = gbcd::normalized_rmse(&mean, &test.y, train_var)?;

    prepare_out_dir(&args.out.out_dir)?;
    let opts = WriteOptions { timing: args.out.timing };
    manifest.push("rmse", rmse);
    manifest.push("mean_seconds", opts.seconds(mean_seconds));
    manifest.push("variance_seconds", opts.seconds(variance_seconds));
    manifest.push("variance_clamped", clamped);
    manifest.push("variance_failed", failed);

    write_predictions(
        &args.out.out_dir.join("predictions.csv"),
        &manifest,
        &PredictionRows {
            mean: &mean,
            variance: variance.as_deref(),
            inner_iters,
        },
    )?;
    manifest.write(&args.out.out_dir.join("manifest.txt"))?;

    eprintln!(
        "predict: {} points, rmse={rmse:.6}, mean_time={mean_seconds:.3}s, \
         variance_time={variance_seconds:.3}s, clamped={clamped}, failed={failed}",
        mean.len()
    );
    Ok(())
}

pub fn cmd_gen_data(args: &GenDataArgs) -> CliResult<()> {
    if args.friedman1 == 0 {
        return Err(CliError::Usage("--friedman1 needs at least one row".into()));
    }
    let ds = friedman1_generate(args.friedman1, args.seed);
    let ds = maybe_noise(ds, args.noise_std, args.seed.wrapping_add(NOISE_SEED_OFFSET))?;

    let mut manifest = Manifest::new("gen-data", args.seed, "none");
    manifest.push("friedman1", args.friedman1);
    manifest.push("noise_std", args.noise_std);
    manifest.push("timing", args.out.timing);

    prepare_out_dir(&args.out.out_dir)?;
    write_dataset(&args.out.out_dir.join("dataset.csv"), &manifest, &ds)?;
    manifest.write(&args.out.out_dir.join("manifest.txt"))?;
    eprintln!("gen-data: wrote {} rows to dataset.csv", ds.n());
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    if args.test_count == 0 {
        return Err(CliError::Usage("--test-count must be >= 1".into()));
    }
    let seed = args.tuning.seed;
    let raw = resolve_dataset(&args.data, seed)?;
    let (train_raw, test_raw) = split(
        &raw,
        args.train_count,
        args.test_count,
        seed.wrapping_add(SPLIT_SEED_OFFSET),
    )?;
    let test_raw = test_raw.expect("test_count >= 1");
    let train_noisy = maybe_noise(
        train_raw,
        args.data.noise_std,
        seed.wrapping_add(NOISE_SEED_OFFSET),
    )?;
    let (train, test) = if args.no_standardize {
        (train_noisy, test_raw)
    } else {
        let params = fit_standardization(&train_noisy);
        (
            apply_standardization(&train_noisy, &params)?,
            apply_standardization(&test_raw, &params)?,
        )
    };
    let spec = kernel_spec(&args.kernel, train.d())?;

    let mut kinds = args.solvers.clone();
    kinds.dedup();
    let solver_list = kinds.iter().map(|k| k.tag()).collect::<Vec<_>>().join(",");

    let mut manifest = Manifest::new("bench", seed, &solver_list);
    push_data_args(&mut manifest, &args.data);
    manifest.push("train_count", args.train_count);
    manifest.push("test_count", args.test_count);
    manifest.push("standardize", !args.no_standardize);
    push_kernel_args(&mut manifest, &args.kernel);
    push_tuning_args(&mut manifest, &args.tuning);
    manifest.push("timing", args.out.timing);

    prepare_out_dir(&args.out.out_dir)?;
    let opts = WriteOptions { timing: args.out.timing };

    let mut rows = Vec::with_capacity(kinds.len());
    for kind in &kinds {
        let choice = solver_choice(*kind, &args.tuning);
        let result = run_solver(&train, &test, &spec, &choice)?;
        if let Some(report) = &result.report {
            let mut per_solver = manifest.clone();
            per_solver.set("solver", kind.tag());
            write_trace(
                &args.out.out_dir.join(format!("trace_{}.csv", kind.tag())),
                &per_solver,
                report,
                opts,
            )?;
        }
        eprintln!(
            "bench: {} status={} converged={} iters={} kernel_evals={} time={:.3}s rmse={:.6}",
            result.row.solver,
            result.row.status,
            result.row.converged,
            result.row.outer_iters,
            result.row.kernel_evals,
            result.row.train_seconds,
            result.row.rmse
        );
        rows.push(result.row);
    }

    write_bench_table(&args.out.out_dir.join("bench_results.csv"), &manifest, &rows, opts)?;
    manifest.write(&args.out.out_dir.join("manifest.txt"))?;
    Ok(())
}

pub fn cmd_correlate(args: &CorrelateArgs) -> CliResult<()> {
    let seed = args.tuning.seed;
    let raw = resolve_dataset(&args.data, seed)?;
    if raw.n() < 3 {
        return Err(CliError::Usage("correlate needs at least 3 rows".into()));
    }

    // Hold one seeded row out; it provides the cross-covariance right-hand
    // side and is excluded from training for both systems.
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(HOLD_OUT_SEED_OFFSET));
    let held_out_idx = rng.random_range(0..raw.n());
    let mut values = Vec::with_capacity((raw.n() - 1) * raw.d());
    let mut y = Vec::with_capacity(raw.n() - 1);
    for i in 0..raw.n() {
        if i == held_out_idx {
            continue;
        }
        values.extend_from_slice(raw.x.row(i));
        y.push(raw.y[i]);
    }
    let train_raw = Dataset::new(
        InputMatrix::new(raw.n() - 1, raw.d(), values)?,
        y,
        raw.name.clone(),
    )?;
    let held_out_raw: Vec<f64> = raw.x.row(held_out_idx).to_vec();

    let train_noisy = maybe_noise(
        train_raw,
        args.data.noise_std,
        seed.wrapping_add(NOISE_SEED_OFFSET),
    )?;
    let (train, held_out) = if args.standardize {
        let params = fit_standardization(&train_noisy);
        let transformed: Vec<f64> = held_out_raw
            .iter()
            .enumerate()
            .map(|(l, v)| (v - params.input_shift[l]) / params.input_scale[l])
            .collect();
        (apply_standardization(&train_noisy, &params)?, transformed)
    } else {
        (train_noisy, held_out_raw)
    };

    let spec = kernel_spec(&args.kernel, train.d())?;
    let mut solve_config = SolveConfig::new(args.tuning.m, args.tuning.kappa, args.tuning.tol, seed);
    solve_config.cache_columns = args.tuning.cache_columns;
    solve_config.factorization = match args.tuning.factorization {
        FactorizationKind::RankOne => SubproblemFactorization::RankOneInverse,
        FactorizationKind::Cholesky => SubproblemFactorization::CholeskyUpdate,
    };
    let corr = CorrelationSpec {
        probe_count: args.probes,
        neighbor_count: args.neighbors,
        window: args.window,
        bins: args.bins,
    };

    let systems: &[SystemKind] = match args.system {
        SystemArg::Y => &[SystemKind::Targets],
        SystemArg::Kstar => &[SystemKind::CrossCovariance],
        SystemArg::Both => &[SystemKind::Targets, SystemKind::CrossCovariance],
    };

    let mut manifest = Manifest::new("correlate", seed, "gbcd");
    push_data_args(&mut manifest, &args.data);
    push_kernel_args(&mut manifest, &args.kernel);
    push_tuning_args(&mut manifest, &args.tuning);
    manifest.push("probes", args.probes);
    manifest.push("neighbors", args.neighbors);
    manifest.push("window", args.window);
    manifest.push("bins", args.bins);
    manifest.push("standardize", args.standardize);
    manifest.push("held_out_row", held_out_idx);
    manifest.push("timing", args.out.timing);

    prepare_out_dir(&args.out.out_dir)?;
    let mut medians = Vec::new();
    for system in systems {
        let out = run_diagnostic(
            &train,
            &spec,
            &solve_config,
            &corr,
            *system,
            Some(&held_out),
            seed.wrapping_add(PROBE_SEED_OFFSET),
        )?;
        write_histogram(
            &args.out.out_dir.join(format!("correlation_{}.csv", out.system)),
            &manifest,
            &out.edges,
            &out.counts,
        )?;
        manifest.push(&format!("retained_pairs_{}", out.system), out.retained_pairs);
        manifest.push(&format!("skipped_pairs_{}", out.system), out.skipped_pairs);
        manifest.push(&format!("median_{}", out.system), out.median);
        eprintln!(
            "correlate: system={} retained={} skipped={} median={:.4}",
            out.system, out.retained_pairs, out.skipped_pairs, out.median
        );
        medians.push((out.system, out.median));
    }
    if medians.len() == 2 {
        eprintln!(
            "correlate: median comparison kstar={:.4} vs y={:.4}",
            medians[1].1, medians[0].1
        );
    }
    manifest.write(&args.out.out_dir.join("manifest.txt"))?;
    Ok(())
}
