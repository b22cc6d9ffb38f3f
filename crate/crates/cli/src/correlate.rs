//! Gradient-correlation diagnostic: track the gradient entries of randomly
//! chosen probe points and their nearest neighbors over a window of greedy
//! solver iterations, correlate each probe/neighbor pair, and histogram the
//! coefficients. Run against both the training system (rhs = targets) and a
//! cross-covariance system (rhs = k at a held-out input) the histograms
//! show how strongly neighboring gradients move together in each regime.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gbcd::{gbcd_solve_observed, kernel_eval, Dataset, KernelSpec, Problem, SolveConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct CorrelationSpec {
    pub probe_count: usize,
    pub neighbor_count: usize,
    pub window: usize,
    pub bins: usize,
}

impl Default for CorrelationSpec {
    fn default() -> Self {
        Self {
            probe_count: 100,
            neighbor_count: 50,
            window: 50,
            bins: 10,
        }
    }
}

impl CorrelationSpec {
    pub fn validate(&self, n_train: usize) -> CliResult<()> {
        if self.probe_count == 0 {
            return Err(CliError::Usage("probes must be >= 1".into()));
        }
        if self.neighbor_count == 0 || self.neighbor_count >= n_train {
            return Err(CliError::Usage(format!(
                "neighbors must be in 1..{n_train} for this training set"
            )));
        }
        if self.window < 2 {
            return Err(CliError::Usage("window must be >= 2".into()));
        }
        if self.bins == 0 {
            return Err(CliError::Usage("bins must be >= 1".into()));
        }
        Ok(())
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.bins)
            .map(|i| -1.0 + 2.0 * (i as f64) / (self.bins as f64))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Training system, rhs = targets.
    Targets,
    /// Variance-style system, rhs = cross-covariances of a held-out input.
    CrossCovariance,
}

impl SystemKind {
    pub fn tag(&self) -> &'static str {
        match self {
            SystemKind::Targets => "y",
            SystemKind::CrossCovariance => "kstar",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiagnosticResult {
    pub system: &'static str,
    pub counts: Vec<u64>,
    pub edges: Vec<f64>,
    pub retained_pairs: u64,
    pub skipped_pairs: u64,
    pub median: f64,
    pub observed_iters: u64,
}

/// Pearson coefficient computed as `S_xy / sqrt(S_xx * S_yy)`; `None` when
/// either trace has zero variance. Identical traces give exactly 1 and
/// mirrored traces exactly -1.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `neighbor_count` nearest rows to `probe` by Euclidean input distance,
/// self excluded, distance ties broken by index.
pub fn nearest_neighbors(ds: &Dataset, probe: usize, neighbor_count: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = (0..ds.n())
        .filter(|&i| i != probe)
        .map(|i| (squared_distance(ds.x.row(probe), ds.x.row(i)), i))
        .collect();
    dist.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
    dist.truncate(neighbor_count);
    dist.into_iter().map(|(_, i)| i).collect()
}

/// Distinct seeded probe indices.
pub fn draw_probes(n: usize, probe_count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    let k = probe_count.min(n);
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

pub fn bin_index(coefficient: f64, bins: usize) -> usize {
    let scaled = (coefficient + 1.0) / 2.0 * bins as f64;
    (scaled.floor() as usize).min(bins - 1)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Runs the greedy solver for exactly `window` outer iterations on the
/// requested system and correlates probe/neighbor gradient traces.
pub fn run_diagnostic(
    train: &Dataset,
    spec: &KernelSpec,
    solve_config: &SolveConfig,
    corr: &CorrelationSpec,
    system: SystemKind,
    held_out: Option<&[f64]>,
    probe_seed: u64,
) -> CliResult<DiagnosticResult> {
    corr.validate(train.n())?;

    let rhs = match system {
        SystemKind::Targets => train.y.clone(),
        SystemKind::CrossCovariance => {
            let xstar = held_out.ok_or_else(|| {
                CliError::Usage("cross-covariance system needs a held-out input".into())
            })?;
            (0..train.n())
                .map(|i| kernel_eval(train.x.row(i), xstar, spec))
                .collect()
        }
    };
    let problem = Problem::new(train.x.clone(), rhs, spec.clone())?;

    let probes = draw_probes(train.n(), corr.probe_count, probe_seed);
    let neighborhoods: Vec<Vec<usize>> = probes
        .iter()
        .map(|&p| nearest_neighbors(train, p, corr.neighbor_count))
        .collect();

    // Tracked index -> trace position.
    let mut tracked: Vec<usize> = probes.clone();
    for nb in &neighborhoods {
        tracked.extend_from_slice(nb);
    }
    tracked.sort_unstable();
    tracked.dedup();
    let pos: std::collections::HashMap<usize, usize> =
        tracked.iter().enumerate().map(|(p, &i)| (i, p)).collect();

    let mut config = solve_config.clone();
    config.max_outer_iters = Some(corr.window);

    let mut traces: Vec<Vec<f64>> = vec![Vec::with_capacity(corr.window); tracked.len()];
    let (_, report) = gbcd_solve_observed(&problem, &config, |state| {
        for (slot, &i) in tracked.iter().enumerate() {
            traces[slot].push(state.grad[i]);
        }
    })?;

    if (report.outer_iters as usize) < corr.window {
        return Err(CliError::Usage(format!(
            "solver finished after {} iterations but the window is {}; lower --window, \
             shrink --m or tighten --tol",
            report.outer_iters, corr.window
        )));
    }

    let mut counts = vec![0u64; corr.bins];
    let mut skipped = 0u64;
    let mut coefficients: Vec<f64> = Vec::new();
    for (probe_slot, nb) in neighborhoods.iter().enumerate() {
        let probe_trace = &traces[pos[&probes[probe_slot]]];
        for &q in nb {
            match pearson(probe_trace, &traces[pos[&q]]) {
                Some(c) => {
                    counts[bin_index(c, corr.bins)] += 1;
                    coefficients.push(c);
                }
                None => skipped += 1,
            }
        }
    }
    coefficients.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite coefficients"));

    Ok(DiagnosticResult {
        system: system.tag(),
        counts,
        edges: corr.bin_edges(),
        retained_pairs: coefficients.len() as u64,
        skipped_pairs: skipped,
        median: median(&coefficients),
        observed_iters: report.outer_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_self_correlation_is_exactly_one() {
        let xs = vec![0.3, -1.2, 4.5, 0.0, 2.25, -7.125];
        assert_eq!(pearson(&xs, &xs), Some(1.0));
    }

    #[test]
    fn pearson_mirror_correlation_is_exactly_minus_one() {
        let xs = vec![0.3, -1.2, 4.5, 0.1, 2.25, -7.125];
        let ys: Vec<f64> = xs.iter().map(|v| -v).collect();
        assert_eq!(pearson(&xs, &ys), Some(-1.0));
    }

    #[test]
    fn pearson_skips_constant_traces() {
        let xs = vec![1.0, 1.0, 1.0];
        let ys = vec![0.0, 1.0, 2.0];
        assert_eq!(pearson(&xs, &ys), None);
    }

    #[test]
    fn bin_index_covers_the_closed_interval() {
        assert_eq!(bin_index(-1.0, 10), 0);
        assert_eq!(bin_index(-0.999, 10), 0);
        assert_eq!(bin_index(0.0, 10), 5);
        assert_eq!(bin_index(0.999, 10), 9);
        assert_eq!(bin_index(1.0, 10), 9);
    }

    #[test]
    fn neighbors_are_sorted_by_distance() {
        let ds = gbcd::friedman1_generate(50, 9);
        let nb = nearest_neighbors(&ds, 7, 5);
        assert_eq!(nb.len(), 5);
        assert!(!nb.contains(&7));
        let d = |i: usize| squared_distance(ds.x.row(7), ds.x.row(i));
        for w in nb.windows(2) {
            assert!(d(w[0]) <= d(w[1]));
        }
    }

    #[test]
    fn probes_are_distinct_and_deterministic() {
        let a = draw_probes(100, 20, 5);
        let b = draw_probes(100, 20, 5);
        assert_eq!(a, b);
        let mut dedup = a.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 20);
    }

    #[test]
    fn diagnostic_histogram_mass_equals_pair_count() {
        let ds = gbcd::friedman1_generate(120, 3);
        let params = gbcd::fit_standardization(&ds);
        let std_ds = gbcd::apply_standardization(&ds, &params).unwrap();
        let spec = KernelSpec::isotropic(0.3, 10, 0.1).unwrap();
        let config = SolveConfig::new(10, 20, 1e-12, 7);
        let corr = CorrelationSpec {
            probe_count: 10,
            neighbor_count: 8,
            window: 12,
            bins: 10,
        };
        let out = run_diagnostic(
            &std_ds,
            &spec,
            &config,
            &corr,
            SystemKind::Targets,
            None,
            11,
        )
        .unwrap();
        let mass: u64 = out.counts.iter().sum();
        assert_eq!(mass, out.retained_pairs);
        assert_eq!(out.retained_pairs + out.skipped_pairs, 10 * 8);
        assert_eq!(out.observed_iters, 12);
    }

    #[test]
    fn diagnostic_rejects_window_longer_than_run() {
        let ds = gbcd::friedman1_generate(30, 3);
        let spec = KernelSpec::isotropic(0.3, 10, 0.5).unwrap();
        // Whole system in one block: converges immediately.
        let config = SolveConfig::new(30, 10, 1e-3, 7);
        let corr = CorrelationSpec {
            probe_count: 4,
            neighbor_count: 3,
            window: 25,
            bins: 10,
        };
        let err = run_diagnostic(&ds, &spec, &config, &corr, SystemKind::Targets, None, 1);
        assert!(matches!(err, Err(CliError::Usage(_))));
    }
}
