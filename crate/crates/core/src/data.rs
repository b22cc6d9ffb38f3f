//! Dataset ingestion, standardization, synthetic generation and splitting.
//!
//! Standardization follows the training-split-only protocol: parameters are
//! fitted on the training data and the same affine transform is applied to
//! the test split.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernel::InputMatrix;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: InputMatrix,
    pub y: Vec<f64>,
    pub name: String,
    pub standardization: Option<StandardizationParams>,
}

impl Dataset {
    pub fn new(x: InputMatrix, y: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if y.len() != x.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: x.n_rows(),
                actual: y.len(),
                context: "target length vs input rows",
            });
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos, col: 0 });
        }
        Ok(Self {
            x,
            y,
            name: name.into(),
            standardization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.n_rows()
    }

    pub fn d(&self) -> usize {
        self.x.n_cols()
    }

    /// Population (1/n) variance of the targets.
    pub fn target_variance(&self) -> f64 {
        let n = self.y.len() as f64;
        let mean: f64 = self.y.iter().sum::<f64>() / n;
        self.y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }
}

/// Per-attribute affine transform fitted on a training split. Scales are
/// population standard deviations; attributes with (numerically) zero
/// variance keep scale 1 and are listed in `constant_inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_shift: f64,
    pub output_scale: f64,
    pub constant_inputs: Vec<usize>,
    pub constant_output: bool,
}

impl StandardizationParams {
    pub fn destandardize_mean(&self, v: f64) -> f64 {
        v * self.output_scale + self.output_shift
    }

    pub fn destandardize_variance(&self, v: f64) -> f64 {
        v * self.output_scale * self.output_scale
    }
}

#[derive(Debug, Clone, Default)]
pub struct TableSchema {
    pub has_header: bool,
    /// `None` means the last column.
    pub target_col: Option<usize>,
}

/// Reads a delimited numeric table: comma-separated when a line contains a
/// comma, whitespace-separated otherwise. Blank lines and `#` comment lines
/// are skipped.
pub fn load_table(path: &Path, schema: &TableSchema) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut header_pending = schema.has_header;

    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let cells: Vec<&str> = if trimmed.contains(',') {
            trimmed.split(',').map(str::trim).collect()
        } else {
            trimmed.split_whitespace().collect()
        };
        let mut row = Vec::with_capacity(cells.len());
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                row: line_no + 1,
                col: col + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    row: line_no + 1,
                    col: col + 1,
                    message: "non-finite value".into(),
                });
            }
            row.push(value);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    row: line_no + 1,
                    col: row.len(),
                    message: format!("expected {w} columns, found {}", row.len()),
                });
            }
            _ => {}
        }
        rows.push(row);
    }

    let width = width.ok_or_else(|| Error::Parse {
        path: path_str.clone(),
        row: 0,
        col: 0,
        message: "no data rows".into(),
    })?;
    if width < 2 {
        return Err(Error::Parse {
            path: path_str.clone(),
            row: 1,
            col: 1,
            message: "need at least one attribute column and one target column".into(),
        });
    }
    let target = schema.target_col.unwrap_or(width - 1);
    if target >= width {
        return Err(Error::InvalidConfig(format!(
            "target column {target} out of range for {width} columns"
        )));
    }

    let n = rows.len();
    let d = width - 1;
    let mut values = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for row in rows {
        for (col, v) in row.iter().enumerate() {
            if col == target {
                y.push(*v);
            } else {
                values.push(*v);
            }
        }
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Dataset::new(InputMatrix::new(n, d, values)?, y, name)
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64, bool) {
    let mean: f64 = values.clone().sum::<f64>() / n;
    let var: f64 = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-10 * (1.0 + mean.abs()) {
        (mean, 1.0, true)
    } else {
        (mean, std, false)
    }
}

/// Fits per-attribute shift/scale on the given (training) split only.
pub fn fit_standardization(train: &Dataset) -> StandardizationParams {
    let n = train.n() as f64;
    let d = train.d();
    let mut input_shift = Vec::with_capacity(d);
    let mut input_scale = Vec::with_capacity(d);
    let mut constant_inputs = Vec::new();
    for l in 0..d {
        let column = (0..train.n()).map(|i| train.x.row(i)[l]);
        let (mean, scale, constant) = mean_and_scale(column, n);
        input_shift.push(mean);
        input_scale.push(scale);
        if constant {
            constant_inputs.push(l);
        }
    }
    let (output_shift, output_scale, constant_output) = mean_and_scale(train.y.iter().copied(), n);
    StandardizationParams {
        input_shift,
        input_scale,
        output_shift,
        output_scale,
        constant_inputs,
        constant_output,
    }
}

pub fn apply_standardization(ds: &Dataset, params: &StandardizationParams) -> Result<Dataset> {
    if params.input_shift.len() != ds.d() {
        return Err(Error::DimensionMismatch {
            expected: ds.d(),
            actual: params.input_shift.len(),
            context: "standardization parameters vs attributes",
        });
    }
    let n = ds.n();
    let d = ds.d();
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = ds.x.row(i);
        for l in 0..d {
            values.push((row[l] - params.input_shift[l]) / params.input_scale[l]);
        }
    }
    let y: Vec<f64> = ds
        .y
        .iter()
        .map(|v| (v - params.output_shift) / params.output_scale)
        .collect();
    let mut out = Dataset::new(InputMatrix::new(n, d, values)?, y, ds.name.clone())?;
    out.standardization = Some(params.clone());
    Ok(out)
}

/// Undoes [`apply_standardization`].
pub fn invert_standardization(ds: &Dataset, params: &StandardizationParams) -> Result<Dataset> {
    let n = ds.n();
    let d = ds.d();
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = ds.x.row(i);
        for l in 0..d {
            values.push(row[l] * params.input_scale[l] + params.input_shift[l]);
        }
    }
    let y: Vec<f64> = ds
        .y
        .iter()
        .map(|v| v * params.output_scale + params.output_shift)
        .collect();
    Dataset::new(InputMatrix::new(n, d, values)?, y, ds.name.clone())
}

/// Noiseless synthetic regression target: ten uniform inputs on [0, 1], of
/// which the first five matter.
pub fn friedman1_target(x: &[f64]) -> f64 {
    10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
        + 20.0 * (x[2] - 0.5) * (x[2] - 0.5)
        + 10.0 * x[3]
        + 5.0 * x[4]
}

pub const FRIEDMAN1_DIM: usize = 10;

pub fn friedman1_generate(n: usize, rng_seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut values = Vec::with_capacity(n * FRIEDMAN1_DIM);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = values.len();
        for _ in 0..FRIEDMAN1_DIM {
            values.push(rng.random::<f64>());
        }
        y.push(friedman1_target(&values[start..]));
    }
    Dataset::new(
        InputMatrix::new(n, FRIEDMAN1_DIM, values).expect("generated values are finite"),
        y,
        "friedman1",
    )
    .expect("generated dataset is consistent")
}

/// Adds seeded Gaussian noise to the targets.
pub fn add_target_noise(ds: &Dataset, std: f64, rng_seed: u64) -> Result<Dataset> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::InvalidConfig("noise std must be finite and >= 0".into()));
    }
    if std == 0.0 {
        return Ok(ds.clone());
    }
    let normal = Normal::new(0.0, std).expect("std validated");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let y: Vec<f64> = ds.y.iter().map(|v| v + normal.sample(&mut rng)).collect();
    let mut out = Dataset::new(ds.x.clone(), y, ds.name.clone())?;
    out.standardization = ds.standardization.clone();
    Ok(out)
}

/// Disjoint uniformly random subsets drawn by a seeded shuffle. The test
/// split is `None` when `test_count` is zero.
pub fn split(
    ds: &Dataset,
    train_count: usize,
    test_count: usize,
    rng_seed: u64,
) -> Result<(Dataset, Option<Dataset>)> {
    let n = ds.n();
    if train_count + test_count > n {
        return Err(Error::NotEnoughRows {
            requested: train_count + test_count,
            available: n,
        });
    }
    if train_count == 0 {
        return Err(Error::InvalidConfig("train split must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..n.saturating_sub(1) {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let take = |ids: &[usize], name: &str| -> Result<Dataset> {
        let mut values = Vec::with_capacity(ids.len() * ds.d());
        let mut y = Vec::with_capacity(ids.len());
        for &i in ids {
            values.extend_from_slice(ds.x.row(i));
            y.push(ds.y[i]);
        }
        Dataset::new(
            InputMatrix::new(ids.len(), ds.d(), values)?,
            y,
            format!("{}-{name}", ds.name),
        )
    };
    let train = take(&idx[..train_count], "train")?;
    let test = if test_count > 0 {
        Some(take(&idx[train_count..train_count + test_count], "test")?)
    } else {
        None
    };
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!("gbcd-data-test-{name}-{}", std::process::id()));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn load_table_round_trips_known_contents() {
        let path = write_temp("roundtrip", "1.0,2.0,10.0\n3.0,4.0,20.0\n5.0,6.0,30.0\n");
        let ds = load_table(&path, &TableSchema::default()).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.x.row(1), &[3.0, 4.0]);
        assert_eq!(ds.y, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn load_table_whitespace_delimited() {
        let path = write_temp("ws", "1.0 2.0 10.0\n3.0 4.0 20.0\n");
        let ds = load_table(&path, &TableSchema::default()).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.y, vec![10.0, 20.0]);
    }

    #[test]
    fn load_table_reports_bad_cell_location() {
        let path = write_temp("badcell", "1.0,2.0,3.0\n1.0,oops,3.0\n");
        let err = load_table(&path, &TableSchema::default()).unwrap_err();
        std::fs::remove_file(&path).ok();
        match err {
            Error::Parse { row, col, .. } => {
                assert_eq!(row, 2);
                assert_eq!(col, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_table_header_flag_drops_one_row() {
        let contents = "a,b,target\n1.0,2.0,3.0\n4.0,5.0,6.0\n";
        let path = write_temp("header", contents);
        let with_header = load_table(
            &path,
            &TableSchema { has_header: true, target_col: None },
        )
        .unwrap();
        let err_without = load_table(&path, &TableSchema::default());
        std::fs::remove_file(&path).ok();
        assert_eq!(with_header.n(), 2);
        // Without the flag the header row fails to parse.
        assert!(err_without.is_err());
    }

    #[test]
    fn load_table_custom_target_column() {
        let path = write_temp("target", "10.0,1.0,2.0\n20.0,3.0,4.0\n");
        let ds = load_table(
            &path,
            &TableSchema { has_header: false, target_col: Some(0) },
        )
        .unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(ds.y, vec![10.0, 20.0]);
        assert_eq!(ds.x.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn standardization_of_standardized_data_is_identity() {
        let ds = friedman1_generate(500, 3);
        let params = fit_standardization(&ds);
        let std_ds = apply_standardization(&ds, &params).unwrap();
        let again = fit_standardization(&std_ds);
        for l in 0..ds.d() {
            assert!(again.input_shift[l].abs() <= 1e-8);
            assert!((again.input_scale[l] - 1.0).abs() <= 1e-6);
        }
        assert!(again.output_shift.abs() <= 1e-8);
        assert!((again.output_scale - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn standardization_two_point_attribute() {
        let x = InputMatrix::new(2, 1, vec![0.0, 2.0]).unwrap();
        let ds = Dataset::new(x, vec![1.0, 2.0], "toy").unwrap();
        let params = fit_standardization(&ds);
        assert_abs_diff_eq!(params.input_shift[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(params.input_scale[0], 1.0, epsilon = 1e-15);
        let out = apply_standardization(&ds, &params).unwrap();
        assert_eq!(out.x.row(0), &[-1.0]);
        assert_eq!(out.x.row(1), &[1.0]);
    }

    #[test]
    fn standardization_round_trip() {
        let ds = friedman1_generate(100, 11);
        let params = fit_standardization(&ds);
        let transformed = apply_standardization(&ds, &params).unwrap();
        let back = invert_standardization(&transformed, &params).unwrap();
        for i in 0..ds.n() {
            for l in 0..ds.d() {
                assert!((back.x.row(i)[l] - ds.x.row(i)[l]).abs() <= 1e-10);
            }
            assert!((back.y[i] - ds.y[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn constant_attribute_gets_unit_scale() {
        let x = InputMatrix::new(3, 2, vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0]).unwrap();
        let ds = Dataset::new(x, vec![1.0, 2.0, 3.0], "toy").unwrap();
        let params = fit_standardization(&ds);
        assert_eq!(params.constant_inputs, vec![0]);
        assert_eq!(params.input_scale[0], 1.0);
    }

    #[test]
    fn friedman_hand_evaluated_point() {
        let x = [0.5, 1.0, 0.5, 0.0, 0.0, 0.9, 0.9, 0.9, 0.9, 0.9];
        assert_abs_diff_eq!(friedman1_target(&x), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn friedman_quadratic_term_vanishes_at_half() {
        let a = [0.3, 0.7, 0.5, 0.2, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b = [0.3, 0.7, 0.5, 0.2, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0];
        // Attributes 6..10 are irrelevant and x3 = 0.5 kills the quadratic.
        assert_eq!(friedman1_target(&a), friedman1_target(&b));
        let expected = 10.0 * (std::f64::consts::PI * 0.21).sin() + 2.0 + 4.5;
        assert_abs_diff_eq!(friedman1_target(&a), expected, epsilon = 1e-12);
    }

    #[test]
    fn friedman_generation_is_deterministic() {
        let a = friedman1_generate(50, 123);
        let b = friedman1_generate(50, 123);
        assert_eq!(a.x.values(), b.x.values());
        assert_eq!(a.y, b.y);
        let c = friedman1_generate(50, 124);
        assert_ne!(a.x.values(), c.x.values());
    }

    #[test]
    fn friedman_noiseless_targets_lie_in_analytic_range() {
        let ds = friedman1_generate(2000, 7);
        assert!(ds.y.iter().all(|&y| (-10.0..=30.0).contains(&y)));
    }

    #[test]
    fn noise_zero_std_is_identity() {
        let ds = friedman1_generate(20, 5);
        let noisy = add_target_noise(&ds, 0.0, 9).unwrap();
        assert_eq!(ds.y, noisy.y);
    }

    #[test]
    fn noise_matches_requested_scale() {
        let ds = friedman1_generate(100_000, 1);
        let noisy = add_target_noise(&ds, 1.0, 2).unwrap();
        let diffs: Vec<f64> = noisy.y.iter().zip(ds.y.iter()).map(|(a, b)| a - b).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((0.98..=1.02).contains(&std), "sample std {std}");
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let ds = friedman1_generate(50, 5);
        let a = add_target_noise(&ds, 1.0, 77).unwrap();
        let b = add_target_noise(&ds, 1.0, 77).unwrap();
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let ds = friedman1_generate(100, 13);
        let (train_a, test_a) = split(&ds, 60, 30, 5).unwrap();
        let (train_b, test_b) = split(&ds, 60, 30, 5).unwrap();
        let (test_a, test_b) = (test_a.unwrap(), test_b.unwrap());
        assert_eq!(train_a.x.values(), train_b.x.values());
        assert_eq!(test_a.y, test_b.y);

        // Disjointness via exact row matching: every test row must be
        // absent from the train rows.
        let train_rows: std::collections::HashSet<Vec<u64>> = (0..train_a.n())
            .map(|i| train_a.x.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        for i in 0..test_a.n() {
            let row: Vec<u64> = test_a.x.row(i).iter().map(|v| v.to_bits()).collect();
            assert!(!train_rows.contains(&row));
        }
    }

    #[test]
    fn split_full_train_is_a_permutation() {
        let ds = friedman1_generate(40, 21);
        let (train, test) = split(&ds, 40, 0, 3).unwrap();
        assert!(test.is_none());
        let mut orig: Vec<u64> = ds.y.iter().map(|v| v.to_bits()).collect();
        let mut got: Vec<u64> = train.y.iter().map(|v| v.to_bits()).collect();
        orig.sort_unstable();
        got.sort_unstable();
        assert_eq!(orig, got);
    }

    #[test]
    fn split_rejects_oversized_requests() {
        let ds = friedman1_generate(10, 1);
        assert!(matches!(
            split(&ds, 8, 8, 0),
            Err(Error::NotEnoughRows { requested: 16, available: 10 })
        ));
    }

    #[test]
    fn standardization_is_pure_function_of_training_split() {
        let ds = friedman1_generate(200, 31);
        let (train, _) = split(&ds, 150, 50, 7).unwrap();
        let a = fit_standardization(&train);
        let b = fit_standardization(&train);
        assert_eq!(a, b);
    }
}
