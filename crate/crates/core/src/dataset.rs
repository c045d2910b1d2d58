//! Observational data, CSV ingestion and the regressor basis `f(X)`.
//!
//! The basis always carries a leading constant column. Covariate columns can
//! be standardized to sample mean 0 and variance 1 (with the `1/n`
//! convention used for every sample average in this crate); the
//! [`StandardizationRecord`] maps fitted coefficients back to the raw scale.

use std::path::Path;

use ndarray::{Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment, (possibly missing) outcome and raw covariates for `n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    t: Vec<u8>,
    y: Vec<Option<f64>>,
    x: Array2<f64>,
    covariate_names: Vec<String>,
}

impl ObservedData {
    /// Validates and assembles a data set. Covariate names default to
    /// `x1..xd` when `names` is `None`.
    pub fn new(t: Vec<u8>, y: Vec<Option<f64>>, x: Array2<f64>, names: Option<Vec<String>>) -> Result<Self> {
        let n = t.len();
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if x.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.nrows() });
        }
        if x.ncols() == 0 {
            return Err(Error::NoCovariates);
        }
        for (row, &ti) in t.iter().enumerate() {
            if ti > 1 {
                return Err(Error::InvalidTreatment { row: row + 1, value: ti as f64 });
            }
        }
        if !t.contains(&1) {
            return Err(Error::NoTreated);
        }
        if !t.contains(&0) {
            return Err(Error::NoUntreated);
        }
        let covariate_names = match names {
            Some(names) => {
                if names.len() != x.ncols() {
                    return Err(Error::DimensionMismatch { expected: x.ncols(), got: names.len() });
                }
                names
            }
            None => (1..=x.ncols()).map(|j| format!("x{j}")).collect(),
        };
        Ok(Self { t, y, x, covariate_names })
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn treatment(&self) -> &[u8] {
        &self.t
    }

    pub fn outcome(&self) -> &[Option<f64>] {
        &self.y
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|&&t| t == 1).count()
    }

    /// Sample fraction of treated rows, `Ẽ(T)`.
    pub fn treated_fraction(&self) -> f64 {
        self.n_treated() as f64 / self.n() as f64
    }

    /// Outcome on `row`, erroring if it is missing.
    pub fn require_outcome(&self, row: usize) -> Result<f64> {
        self.y[row].ok_or(Error::MissingOutcome { row: row + 1 })
    }

    /// The same rows with `T` replaced by `1 - T`.
    pub fn flipped(&self) -> Self {
        Self {
            t: self.t.iter().map(|&t| 1 - t).collect(),
            y: self.y.clone(),
            x: self.x.clone(),
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Restriction to `rows` (in the given order). Fails if either arm
    /// becomes empty.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select(ndarray::Axis(0), rows);
        Self::new(
            rows.iter().map(|&i| self.t[i]).collect(),
            rows.iter().map(|&i| self.y[i]).collect(),
            x,
            Some(self.covariate_names.clone()),
        )
    }
}

/// Column names used to read an [`ObservedData`] from CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub y_col: String,
    pub t_col: String,
    /// Explicit names or `*`-wildcard patterns such as `x*`.
    pub x_cols: Vec<String>,
}

impl CsvSchema {
    /// Parses a `--x-cols` style value: a comma list whose entries may
    /// contain `*` wildcards.
    pub fn new(y_col: &str, t_col: &str, x_cols: &str) -> Self {
        Self {
            y_col: y_col.to_string(),
            t_col: t_col.to_string(),
            x_cols: x_cols.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
        }
    }

    fn resolve(&self, header: &[String]) -> Result<(usize, usize, Vec<usize>)> {
        let find =
            |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()));
        let y = find(&self.y_col)?;
        let t = find(&self.t_col)?;
        let mut xs = Vec::new();
        for pattern in &self.x_cols {
            if pattern.contains('*') {
                for (j, h) in header.iter().enumerate() {
                    if j != y && j != t && wildcard_match(pattern, h) && !xs.contains(&j) {
                        xs.push(j);
                    }
                }
            } else {
                let j = find(pattern)?;
                if !xs.contains(&j) {
                    xs.push(j);
                }
            }
        }
        if xs.is_empty() {
            return Err(Error::NoCovariates);
        }
        Ok((y, t, xs))
    }
}

fn wildcard_match(pattern: &str, text: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == text;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !text.starts_with(first) || text.len() < first.len() + last.len() {
        return false;
    }
    let mut rest = &text[first.len()..];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(pos) => rest = &rest[pos + mid.len()..],
            None => return false,
        }
    }
    rest.ends_with(last)
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::MalformedCell {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })
}

/// Reads a comma-separated file with one header row. Rows are numbered from
/// 1 (first data row) in error messages. Empty or `NA` outcome cells become
/// missing.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ObservedData> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let (yi, ti, xs) = schema.resolve(&header)?;

    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut values = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let t_cell = parse_number(&record[ti], row, &header[ti])?;
        if t_cell != 0.0 && t_cell != 1.0 {
            return Err(Error::InvalidTreatment { row, value: t_cell });
        }
        t.push(t_cell as u8);
        let y_cell = record[yi].trim();
        y.push(if y_cell.is_empty() || y_cell.eq_ignore_ascii_case("na") {
            None
        } else {
            Some(parse_number(y_cell, row, &header[yi])?)
        });
        for &j in &xs {
            values.push(parse_number(&record[j], row, &header[j])?);
        }
    }
    let n = t.len();
    let x = Array2::from_shape_vec((n, xs.len()), values).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let names = xs.iter().map(|&j| header[j].clone()).collect();
    ObservedData::new(t, y, x, Some(names))
}

/// How covariates are expanded into regressor columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BasisExpansion {
    /// Each covariate is one regressor.
    Raw,
    /// Main effects plus all pairwise products `x_j x_k` (`j < k`);
    /// products with fewer than `min_nonzero` nonzero entries are dropped.
    /// `None` uses `ceil(0.008 n)`.
    Pairwise { min_nonzero: Option<usize> },
}

/// Per-column `(mean, scale)` for the non-constant regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl StandardizationRecord {
    pub fn identity(p: usize) -> Self {
        Self { means: vec![0.0; p], scales: vec![1.0; p] }
    }

    pub fn p(&self) -> usize {
        self.means.len()
    }

    /// Maps coefficients on the standardized basis to the raw basis so the
    /// linear predictor is unchanged on every row.
    pub fn destandardize(&self, coef: &[f64]) -> Result<Vec<f64>> {
        if coef.len() != self.p() + 1 {
            return Err(Error::DimensionMismatch { expected: self.p() + 1, got: coef.len() });
        }
        let mut out = coef.to_vec();
        let mut shift = 0.0;
        for j in 0..self.p() {
            out[j + 1] = coef[j + 1] / self.scales[j];
            shift += out[j + 1] * self.means[j];
        }
        out[0] = coef[0] - shift;
        Ok(out)
    }

    /// Inverse of [`destandardize`](Self::destandardize).
    pub fn standardize(&self, coef: &[f64]) -> Result<Vec<f64>> {
        if coef.len() != self.p() + 1 {
            return Err(Error::DimensionMismatch { expected: self.p() + 1, got: coef.len() });
        }
        let mut out = coef.to_vec();
        let mut shift = 0.0;
        for j in 0..self.p() {
            out[j + 1] = coef[j + 1] * self.scales[j];
            shift += coef[j + 1] * self.means[j];
        }
        out[0] = coef[0] + shift;
        Ok(out)
    }
}

/// Free-function form of [`StandardizationRecord::destandardize`].
pub fn destandardize_coefficients(coef: &[f64], record: &StandardizationRecord) -> Result<Vec<f64>> {
    record.destandardize(coef)
}

/// The design matrix `f(X)` with a leading column of ones, stored
/// column-major so each regressor is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorBasis {
    matrix: Array2<f64>,
    names: Vec<String>,
    standardization: Option<StandardizationRecord>,
}

impl RegressorBasis {
    /// Builds a basis from an `n x p` matrix of regressors (without the
    /// intercept).
    pub fn from_columns(columns: &Array2<f64>, names: Vec<String>, standardize: bool) -> Result<Self> {
        let (n, p) = columns.dim();
        if names.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: names.len() });
        }
        let mut data = Vec::with_capacity(n * (p + 1));
        data.extend(std::iter::repeat_n(1.0, n));
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        for (j, col) in columns.columns().into_iter().enumerate() {
            if standardize {
                let (mean, scale) = mean_and_scale(col.iter().copied());
                if !is_nonconstant(mean, scale) {
                    return Err(Error::ConstantColumn(names[j].clone()));
                }
                data.extend(col.iter().map(|&v| (v - mean) / scale));
                means.push(mean);
                scales.push(scale);
            } else {
                data.extend(col.iter().copied());
            }
        }
        let matrix = Array2::from_shape_vec((n, p + 1).f(), data).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut all_names = Vec::with_capacity(p + 1);
        all_names.push("(intercept)".to_string());
        all_names.extend(names);
        Ok(Self {
            matrix,
            names: all_names,
            standardization: standardize.then_some(StandardizationRecord { means, scales }),
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of coefficients, `1 + p`.
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Number of non-constant regressors `p`.
    pub fn p(&self) -> usize {
        self.dim() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn standardization(&self) -> Option<&StandardizationRecord> {
        self.standardization.as_ref()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        let all = self.matrix.as_slice_memory_order().expect("column-major basis");
        &all[j * n..(j + 1) * n]
    }

    /// `f(X_i)ᵀ coef` for every row.
    pub fn linear_predictor(&self, coef: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.n()];
        self.add_linear_predictor(coef, &mut eta);
        eta
    }

    pub(crate) fn add_linear_predictor(&self, coef: &[f64], eta: &mut [f64]) {
        for (j, &c) in coef.iter().enumerate() {
            if c != 0.0 {
                for (e, &f) in eta.iter_mut().zip(self.column(j)) {
                    *e += c * f;
                }
            }
        }
    }

    /// `(1/n) Fᵀ r`.
    pub fn mean_transpose_product(&self, r: &[f64]) -> Vec<f64> {
        let inv_n = 1.0 / self.n() as f64;
        (0..self.dim()).map(|j| inv_n * self.column(j).iter().zip(r).map(|(f, r)| f * r).sum::<f64>()).collect()
    }

    /// Sample mean of every column.
    pub fn column_means(&self) -> Vec<f64> {
        self.mean_transpose_product(&vec![1.0; self.n()])
    }

    /// Restriction to the given rows; standardization constants are kept.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let m = rows.len();
        let mut data = Vec::with_capacity(m * self.dim());
        for j in 0..self.dim() {
            let col = self.column(j);
            data.extend(rows.iter().map(|&i| col[i]));
        }
        Self {
            matrix: Array2::from_shape_vec((m, self.dim()).f(), data).expect("shape"),
            names: self.names.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Coefficients on the raw covariate scale.
    pub fn raw_coefficients(&self, coef: &[f64]) -> Result<Vec<f64>> {
        match &self.standardization {
            Some(record) => record.destandardize(coef),
            None => Ok(coef.to_vec()),
        }
    }
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

fn is_nonconstant(mean: f64, scale: f64) -> bool {
    scale.is_finite() && scale > 1e-12 * (1.0 + mean.abs())
}

/// Builds `f(X)` from the data's covariates.
pub fn build_basis(data: &ObservedData, standardize: bool, expansion: BasisExpansion) -> Result<RegressorBasis> {
    let x = data.covariates();
    let names = data.covariate_names().to_vec();
    match expansion {
        BasisExpansion::Raw => RegressorBasis::from_columns(x, names, standardize),
        BasisExpansion::Pairwise { min_nonzero } => {
            let n = data.n();
            let threshold = min_nonzero.unwrap_or_else(|| (0.008 * n as f64).ceil() as usize);
            let d = x.ncols();
            let mut cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
            let mut all_names = names.clone();
            for j in 0..d {
                for k in (j + 1)..d {
                    let prod: Vec<f64> = (0..n).map(|i| x[[i, j]] * x[[i, k]]).collect();
                    let nonzero = prod.iter().filter(|&&v| v != 0.0).count();
                    if nonzero < threshold {
                        continue;
                    }
                    // Constant products (e.g. two indicators that are always
                    // both 1) carry no information beyond the intercept.
                    let (mean, scale) = mean_and_scale(prod.iter().copied());
                    if !is_nonconstant(mean, scale) {
                        continue;
                    }
                    cols.push(prod);
                    all_names.push(format!("{}:{}", names[j], names[k]));
                }
            }
            let p = cols.len();
            let flat: Vec<f64> = cols.into_iter().flatten().collect();
            let m = Array2::from_shape_vec((n, p).f(), flat).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            RegressorBasis::from_columns(&m, all_names, standardize)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn small() -> ObservedData {
        ObservedData::new(
            vec![1, 0, 1],
            vec![Some(1.0), None, Some(3.0)],
            array![[1.0, 0.5], [2.0, -1.0], [3.0, 2.0]],
            None,
        )
        .unwrap()
    }

    fn csv_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_csv_in_order() {
        let f = csv_file("y,t,x1,x2\n1.5,1,0.1,0.2\n,0,0.3,0.4\n2,1,0.5,NaN\n");
        let data = load_csv(f.path(), &CsvSchema::new("y", "t", "x1,x2")).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.n_covariates(), 2);
        assert_eq!(data.treatment(), &[1, 0, 1]);
        assert_eq!(data.outcome()[0], Some(1.5));
        assert_eq!(data.outcome()[1], None);
    }

    #[test]
    fn na_outcome_is_missing_and_glob_selects_columns() {
        let f = csv_file("t,y,x1,x2,z\n1,NA,1,2,3\n0,1,4,5,6\n");
        let data = load_csv(f.path(), &CsvSchema::new("y", "t", "x*")).unwrap();
        assert_eq!(data.covariate_names(), &["x1".to_string(), "x2".to_string()]);
        assert_eq!(data.outcome()[0], None);
    }

    #[test]
    fn bad_treatment_names_row() {
        let f = csv_file("y,t,x1\n1,1,0\n2,2,0\n3,0,1\n");
        let err = load_csv(f.path(), &CsvSchema::new("y", "t", "x1")).unwrap_err();
        assert!(matches!(err, Error::InvalidTreatment { row: 2, .. }), "{err}");
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn malformed_cell_reports_row_and_column() {
        let f = csv_file("y,t,x1\n1,1,0\n2,0,abc\n");
        let err = load_csv(f.path(), &CsvSchema::new("y", "t", "x1")).unwrap_err();
        match err {
            Error::MalformedCell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "x1");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn zero_covariates_rejected() {
        let f = csv_file("y,t,w\n1,1,0\n2,0,1\n");
        let err = load_csv(f.path(), &CsvSchema::new("y", "t", "x*")).unwrap_err();
        assert!(matches!(err, Error::NoCovariates));
    }

    #[test]
    fn raw_basis_has_intercept() {
        let basis = build_basis(&small(), false, BasisExpansion::Raw).unwrap();
        assert_eq!(basis.p(), 2);
        assert!(basis.column(0).iter().all(|&v| v == 1.0));
        assert_eq!(basis.column(1), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn standardized_column_moments() {
        let basis = build_basis(&small(), true, BasisExpansion::Raw).unwrap();
        let col = basis.column(1);
        let mean: f64 = col.iter().sum::<f64>() / 3.0;
        let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_column_rejected_when_standardizing() {
        let data =
            ObservedData::new(vec![1, 0], vec![Some(1.0), Some(0.0)], array![[2.0, 1.0], [2.0, 3.0]], None).unwrap();
        assert!(matches!(build_basis(&data, true, BasisExpansion::Raw), Err(Error::ConstantColumn(_))));
        assert!(build_basis(&data, false, BasisExpansion::Raw).is_ok());
    }

    #[test]
    fn pairwise_filter_drops_sparse_products() {
        // x3 is nonzero on a single row, so its products fall under a
        // threshold of 2.
        let data = ObservedData::new(
            vec![1, 0, 1, 0],
            vec![None; 4],
            array![[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [3.0, 5.0, 1.0], [1.0, 1.5, 0.0]],
            None,
        )
        .unwrap();
        let basis = build_basis(&data, false, BasisExpansion::Pairwise { min_nonzero: Some(2) }).unwrap();
        assert_eq!(basis.p(), 4);
        assert_eq!(basis.names()[4], "x1:x2");
        assert_eq!(basis.column(4), &[2.0, 2.0, 15.0, 1.5]);
    }

    #[test]
    fn destandardize_single_column() {
        let record = StandardizationRecord { means: vec![2.0], scales: vec![4.0] };
        let raw = record.destandardize(&[1.0, 8.0]).unwrap();
        assert_eq!(raw, vec![1.0 - 8.0 * 2.0 / 4.0, 2.0]);
        let id = StandardizationRecord::identity(3);
        assert_eq!(id.destandardize(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(record.destandardize(&[1.0]).is_err());
    }

    #[test]
    fn build_basis_is_deterministic() {
        let a = build_basis(&small(), true, BasisExpansion::Pairwise { min_nonzero: Some(1) }).unwrap();
        let b = build_basis(&small(), true, BasisExpansion::Pairwise { min_nonzero: Some(1) }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wildcard() {
        assert!(wildcard_match("x*", "x12"));
        assert!(wildcard_match("*_z", "a_z"));
        assert!(wildcard_match("a*b*c", "aXbYc"));
        assert!(!wildcard_match("x*", "y1"));
        assert!(!wildcard_match("ab*ba", "aba"));
    }
}
