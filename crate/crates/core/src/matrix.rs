//! Dense log-probability containers and their JSON file formats.
//!
//! JSON has no representation for infinities, so `-inf` entries are written
//! as `null` and `null` is read back as `-inf`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logmath::{log_softmax_in_place, logsumexp_unchecked};

/// Tolerance on `|logsumexp(row)|` for rows flagged as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Row-wise softmax in the log domain, producing the same container type.
pub trait RowNormalize: Sized {
    fn normalize_rows(&self) -> Result<Self>;
}

fn check_values(values: &[f64]) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::data(format!("NaN at flat index {pos}")));
    }
    if let Some(pos) = values.iter().position(|&v| v == f64::INFINITY) {
        return Err(Error::data(format!("+inf at flat index {pos}")));
    }
    Ok(())
}

fn check_normalized(values: &[f64], width: usize) -> Result<()> {
    for (i, row) in values.chunks(width).enumerate() {
        let mass = logsumexp_unchecked(row);
        if mass.is_nan() || mass.abs() > NORMALIZATION_TOL {
            return Err(Error::data(format!(
                "row {i} flagged normalized but logsumexp = {mass}"
            )));
        }
    }
    Ok(())
}

fn to_json_floats(values: &[f64]) -> Vec<Option<f64>> {
    values
        .iter()
        .map(|&v| if v.is_finite() { Some(v) } else { None })
        .collect()
}

fn from_json_floats(values: Vec<Option<f64>>) -> Vec<f64> {
    values
        .into_iter()
        .map(|v| v.unwrap_or(f64::NEG_INFINITY))
        .collect()
}

/// `T × C` matrix of per-frame log-probabilities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct EmissionFile {
    rows: usize,
    cols: usize,
    log_probs: Vec<Option<f64>>,
    #[serde(default)]
    normalized: bool,
}

impl EmissionMatrix {
    /// Wraps raw values. When `normalized` is set every row is checked.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, normalized: bool) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::data(
                "emission matrix needs at least one row and column",
            ));
        }
        if values.len() != rows * cols {
            return Err(Error::data(format!(
                "expected {} values for {rows}x{cols}, got {}",
                rows * cols,
                values.len()
            )));
        }
        check_values(&values)?;
        if normalized {
            check_normalized(&values, cols)?;
        }
        Ok(Self {
            rows,
            cols,
            values,
            normalized,
        })
    }

    /// Applies a log-softmax to each row of `logits`.
    pub fn from_logits(rows: usize, cols: usize, logits: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, logits, false)?.normalize_rows()
    }

    pub fn from_rows(rows: &[Vec<f64>], normalized: bool) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::data("ragged emission rows"));
        }
        Self::new(rows.len(), cols, rows.concat(), normalized)
    }

    /// Builds a normalized matrix from linear-domain probabilities.
    pub fn from_probs(rows: &[Vec<f64>]) -> Result<Self> {
        let logs: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        Self::from_rows(&logs, false)?.normalize_rows()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.cols..(t + 1) * self.cols]
    }

    pub fn get(&self, t: usize, v: usize) -> f64 {
        self.values[t * self.cols + v]
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: EmissionFile = serde_json::from_str(s)?;
        Self::new(f.rows, f.cols, from_json_floats(f.log_probs), f.normalized)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let f = EmissionFile {
            rows: self.rows,
            cols: self.cols,
            log_probs: to_json_floats(&self.values),
            normalized: self.normalized,
        };
        serde_json::to_string(&f).expect("matrix serializes")
    }
}

impl RowNormalize for EmissionMatrix {
    fn normalize_rows(&self) -> Result<Self> {
        let mut values = self.values.clone();
        for row in values.chunks_mut(self.cols) {
            log_softmax_in_place(row)?;
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values,
            normalized: true,
        })
    }
}

/// `T × U × C` transducer lattice, index order `(t, u, v)` with `U = N + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLattice {
    frames: usize,
    u_rows: usize,
    cols: usize,
    values: Vec<f64>,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct LatticeFile {
    rows: usize,
    u_rows: usize,
    cols: usize,
    log_probs: Vec<Option<f64>>,
    #[serde(default)]
    normalized: bool,
}

impl JointLattice {
    pub fn new(
        frames: usize,
        u_rows: usize,
        cols: usize,
        values: Vec<f64>,
        normalized: bool,
    ) -> Result<Self> {
        if frames == 0 || u_rows == 0 || cols == 0 {
            return Err(Error::data("joint lattice dimensions must be positive"));
        }
        if values.len() != frames * u_rows * cols {
            return Err(Error::data(format!(
                "expected {} values for {frames}x{u_rows}x{cols}, got {}",
                frames * u_rows * cols,
                values.len()
            )));
        }
        check_values(&values)?;
        if normalized {
            check_normalized(&values, cols)?;
        }
        Ok(Self {
            frames,
            u_rows,
            cols,
            values,
            normalized,
        })
    }

    pub fn from_logits(
        frames: usize,
        u_rows: usize,
        cols: usize,
        logits: Vec<f64>,
    ) -> Result<Self> {
        Self::new(frames, u_rows, cols, logits, false)?.normalize_rows()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn u_rows(&self) -> usize {
        self.u_rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn offset(&self, t: usize, u: usize, v: usize) -> usize {
        (t * self.u_rows + u) * self.cols + v
    }

    pub fn node(&self, t: usize, u: usize) -> &[f64] {
        let start = self.offset(t, u, 0);
        &self.values[start..start + self.cols]
    }

    pub fn get(&self, t: usize, u: usize, v: usize) -> f64 {
        self.values[self.offset(t, u, v)]
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: LatticeFile = serde_json::from_str(s)?;
        Self::new(
            f.rows,
            f.u_rows,
            f.cols,
            from_json_floats(f.log_probs),
            f.normalized,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let f = LatticeFile {
            rows: self.frames,
            u_rows: self.u_rows,
            cols: self.cols,
            log_probs: to_json_floats(&self.values),
            normalized: self.normalized,
        };
        serde_json::to_string(&f).expect("lattice serializes")
    }
}

impl RowNormalize for JointLattice {
    fn normalize_rows(&self) -> Result<Self> {
        let mut values = self.values.clone();
        for node in values.chunks_mut(self.cols) {
            log_softmax_in_place(node)?;
        }
        Ok(Self {
            frames: self.frames,
            u_rows: self.u_rows,
            cols: self.cols,
            values,
            normalized: true,
        })
    }
}

/// Real-valued `rows × dim` matrix: encoder output `H` or projected
/// masked-LM output `E`. `E` may have zero rows (empty hypothesis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * dim {
            return Err(Error::data(format!(
                "expected {} feature values for {rows}x{dim}, got {}",
                rows * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("feature values must be finite"));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::data("ragged feature rows"));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            rows: 0,
            dim,
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    /// Column-wise mean of all rows; zeros when there are no rows.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        if self.rows == 0 {
            return acc;
        }
        for r in self.values.chunks(self.dim.max(1)) {
            for (a, x) in acc.iter_mut().zip(r) {
                *a += x;
            }
        }
        let n = self.rows as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: FeatureMatrix = serde_json::from_str(s)?;
        Self::new(raw.rows, raw.dim, raw.values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("features serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_normalize_to_thirds() {
        let m = EmissionMatrix::from_logits(1, 3, vec![0.0, 0.0, 0.0]).unwrap();
        for &v in m.row(0) {
            assert!((v - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn single_column_is_certain() {
        let m = EmissionMatrix::from_logits(2, 1, vec![-3.7, 12.0]).unwrap();
        assert_eq!(m.values(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_matches_direct_exponentiation() {
        let m = EmissionMatrix::from_logits(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
        for (i, x) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((m.get(0, i).exp() - x.exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn nan_is_data_error() {
        let err = EmissionMatrix::from_logits(1, 2, vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn normalize_is_idempotent() {
        let m = EmissionMatrix::from_logits(2, 3, vec![0.3, -1.0, 2.0, 5.0, 5.5, -7.0]).unwrap();
        let again = m.normalize_rows().unwrap();
        for (a, b) in m.values().iter().zip(again.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn normalized_flag_is_verified_on_load() {
        let bad = r#"{"rows":1,"cols":2,"log_probs":[0.0,0.0],"normalized":true}"#;
        assert!(EmissionMatrix::from_json_str(bad).is_err());
        let ok = r#"{"rows":1,"cols":2,"log_probs":[0.0,null],"normalized":true}"#;
        let m = EmissionMatrix::from_json_str(ok).unwrap();
        assert_eq!(m.get(0, 1), f64::NEG_INFINITY);
        assert_eq!(
            EmissionMatrix::from_json_str(&m.to_json_string()).unwrap(),
            m
        );
    }

    #[test]
    fn lattice_json_round_trip() {
        let l =
            JointLattice::from_logits(2, 2, 3, (0..12).map(|x| x as f64 * 0.1).collect()).unwrap();
        let back = JointLattice::from_json_str(&l.to_json_string()).unwrap();
        assert_eq!(back.frames(), 2);
        assert_eq!(back.u_rows(), 2);
        for (a, b) in l.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((l.node(1, 1).iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn feature_mean_row() {
        let f = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0]], 2).unwrap();
        assert_eq!(f.mean_row(), vec![2.0, 4.0]);
        assert_eq!(FeatureMatrix::empty(3).mean_row(), vec![0.0; 3]);
    }
}
