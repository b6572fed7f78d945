//! Eigenbehaviors of one building.
//!
//! The daily behavior vectors (rows of the binary matrix) are centred on
//! their mean, their covariance is diagonalised with cyclic Jacobi rotations,
//! and each day is then described by its projection weights on the leading
//! eigenvectors.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{BinaryBehaviorMatrix, HOURS_PER_DAY};

/// Eigenvalues below this are clamped to zero in a fitted model.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-9;
const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("spectrum is identically zero")]
    DegenerateSpectrum,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Mean of the rows (one row per day).
pub fn mean_behavior(rows: &DMatrix<f64>) -> DVector<f64> {
    let d = rows.nrows() as f64;
    DVector::from_iterator(
        rows.ncols(),
        rows.column_iter().map(|col| col.sum() / d),
    )
}

/// Population covariance of the rows about `mean`, normalised by the number
/// of rows.
pub fn covariance(rows: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let d = rows.nrows() as f64;
    let mut phi = rows.clone();
    for mut row in phi.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut c = phi.tr_mul(&phi) / d;
    let n = c.nrows();
    for i in 0..n {
        for j in 0..i {
            c[(i, j)] = c[(j, i)];
        }
    }
    c
}

/// Unsorted eigenpairs of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns the eigenvalues and a matrix whose columns are the matching
/// eigenvectors.
pub fn jacobi_eigen(matrix: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), EigenError> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(EigenError::NotSquare(n, matrix.ncols()));
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOLERANCE || asym.is_nan() {
        return Err(EigenError::NotSymmetric(asym));
    }

    // row-major working copies; v accumulates rotations as columns
    let mut a: Vec<f64> = (0..n * n).map(|k| matrix[(k / n, k % n)]).collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let tol = OFF_DIAGONAL_TOLERANCE * scale;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                rotate(&mut a, &mut v, n, p, q);
            }
        }
    }
    if !converged {
        return Err(EigenError::NoConvergence(MAX_SWEEPS));
    }

    let values = (0..n).map(|i| a[i * n + i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r * n + c]);
    Ok((values, vectors))
}

/// Annihilate `a[p][q]` with one plane rotation.
fn rotate(a: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = a[p * n + p];
    let aqq = a[q * n + q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a[r * n + p];
        let arq = a[r * n + q];
        let rp = c * arp - s * arq;
        let rq = s * arp + c * arq;
        a[r * n + p] = rp;
        a[p * n + r] = rp;
        a[r * n + q] = rq;
        a[q * n + r] = rq;
    }
    a[p * n + p] = app - t * apq;
    a[q * n + q] = aqq + t * apq;
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;

    for r in 0..n {
        let vrp = v[r * n + p];
        let vrq = v[r * n + q];
        v[r * n + p] = c * vrp - s * vrq;
        v[r * n + q] = s * vrp + c * vrq;
    }
}

/// Eigenpairs sorted by descending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector of `values[j]`.
    pub vectors: DMatrix<f64>,
}

/// Relative gap below which two magnitudes count as tied for the sign
/// convention.
pub const SIGN_TIE_TOLERANCE: f64 = 1e-9;

/// Index of the largest-magnitude entry. Entries within
/// [`SIGN_TIE_TOLERANCE`] of the maximum tie, and the first of them wins.
/// One-hot behavior data produces exact `+x` / `-x` pairs, so without the
/// tolerance rounding noise would pick the sign.
pub fn leading_index(v: &[f64]) -> usize {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter()
        .position(|x| x.abs() >= max * (1.0 - SIGN_TIE_TOLERANCE))
        .unwrap_or(0)
}

/// Full spectrum in descending order, each eigenvector flipped so that its
/// largest-magnitude entry is positive (see [`leading_index`] for ties).
pub fn eigendecompose(matrix: &DMatrix<f64>) -> Result<SymmetricEigen, EigenError> {
    let (values, vectors) = jacobi_eigen(matrix)?;
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));

    let mut sorted = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = vectors.column(src).into_owned();
        if col[leading_index(col.as_slice())] < 0.0 {
            col.neg_mut();
        }
        sorted.set_column(dst, &col);
    }
    Ok(SymmetricEigen {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: sorted,
    })
}

/// Mean behavior, spectrum and eigenbehaviors of one building.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    pub building_id: String,
    /// Number of days the model was fitted on.
    pub days: usize,
    pub mean: DVector<f64>,
    /// Descending, clamped to zero below [`EIGENVALUE_FLOOR`].
    pub eigenvalues: Vec<f64>,
    /// Column `j` is eigenbehavior `j + 1`.
    pub eigenvectors: DMatrix<f64>,
    /// `eigenvalues[j] / sum(eigenvalues)`, all zero for a zero spectrum.
    pub explained: Vec<f64>,
}

impl EigenModel {
    pub fn fit(building_id: &str, rows: &DMatrix<f64>) -> Result<Self, EigenError> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(EigenError::Shape(format!(
                "cannot fit a {}x{} behavior matrix",
                rows.nrows(),
                rows.ncols()
            )));
        }
        let mean = mean_behavior(rows);
        let cov = covariance(rows, &mean);
        let eig = eigendecompose(&cov)?;
        let eigenvalues: Vec<f64> = eig
            .values
            .iter()
            .map(|&l| if l < EIGENVALUE_FLOOR { 0.0 } else { l })
            .collect();
        let total: f64 = eigenvalues.iter().sum();
        let explained = if total > 0.0 {
            eigenvalues.iter().map(|l| l / total).collect()
        } else {
            vec![0.0; eigenvalues.len()]
        };
        Ok(EigenModel {
            building_id: building_id.to_string(),
            days: rows.nrows(),
            mean,
            eigenvalues,
            eigenvectors: eig.vectors,
            explained,
        })
    }

    pub fn fit_behavior(bin: &BinaryBehaviorMatrix) -> Result<Self, EigenError> {
        Self::fit(&bin.building_id, bin.rows())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fraction of total variance carried by the leading `top` eigenbehaviors.
    pub fn explained_variance(&self, top: usize) -> Result<f64, EigenError> {
        if top == 0 || top > self.dim() {
            return Err(EigenError::InvalidArgument(format!(
                "top must be in 1..={}, got {top}",
                self.dim()
            )));
        }
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return Err(EigenError::DegenerateSpectrum);
        }
        Ok(self.eigenvalues[..top].iter().sum::<f64>() / total)
    }

    /// Cumulative explained variance for `top = 1..=dim`.
    pub fn explained_curve(&self) -> Result<Vec<f64>, EigenError> {
        (1..=self.dim()).map(|k| self.explained_variance(k)).collect()
    }

    pub fn primary_eigenbehaviors(&self, k: usize) -> Result<Vec<DVector<f64>>, EigenError> {
        if k == 0 || k > self.dim() {
            return Err(EigenError::InvalidArgument(format!(
                "k must be in 1..={}, got {k}",
                self.dim()
            )));
        }
        Ok((0..k).map(|j| self.eigenvectors.column(j).into_owned()).collect())
    }

    pub fn primary(&self) -> DVector<f64> {
        self.eigenvectors.column(0).into_owned()
    }

    /// Projection weights `v_j . (row - mean)` on the leading `k` eigenbehaviors.
    pub fn weights(&self, row: &[f64], k: usize) -> Vec<f64> {
        (0..k)
            .map(|j| {
                self.eigenvectors
                    .column(j)
                    .iter()
                    .zip(row.iter().zip(self.mean.iter()))
                    .map(|(v, (g, m))| v * (g - m))
                    .sum()
            })
            .collect()
    }

    pub fn to_record(&self) -> EigenModelRecord {
        let n = self.dim();
        let mut eigenvectors = Vec::with_capacity(n * n);
        for j in 0..n {
            eigenvectors.extend(self.eigenvectors.column(j).iter());
        }
        EigenModelRecord {
            building_id: self.building_id.clone(),
            dim: n,
            days: self.days,
            mean: self.mean.iter().copied().collect(),
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors,
            explained: self.explained.clone(),
        }
    }

    pub fn from_record(rec: EigenModelRecord) -> Result<Self, EigenError> {
        let n = rec.dim;
        if rec.mean.len() != n
            || rec.eigenvalues.len() != n
            || rec.explained.len() != n
            || rec.eigenvectors.len() != n * n
        {
            return Err(EigenError::Shape(format!(
                "model record for {:?} is inconsistent with dim {n}",
                rec.building_id
            )));
        }
        Ok(EigenModel {
            building_id: rec.building_id,
            days: rec.days,
            mean: DVector::from_vec(rec.mean),
            eigenvalues: rec.eigenvalues,
            // row j of the record is eigenvector j, i.e. column j here
            eigenvectors: DMatrix::from_row_slice(n, n, &rec.eigenvectors).transpose(),
            explained: rec.explained,
        })
    }
}

/// Flat serialised form of an [`EigenModel`]. `eigenvectors` is row-major
/// with row `j` holding eigenbehavior `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenModelRecord {
    pub building_id: String,
    pub dim: usize,
    pub days: usize,
    pub mean: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<f64>,
    pub explained: Vec<f64>,
}

/// Per-day assignment to the closest of the leading eigenbehaviors.
#[derive(Debug, Clone, PartialEq)]
pub struct DayClassification {
    pub day_dates: Vec<NaiveDate>,
    /// 1-based index of the eigenbehavior with the largest |weight|.
    pub assigned: Vec<usize>,
    /// Sign of the winning weight: `+1` toward the eigenbehavior, `-1` away
    /// from it. Zero weights count as `+1`.
    pub polarity: Vec<i8>,
    pub weights: Vec<Vec<f64>>,
}

impl DayClassification {
    /// Signed class label, e.g. `+2` or `-1`.
    pub fn signed(&self, day: usize) -> i64 {
        self.assigned[day] as i64 * self.polarity[day] as i64
    }
}

/// Index (0-based) of the largest |w|, first index on ties.
pub fn argmax_abs(weights: &[f64]) -> usize {
    let mut best = 0;
    for (j, w) in weights.iter().enumerate().skip(1) {
        if w.abs() > weights[best].abs() {
            best = j;
        }
    }
    best
}

pub fn classify_rows(
    rows: &DMatrix<f64>,
    day_dates: &[NaiveDate],
    model: &EigenModel,
    k: usize,
) -> Result<DayClassification, EigenError> {
    if k == 0 || k > model.dim() {
        return Err(EigenError::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            model.dim()
        )));
    }
    if rows.ncols() != model.dim() || rows.nrows() != day_dates.len() {
        return Err(EigenError::Shape(format!(
            "{}x{} rows with {} dates against a model of dim {}",
            rows.nrows(),
            rows.ncols(),
            day_dates.len(),
            model.dim()
        )));
    }
    let mut assigned = Vec::with_capacity(rows.nrows());
    let mut polarity = Vec::with_capacity(rows.nrows());
    let mut weights = Vec::with_capacity(rows.nrows());
    let mut buf = vec![0.0; rows.ncols()];
    for i in 0..rows.nrows() {
        for (dst, v) in buf.iter_mut().zip(rows.row(i).iter()) {
            *dst = *v;
        }
        let w = model.weights(&buf, k);
        let j = argmax_abs(&w);
        assigned.push(j + 1);
        polarity.push(if w[j] < 0.0 { -1 } else { 1 });
        weights.push(w);
    }
    Ok(DayClassification {
        day_dates: day_dates.to_vec(),
        assigned,
        polarity,
        weights,
    })
}

pub fn classify_days(
    bin: &BinaryBehaviorMatrix,
    model: &EigenModel,
    k: usize,
) -> Result<DayClassification, EigenError> {
    classify_rows(bin.rows(), &bin.day_dates, model, k)
}

/// Lay a behavior vector out as `categories x 24` (row = level, column = hour).
pub fn reshape_behavior(vec: &[f64], categories: usize) -> Result<DMatrix<f64>, EigenError> {
    if vec.len() != categories * HOURS_PER_DAY {
        return Err(EigenError::Shape(format!(
            "expected {} entries, got {}",
            categories * HOURS_PER_DAY,
            vec.len()
        )));
    }
    Ok(DMatrix::from_row_slice(categories, HOURS_PER_DAY, vec))
}

pub fn flatten_behavior(grid: &DMatrix<f64>) -> Vec<f64> {
    grid.transpose().iter().copied().collect()
}
