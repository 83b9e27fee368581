//! Centering, whitening and symmetric orthogonalisation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest admitted covariance eigenvalue, relative to the largest.
pub const WHITEN_EIGEN_FLOOR: f64 = 1e-10;

/// Smallest admitted eigenvalue of `W Wᵀ` in [`sym_orth`], relative to the largest.
const REFINE_THRESHOLD: f64 = 1e-13;
pub const ORTH_EIGEN_FLOOR: f64 = 1e-12;

/// An `m × N` sample matrix: rows are channels, columns are samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (m, n) = values.shape();
        if m < 2 {
            return Err(Error::input(format!("need at least 2 channels, got {m}")));
        }
        if n < m {
            return Err(Error::input(format!(
                "need at least as many samples as channels ({n} < {m})"
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite entry {bad}")));
        }
        Ok(Self(values))
    }

    /// Builds from row vectors (one per channel).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::input("ragged rows"));
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    pub fn channels(&self) -> usize {
        self.0.nrows()
    }

    pub fn samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Sample covariance with 1/N normalisation (data assumed centered).
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.samples() as f64;
        (&self.0 * self.0.transpose()) / n
    }
}

/// Sample mean and whitening transform fitted to raw data.
#[derive(Clone, Debug)]
pub struct WhiteningModel {
    pub mean: DVector<f64>,
    /// Symmetric whitening matrix `Σ^{-1/2}`.
    pub v: DMatrix<f64>,
    /// Absolute eigenvalue floor that was enforced (`WHITEN_EIGEN_FLOOR * λ_max`).
    pub eigen_floor: f64,
}

impl WhiteningModel {
    /// Maps raw data into whitened coordinates.
    pub fn apply(&self, x: &DataMatrix) -> Result<DataMatrix> {
        if x.channels() != self.mean.len() {
            return Err(Error::input("channel count does not match whitening model"));
        }
        let mut centered = x.values().clone();
        for (mut row, mu) in centered.row_iter_mut().zip(self.mean.iter()) {
            row.add_scalar_mut(-mu);
        }
        Ok(DataMatrix(&self.v * centered))
    }
}

/// Subtracts the per-row sample mean.
pub fn center(x: &DataMatrix) -> (DataMatrix, DVector<f64>) {
    let n = x.samples() as f64;
    let mean = DVector::from_iterator(x.channels(), x.0.row_iter().map(|r| r.sum() / n));
    let mut xc = x.0.clone();
    for (mut row, mu) in xc.row_iter_mut().zip(mean.iter()) {
        row.add_scalar_mut(-mu);
    }
    (DataMatrix(xc), mean)
}

/// Whitens centered data with the symmetric root `V = Σ^{-1/2}`.
///
/// The returned model carries a zero mean; use [`fit_whitening`] to keep the
/// raw-data mean alongside `V`.
pub fn whiten(xc: &DataMatrix) -> Result<(DataMatrix, WhiteningModel)> {
    let cov = xc.covariance();
    let eig = SymmetricEigen::new(cov);
    let lmax = eig.eigenvalues.max();
    let floor = WHITEN_EIGEN_FLOOR * lmax;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| !(l > floor)) {
        return Err(Error::degenerate(format!(
            "covariance eigenvalue {bad:.3e} below floor {floor:.3e} (rank deficient)"
        )));
    }
    let v = inv_sqrt_from_eigen(&eig);
    let white = DataMatrix(&v * xc.values());
    let model = WhiteningModel {
        mean: DVector::zeros(xc.channels()),
        v,
        eigen_floor: floor,
    };
    Ok((white, model))
}

/// Centers and whitens raw data, returning a model with the raw mean.
pub fn fit_whitening(x: &DataMatrix) -> Result<(DataMatrix, WhiteningModel)> {
    let (xc, mean) = center(x);
    let (white, mut model) = whiten(&xc)?;
    model.mean = mean;
    Ok((white, model))
}

/// Symmetric orthogonalisation `(W Wᵀ)^{-1/2} W`, the orthogonal polar factor of `W`.
pub fn sym_orth(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !w.is_square() {
        return Err(Error::input("sym_orth needs a square matrix"));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(w * w.transpose());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmax > 0.0) || !(lmin > ORTH_EIGEN_FLOOR * lmax) {
        return Err(Error::Singular(format!(
            "W Wᵀ eigenvalues span [{lmin:.3e}, {lmax:.3e}]; rows have collapsed"
        )));
    }
    let once = inv_sqrt_from_eigen(&eig) * w;
    // rounding in W Wᵀ grows with cond(W)²; a second pass on the nearly
    // orthogonal result brings the defect back to machine precision
    if orthogonality_defect(&once) < REFINE_THRESHOLD {
        return Ok(once);
    }
    let eig = SymmetricEigen::new(&once * once.transpose());
    Ok(inv_sqrt_from_eigen(&eig) * once)
}

fn inv_sqrt_from_eigen(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt().recip()));
    q * d * q.transpose()
}

/// `‖W Wᵀ − I‖_F`.
pub fn orthogonality_defect(w: &DMatrix<f64>) -> f64 {
    let m = w.nrows();
    (w * w.transpose() - DMatrix::<f64>::identity(m, m)).norm()
}
