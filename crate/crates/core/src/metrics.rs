//! Gain matrix and Amari separation error.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `P = W · V · A`: rotation after whitening, composed with the true mixing.
pub fn gain_matrix(w: &DMatrix<f64>, v: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = w.nrows();
    if !w.is_square() || v.shape() != (m, m) || a.shape() != (m, m) {
        return Err(Error::input("gain matrix factors must all be m x m"));
    }
    Ok(w * v * a)
}

/// Amari error
/// `Σ_i (Σ_j |p_ij| / max_k |p_ik| − 1) + Σ_j (Σ_i |p_ij| / max_k |p_kj| − 1)`.
///
/// Every sum runs over sorted magnitudes, so permuting rows or columns
/// leaves the result bit-for-bit unchanged.
pub fn amari_error(p: &DMatrix<f64>) -> Result<f64> {
    if !p.is_square() || p.nrows() == 0 {
        return Err(Error::input("gain matrix must be square and non-empty"));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateGain("non-finite entry".into()));
    }
    let term = |mut mags: Vec<f64>, what: &str, idx: usize| -> Result<f64> {
        mags.sort_by(f64::total_cmp);
        let max = *mags.last().unwrap();
        if max == 0.0 {
            return Err(Error::DegenerateGain(format!("{what} {idx} is all zero")));
        }
        Ok(mags.iter().sum::<f64>() / max - 1.0)
    };
    let mut terms = Vec::with_capacity(2 * p.nrows());
    for (i, row) in p.row_iter().enumerate() {
        terms.push(term(row.iter().map(|v| v.abs()).collect(), "row", i)?);
    }
    for (j, col) in p.column_iter().enumerate() {
        terms.push(term(col.iter().map(|v| v.abs()).collect(), "column", j)?);
    }
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum())
}
