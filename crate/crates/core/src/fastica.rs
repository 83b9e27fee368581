//! Symmetric FastICA fixed-point iteration on whitened data.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::Contrast;
use crate::preprocess::{orthogonality_defect, sym_orth, DataMatrix};
use crate::rng::{stream, streams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FasticaConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Seed for the initial demixing matrix.
    pub seed: u64,
}

impl Default for FasticaConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl FasticaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::input("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::input("tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SeparationResult {
    /// Orthogonal demixing matrix acting on whitened data.
    pub w: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub elapsed: Duration,
    /// Largest `‖W Wᵀ − I‖_F` seen over all iterates.
    pub max_orthogonality_error: f64,
}

/// Symmetric orthogonalisation of an i.i.d. standard-normal matrix.
pub fn init_w<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(w) = sym_orth(&g) {
            return w;
        }
    }
}

/// The initial demixer a run with `cfg` starts from.
pub fn initial_w(m: usize, cfg: &FasticaConfig) -> DMatrix<f64> {
    init_w(m, &mut stream(cfg.seed, streams::INIT_W))
}

/// Whitened data with its transpose cached for the `G Xᵀ` product.
struct Workspace<'a> {
    x: &'a DMatrix<f64>,
    xt: DMatrix<f64>,
}

impl<'a> Workspace<'a> {
    fn new(x: &'a DataMatrix) -> Self {
        Self {
            x: x.values(),
            xt: x.values().transpose(),
        }
    }

    fn step<C: Contrast + ?Sized>(&self, w: &DMatrix<f64>, nl: &C) -> Result<DMatrix<f64>> {
        let (m, n) = self.x.shape();
        let mut g = w * self.x;
        let mut gp_mean = vec![0.0; m];
        for mut col in g.column_iter_mut() {
            for (i, y) in col.iter_mut().enumerate() {
                let (gy, gpy) = nl.eval(*y);
                *y = gy;
                gp_mean[i] += gpy;
            }
        }
        let inv_n = 1.0 / n as f64;
        let mut updated = &g * &self.xt * inv_n;
        for (i, mut row) in updated.row_iter_mut().enumerate() {
            row -= w.row(i) * (gp_mean[i] * inv_n);
        }
        sym_orth(&updated)
    }
}

/// One update `w_k ← E[x g(w_kᵀx)] − E[g′(w_kᵀx)] w_k` for every row,
/// followed by symmetric orthogonalisation.
pub fn fastica_step<C: Contrast + ?Sized>(
    w: &DMatrix<f64>,
    x: &DataMatrix,
    nl: &C,
) -> Result<DMatrix<f64>> {
    if w.shape() != (x.channels(), x.channels()) {
        return Err(Error::input("W must be m x m for m-channel data"));
    }
    Workspace::new(x).step(w, nl)
}

/// Relative Frobenius change after flipping rows of `w_new` to agree in sign with `w_old`.
pub fn relative_change(w_new: &DMatrix<f64>, w_old: &DMatrix<f64>) -> f64 {
    let mut aligned = w_new.clone();
    for (i, mut row) in aligned.row_iter_mut().enumerate() {
        if row.dot(&w_old.row(i)) < 0.0 {
            row.neg_mut();
        }
    }
    (aligned - w_old).norm() / w_old.norm()
}

pub fn converged(w_new: &DMatrix<f64>, w_old: &DMatrix<f64>, tol: f64) -> bool {
    relative_change(w_new, w_old) < tol
}

pub fn run_fastica<C: Contrast + ?Sized>(
    x: &DataMatrix,
    nl: &C,
    cfg: &FasticaConfig,
) -> Result<SeparationResult> {
    let w0 = initial_w(x.channels(), cfg);
    run_fastica_from(x, nl, cfg, w0)
}

pub fn run_fastica_from<C: Contrast + ?Sized>(
    x: &DataMatrix,
    nl: &C,
    cfg: &FasticaConfig,
    w0: DMatrix<f64>,
) -> Result<SeparationResult> {
    cfg.validate()?;
    if w0.shape() != (x.channels(), x.channels()) {
        return Err(Error::input("W0 must be m x m for m-channel data"));
    }
    let start = Instant::now();
    let ws = Workspace::new(x);
    let mut w = w0;
    let mut max_orth = orthogonality_defect(&w);
    let mut iterations = 0;
    let mut done = false;
    while iterations < cfg.max_iter {
        let w_new = ws.step(&w, nl).map_err(|e| Error::IterationFailure {
            iteration: iterations + 1,
            reason: e.to_string(),
        })?;
        iterations += 1;
        max_orth = max_orth.max(orthogonality_defect(&w_new));
        done = converged(&w_new, &w, cfg.tol);
        w = w_new;
        if done {
            break;
        }
    }
    Ok(SeparationResult {
        w,
        iterations,
        converged: done,
        elapsed: start.elapsed(),
        max_orthogonality_error: max_orth,
    })
}
