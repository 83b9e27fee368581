//! Seeded synthetic sources and mixtures.
//!
//! A [`Scenario`] seed drives two independent streams: one for the source
//! matrix (rows filled in order) and one for the mixing matrix.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::DataMatrix;
use crate::rng::{stream, streams};

/// Largest admitted condition number of a mixing matrix.
pub const MAX_CONDITION: f64 = 100.0;
const MAX_MIXING_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceFamily {
    /// Generalised Gaussian, density ∝ exp(−|x/α|^β), unit variance.
    Ggd { beta: f64 },
    /// Centered and scaled Poisson, `(K − λ)/√λ`.
    Poisson { lambda: f64 },
}

impl SourceFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceFamily::Ggd { beta } if !(beta > 0.0 && beta.is_finite()) => Err(Error::input(
                format!("GGD shape must be positive, got {beta}"),
            )),
            SourceFamily::Poisson { lambda } if !(lambda > 0.0 && lambda.is_finite()) => Err(
                Error::input(format!("Poisson rate must be positive, got {lambda}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        match *self {
            SourceFamily::Ggd { beta } => sample_ggd(beta, n, rng),
            SourceFamily::Poisson { lambda } => sample_poisson_centered(lambda, n, rng),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub family: SourceFamily,
    pub m: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.m < 2 {
            return Err(Error::input("need at least 2 sources"));
        }
        if self.n_samples < self.m {
            return Err(Error::input("need at least as many samples as sources"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: DataMatrix,
    pub a: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

/// Unit-variance generalised Gaussian draws, `sign · Gamma(1/β, 1)^{1/β} · α`
/// with `α² = Γ(1/β) / Γ(3/β)`.
pub fn sample_ggd<R: Rng + ?Sized>(beta: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    SourceFamily::Ggd { beta }.validate()?;
    let gamma =
        Gamma::new(1.0 / beta, 1.0).map_err(|e| Error::input(format!("gamma shape: {e}")))?;
    let alpha = (libm::tgamma(1.0 / beta) / libm::tgamma(3.0 / beta)).sqrt();
    Ok((0..n)
        .map(|_| {
            let mag = rng.sample(gamma).powf(1.0 / beta) * alpha;
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect())
}

/// Poisson draws by sequential-search inversion, standardised to zero mean and unit variance.
pub fn sample_poisson_centered<R: Rng + ?Sized>(
    lambda: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    SourceFamily::Poisson { lambda }.validate()?;
    let p0 = (-lambda).exp();
    if p0 == 0.0 {
        return Err(Error::input(format!(
            "rate {lambda} too large for inversion sampling"
        )));
    }
    let scale = lambda.sqrt();
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let (mut k, mut p, mut cdf) = (0u32, p0, p0);
            while u > cdf && p > 0.0 {
                k += 1;
                p *= lambda / f64::from(k);
                cdf += p;
            }
            (f64::from(k) - lambda) / scale
        })
        .collect())
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    sv.max() / sv.min()
}

/// Standard-normal mixing matrix, redrawn until `cond(A) ≤ 100`.
pub fn random_mixing<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    random_mixing_counted(m, rng).map(|(a, _)| a)
}

/// Like [`random_mixing`], also returning the number of draws used.
pub fn random_mixing_counted<R: Rng + ?Sized>(
    m: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, usize)> {
    if m < 2 {
        return Err(Error::input("mixing matrix needs m >= 2"));
    }
    for attempt in 1..=MAX_MIXING_ATTEMPTS {
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        if condition_number(&a) <= MAX_CONDITION {
            return Ok((a, attempt));
        }
    }
    Err(Error::degenerate(format!(
        "no mixing matrix with condition <= {MAX_CONDITION} in {MAX_MIXING_ATTEMPTS} draws"
    )))
}

/// `X = A S` for the scenario.
pub fn make_dataset(sc: &Scenario) -> Result<Dataset> {
    sc.validate()?;
    let mut src_rng = stream(sc.seed, streams::SOURCES);
    let mut s = DMatrix::zeros(sc.m, sc.n_samples);
    for i in 0..sc.m {
        let row = sc.family.sample(sc.n_samples, &mut src_rng)?;
        for (j, v) in row.into_iter().enumerate() {
            s[(i, j)] = v;
        }
    }
    let a = random_mixing(sc.m, &mut stream(sc.seed, streams::MIXING))?;
    let x = DataMatrix::new(&a * &s)?;
    Ok(Dataset { x, a, s })
}
