//! Score estimation from probe ECFs and the tabulated learned nonlinearity.
//!
//! For one probe the score is the ratio of two band-limited Fourier
//! inversions of the debiased ECF,
//!
//! ```text
//! D(z) = 1 + Σ_ℓ 2 w_ℓ Re[e^{-i u_ℓ z} φ̂_ℓ]
//! N(z) =     Σ_ℓ 2 u_ℓ w_ℓ Im[e^{-i u_ℓ z} φ̂_ℓ]
//! ψ̂(z) = N(z) / (D(z) + ε sign D(z))
//! ```
//!
//! where the sums fold `±u_ℓ` together using `φ̂(−u) = conj φ̂(u)` and the
//! leading `1` is the `u = 0` term (`φ(0) = 1`, `w(0) = 1`). Because
//! `D′ = N` holds exactly for these sums, the derivative follows in closed
//! form as `ψ̂′ = (N′ D − N²) / (D + ε sign D)²`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::ecf::{probe_with_projection, sample_directions, EcfParams, EcfProbe};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::preprocess::DataMatrix;
use crate::rng::{stream, streams};
use crate::stats::{quantile_sorted, sorted};

/// Parameters of score learning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbecfParams {
    /// Projection count R.
    pub directions: usize,
    #[serde(flatten)]
    pub ecf: EcfParams,
    /// Tabulation grid size J.
    pub grid_points: usize,
    /// Quantile of pooled |Z| that sets `z_max`.
    pub quantile: f64,
    /// Denominator floor relative to `max_j |D(z_j)|`, per probe.
    pub eps_rel: f64,
}

impl Default for PbecfParams {
    fn default() -> Self {
        Self {
            directions: 12,
            ecf: EcfParams::default(),
            grid_points: 64,
            quantile: 0.995,
            eps_rel: 1e-6,
        }
    }
}

impl PbecfParams {
    pub fn validate(&self) -> Result<()> {
        self.ecf.validate()?;
        if self.directions == 0 {
            return Err(Error::input("need at least one projection direction"));
        }
        if self.grid_points < 4 {
            return Err(Error::input("tabulation grid needs at least 4 points"));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::input(format!(
                "quantile {} not in (0, 1]",
                self.quantile
            )));
        }
        if !(self.eps_rel > 0.0) {
            return Err(Error::input("eps_rel must be positive"));
        }
        Ok(())
    }
}

/// Settings a table was built with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub directions: usize,
    pub bins: usize,
    pub freqs: usize,
    pub safe_band: f64,
    pub sinc_floor: f64,
    pub seed: u64,
}

/// Learned nonlinearity `g ≈ −ψ̄` and its derivative on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub grid: Vec<f64>,
    pub g: Vec<f64>,
    pub g_prime: Vec<f64>,
    pub z_max: f64,
    pub provenance: Provenance,
}

/// Folded Fourier sums at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreSums {
    pub den: f64,
    pub num: f64,
    pub num_prime: f64,
}

pub fn score_numden(z: f64, probe: &EcfProbe) -> ScoreSums {
    let mut sums = ScoreSums {
        den: 1.0,
        num: 0.0,
        num_prime: 0.0,
    };
    for ((&u, &w), &phi) in probe.freqs.iter().zip(&probe.taper).zip(&probe.phi) {
        let (s, c) = (u * z).sin_cos();
        // e^{-iuz} φ = (c - i s)(re + i im)
        let re = c * phi.re + s * phi.im;
        let im = c * phi.im - s * phi.re;
        sums.den += 2.0 * w * re;
        sums.num += 2.0 * u * w * im;
        sums.num_prime -= 2.0 * u * u * w * re;
    }
    sums
}

/// `(ψ̂(z), ψ̂′(z))` for one probe with absolute denominator floor `eps`.
pub fn score_at(z: f64, probe: &EcfProbe, eps: f64) -> (f64, f64) {
    let s = score_numden(z, probe);
    let d = s.den + eps.copysign(s.den);
    (s.num / d, (s.num_prime * s.den - s.num * s.num) / (d * d))
}

/// Per-probe absolute floor `eps_rel · max_j |D(z_j)|`.
pub fn denominator_floor(probe: &EcfProbe, grid: &[f64], eps_rel: f64) -> f64 {
    eps_rel
        * grid
            .iter()
            .map(|&z| score_numden(z, probe).den.abs())
            .fold(0.0, f64::max)
}

/// Projection-averaged score and derivative on `grid`.
pub fn average_scores(
    probes: &[EcfProbe],
    grid: &[f64],
    eps_rel: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if probes.is_empty() {
        return Err(Error::input("cannot average over zero probes"));
    }
    let mut psi = vec![0.0; grid.len()];
    let mut psi_prime = vec![0.0; grid.len()];
    for probe in probes {
        let eps = denominator_floor(probe, grid, eps_rel);
        for (j, &z) in grid.iter().enumerate() {
            let (p, dp) = score_at(z, probe, eps);
            psi[j] += p;
            psi_prime[j] += dp;
        }
    }
    let r = probes.len() as f64;
    psi.iter_mut()
        .chain(psi_prime.iter_mut())
        .for_each(|v| *v /= r);
    Ok((psi, psi_prime))
}

/// Uniform symmetric grid of `count` points on `[-z_max, z_max]`.
pub fn symmetric_grid(z_max: f64, count: usize) -> Vec<f64> {
    let span = (count - 1) as f64;
    (0..count)
        .map(|j| z_max * (2.0 * j as f64 - span) / span)
        .collect()
}

/// Builds the probes for whitened `x`. Directions come from stream
/// [`streams::DIRECTIONS`] of `seed`; probe `r` dithers with stream
/// `DITHER_BASE + r`, so results do not depend on evaluation order.
pub fn build_probes(
    x: &DataMatrix,
    params: &PbecfParams,
    seed: u64,
    exec: Exec,
) -> Result<Vec<(EcfProbe, Vec<f64>)>> {
    params.validate()?;
    let dirs = sample_directions(
        x.channels(),
        params.directions,
        &mut stream(seed, streams::DIRECTIONS),
    )?;
    let indexed: Vec<_> = dirs.into_iter().enumerate().collect();
    par::map(exec, &indexed, |(r, a)| {
        let mut rng = stream(seed, streams::DITHER_BASE + *r as u64);
        probe_with_projection(x, a, &params.ecf, &mut rng)
    })
    .into_iter()
    .collect()
}

/// Learns the nonlinearity from whitened data.
pub fn tabulate_score(
    x: &DataMatrix,
    params: &PbecfParams,
    seed: u64,
    exec: Exec,
) -> Result<ScoreTable> {
    let built = build_probes(x, params, seed, exec)?;
    let pooled = sorted(built.iter().flat_map(|(_, z)| z.iter().map(|v| v.abs())));
    let z_max = quantile_sorted(&pooled, params.quantile);
    if !(z_max > 0.0) {
        return Err(Error::degenerate("pooled projections have zero spread"));
    }
    let probes: Vec<EcfProbe> = built.into_iter().map(|(p, _)| p).collect();
    let grid = symmetric_grid(z_max, params.grid_points);

    let per_probe = par::map(exec, &probes, |probe| {
        let eps = denominator_floor(probe, &grid, params.eps_rel);
        grid.iter()
            .map(|&z| score_at(z, probe, eps))
            .collect::<Vec<_>>()
    });
    let r = probes.len() as f64;
    let mut g = vec![0.0; grid.len()];
    let mut g_prime = vec![0.0; grid.len()];
    for scores in &per_probe {
        for (j, &(p, dp)) in scores.iter().enumerate() {
            g[j] -= p;
            g_prime[j] -= dp;
        }
    }
    g.iter_mut().chain(g_prime.iter_mut()).for_each(|v| *v /= r);

    if g.iter().chain(&g_prime).any(|v| !v.is_finite()) {
        return Err(Error::degenerate("learned score is not finite"));
    }
    Ok(ScoreTable {
        grid,
        g,
        g_prime,
        z_max,
        provenance: Provenance {
            directions: params.directions,
            bins: params.ecf.bins,
            freqs: params.ecf.freqs,
            safe_band: params.ecf.safe_band,
            sinc_floor: params.ecf.sinc_floor,
            seed,
        },
    })
}

impl ScoreTable {
    pub fn spacing(&self) -> f64 {
        2.0 * self.z_max / (self.grid.len() - 1) as f64
    }

    /// Linear interpolation of `(g, g′)`. Beyond `±z_max`, `g` holds its
    /// endpoint value and `g′` is zero, the derivative of that constant.
    pub fn eval(&self, y: f64) -> (f64, f64) {
        let last = self.grid.len() - 1;
        if y <= -self.z_max {
            return (
                self.g[0],
                if y < -self.z_max {
                    0.0
                } else {
                    self.g_prime[0]
                },
            );
        }
        if y >= self.z_max {
            return (
                self.g[last],
                if y > self.z_max {
                    0.0
                } else {
                    self.g_prime[last]
                },
            );
        }
        let t = (y + self.z_max) / self.spacing();
        let i = (t.floor() as usize).min(last - 1);
        let frac = t - i as f64;
        let lerp = |v: &[f64]| (1.0 - frac) * v[i] + frac * v[i + 1];
        (lerp(&self.g), lerp(&self.g_prime))
    }

    /// Largest gap between `g′` and central differences of `g` at interior
    /// knots, relative to `max |g′|` over the same knots.
    pub fn derivative_mismatch(&self) -> f64 {
        let dz2 = 2.0 * self.spacing();
        let interior = 1..self.grid.len() - 1;
        let gap = interior
            .clone()
            .map(|j| ((self.g[j + 1] - self.g[j - 1]) / dz2 - self.g_prime[j]).abs())
            .fold(0.0, f64::max);
        let scale = interior.map(|j| self.g_prime[j].abs()).fold(0.0, f64::max);
        gap / scale
    }

    /// Plain-text dump: `#`-prefixed provenance lines, then `z,g,g_prime` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let p = &self.provenance;
        writeln!(out, "# z_max={}", self.z_max)?;
        writeln!(out, "# directions={}", p.directions)?;
        writeln!(out, "# bins={}", p.bins)?;
        writeln!(out, "# freqs={}", p.freqs)?;
        writeln!(out, "# safe_band={}", p.safe_band)?;
        writeln!(out, "# sinc_floor={}", p.sinc_floor)?;
        writeln!(out, "# seed={}", p.seed)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["z", "g", "g_prime"])?;
        for ((z, g), gp) in self.grid.iter().zip(&self.g).zip(&self.g_prime) {
            w.write_record([z.to_string(), g.to_string(), gp.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut header = Vec::new();
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            match line.strip_prefix('#') {
                Some(kv) => header.push(kv.trim().to_owned()),
                None => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let field = |key: &str| -> Result<String> {
            header
                .iter()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_owned)
                .ok_or_else(|| Error::Config(format!("score table missing `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            field(key)?
                .parse()
                .map_err(|e| Error::Config(format!("bad `{key}`: {e}")))
        };
        let int = |key: &str| -> Result<u64> {
            field(key)?
                .parse()
                .map_err(|e| Error::Config(format!("bad `{key}`: {e}")))
        };
        let provenance = Provenance {
            directions: int("directions")? as usize,
            bins: int("bins")? as usize,
            freqs: int("freqs")? as usize,
            safe_band: num("safe_band")?,
            sinc_floor: num("sinc_floor")?,
            seed: int("seed")?,
        };
        let mut table = ScoreTable {
            grid: Vec::new(),
            g: Vec::new(),
            g_prime: Vec::new(),
            z_max: num("z_max")?,
            provenance,
        };
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        for row in reader.deserialize::<(f64, f64, f64)>() {
            let (z, g, gp) = row?;
            table.grid.push(z);
            table.g.push(g);
            table.g_prime.push(gp);
        }
        if table.grid.len() < 4 {
            return Err(Error::Config("score table needs at least 4 rows".into()));
        }
        Ok(table)
    }
}
