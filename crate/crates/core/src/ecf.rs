//! Projection-binned empirical characteristic functions.
//!
//! A probe projects whitened data onto one unit direction, standardises the
//! projection, bins it after adding uniform dither of one bin width, and
//! evaluates the binned ECF on a handful of low frequencies. Each value is
//! divided by `max(sinc(u h / 2), δ)` to undo the smearing of width-`h`
//! bins. Frequencies are restricted to the safe band `|u| h ≤ c < π` where
//! the divisor stays well away from zero.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::DataMatrix;
use crate::stats::quantile_sorted;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    #[default]
    EqualWidth,
    EqualOccupancy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dither {
    #[default]
    Uniform,
    Off,
}

/// Histogram layout for one projection.
#[derive(Clone, Debug, PartialEq)]
pub struct BinSpec {
    pub mode: BinMode,
    /// `B + 1` strictly increasing edges.
    pub edges: Vec<f64>,
    /// Edge midpoints.
    pub centers: Vec<f64>,
    /// Nominal width: the common width for equal-width bins, range / B otherwise.
    pub h: f64,
}

impl BinSpec {
    /// `count` equal-width bins spanning `[lo, hi]`.
    pub fn equal_width(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 1 || !(hi > lo) {
            return Err(Error::input(format!(
                "bad equal-width layout [{lo}, {hi}] x {count}"
            )));
        }
        let h = (hi - lo) / count as f64;
        let edges: Vec<f64> = (0..=count).map(|k| lo + k as f64 * h).collect();
        Ok(Self::from_edges(BinMode::EqualWidth, edges, h))
    }

    fn from_edges(mode: BinMode, edges: Vec<f64>, h: f64) -> Self {
        let centers = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        Self {
            mode,
            edges,
            centers,
            h,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Bin index of `v`; values beyond the outer edges land in the boundary bins.
    pub fn bin_of(&self, v: f64) -> usize {
        let last = self.len() - 1;
        match self.mode {
            BinMode::EqualWidth => {
                let k = ((v - self.edges[0]) / self.h).floor();
                if k <= 0.0 {
                    0
                } else {
                    (k as usize).min(last)
                }
            }
            BinMode::EqualOccupancy => self.edges[1..=last].partition_point(|&e| e <= v),
        }
    }
}

/// Settings shared by every probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcfParams {
    /// Bin count B.
    pub bins: usize,
    pub mode: BinMode,
    /// Safe-band constant c (`|u| h ≤ c`).
    pub safe_band: f64,
    /// Floor δ on the sinc divisor.
    pub sinc_floor: f64,
    /// Retained frequency count L.
    pub freqs: usize,
    pub dither: Dither,
}

impl Default for EcfParams {
    fn default() -> Self {
        Self {
            bins: 128,
            mode: BinMode::EqualWidth,
            safe_band: 0.3,
            sinc_floor: 1e-3,
            freqs: 5,
            dither: Dither::Uniform,
        }
    }
}

impl EcfParams {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::input("need at least 2 bins"));
        }
        if !(self.safe_band > 0.0 && self.safe_band < std::f64::consts::PI) {
            return Err(Error::input(format!(
                "safe band c = {} not in (0, π)",
                self.safe_band
            )));
        }
        if !(self.sinc_floor > 0.0 && self.sinc_floor < 1.0) {
            return Err(Error::input(format!(
                "sinc floor {} not in (0, 1)",
                self.sinc_floor
            )));
        }
        if self.freqs == 0 {
            return Err(Error::input("need at least one retained frequency"));
        }
        Ok(())
    }
}

/// Debiased binned ECF of one standardised projection, positive frequencies only.
#[derive(Clone, Debug, PartialEq)]
pub struct EcfProbe {
    pub direction: DVector<f64>,
    pub freqs: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub taper: Vec<f64>,
    pub h: f64,
    /// Mean and standard deviation of the raw projection.
    pub mean: f64,
    pub std: f64,
}

impl EcfProbe {
    /// `(u, w, φ̂)` over `±u_ℓ`; negative frequencies are the complex conjugates.
    pub fn two_sided(&self) -> Vec<(f64, f64, Complex64)> {
        let pos = self.freqs.iter().zip(&self.taper).zip(&self.phi);
        pos.clone()
            .rev()
            .map(|((&u, &w), &p)| (-u, w, p.conj()))
            .chain(pos.map(|((&u, &w), &p)| (u, w, p)))
            .collect()
    }
}

/// Standardised projection `(aᵀX − mean) / std` with its raw statistics.
#[derive(Clone, Debug)]
pub struct Projection {
    pub z: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// `count` i.i.d. directions uniform on the unit sphere in `R^m`.
pub fn sample_directions<R: Rng + ?Sized>(
    m: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    if m == 0 {
        return Err(Error::input("direction dimension must be positive"));
    }
    if count == 0 {
        return Err(Error::input("need at least one direction"));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 0.0 && norm.is_finite() {
            out.push(v / norm);
        }
    }
    Ok(out)
}

pub fn project_standardize(x: &DataMatrix, a: &DVector<f64>) -> Result<Projection> {
    if a.len() != x.channels() {
        return Err(Error::input(format!(
            "direction has {} entries but data has {} channels",
            a.len(),
            x.channels()
        )));
    }
    let mut z: Vec<f64> = x.values().tr_mul(a).iter().copied().collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = z.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(std > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::degenerate("projection has zero variance"));
    }
    for v in &mut z {
        *v = (*v - mean) / std;
    }
    Ok(Projection { z, mean, std })
}

/// Bins for `z`.
///
/// Equal-width: `B` bins of width `h = range / (B − 1)` centred on a grid
/// running from `min(z)` to `max(z)`. Equal-occupancy: edges at the sample
/// quantiles `k / B` with nominal `h = range / B`.
pub fn build_bins(z: &[f64], count: usize, mode: BinMode) -> Result<BinSpec> {
    if count < 2 {
        return Err(Error::input("need at least 2 bins"));
    }
    if count > z.len() {
        return Err(Error::input(format!(
            "{count} bins for {} samples",
            z.len()
        )));
    }
    let (lo, hi) = z
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return Err(Error::degenerate("projection has zero range"));
    }
    match mode {
        BinMode::EqualWidth => {
            let h = (hi - lo) / (count - 1) as f64;
            let start = lo - 0.5 * h;
            let edges = (0..=count).map(|k| start + k as f64 * h).collect();
            Ok(BinSpec::from_edges(BinMode::EqualWidth, edges, h))
        }
        BinMode::EqualOccupancy => {
            let sorted = crate::stats::sorted(z.iter().copied());
            let edges: Vec<f64> = (0..=count)
                .map(|k| quantile_sorted(&sorted, k as f64 / count as f64))
                .collect();
            if let Some(w) = edges.windows(2).find(|w| !(w[1] > w[0])) {
                return Err(Error::degenerate(format!(
                    "tied quantile edges at {} (too many repeated values for {count} equal-occupancy bins)",
                    w[0]
                )));
            }
            Ok(BinSpec::from_edges(
                BinMode::EqualOccupancy,
                edges,
                (hi - lo) / count as f64,
            ))
        }
    }
}

/// Bin probabilities without dither.
pub fn histogram(z: &[f64], bins: &BinSpec) -> Vec<f64> {
    let mut counts = vec![0usize; bins.len()];
    for &v in z {
        counts[bins.bin_of(v)] += 1;
    }
    normalise(&counts, z.len())
}

/// Bin probabilities after adding `U[−h/2, h/2]` dither to every sample.
pub fn dithered_histogram<R: Rng + ?Sized>(z: &[f64], bins: &BinSpec, rng: &mut R) -> Vec<f64> {
    let half = 0.5 * bins.h;
    let dither = Uniform::new_inclusive(-half, half).expect("finite bin width");
    let mut counts = vec![0usize; bins.len()];
    for &v in z {
        counts[bins.bin_of(v + rng.sample(dither))] += 1;
    }
    normalise(&counts, z.len())
}

fn normalise(counts: &[usize], n: usize) -> Vec<f64> {
    let n = n as f64;
    counts.iter().map(|&c| c as f64 / n).collect()
}

/// `Σ_b p_b e^{i u c_b}`.
pub fn binned_ecf(p: &[f64], centers: &[f64], u: f64) -> Complex64 {
    p.iter()
        .zip(centers)
        .filter(|(&pb, _)| pb != 0.0)
        .map(|(&pb, &c)| Complex64::from_polar(pb, u * c))
        .sum()
}

/// Unnormalised sinc, `sin(x) / x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

pub fn sinc_debias(phi_raw: Complex64, u: f64, h: f64, c: f64, floor: f64) -> Result<Complex64> {
    let product = u.abs() * h;
    if product > c * (1.0 + 1e-12) {
        return Err(Error::FrequencyOutOfBand { u, product, c });
    }
    Ok(phi_raw / sinc(0.5 * u * h).max(floor))
}

/// `u_ℓ = ℓ c / (h L)` for `ℓ = 1..=L`; the last frequency sits on the band edge.
pub fn frequency_grid(h: f64, c: f64, count: usize) -> Result<Vec<f64>> {
    if !(h > 0.0) || count == 0 {
        return Err(Error::input(format!(
            "bad frequency grid: h = {h}, L = {count}"
        )));
    }
    let step = c / (h * count as f64);
    Ok((1..=count).map(|l| l as f64 * step).collect())
}

/// Gaussian taper `exp(−(u / T)²)` with `T` the largest frequency.
pub fn taper_weights(freqs: &[f64]) -> Vec<f64> {
    let t = freqs.iter().fold(0.0f64, |a, &u| a.max(u.abs()));
    freqs.iter().map(|u| (-(u / t).powi(2)).exp()).collect()
}

pub fn make_probe<R: Rng + ?Sized>(
    x: &DataMatrix,
    direction: &DVector<f64>,
    params: &EcfParams,
    rng: &mut R,
) -> Result<EcfProbe> {
    probe_with_projection(x, direction, params, rng).map(|(probe, _)| probe)
}

/// Like [`make_probe`] but also hands back the standardised projection.
pub(crate) fn probe_with_projection<R: Rng + ?Sized>(
    x: &DataMatrix,
    direction: &DVector<f64>,
    params: &EcfParams,
    rng: &mut R,
) -> Result<(EcfProbe, Vec<f64>)> {
    params.validate()?;
    let proj = project_standardize(x, direction)?;
    let bins = build_bins(&proj.z, params.bins, params.mode)?;
    let p = match params.dither {
        Dither::Uniform => dithered_histogram(&proj.z, &bins, rng),
        Dither::Off => histogram(&proj.z, &bins),
    };
    let freqs = frequency_grid(bins.h, params.safe_band, params.freqs)?;
    let phi = freqs
        .iter()
        .map(|&u| {
            sinc_debias(
                binned_ecf(&p, &bins.centers, u),
                u,
                bins.h,
                params.safe_band,
                params.sinc_floor,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let taper = taper_weights(&freqs);
    let probe = EcfProbe {
        direction: direction.clone(),
        freqs,
        phi,
        taper,
        h: bins.h,
        mean: proj.mean,
        std: proj.std,
    };
    Ok((probe, proj.z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::fit_whitening;
    use crate::rng::stream;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn normal_data(m: usize, n: usize, seed: u64) -> DataMatrix {
        let mut rng = stream(seed, 0);
        DataMatrix::new(DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    /// Direct ECF `(1/N) Σ e^{i u z_n}`.
    fn direct_ecf(z: &[f64], u: f64) -> Complex64 {
        z.iter()
            .map(|&v| Complex64::from_polar(1.0, u * v))
            .sum::<Complex64>()
            / z.len() as f64
    }

    #[test]
    fn one_dimensional_directions_are_signs() {
        let dirs = sample_directions(1, 3, &mut stream(1, 0)).unwrap();
        assert_eq!(dirs.len(), 3);
        for d in dirs {
            assert_eq!(d[0].abs(), 1.0);
        }
    }

    #[test]
    fn directions_are_unit_and_seeded() {
        let a = sample_directions(8, 12, &mut stream(2, 0)).unwrap();
        let b = sample_directions(8, 12, &mut stream(2, 0)).unwrap();
        assert_eq!(a, b);
        for d in &a {
            assert!((d.norm() - 1.0).abs() < 1e-12);
        }
        assert!(sample_directions(8, 0, &mut stream(2, 0)).is_err());
    }

    #[test]
    fn directions_average_out_on_sphere() {
        let dirs = sample_directions(3, 10_000, &mut stream(3, 0)).unwrap();
        let mean = dirs.iter().fold(DVector::zeros(3), |acc, d| acc + d) / 10_000.0;
        assert!(mean.norm() < 0.05, "{}", mean.norm());
    }

    #[test]
    fn whitened_projection_has_near_unit_spread() {
        let (white, _) = fit_whitening(&normal_data(8, 1000, 4)).unwrap();
        let dirs = sample_directions(8, 20, &mut stream(4, 1)).unwrap();
        for a in &dirs {
            let p = project_standardize(&white, a).unwrap();
            assert!((0.8..=1.2).contains(&p.std));
            let n = p.z.len() as f64;
            let m = p.z.iter().sum::<f64>() / n;
            let s = (p.z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn two_point_projection_uses_population_std() {
        let x = DataMatrix::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let p = project_standardize(&x, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(p.z, vec![-1.0, 1.0]);
        assert_eq!((p.mean, p.std), (0.0, 1.0));
    }

    #[test]
    fn constant_projection_is_degenerate() {
        let x = DataMatrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]]).unwrap();
        let a = DVector::from_vec(vec![0.6, 0.8]);
        assert!(matches!(
            project_standardize(&x, &a),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn equal_occupancy_splits_four_points() {
        let bins = build_bins(&[0.0, 1.0, 2.0, 3.0], 2, BinMode::EqualOccupancy).unwrap();
        assert_eq!(bins.edges, vec![0.0, 1.5, 3.0]);
        assert_eq!(histogram(&[0.0, 1.0, 2.0, 3.0], &bins), vec![0.5, 0.5]);
        assert_eq!(bins.h, 1.5);
    }

    #[test]
    fn equal_width_bins_share_one_width() {
        let mut rng = stream(5, 0);
        let z: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let bins = build_bins(&z, 128, BinMode::EqualWidth).unwrap();
        assert_eq!(bins.len(), 128);
        let widths: Vec<f64> = bins.edges.windows(2).map(|e| e[1] - e[0]).collect();
        let spread = widths.iter().cloned().fold(f64::MIN, f64::max)
            - widths.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-12 * bins.h);
        for (b, c) in bins.centers.iter().enumerate() {
            assert_eq!(*c, 0.5 * (bins.edges[b] + bins.edges[b + 1]));
        }
    }

    #[test]
    fn equal_occupancy_counts_differ_by_at_most_one() {
        let mut rng = stream(6, 0);
        let z: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let bins = build_bins(&z, 128, BinMode::EqualOccupancy).unwrap();
        let mut counts = vec![0usize; 128];
        for &v in &z {
            counts[bins.bin_of(v)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 78 || c == 79), "{counts:?}");
    }

    #[test]
    fn bin_errors() {
        assert!(matches!(
            build_bins(&[1.0, 2.0], 3, BinMode::EqualWidth),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            build_bins(&[1.0, 1.0, 1.0], 2, BinMode::EqualWidth),
            Err(Error::DegenerateData(_))
        ));
        assert!(matches!(
            build_bins(&[0.0, 0.0, 0.0, 0.0, 1.0], 4, BinMode::EqualOccupancy),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn point_mass_without_dither() {
        let bins = BinSpec::equal_width(0.0, 1.0, 10).unwrap();
        let z = vec![bins.centers[3]; 50];
        let p = histogram(&z, &bins);
        assert_eq!(p[3], 1.0);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn dithered_uniform_histogram_is_flat() {
        let mut rng = stream(7, 0);
        let z: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let bins = BinSpec::equal_width(0.0, 1.0, 100).unwrap();
        let p = dithered_histogram(&z, &bins, &mut stream(7, 1));
        assert!(p.iter().all(|&pb| (pb - 0.01).abs() <= 0.005));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binned_ecf_basics() {
        assert_eq!(
            binned_ecf(&[0.25, 0.25, 0.5], &[-1.0, 0.3, 2.0], 0.0),
            Complex64::new(1.0, 0.0)
        );
        let v = binned_ecf(&[0.0, 1.0], &[0.0, 0.7], 2.0);
        assert!((v - Complex64::from_polar(1.0, 1.4)).norm() < 1e-15);
    }

    #[test]
    fn sinc_debias_values() {
        let phi = Complex64::new(0.3, -0.2);
        assert_eq!(sinc_debias(phi, 0.0, 0.05, 0.3, 1e-3).unwrap(), phi);
        // u h / 2 = 0.15 at the band edge c = 0.3
        let d = sinc_debias(Complex64::new(1.0, 0.0), 6.0, 0.05, 0.3, 1e-3).unwrap();
        assert!((1.0 / d.re - 0.15f64.sin() / 0.15).abs() < 1e-15);
        assert!((1.0 / d.re - 0.996_25).abs() < 1e-5);
        assert!(matches!(
            sinc_debias(phi, 6.1, 0.05, 0.3, 1e-3),
            Err(Error::FrequencyOutOfBand { .. })
        ));
        for k in 0..=100 {
            let u = 6.0 * k as f64 / 100.0;
            assert!(sinc(0.5 * u * 0.05) >= sinc(0.15));
            assert!(sinc(0.15) > 1e-3);
        }
    }

    #[test]
    fn frequency_grid_values() {
        let u = frequency_grid(0.05, 0.3, 5).unwrap();
        let expected = [1.2, 2.4, 3.6, 4.8, 6.0];
        for (a, b) in u.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(u.iter().all(|v| v * 0.05 <= 0.3 + 1e-12));
        let single = frequency_grid(0.05, 0.3, 1).unwrap();
        assert!((single[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn taper_values() {
        let w = taper_weights(&[1.2, 2.4, 3.6, 4.8, 6.0]);
        for (l, wl) in w.iter().enumerate() {
            let expected = (-((l + 1) as f64 / 5.0).powi(2)).exp();
            assert!((wl - expected).abs() < 1e-15);
        }
        assert!((w[4] - (-1.0f64).exp()).abs() < 1e-15);
        let near_zero = taper_weights(&[1e-9, 6.0]);
        assert!((near_zero[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_probe_matches_analytic_cf() {
        let (white, _) = fit_whitening(&normal_data(8, 5000, 8)).unwrap();
        let dirs = sample_directions(8, 4, &mut stream(8, 1)).unwrap();
        for (r, a) in dirs.iter().enumerate() {
            let probe = make_probe(
                &white,
                a,
                &EcfParams::default(),
                &mut stream(8, 100 + r as u64),
            )
            .unwrap();
            assert!(probe.freqs.iter().all(|u| u * probe.h <= 0.3 + 1e-12));
            for (u, phi) in probe.freqs.iter().zip(&probe.phi) {
                assert!(
                    (phi.norm() - (-u * u / 2.0).exp()).abs() < 0.05,
                    "u={u} phi={phi}"
                );
                assert!(phi.norm() <= 1.01);
            }
        }
    }

    #[test]
    fn two_point_probe_is_cosine() {
        let row: Vec<f64> = (0..2000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let other: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 13) as f64).collect();
        let x = DataMatrix::from_rows(&[row, other]).unwrap();
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let probe = make_probe(&x, &a, &EcfParams::default(), &mut stream(9, 0)).unwrap();
        for (u, phi) in probe.freqs.iter().zip(&probe.phi) {
            assert!((phi.re - u.cos()).abs() < 0.05);
            assert!(phi.im.abs() < 1e-9);
        }
    }

    #[test]
    fn debiased_values_respect_floor_bound() {
        let (white, _) = fit_whitening(&normal_data(4, 800, 10)).unwrap();
        let dirs = sample_directions(4, 6, &mut stream(10, 1)).unwrap();
        for a in &dirs {
            let probe = make_probe(&white, a, &EcfParams::default(), &mut stream(10, 2)).unwrap();
            for (u, phi) in probe.freqs.iter().zip(&probe.phi) {
                assert!(phi.norm() <= 1.0 / sinc(0.5 * u * probe.h).max(1e-3) + 1e-9);
            }
        }
    }

    #[test]
    fn conjugate_symmetry_of_binned_ecf() {
        let mut rng = stream(11, 0);
        let z: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let bins = build_bins(&z, 64, BinMode::EqualWidth).unwrap();
        let p = histogram(&z, &bins);
        for u in frequency_grid(bins.h, 0.3, 5).unwrap() {
            let pos = binned_ecf(&p, &bins.centers, u);
            let neg = binned_ecf(&p, &bins.centers, -u);
            assert!((neg - pos.conj()).norm() < 1e-14);
        }
        let (white, _) = fit_whitening(&normal_data(3, 400, 11)).unwrap();
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let probe = make_probe(&white, &a, &EcfParams::default(), &mut stream(11, 1)).unwrap();
        let two = probe.two_sided();
        assert_eq!(two.len(), 10);
        for l in 0..5 {
            let (un, wn, pn) = two[4 - l];
            let (up, wp, pp) = two[5 + l];
            assert_eq!((un, wn, pn), (-up, wp, pp.conj()));
        }
    }

    #[test]
    fn low_frequencies_have_lower_variance() {
        // bootstrap resamples of one standard-normal data set, evaluated on the
        // bins and frequencies of the original sample so that u stays fixed
        let base = normal_data(2, 1000, 12);
        let (white, _) = fit_whitening(&base).unwrap();
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let z = project_standardize(&white, &a).unwrap().z;
        let params = EcfParams::default();
        let bins = build_bins(&z, params.bins, params.mode).unwrap();
        let freqs = frequency_grid(bins.h, params.safe_band, params.freqs).unwrap();
        let (u_lo, u_hi) = (freqs[0], freqs[freqs.len() - 1]);
        let mut rng = stream(12, 1);
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for _ in 0..200 {
            let resample: Vec<f64> = (0..1000).map(|_| z[rng.random_range(0..1000)]).collect();
            let p = dithered_histogram(&resample, &bins, &mut rng);
            let at = |u: f64| {
                sinc_debias(
                    binned_ecf(&p, &bins.centers, u),
                    u,
                    bins.h,
                    params.safe_band,
                    params.sinc_floor,
                )
                .unwrap()
                .re
            };
            lo.push(at(u_lo));
            hi.push(at(u_hi));
        }
        let (vlo, vhi) = (crate::stats::variance(&lo), crate::stats::variance(&hi));
        assert!(vlo < vhi, "{vlo} vs {vhi}");
    }

    #[test]
    fn dither_debias_is_unbiased_on_uniform_data() {
        let half = 3f64.sqrt();
        let bins = BinSpec::equal_width(-half, half, 128).unwrap();
        let freqs = frequency_grid(bins.h, 0.3, 5).unwrap();
        let reps = 500;
        let mut samples = vec![Vec::with_capacity(reps); freqs.len()];
        let mut rng = stream(13, 0);
        for rep in 0..reps {
            let z: Vec<f64> = (0..1000).map(|_| rng.random_range(-half..half)).collect();
            let p = dithered_histogram(&z, &bins, &mut stream(13, 1 + rep as u64));
            for (l, &u) in freqs.iter().enumerate() {
                let raw = binned_ecf(&p, &bins.centers, u);
                samples[l].push(sinc_debias(raw, u, bins.h, 0.3, 1e-3).unwrap().re);
            }
        }
        for (l, &u) in freqs.iter().enumerate() {
            let truth = (half * u).sin() / (half * u);
            let mean = crate::stats::mean(&samples[l]);
            let se = (crate::stats::variance(&samples[l]) / reps as f64).sqrt();
            assert!(
                (mean - truth).abs() < 3.0 * se,
                "u={u}: {mean} vs {truth} (se {se})"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Lattice data with one sample per equal-width bin puts every sample on a bin centre.
        #[test]
        fn singleton_bins_reproduce_direct_ecf(seed in 0u64..100_000, n in 8usize..400,
                                              offset in -5.0f64..5.0, spacing in 0.001f64..0.1) {
            let mut rng = stream(seed, 0);
            let mut z: Vec<f64> = (0..n).map(|k| offset + spacing * k as f64).collect();
            for i in (1..n).rev() {
                z.swap(i, rng.random_range(0..=i));
            }
            let bins = build_bins(&z, n, BinMode::EqualWidth).unwrap();
            let p = histogram(&z, &bins);
            prop_assert!(p.iter().all(|&pb| pb == 1.0 / n as f64));
            for u in frequency_grid(bins.h, 0.3, 5).unwrap() {
                let diff = binned_ecf(&p, &bins.centers, u) - direct_ecf(&z, u);
                prop_assert!(diff.norm() < 1e-12);
            }
        }

        #[test]
        fn histogram_mass_is_conserved(seed in 0u64..100_000, n in 10usize..2000, b in 2usize..64) {
            let mut rng = stream(seed, 0);
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            for mode in [BinMode::EqualWidth, BinMode::EqualOccupancy] {
                let b = b.min(n);
                let bins = build_bins(&z, b, mode).unwrap();
                let p = dithered_histogram(&z, &bins, &mut rng);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
