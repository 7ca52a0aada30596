//! Sampled Besov (Nikol'skii) semi-norms, Sobolev norms, time norms and a
//! factory for divergence-free random fields of tunable roughness.
//!
//! `[u]_{B^β_{q,∞}} = sup_y ‖u(· + y) - u‖_q / |y|^β` is estimated by a
//! maximum over a finite, deterministic shift set, so every estimate is a
//! lower bound of the true semi-norm.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, Grid, PhysicalField, SpectralField};
use crate::fit::{log_log_fit, LogLogFit};

/// Axes, face diagonals and space diagonals (unnormalized).
const DIRECTIONS: [[f64; 3]; 13] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, -1.0, 0.0],
    [1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0],
    [0.0, 1.0, 1.0],
    [0.0, 1.0, -1.0],
    [1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Unit vectors of the 13 sampling directions.
pub fn directions() -> [[f64; 3]; 13] {
    DIRECTIONS.map(|d| {
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        [d[0] / len, d[1] / len, d[2] / len]
    })
}

fn norm3(y: &[f64; 3]) -> f64 {
    (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt()
}

/// Which shifts the supremum is taken over.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum ShiftPolicy {
    /// Magnitudes `π 2^{-j}` for every `j >= 0` with `π 2^{-j} >= h`, times
    /// the 13 directions.
    #[default]
    Dyadic,
    /// Dyadic magnitudes restricted to `j_min <= j <= j_max` (still `>= h`).
    DyadicRange { j_min: u32, j_max: u32 },
    /// Explicit shifts; those shorter than the grid spacing are dropped.
    Custom(Vec<[f64; 3]>),
}

impl ShiftPolicy {
    /// The shifts used on `grid`, and those excluded for being below `h`.
    pub fn shifts(&self, grid: &Grid) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
        let h = grid.spacing();
        let dyadic = |lo: u32, hi: u32| {
            let mut out = Vec::new();
            for j in lo..=hi {
                let mag = PI / 2f64.powi(j as i32);
                if mag < h {
                    break;
                }
                out.extend(directions().iter().map(|d| [mag * d[0], mag * d[1], mag * d[2]]));
            }
            out
        };
        match self {
            ShiftPolicy::Dyadic => (dyadic(0, u32::MAX), Vec::new()),
            ShiftPolicy::DyadicRange { j_min, j_max } => (dyadic(*j_min, *j_max), Vec::new()),
            ShiftPolicy::Custom(list) => {
                let (keep, drop): (Vec<_>, Vec<_>) = list.iter().partition(|y| norm3(y) >= h);
                (keep, drop)
            }
        }
    }
}

/// One sampled difference norm `‖u(· + y) - u‖_q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSample {
    pub shift: [f64; 3],
    pub magnitude: f64,
    pub diff_norm: f64,
}

/// Sampled difference norms over the policy's shift set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceSamples {
    pub q: f64,
    pub samples: Vec<ShiftSample>,
    pub excluded: Vec<[f64; 3]>,
}

pub fn difference_norms(u: &SpectralField, q: f64, policy: &ShiftPolicy) -> Result<DifferenceSamples> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::InvalidExponent(q));
    }
    let grid = u.grid();
    let (shifts, excluded) = policy.shifts(&grid);
    if !excluded.is_empty() {
        log::info!("{} shifts below the grid spacing excluded from the semi-norm", excluded.len());
    }
    let samples = shifts
        .into_iter()
        .map(|y| {
            let neg = [-y[0], -y[1], -y[2]];
            let diff = u.map_modes(|k| field::shift_factor(&grid, k, neg) - Complex64::new(1.0, 0.0));
            let diff_norm = field::lebesgue_norm(&diff.to_physical(), q)?;
            Ok(ShiftSample { shift: y, magnitude: norm3(&y), diff_norm })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DifferenceSamples { q, samples, excluded })
}

/// A sampled semi-norm and the shift attaining it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovEstimate {
    pub beta: f64,
    pub q: f64,
    pub value: f64,
    pub shift_set: Vec<[f64; 3]>,
    pub argmax_shift: [f64; 3],
    pub excluded: Vec<[f64; 3]>,
}

impl BesovEstimate {
    pub fn from_samples(samples: &DifferenceSamples, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidSmoothness(beta));
        }
        let mut value = 0.0;
        let mut argmax_shift = [0.0; 3];
        for s in &samples.samples {
            let ratio = s.diff_norm / s.magnitude.powf(beta);
            if ratio > value {
                value = ratio;
                argmax_shift = s.shift;
            }
        }
        Ok(Self {
            beta,
            q: samples.q,
            value,
            shift_set: samples.samples.iter().map(|s| s.shift).collect(),
            argmax_shift,
            excluded: samples.excluded.clone(),
        })
    }

    pub const CSV_HEADER: &'static str = "beta,q,value,argmax_shift_x,argmax_shift_y,argmax_shift_z";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.beta, self.q, self.value, self.argmax_shift[0], self.argmax_shift[1], self.argmax_shift[2]
        )
    }
}

pub fn besov_seminorm(u: &SpectralField, beta: f64, q: f64, policy: &ShiftPolicy) -> Result<BesovEstimate> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidSmoothness(beta));
    }
    BesovEstimate::from_samples(&difference_norms(u, q, policy)?, beta)
}

/// `‖u‖_q + [u]_{B^β_{q,∞}}`.
pub fn besov_norm(u: &SpectralField, beta: f64, q: f64, policy: &ShiftPolicy) -> Result<f64> {
    Ok(field::lebesgue_norm(&u.to_physical(), q)? + besov_seminorm(u, beta, q, policy)?.value)
}

/// Regression of `log max_dir ‖u(·+y) - u‖` on `log |y|`.
pub fn fit_regularity(samples: &DifferenceSamples) -> Result<LogLogFit> {
    let mut per_mag: Vec<(f64, f64)> = Vec::new();
    for s in &samples.samples {
        match per_mag.iter_mut().find(|(m, _)| (m - s.magnitude).abs() <= 1e-12 * s.magnitude) {
            Some(entry) => entry.1 = entry.1.max(s.diff_norm),
            None => per_mag.push((s.magnitude, s.diff_norm)),
        }
    }
    let (x, y): (Vec<f64>, Vec<f64>) = per_mag.into_iter().unzip();
    log_log_fit(&x, &y)
}

/// `‖u‖_q + ‖∇u‖_q`.
pub fn sobolev_norm(u: &PhysicalField, q: f64) -> Result<f64> {
    let grad = field::gradient(&u.to_spectral()?)?.to_physical();
    Ok(field::lebesgue_norm(u, q)? + field::lebesgue_norm(&grad, q)?)
}

/// `‖g‖_{L^r(0,T)}` of sampled values `(t, g(t))` by the trapezoid rule;
/// `r = ∞` is the sample maximum.
pub fn time_lebesgue_norm(series: &[(f64, f64)], r: f64) -> Result<f64> {
    if r.is_nan() || r < 1.0 {
        return Err(Error::InvalidExponent(r));
    }
    if series.is_empty() {
        return Err(Error::InvalidInput("empty time series".into()));
    }
    if r.is_infinite() {
        return Ok(series.iter().fold(0.0f64, |m, (_, v)| m.max(v.abs())));
    }
    if series.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidInput("time samples must be strictly increasing".into()));
    }
    let integral: f64 =
        series.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1.abs().powf(r) + w[1].1.abs().powf(r))).sum();
    Ok(integral.powf(1.0 / r))
}

/// Recipe for a random divergence-free field with shell spectrum `~ k^{-slope}`
/// on `k_min <= round(|k|) <= k_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFieldSpec {
    pub slope: f64,
    pub seed: u64,
    pub k_min: u32,
    pub k_max: u32,
}

impl SyntheticFieldSpec {
    /// Widest dealias-safe band on `grid`.
    pub fn full_band(grid: &Grid, slope: f64, seed: u64) -> Self {
        Self { slope, seed, k_min: 1, k_max: grid.dealias_cutoff() as u32 }
    }
}

/// Random-phase solenoidal field with `|û(k)| ∝ |k|^{-(slope+2)/2}` before
/// projection, mean zero, unit `L^2` norm.
pub fn make_synthetic_field(grid: &Grid, spec: &SyntheticFieldSpec) -> Result<PhysicalField> {
    if spec.k_min == 0 || spec.k_min > spec.k_max {
        return Err(Error::InvalidInput(format!("empty band [{}, {}]", spec.k_min, spec.k_max)));
    }
    if spec.k_max as i64 > grid.dealias_cutoff() {
        return Err(Error::InvalidInput(format!(
            "k_max = {} exceeds the dealias limit {}",
            spec.k_max,
            grid.dealias_cutoff()
        )));
    }
    if !spec.slope.is_finite() {
        return Err(Error::InvalidInput("spectral slope must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise: Vec<f64> = (0..3 * grid.points()).map(|_| rng.random::<f64>() - 0.5).collect();
    // White noise gives uniformly random, Hermitian-symmetric phases.
    let white = PhysicalField::new(*grid, 3, noise)?.to_spectral()?;
    let cut = grid.dealias_cutoff();
    let (lo, hi) = (spec.k_min as f64, spec.k_max as f64);
    let mut shaped = SpectralField::zeros(*grid, 3)?;
    let nm = grid.modes();
    for (idx, k) in grid.mode_iter() {
        let kk = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        let shell = kk.round();
        let keep = shell >= lo && shell <= hi && k.iter().all(|c| c.abs() <= cut);
        for c in 0..3 {
            let v = white.component(c)[idx];
            let out = &mut shaped.coefficients_mut()[c * nm + idx];
            *out = if keep && v.norm() > 0.0 {
                v / v.norm() * kk.powf(-(spec.slope + 2.0) / 2.0)
            } else {
                Complex64::default()
            };
        }
    }
    let projected = field::leray_project(&shaped)?;
    let norm = projected.l2_norm();
    if norm == 0.0 {
        return Err(Error::InvalidInput("band contains no resolved modes".into()));
    }
    Ok(projected.scaled(1.0 / norm).to_physical())
}

/// A synthetic field whose slope was tuned so the fitted regularity matches a target.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibratedField {
    pub spec: SyntheticFieldSpec,
    pub fit: LogLogFit,
}

/// Bisects the spectral slope until the fitted `L^q` regularity `β̂` of
/// [`make_synthetic_field`] is within `tol` of `target_beta`.
pub fn calibrate_synthetic(
    grid: &Grid,
    target_beta: f64,
    seed: u64,
    k_min: u32,
    k_max: u32,
    q: f64,
    tol: f64,
) -> Result<CalibratedField> {
    let measure = |slope: f64| -> Result<LogLogFit> {
        let spec = SyntheticFieldSpec { slope, seed, k_min, k_max };
        let u = make_synthetic_field(grid, &spec)?.to_spectral()?;
        fit_regularity(&difference_norms(&u, q, &ShiftPolicy::Dyadic)?)
    };
    let (mut lo, mut hi) = (0.5, 6.0);
    let (f_lo, f_hi) = (measure(lo)?, measure(hi)?);
    if target_beta < f_lo.slope || target_beta > f_hi.slope {
        return Err(Error::InvalidInput(format!(
            "target regularity {target_beta} outside the reachable range [{:.3}, {:.3}] on this band",
            f_lo.slope, f_hi.slope
        )));
    }
    let mut best = (f_lo, lo);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let f = measure(mid)?;
        if (f.slope - target_beta).abs() < (best.0.slope - target_beta).abs() {
            best = (f, mid);
        }
        if (f.slope - target_beta).abs() <= tol {
            break;
        }
        if f.slope < target_beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CalibratedField { spec: SyntheticFieldSpec { slope: best.1, seed, k_min, k_max }, fit: best.0 })
}
