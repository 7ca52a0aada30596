//! Pseudo-spectral incompressible Navier-Stokes (Euler for `ν = 0`) on the
//! torus: `dv/dt = -P div(v⊗v) + νΔv`, with the pressure eliminated by the
//! Leray projector `P`, 2/3-rule dealiasing and integrating-factor RK4.
//!
//! The viscous dissipation `ν∫‖∇v‖²` is integrated with the same RK4 stage
//! weights as the velocity, i.e. as one more component of the ODE system, so
//! the energy budget closes to the order of the scheme.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::besov::{make_synthetic_field, SyntheticFieldSpec};
use crate::error::{Error, Result};
use crate::fft;
use crate::field::{self, Grid, PhysicalField, SpectralField, DOMAIN_LENGTH};

/// Per-step relative energy growth that aborts a run.
pub const ENERGY_GROWTH_TOLERANCE: f64 = 1e-6;

fn default_stride() -> usize {
    100
}

fn default_cfl() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Kinematic viscosity; 0 gives the Euler equations.
    pub nu: f64,
    /// Requested step; the run uses `T / ceil(T / dt)`.
    pub dt: f64,
    #[serde(rename = "T", alias = "t_final")]
    pub t_final: f64,
    /// Trajectory and budget samples are kept every `output_stride` steps.
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    /// CFL number: each step needs `dt <= cfl * h / max |v|`.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

impl SolverConfig {
    pub fn new(nu: f64, dt: f64, t_final: f64) -> Self {
        Self { nu, dt, t_final, output_stride: default_stride(), cfl: default_cfl() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(Error::Config(format!("nu must be finite and >= 0 (got {})", self.nu)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive (got {})", self.dt)));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::Config(format!("T must be positive (got {})", self.t_final)));
        }
        if self.output_stride == 0 {
            return Err(Error::Config("output_stride must be at least 1".into()));
        }
        if !(self.cfl > 0.0) {
            return Err(Error::Config(format!("cfl must be positive (got {})", self.cfl)));
        }
        Ok(())
    }

    /// Number of steps and the step actually taken.
    pub fn steps(&self) -> (usize, f64) {
        let steps = ((self.t_final / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        (steps, self.t_final / steps as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSample {
    pub t: f64,
    /// `½‖v(t)‖²`.
    pub kinetic: f64,
    /// `ν∫_0^t ‖∇v‖²`.
    pub dissipation_cum: f64,
    /// `kinetic + dissipation_cum - ½‖v_0‖²`.
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub samples: Vec<BudgetSample>,
    /// Largest `|residual|` over every step, not only the kept samples.
    pub max_abs_residual: f64,
}

impl EnergyBudget {
    pub const CSV_HEADER: &'static str = "t,kinetic,dissipation_cum,residual";

    pub fn initial(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.kinetic)
    }

    /// `max |residual| / ½‖v_0‖²` (0 for zero data).
    pub fn max_relative_residual(&self) -> f64 {
        let e0 = self.initial();
        if e0 > 0.0 {
            self.max_abs_residual / e0
        } else {
            0.0
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for s in &self.samples {
            writeln!(w, "{},{},{},{}", s.t, s.kinetic, s.dissipation_cum, s.residual)?;
        }
        Ok(())
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct Run {
    pub trajectory: Vec<(f64, PhysicalField)>,
    pub budget: EnergyBudget,
    pub final_state: SpectralField,
    pub steps: usize,
    pub dt: f64,
}

/// Per-mode tables shared by every step.
struct Operator {
    grid: Grid,
    nu: f64,
    kd: Vec<[f64; 3]>,
    /// `|k|^2` of the derivative wavevector (0 where projection is skipped).
    k2: Vec<f64>,
    keep: Vec<bool>,
    weight: Vec<f64>,
}

impl Operator {
    fn new(grid: Grid, nu: f64) -> Self {
        let nm = grid.modes();
        let cut = grid.dealias_cutoff();
        let mut kd = vec![[0.0; 3]; nm];
        let mut k2 = vec![0.0; nm];
        let mut keep = vec![false; nm];
        let mut weight = vec![0.0; nm];
        for (idx, k) in grid.mode_iter() {
            kd[idx] = grid.derivative_wavevector(k);
            k2[idx] = kd[idx].iter().map(|x| x * x).sum();
            keep[idx] = k.iter().all(|c| c.abs() <= cut);
            weight[idx] = grid.hermitian_weight(k[0]);
        }
        Self { grid, nu, kd, k2, keep, weight }
    }

    fn modes(&self) -> usize {
        self.k2.len()
    }

    /// `½‖v‖²` and `ν‖∇v‖²` from the coefficients.
    fn energy_and_dissipation(&self, v: &[Complex64]) -> (f64, f64) {
        let nm = self.modes();
        let (mut e, mut d) = (0.0, 0.0);
        for c in 0..3 {
            for idx in 0..nm {
                let a = self.weight[idx] * v[c * nm + idx].norm_sqr();
                e += a;
                d += a * self.k2[idx];
            }
        }
        let vol = DOMAIN_LENGTH.powi(3);
        (0.5 * vol * e, self.nu * vol * d)
    }

    /// `-P div(v⊗v)`, dealiased, and `max |v|` over the nodes.
    fn nonlinear(&self, v: &[Complex64]) -> (Vec<Complex64>, f64) {
        let n = self.grid.n();
        let np = self.grid.points();
        let nm = self.modes();
        let plan = fft::plan(n);
        let mut phys = vec![0.0; 3 * np];
        let mut scratch = vec![Complex64::default(); nm];
        for c in 0..3 {
            scratch.copy_from_slice(&v[c * nm..(c + 1) * nm]);
            plan.inverse(&mut scratch, &mut phys[c * np..(c + 1) * np]);
        }
        let (u0, rest) = phys.split_at(np);
        let (u1, u2) = rest.split_at(np);
        let mut max_speed = 0.0f64;
        for x in 0..np {
            max_speed = max_speed.max(u0[x] * u0[x] + u1[x] * u1[x] + u2[x] * u2[x]);
        }
        let comps = [u0, u1, u2];

        let mut out = vec![Complex64::default(); 3 * nm];
        let mut prod = vec![0.0; np];
        for (i, j) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
            for ((p, a), b) in prod.iter_mut().zip(comps[i]).zip(comps[j]) {
                *p = a * b;
            }
            plan.forward(&prod, &mut scratch);
            // -∂_j (v_i v_j) into row i, and the symmetric partner into row j.
            for idx in 0..nm {
                if !self.keep[idx] {
                    continue;
                }
                let t = scratch[idx];
                let kd = self.kd[idx];
                out[i * nm + idx] -= Complex64::new(0.0, kd[j]) * t;
                if i != j {
                    out[j * nm + idx] -= Complex64::new(0.0, kd[i]) * t;
                }
            }
        }
        for idx in 0..nm {
            let k2 = self.k2[idx];
            if k2 == 0.0 {
                continue;
            }
            let kd = self.kd[idx];
            let dot = out[idx] * kd[0] + out[nm + idx] * kd[1] + out[2 * nm + idx] * kd[2];
            for c in 0..3 {
                out[c * nm + idx] -= dot * (kd[c] / k2);
            }
        }
        (out, max_speed.sqrt())
    }

    /// Multiplies every component by `exp(-ν|k|²τ)`.
    fn decay(&self, v: &mut [Complex64], tau: f64) {
        if self.nu == 0.0 {
            return;
        }
        let nm = self.modes();
        for idx in 0..nm {
            let f = (-self.nu * self.k2[idx] * tau).exp();
            for c in 0..3 {
                v[c * nm + idx] *= f;
            }
        }
    }
}

/// `-P div(v⊗v) + νΔv` for a divergence-free vector field.
pub fn rhs(v: &SpectralField, nu: f64) -> Result<SpectralField> {
    if v.components() != 3 {
        return Err(Error::WrongComponents { expected: 3, found: v.components() });
    }
    field::check_solenoidal(v)?;
    let op = Operator::new(v.grid(), nu);
    let (mut out, _) = op.nonlinear(v.coefficients());
    let nm = op.modes();
    for c in 0..3 {
        for idx in 0..nm {
            out[c * nm + idx] -= nu * op.k2[idx] * v.coefficients()[c * nm + idx];
        }
    }
    Ok(SpectralField::from_raw(v.grid(), 3, out))
}

/// Integrates from `v0` to `T`. `v0` must be divergence-free with zero mean;
/// modes outside the 2/3 band are discarded first.
pub fn run(v0: &PhysicalField, config: &SolverConfig) -> Result<Run> {
    let mut trajectory = Vec::new();
    let (budget, final_state, steps, dt) = integrate(v0, config, |t, v| {
        trajectory.push((t, v.to_physical()));
        Ok(())
    })?;
    Ok(Run { trajectory, budget, final_state, steps, dt })
}

/// Like [`run`], but hands each kept sample to `observe` instead of storing it.
pub fn integrate(
    v0: &PhysicalField,
    config: &SolverConfig,
    mut observe: impl FnMut(f64, &SpectralField) -> Result<()>,
) -> Result<(EnergyBudget, SpectralField, usize, f64)> {
    config.validate()?;
    if v0.components() != 3 {
        return Err(Error::WrongComponents { expected: 3, found: v0.components() });
    }
    let grid = v0.grid();
    let spec = v0.to_spectral()?;
    let scale = v0.max_abs().max(f64::MIN_POSITIVE);
    let mean = v0.mean();
    if mean.iter().any(|m| m.abs() > 1e-12 * scale) {
        return Err(Error::NonZeroMean([mean[0], mean[1], mean[2]]));
    }
    field::check_solenoidal(&spec)?;
    let truncated = field::dealias(&spec);
    if truncated.max_abs_diff(&spec) > 1e-14 * scale {
        log::warn!("initial datum has modes outside the 2/3 band; they are discarded");
    }

    let op = Operator::new(grid, config.nu);
    let (steps, dt) = config.steps();
    let h = grid.spacing();
    let nm = op.modes();
    let mut v = truncated.coefficients().to_vec();
    let (e0, _) = op.energy_and_dissipation(&v);
    let mut kinetic = e0;
    let mut dissipated = 0.0;
    let mut budget = EnergyBudget::default();
    let sample = |t: f64, kinetic: f64, dissipated: f64| BudgetSample {
        t,
        kinetic,
        dissipation_cum: dissipated,
        residual: kinetic + dissipated - e0,
    };
    budget.samples.push(sample(0.0, e0, 0.0));
    observe(0.0, &SpectralField::from_raw(grid, 3, v.clone()))?;

    let combine = |base: &[Complex64], k: &[Complex64], a: f64| -> Vec<Complex64> {
        base.iter().zip(k).map(|(x, y)| x + a * y).collect()
    };
    for step in 1..=steps {
        let (k1, speed) = op.nonlinear(&v);
        if !speed.is_finite() {
            return Err(Error::Blowup(step));
        }
        if speed > 0.0 && dt > config.cfl * h / speed {
            return Err(Error::Cfl { step, dt, limit: config.cfl * h / speed });
        }
        let mut v2 = combine(&v, &k1, 0.5 * dt);
        op.decay(&mut v2, 0.5 * dt);
        let (k2, _) = op.nonlinear(&v2);
        let mut ev_half = v.clone();
        op.decay(&mut ev_half, 0.5 * dt);
        let v3 = combine(&ev_half, &k2, 0.5 * dt);
        let (k3, _) = op.nonlinear(&v3);
        let mut ek3 = k3.clone();
        op.decay(&mut ek3, 0.5 * dt);
        let mut v4 = ev_half.clone();
        op.decay(&mut v4, 0.5 * dt);
        v4.iter_mut().zip(&ek3).for_each(|(a, b)| *a += dt * b);
        let (k4, _) = op.nonlinear(&v4);

        let d = [&v, &v2, &v3, &v4].map(|s| op.energy_and_dissipation(s).1);
        dissipated += dt / 6.0 * (d[0] + 2.0 * d[1] + 2.0 * d[2] + d[3]);

        // v <- E(dt) v + dt/6 (E(dt) k1 + 2 E(dt/2)(k2 + k3) + k4)
        let mut mid: Vec<Complex64> = k2.iter().zip(&k3).map(|(a, b)| 2.0 * (a + b)).collect();
        op.decay(&mut mid, 0.5 * dt);
        let mut next = combine(&v, &k1, dt / 6.0);
        op.decay(&mut next, dt);
        for i in 0..3 * nm {
            next[i] += dt / 6.0 * (mid[i] + k4[i]);
        }
        v = next;

        let (e, _) = op.energy_and_dissipation(&v);
        if !e.is_finite() {
            return Err(Error::Blowup(step));
        }
        if kinetic > 0.0 && (e - kinetic) / kinetic > ENERGY_GROWTH_TOLERANCE {
            return Err(Error::EnergyGrowth { step, relative: (e - kinetic) / kinetic });
        }
        kinetic = e;
        let s = sample(step as f64 * dt, kinetic, dissipated);
        budget.max_abs_residual = budget.max_abs_residual.max(s.residual.abs());
        if step % config.output_stride == 0 || step == steps {
            budget.samples.push(s);
            observe(s.t, &SpectralField::from_raw(grid, 3, v.clone()))?;
        }
    }
    Ok((budget, SpectralField::from_raw(grid, 3, v), steps, dt))
}

/// `A (sin x cos y cos z, -cos x sin y cos z, 0)`, with `½‖v‖² = A²π³`.
pub fn taylor_green(grid: Grid, amplitude: f64) -> Result<PhysicalField> {
    PhysicalField::from_fn(grid, |x| {
        [amplitude * x[0].sin() * x[1].cos() * x[2].cos(), -amplitude * x[0].cos() * x[1].sin() * x[2].cos(), 0.0]
    })
}

/// `½‖v‖²` of [`taylor_green`].
pub fn taylor_green_energy(amplitude: f64) -> f64 {
    amplitude * amplitude * PI.powi(3)
}

/// Random divergence-free, mean-zero initial data with unit `L²` norm.
pub fn random_leray_hopf_data(grid: &Grid, spec: &SyntheticFieldSpec) -> Result<PhysicalField> {
    make_synthetic_field(grid, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_green_is_solenoidal_with_known_energy() {
        let g = Grid::new(16).unwrap();
        let v = taylor_green(g, 1.3).unwrap();
        let s = v.to_spectral().unwrap();
        assert!(field::max_divergence(&s).unwrap() < 1e-13);
        assert!(v.mean().iter().all(|m| m.abs() < 1e-15));
        let e = 0.5 * field::lebesgue_norm(&v, 2.0).unwrap().powi(2);
        assert!((e - taylor_green_energy(1.3)).abs() < 1e-12 * e);
    }

    #[test]
    fn rhs_of_shear_flow_is_pure_diffusion() {
        let g = Grid::new(16).unwrap();
        let v = PhysicalField::from_fn(g, |x| [x[1].sin(), 0.0, 0.0]).unwrap().to_spectral().unwrap();
        let r = rhs(&v, 0.3).unwrap();
        assert!(r.max_abs_diff(&v.scaled(-0.3)) < 1e-15);
        let zero = SpectralField::zeros(g, 3).unwrap();
        assert_eq!(rhs(&zero, 0.1).unwrap().max_abs_diff(&zero), 0.0);
    }

    #[test]
    fn rhs_rejects_divergent_input() {
        let g = Grid::new(16).unwrap();
        let v = PhysicalField::from_fn(g, |x| [x[0].sin(), 0.0, 0.0]).unwrap().to_spectral().unwrap();
        assert!(matches!(rhs(&v, 0.1), Err(Error::NotSolenoidal { .. })));
    }

    #[test]
    fn rhs_matches_trajectory_derivative() {
        // Fourth-order one-sided difference of a fine-step run.
        let g = Grid::new(16).unwrap();
        let v0 = taylor_green(g, 1.0).unwrap();
        let nu = 0.05;
        let delta = 1e-2;
        let mut cfg = SolverConfig::new(nu, 1e-3, 4.0 * delta);
        cfg.output_stride = 10;
        let run = run(&v0, &cfg).unwrap();
        assert_eq!(run.trajectory.len(), 5);
        let s: Vec<SpectralField> = run.trajectory.iter().map(|(_, f)| f.to_spectral().unwrap()).collect();
        let c = [-25.0, 48.0, -36.0, 16.0, -3.0];
        let mut fd = SpectralField::zeros(g, 3).unwrap();
        for (ci, si) in c.iter().zip(&s) {
            fd.axpy(ci / (12.0 * delta), si);
        }
        let r = rhs(&s[0], nu).unwrap();
        let scale = r.to_physical().max_abs();
        assert!(fd.max_abs_diff(&r) < 1e-6 * scale, "{}", fd.max_abs_diff(&r));
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = Grid::new(8).unwrap();
        let r = run(&PhysicalField::zeros(g, 3).unwrap(), &SolverConfig::new(0.1, 0.1, 0.5)).unwrap();
        assert!(r.trajectory.iter().all(|(_, f)| f.max_abs() == 0.0));
        assert_eq!(r.budget.max_relative_residual(), 0.0);
    }

    #[test]
    fn rejects_mean_flow_and_bad_config() {
        let g = Grid::new(8).unwrap();
        let v = PhysicalField::from_fn(g, |x| [1.0 + x[1].sin(), 0.0, 0.0]).unwrap();
        assert!(matches!(run(&v, &SolverConfig::new(0.1, 0.01, 0.1)), Err(Error::NonZeroMean(_))));
        let v = taylor_green(g, 1.0).unwrap();
        assert!(run(&v, &SolverConfig::new(-1.0, 0.01, 0.1)).is_err());
        assert!(run(&v, &SolverConfig::new(0.1, 0.0, 0.1)).is_err());
    }

    #[test]
    fn cfl_violation_aborts() {
        let g = Grid::new(16).unwrap();
        let v = taylor_green(g, 10.0).unwrap();
        let err = run(&v, &SolverConfig::new(0.0, 0.1, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Cfl { step: 1, .. }), "{err}");
    }

    #[test]
    fn euler_conserves_energy_and_momentum() {
        let g = Grid::new(16).unwrap();
        let v0 = random_leray_hopf_data(&g, &SyntheticFieldSpec { slope: 2.0, seed: 4, k_min: 1, k_max: 5 }).unwrap();
        let mut cfg = SolverConfig::new(0.0, 5e-3, 0.5);
        cfg.output_stride = 20;
        let r = run(&v0, &cfg).unwrap();
        assert!(r.budget.max_relative_residual() < 1e-8, "{}", r.budget.max_relative_residual());
        for (_, f) in &r.trajectory {
            assert!(f.mean().iter().all(|m| m.abs() < 1e-15));
            let s = f.to_spectral().unwrap();
            assert!(field::max_divergence(&s).unwrap() < 1e-11 * f.max_abs().max(1.0));
        }
        assert!(r.budget.samples.iter().all(|s| s.dissipation_cum == 0.0));
    }

    #[test]
    fn budget_error_is_third_order_or_better() {
        let g = Grid::new(16).unwrap();
        let v0 = random_leray_hopf_data(&g, &SyntheticFieldSpec { slope: 2.0, seed: 9, k_min: 1, k_max: 5 }).unwrap();
        let res = |dt: f64| run(&v0, &SolverConfig::new(0.05, dt, 0.4)).unwrap().budget.max_relative_residual();
        let (a, b) = (res(0.04), res(0.02));
        assert!(a / b >= 8.0, "{a} {b}");
    }

    #[test]
    fn vanishing_viscosity_on_fixed_grid() {
        let g = Grid::new(16).unwrap();
        let v0 = taylor_green(g, 1.0).unwrap();
        let end = |nu: f64| run(&v0, &SolverConfig::new(nu, 0.01, 0.5)).unwrap().final_state;
        let euler = end(0.0);
        let dist: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&nu| {
                let mut d = end(nu);
                d.axpy(-1.0, &euler);
                d.l2_norm()
            })
            .collect();
        assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
    }

    #[test]
    fn budget_csv_layout() {
        let g = Grid::new(8).unwrap();
        let mut cfg = SolverConfig::new(0.1, 0.05, 0.2);
        cfg.output_stride = 2;
        let r = run(&taylor_green(g, 1.0).unwrap(), &cfg).unwrap();
        let mut out = Vec::new();
        r.budget.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], EnergyBudget::CSV_HEADER);
        assert_eq!(lines.len(), 1 + 3);
    }
}
