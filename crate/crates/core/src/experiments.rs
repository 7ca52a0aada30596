//! End-to-end scaling experiments: flux decay in `ε` for the Besov-type
//! criterion, `I₁` decay for the gradient criterion, and the energy defect
//! in a vanishing-viscosity sweep. Configurations are TOML; results are
//! reported as JSON `{config, rows, fits, verdicts}` plus CSV rows and a
//! gnuplot script.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::besov::{
    besov_seminorm, calibrate_synthetic, difference_norms, fit_regularity, make_synthetic_field, time_lebesgue_norm,
    ShiftPolicy, SyntheticFieldSpec,
};
use crate::commutator::{self, CetOptions, FluxReport, FluxScaling, DEGENERATE_FLUX};
use crate::error::{Error, Result};
use crate::exponents::{self, Branch, Thm2Params, Thm3Rates};
use crate::field::{self, Grid, PhysicalField};
use crate::fit::{log_log_fit, LogLogFit, Verdict};
use crate::mollify::{Epsilon, MollifierKernel, Multiplier, Profile, Resolution};
use crate::solver::{self, SolverConfig};

/// Allowed slope deficit of the gradient-criterion check.
pub const GRADIENT_SLOPE_TOLERANCE: f64 = 0.15;
/// Allowed slope deficit of the viscosity sweep.
pub const DEFECT_SLOPE_TOLERANCE: f64 = 0.2;
/// Defects below this fraction of the initial energy count as unmeasurable.
pub const DEFECT_FLOOR: f64 = 1e-12;

/// Reads a TOML file into `T`.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Kernel section of a config; only the radial profile is configurable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default = "default_profile")]
    pub profile: Profile,
}

fn default_profile() -> Profile {
    Profile::Bump
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { profile: default_profile() }
    }
}

impl KernelConfig {
    pub fn kernel(&self) -> Result<MollifierKernel> {
        match self.profile {
            Profile::Bump => Ok(MollifierKernel::bump()),
            _ => MollifierKernel::normalized(self.profile.clone()),
        }
    }
}

/// Where a field comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSource {
    TaylorGreen {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Random solenoidal field with energy spectrum `~ k^{-slope}`.
    Synthetic {
        slope: f64,
        k_min: u32,
        k_max: u32,
    },
    /// Synthetic field whose slope is bisected until the fitted regularity
    /// (in `L^2`) hits `target_beta`.
    Calibrated {
        target_beta: f64,
        k_min: u32,
        k_max: u32,
    },
    Snapshot {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl FieldSource {
    pub fn build(&self, n: usize, seed: u64) -> Result<PhysicalField> {
        let grid = Grid::new(n)?;
        match self {
            FieldSource::TaylorGreen { amplitude } => solver::taylor_green(grid, *amplitude),
            FieldSource::Synthetic { slope, k_min, k_max } => {
                make_synthetic_field(&grid, &SyntheticFieldSpec { slope: *slope, seed, k_min: *k_min, k_max: *k_max })
            }
            FieldSource::Calibrated { target_beta, k_min, k_max } => {
                let c = calibrate_synthetic(&grid, *target_beta, seed, *k_min, *k_max, 2.0, 0.01)?;
                log::info!("calibrated slope {} gives fitted regularity {}", c.spec.slope, c.fit.slope);
                make_synthetic_field(&grid, &c.spec)
            }
            FieldSource::Snapshot { path } => {
                let f = PhysicalField::read_snapshot(fs::File::open(path)?)?;
                if f.grid().n() != n {
                    return Err(Error::Config(format!(
                        "snapshot {} has {} points per axis, config says {n}",
                        path.display(),
                        f.grid().n()
                    )));
                }
                Ok(f)
            }
        }
    }
}

/// One plotted curve with an optional reference slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
    pub reference_slope: Option<f64>,
}

/// Uniform JSON report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub config: serde_json::Value,
    pub rows: serde_json::Value,
    pub fits: BTreeMap<String, LogLogFit>,
    pub predictions: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub notes: Vec<String>,
    pub series: Vec<Series>,
}

impl Report {
    /// True when any verdict is a failure.
    pub fn failed(&self) -> bool {
        self.verdicts.values().any(|v| v.is_failure())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(fs::File::open(path)?)?)
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn default_ppr() -> usize {
    CetOptions::default().points_per_radius
}

/// Arguments of [`run_flux_scaling`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxScalingConfig {
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    pub field: FieldSource,
    /// Time-integrability parameter; sets `q = 2/(1-α)` for the measured
    /// regularity and enters the predicted rate.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Regularity used in the prediction; the measured value when absent.
    #[serde(default)]
    pub beta: Option<f64>,
    pub eps: Vec<f64>,
    #[serde(default = "default_ppr")]
    pub points_per_radius: usize,
    #[serde(default)]
    pub kernel: KernelConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FluxScalingResult {
    pub config: FluxScalingConfig,
    /// Exponent of the measured difference norms (`None` for constant fields).
    pub regularity: Option<LogLogFit>,
    pub q: f64,
    pub beta_used: f64,
    pub scaling: FluxScaling,
    /// `‖[v(t)]_{B^β_{q,∞}}‖_{L^{1/α}(0,T)}` when a trajectory was supplied.
    pub time_norm: Option<f64>,
    pub verdict: Verdict,
}

/// Measures the regularity of a field, then the decay of `I₁ + I₂` in `ε`.
pub fn run_flux_scaling(
    config: &FluxScalingConfig,
    trajectory: Option<&[(f64, PhysicalField)]>,
) -> Result<FluxScalingResult> {
    let u = config.field.build(config.grid, config.seed)?;
    run_flux_scaling_on(config, &u, trajectory)
}

/// [`run_flux_scaling`] on an already built field.
pub fn run_flux_scaling_on(
    config: &FluxScalingConfig,
    u: &PhysicalField,
    trajectory: Option<&[(f64, PhysicalField)]>,
) -> Result<FluxScalingResult> {
    if let Some(a) = config.alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Constraint(format!("0 < alpha < 1 (got {a})")));
        }
    }
    let q = config.alpha.map_or(2.0, |a| 2.0 / (1.0 - a));
    let spec = u.to_spectral()?;
    let regularity = fit_regularity(&difference_norms(&spec, q, &ShiftPolicy::default())?).ok();
    let beta_used = config.beta.or(regularity.map(|f| f.slope.clamp(1e-6, 1.0))).unwrap_or(1.0);
    let kernel = config.kernel.kernel()?;
    let opts = CetOptions { points_per_radius: config.points_per_radius, allow_under_resolved: false };
    let scaling = commutator::flux_scaling(u, beta_used, config.alpha, &config.eps, &kernel, &opts)?;

    let hypothesis_met = match (config.alpha, regularity) {
        (Some(a), Some(fit)) => fit.slope > a,
        _ => true,
    };
    let verdict = if scaling.verdict == Verdict::Degenerate {
        Verdict::Degenerate
    } else if !hypothesis_met {
        Verdict::HypothesisNotMet
    } else {
        scaling.verdict
    };

    let time_norm = match (trajectory, config.alpha) {
        (Some(traj), Some(a)) => {
            let series = traj
                .iter()
                .map(|(t, v)| Ok((*t, besov_seminorm(&v.to_spectral()?, beta_used, q, &ShiftPolicy::default())?.value)))
                .collect::<Result<Vec<_>>>()?;
            Some(time_lebesgue_norm(&series, 1.0 / a)?)
        }
        _ => None,
    };
    Ok(FluxScalingResult { config: config.clone(), regularity, q, beta_used, scaling, time_norm, verdict })
}

impl FluxScalingResult {
    pub fn report(&self) -> Report {
        let mut fits = BTreeMap::new();
        if let Some(f) = self.scaling.fit {
            fits.insert("flux".into(), f);
        }
        if let Some(f) = self.regularity {
            fits.insert("regularity".into(), f);
        }
        let mut notes = Vec::new();
        if !self.scaling.skipped.is_empty() {
            notes.push(format!("epsilon below 4 grid spacings skipped: {:?}", self.scaling.skipped));
        }
        if let Some(t) = self.time_norm {
            notes.push(format!("time-composed Besov norm: {t}"));
        }
        Report {
            kind: "flux_scaling".into(),
            config: to_value(&self.config),
            rows: to_value(&self.scaling.rows),
            fits,
            predictions: BTreeMap::from([("flux".into(), self.scaling.prediction)]),
            verdicts: BTreeMap::from([("flux".into(), self.verdict)]),
            notes,
            series: vec![Series {
                name: "I1 + I2".into(),
                x_label: "epsilon".into(),
                y_label: "I1 + I2".into(),
                points: self.scaling.rows.iter().map(|r| (r.eps, r.total())).collect(),
                reference_slope: Some(self.scaling.prediction),
            }],
        }
    }
}

/// Arguments of [`run_gradient_scaling`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientScalingConfig {
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    pub field: FieldSource,
    /// Spatial integrability of `∇v`.
    pub q: f64,
    /// Defaults to the midpoint of the admissible interval.
    #[serde(default)]
    pub p: Option<f64>,
    pub eps: Vec<f64>,
    #[serde(default = "default_ppr")]
    pub points_per_radius: usize,
    #[serde(default)]
    pub kernel: KernelConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientScalingResult {
    pub config: GradientScalingConfig,
    pub exponents: Thm2Params,
    pub predicted: f64,
    /// `‖∇u‖_q`.
    pub gradient_norm: f64,
    pub rows: Vec<FluxReport>,
    pub skipped: Vec<f64>,
    pub fit: Option<LogLogFit>,
    pub verdict: Verdict,
}

/// Checks that `I₁` decays at least as fast as `ε^{2q(p-1)/(p(q-2)) - 3(1/q - 1/p')}`.
pub fn run_gradient_scaling(config: &GradientScalingConfig) -> Result<GradientScalingResult> {
    let u = config.field.build(config.grid, config.seed)?;
    run_gradient_scaling_on(config, &u)
}

pub fn run_gradient_scaling_on(config: &GradientScalingConfig, u: &PhysicalField) -> Result<GradientScalingResult> {
    let interval = exponents::thm2_parameters(config.q, None)?;
    let p = config.p.unwrap_or_else(|| interval.midpoint());
    let thm2 = exponents::thm2_parameters(config.q, Some(p))?;
    let predicted = thm2.eps_exponent.expect("p was supplied");
    let kernel = config.kernel.kernel()?;
    let opts = CetOptions { points_per_radius: config.points_per_radius, allow_under_resolved: false };
    let gradient_norm = field::lebesgue_norm(&field::gradient(&u.to_spectral()?)?.to_physical(), config.q)?;
    let (rows, skipped) = commutator::flux_rows(u, &config.eps, &kernel, &opts)?;
    let degenerate = rows.iter().any(|r| !(r.i1 > DEGENERATE_FLUX * r.trilinear_scale));
    let fit = if degenerate {
        None
    } else {
        let x: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.i1).collect();
        Some(log_log_fit(&x, &y)?)
    };
    let verdict = match fit {
        None => Verdict::Degenerate,
        Some(f) => Verdict::one_sided(f.slope, predicted, GRADIENT_SLOPE_TOLERANCE),
    };
    Ok(GradientScalingResult {
        config: config.clone(),
        exponents: thm2,
        predicted,
        gradient_norm,
        rows,
        skipped,
        fit,
        verdict,
    })
}

impl GradientScalingResult {
    pub fn report(&self) -> Report {
        let mut fits = BTreeMap::new();
        if let Some(f) = self.fit {
            fits.insert("i1".into(), f);
        }
        Report {
            kind: "gradient_scaling".into(),
            config: to_value(&self.config),
            rows: to_value(&self.rows),
            fits,
            predictions: BTreeMap::from([
                ("i1".into(), self.predicted),
                ("r_critical".into(), self.exponents.r_critical),
            ]),
            verdicts: BTreeMap::from([("i1".into(), self.verdict)]),
            notes: vec![format!("||grad u||_q = {}", self.gradient_norm)],
            series: vec![Series {
                name: "I1".into(),
                x_label: "epsilon".into(),
                y_label: "I1".into(),
                points: self.rows.iter().map(|r| (r.eps, r.i1)).collect(),
                reference_slope: Some(self.predicted),
            }],
        }
    }
}

/// `ε(ν)` coupling: one of the two case formulas, or an explicit exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coupling {
    Branch(Branch),
    Exponent(f64),
}

impl Coupling {
    pub fn exponent(&self, alpha: f64, beta: f64) -> f64 {
        match self {
            Coupling::Branch(Branch::Low) => alpha / (alpha + beta - 2.0 * alpha * beta),
            Coupling::Branch(Branch::High) => alpha / beta,
            Coupling::Exponent(e) => *e,
        }
    }
}

fn default_eps_scale() -> f64 {
    1.0
}

fn default_sweep_stride() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Strictly decreasing viscosities.
    pub nu_list: Vec<f64>,
    pub coupling: Coupling,
    pub grid: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub init: FieldSource,
    #[serde(default)]
    pub seed: u64,
    /// Configured constant of the uniform bound on the Besov time norm.
    pub uniform_bound_c: f64,
    /// `ε(ν) = eps_scale (ν/ν_max)^e`.
    #[serde(default = "default_eps_scale")]
    pub eps_scale: f64,
    #[serde(default = "default_sweep_stride")]
    pub output_stride: usize,
    #[serde(default)]
    pub kernel: KernelConfig,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu_list.len() < 2 {
            return Err(Error::Config("nu_list needs at least two viscosities".into()));
        }
        if self.nu_list.iter().any(|nu| !(*nu > 0.0)) {
            return Err(Error::Config("viscosities must be positive".into()));
        }
        if self.nu_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("nu_list must be strictly decreasing".into()));
        }
        if !(self.eps_scale > 0.0 && self.eps_scale <= 1.0) {
            return Err(Error::Config(format!("eps_scale must lie in (0, 1] (got {})", self.eps_scale)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub nu: f64,
    pub eps: f64,
    /// `|½‖v(T)‖² - ½‖v_0‖²|`.
    pub defect: f64,
    /// `ν∫_0^T ‖∇v_ε‖²` (trapezoid over trajectory samples).
    pub dissipation: f64,
    /// `‖[v(t)]_{B^β_{q,∞}}‖_{L^{1/α}(0,T)}` with `q = 2/(1-α)`.
    pub besov_time_norm: f64,
    /// Largest relative residual of the solver's energy budget.
    pub budget_residual: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "nu,eps,defect,dissipation,besov_time_norm";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.nu, self.eps, self.defect, self.dissipation, self.besov_time_norm)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rates: Thm3Rates,
    /// Exponent `e` of the coupling actually used.
    pub coupling_exponent: f64,
    pub rows: Vec<SweepRow>,
    /// `(ν, ε)` pairs dropped because `ε < 2h`.
    pub skipped: Vec<(f64, f64)>,
    pub fit: Option<LogLogFit>,
    pub max_besov_time_norm: f64,
    pub uniform_bound_holds: bool,
    pub verdict: Verdict,
}

/// Runs the solver for every `ν` from the same initial datum and fits the
/// energy defect against `ν`.
pub fn run_viscosity_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let rates = exponents::thm3_rates(config.alpha, config.beta)?;
    let e = config.coupling.exponent(config.alpha, config.beta);
    let v0 = config.init.build(config.grid, config.seed)?;
    let grid = v0.grid();
    let nu_max = config.nu_list[0];

    let mut plan = Vec::new();
    let mut skipped = Vec::new();
    for &nu in &config.nu_list {
        let eps = config.eps_scale * (nu / nu_max).powf(e);
        match Epsilon::new(eps).map(|x| x.resolution(&grid)) {
            Ok(Resolution::Resolved) | Ok(Resolution::Marginal) => plan.push((nu, eps)),
            _ => {
                log::warn!("nu = {nu}: epsilon {eps} is below two grid spacings; skipped");
                skipped.push((nu, eps));
            }
        }
    }
    if plan.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "only {} viscosities have a resolved epsilon; at least 4 are needed",
            plan.len()
        )));
    }

    let kernel = config.kernel.kernel()?;
    let q = 2.0 / (1.0 - config.alpha);
    let rows = map_nu(&plan, |(nu, eps)| sweep_row(config, &v0, nu, eps, &kernel, q))?;

    let max_besov_time_norm = rows.iter().map(|r| r.besov_time_norm).fold(0.0, f64::max);
    let e0 = 0.5 * field::lebesgue_norm(&v0, 2.0)?.powi(2);
    let below_floor = rows.iter().all(|r| r.defect <= DEFECT_FLOOR * e0);
    let fit = if below_floor {
        None
    } else {
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.defect > 0.0).map(|r| (r.nu, r.defect)).unzip();
        Some(log_log_fit(&x, &y)?)
    };
    let verdict = match fit {
        None => Verdict::Pass,
        Some(f) => Verdict::one_sided(f.slope, rates.defect_exponent, DEFECT_SLOPE_TOLERANCE),
    };
    Ok(SweepResult {
        config: config.clone(),
        rates,
        coupling_exponent: e,
        rows,
        skipped,
        fit,
        max_besov_time_norm,
        uniform_bound_holds: max_besov_time_norm <= config.uniform_bound_c,
        verdict,
    })
}

fn sweep_row(
    config: &SweepConfig,
    v0: &PhysicalField,
    nu: f64,
    eps: f64,
    kernel: &MollifierKernel,
    q: f64,
) -> Result<SweepRow> {
    let grid = v0.grid();
    let mult = Multiplier::new(&grid, Epsilon::new(eps)?, kernel);
    let mut cfg = SolverConfig::new(nu, config.dt, config.t_final);
    cfg.output_stride = config.output_stride;
    let mut grad_sq = Vec::new();
    let mut besov = Vec::new();
    let (budget, _, _, _) = solver::integrate(v0, &cfg, |t, v| {
        let g = field::gradient(&mult.apply(v))?.l2_norm();
        grad_sq.push((t, g * g));
        besov.push((t, besov_seminorm(v, config.beta, q, &ShiftPolicy::default())?.value));
        Ok(())
    })?;
    let dissipation = nu * grad_sq.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum::<f64>();
    let first = budget.samples.first().expect("budget starts at t = 0");
    let last = budget.samples.last().expect("budget ends at T");
    Ok(SweepRow {
        nu,
        eps,
        defect: (last.kinetic - first.kinetic).abs(),
        dissipation,
        besov_time_norm: time_lebesgue_norm(&besov, 1.0 / config.alpha)?,
        budget_residual: budget.max_relative_residual(),
    })
}

/// Independent runs, in parallel when enabled; output keeps input order.
fn map_nu<T: Send>(plan: &[(f64, f64)], f: impl Fn((f64, f64)) -> Result<T> + Sync) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        plan.par_iter().map(|&p| f(p)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        plan.iter().map(|&p| f(p)).collect()
    }
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", SweepRow::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn report(&self) -> Report {
        let mut fits = BTreeMap::new();
        if let Some(f) = self.fit {
            fits.insert("defect".into(), f);
        }
        let mut notes = vec![
            format!(
                "branch {:?}: eps ~ nu^{}, defect ~ nu^{}",
                self.rates.branch, self.rates.eps_exponent, self.rates.defect_exponent
            ),
            format!(
                "max Besov time norm {} vs configured bound {} ({})",
                self.max_besov_time_norm,
                self.config.uniform_bound_c,
                if self.uniform_bound_holds { "holds" } else { "exceeded" }
            ),
        ];
        if let Some(w) = &self.rates.warning {
            notes.push(w.clone());
        }
        for (nu, eps) in &self.skipped {
            notes.push(format!("nu = {nu} skipped: epsilon {eps} below two grid spacings"));
        }
        if self.fit.is_none() {
            notes.push("every defect is below the measurement floor".into());
        }
        Report {
            kind: "viscosity_sweep".into(),
            config: to_value(&self.config),
            rows: to_value(&self.rows),
            fits,
            predictions: BTreeMap::from([
                ("defect".into(), self.rates.defect_exponent),
                ("eps".into(), self.coupling_exponent),
            ]),
            verdicts: BTreeMap::from([("defect".into(), self.verdict)]),
            notes,
            series: vec![Series {
                name: "energy defect".into(),
                x_label: "nu".into(),
                y_label: "defect".into(),
                points: self.rows.iter().map(|r| (r.nu, r.defect)).collect(),
                reference_slope: Some(self.rates.defect_exponent),
            }],
        }
    }
}

/// Run configuration of a single solver run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: usize,
    pub nu: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub init: FieldSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_run_stride")]
    pub output_stride: usize,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_run_stride() -> usize {
    100
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    /// Directory for `budget.csv` and trajectory snapshots.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub snapshots: bool,
}

impl RunConfig {
    pub fn solver(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.nu, self.dt, self.t_final);
        c.output_stride = self.output_stride;
        c
    }
}

/// Runs the solver and writes `budget.csv` (and snapshots when asked).
pub fn run_solver(config: &RunConfig) -> Result<solver::Run> {
    let v0 = config.init.build(config.grid, config.seed)?;
    let run = solver::run(&v0, &config.solver())?;
    if let Some(dir) = &config.output.dir {
        fs::create_dir_all(dir)?;
        run.budget.write_csv(fs::File::create(dir.join("budget.csv"))?)?;
        if config.output.snapshots {
            for (i, (_, f)) in run.trajectory.iter().enumerate() {
                f.write_snapshot(fs::File::create(dir.join(format!("snapshot_{i:05}.bin")))?)?;
            }
        }
    }
    Ok(run)
}

/// A gnuplot script with one log-log panel per series, data inlined, and a
/// dashed reference power law through each first point.
pub fn emit_plots(reports: &[Report], output: &str) -> String {
    let series: Vec<&Series> = reports.iter().flat_map(|r| &r.series).filter(|s| !s.points.is_empty()).collect();
    let mut s = String::new();
    let _ = writeln!(s, "# generated by fluxlab");
    let _ = writeln!(s, "set terminal pngcairo size {},450", 600 * series.len().max(1));
    let _ = writeln!(s, "set output '{output}'");
    let _ = writeln!(s, "set logscale xy");
    let _ = writeln!(s, "set key left top");
    let _ = writeln!(s, "set multiplot layout 1,{}", series.len().max(1));
    for (i, ser) in series.iter().enumerate() {
        let _ = writeln!(s, "$data{i} << EOD");
        for (x, y) in &ser.points {
            let _ = writeln!(s, "{x:e} {y:e}");
        }
        let _ = writeln!(s, "EOD");
        let _ = writeln!(s, "set title '{}'", ser.name);
        let _ = writeln!(s, "set xlabel '{}'", ser.x_label);
        let _ = writeln!(s, "set ylabel '{}'", ser.y_label);
        match ser.reference_slope {
            Some(p) => {
                let (x0, y0) = ser.points[0];
                let _ = writeln!(
                    s,
                    "plot $data{i} using 1:2 with linespoints title 'measured', \
                     {y0:e}*(x/{x0:e})**({p:e}) with lines dashtype 2 title 'slope {p:.3}'"
                );
            }
            None => {
                let _ = writeln!(s, "plot $data{i} using 1:2 with linespoints title 'measured'");
            }
        }
    }
    let _ = writeln!(s, "unset multiplot");
    s
}
