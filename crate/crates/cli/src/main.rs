use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use fluxlab::besov::{self, ShiftPolicy};
use fluxlab::commutator::{self, CetOptions, FluxReport, IDENTITY_TOLERANCE, TRILINEAR_TOLERANCE};
use fluxlab::experiments::{self, FieldSource, Report};
use fluxlab::exponents;
use fluxlab::mollify::{self, Epsilon, MollifierKernel};
use fluxlab::{Error, Grid, PhysicalField, Result};

#[derive(Parser)]
#[command(
    name = "fluxlab",
    version,
    about = "Mollifier, commutator-flux and vanishing-viscosity experiments on the 3-torus"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exponent tables for (alpha, beta) or for q.
    Exponents(ExponentsArgs),
    /// Mollify a field and optionally measure the convolution bounds.
    Mollify(MollifyArgs),
    /// Estimate difference norms, fitted regularity and a Besov semi-norm.
    Besov(BesovArgs),
    /// Check the commutator identity and the vanishing trilinear term.
    CommutatorCheck(CheckArgs),
    /// Flux decay in epsilon for a field of measured regularity.
    FluxScaling(FluxArgs),
    /// Decay of I1 in epsilon under the gradient criterion.
    GradientScaling(ConfigArgs),
    /// Run the solver and write the energy budget.
    Solve(ConfigArgs),
    /// Energy defect across a decreasing list of viscosities.
    Sweep(ConfigArgs),
    /// Emit a gnuplot script from JSON reports.
    Plot(PlotArgs),
}

#[derive(Args)]
struct ExponentsArgs {
    #[arg(long, requires = "beta", conflicts_with = "q")]
    alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    beta: Option<f64>,
    #[arg(long, required_unless_present = "alpha")]
    q: Option<f64>,
    #[arg(long, requires = "q")]
    p: Option<f64>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FieldArgs {
    /// Read the field from a snapshot instead of generating one.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Use the Taylor-Green field.
    #[arg(long, conflicts_with = "snapshot")]
    taylor_green: bool,
    #[arg(long, default_value_t = 32)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spectral slope of the synthetic field.
    #[arg(long, default_value_t = 2.0)]
    slope: f64,
    #[arg(long, default_value_t = 1)]
    k_min: u32,
    /// Defaults to the dealiasing cutoff.
    #[arg(long)]
    k_max: Option<u32>,
}

impl FieldArgs {
    fn build(&self) -> Result<PhysicalField> {
        let source = if let Some(path) = &self.snapshot {
            return PhysicalField::read_snapshot(fs::File::open(path)?);
        } else if self.taylor_green {
            FieldSource::TaylorGreen { amplitude: 1.0 }
        } else {
            let cutoff = Grid::new(self.grid)?.dealias_cutoff() as u32;
            FieldSource::Synthetic { slope: self.slope, k_min: self.k_min, k_max: self.k_max.unwrap_or(cutoff) }
        };
        source.build(self.grid, self.seed)
    }
}

#[derive(Args)]
struct MollifyArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long)]
    eps: f64,
    /// Write the mollified field as a snapshot.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Measure the convolution bounds over --eps-list.
    #[arg(long)]
    bounds: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.5, 0.6])]
    eps_list: Vec<f64>,
    /// Smoothness for the bounds; the fitted regularity when absent.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Target integrability of the smoothing bound; q + 1 when absent.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BesovArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Also report the semi-norm at this smoothness.
    #[arg(long)]
    beta: Option<f64>,
    /// Write the difference norms as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.25, 0.125])]
    eps: Vec<f64>,
    #[arg(long, default_value_t = CetOptions::default().points_per_radius)]
    points_per_radius: usize,
    /// Permit epsilon below two grid spacings (the identity is still exact).
    #[arg(long)]
    allow_under_resolved: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; the source of truth for every key.
    config: PathBuf,
    /// Override a config key, e.g. `--set grid=32` or `--set init.kind="taylor_green"`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the CSV rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct FluxArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Solver config whose trajectory feeds the time-composed Besov norm.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// JSON reports written by flux-scaling, gradient-scaling or sweep.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Image the script renders to.
    #[arg(long, default_value = "fluxlab.png")]
    image: String,
    /// Write the script here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Whether every verdict of a command passed.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Complete,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Exponents(a) => exponents_cmd(&a),
        Command::Mollify(a) => mollify_cmd(&a),
        Command::Besov(a) => besov_cmd(&a),
        Command::CommutatorCheck(a) => check_cmd(&a),
        Command::FluxScaling(a) => flux_cmd(&a),
        Command::GradientScaling(a) => gradient_cmd(&a),
        Command::Solve(a) => solve_cmd(&a),
        Command::Sweep(a) => sweep_cmd(&a),
        Command::Plot(a) => plot_cmd(&a),
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn exponents_cmd(a: &ExponentsArgs) -> Result<Outcome> {
    if let (Some(alpha), Some(beta)) = (a.alpha, a.beta) {
        let t1 = exponents::thm1_parameters(alpha, beta)?;
        let t3 = exponents::thm3_rates(alpha, beta)?;
        if a.json {
            print_json(&serde_json::json!({ "besov": t1, "vanishing_viscosity": t3 }))?;
        } else {
            println!("alpha            {alpha}");
            println!("beta             {beta}");
            println!("eta              {}", t1.eta);
            println!("q                {}", t1.q);
            println!("time exponent    {}", t1.time_exponent);
            println!("flux gain        {}", t1.gain);
            println!("exact check      {}", t1.exact);
            println!("branch           {:?}", t3.branch);
            println!("eps exponent     {}", t3.eps_exponent);
            println!("defect exponent  {}", t3.defect_exponent);
            println!("dissipation      nu^{} eps^{}", t3.dissipation.nu, t3.dissipation.eps);
            if let Some(w) = &t3.warning {
                println!("warning          {w}");
            }
        }
    } else if let Some(q) = a.q {
        let t2 = exponents::thm2_parameters(q, a.p)?;
        if a.json {
            print_json(&t2)?;
        } else {
            println!("q                {q}");
            println!("p interval       ({}, {}]", t2.p_lower, t2.p_upper);
            println!("r critical       {}", t2.r_critical);
            if let (Some(p), Some(theta), Some(e)) = (t2.p, t2.theta, t2.eps_exponent) {
                println!("p                {p}");
                println!("theta            {theta}");
                println!("eps exponent     {e}");
            }
        }
    }
    Ok(Outcome::Complete)
}

fn verdict_line(name: &str, pass: bool) {
    println!("{name}: {}", if pass { "PASS" } else { "FAIL" });
}

fn mollify_cmd(a: &MollifyArgs) -> Result<Outcome> {
    let u = a.field.build()?;
    let kernel = MollifierKernel::bump();
    let eps = Epsilon::new(a.eps)?;
    let ue = mollify::mollify_physical(&u, eps, &kernel)?;
    println!("eps                  {}", a.eps);
    println!("resolution           {:?}", eps.resolution(&u.grid()));
    println!("||u||_2              {}", fluxlab::field::lebesgue_norm(&u, 2.0)?);
    println!("||u_eps||_2          {}", fluxlab::field::lebesgue_norm(&ue, 2.0)?);
    println!("||u - u_eps||_2      {}", fluxlab::field::lebesgue_norm(&u.minus(&ue), 2.0)?);
    if let Some(path) = &a.output {
        ue.write_snapshot(fs::File::create(path)?)?;
    }
    if !a.bounds {
        return Ok(Outcome::Complete);
    }
    let beta = match a.beta {
        Some(b) => b,
        None => {
            let samples = besov::difference_norms(&u.to_spectral()?, a.q, &ShiftPolicy::default())?;
            besov::fit_regularity(&samples)?.slope.clamp(1e-3, 1.0)
        }
    };
    let report = mollify::verify_convolution_bounds(&u, beta, a.q, a.r.unwrap_or(a.q + 1.0), &a.eps_list, &kernel)?;
    println!("bound,max_ratio,spread");
    for b in &report.bounds {
        println!("{},{},{}", b.name, b.max_ratio, b.spread.map_or("-".into(), |s| s.to_string()));
    }
    if let Some(path) = &a.json {
        serde_json::to_writer_pretty(fs::File::create(path)?, &report)?;
    }
    if report.bounds.iter().all(|b| b.unit_constant || b.spread.is_none()) {
        println!("note: fewer than two epsilon at or above 4 grid spacings; constant stability not tested");
    }
    let pass = report.bounds.iter().all(|b| b.pass);
    verdict_line("convolution bounds", pass);
    Ok(if pass { Outcome::Complete } else { Outcome::Fail })
}

fn besov_cmd(a: &BesovArgs) -> Result<Outcome> {
    let u = a.field.build()?.to_spectral()?;
    let samples = besov::difference_norms(&u, a.q, &ShiftPolicy::default())?;
    if let Some(path) = &a.csv {
        let mut f = fs::File::create(path)?;
        writeln!(f, "shift_x,shift_y,shift_z,magnitude,diff_norm")?;
        for s in &samples.samples {
            writeln!(f, "{},{},{},{},{}", s.shift[0], s.shift[1], s.shift[2], s.magnitude, s.diff_norm)?;
        }
    }
    match besov::fit_regularity(&samples) {
        Ok(fit) => println!("fitted regularity    {} (R^2 {})", fit.slope, fit.r_squared),
        Err(e) => println!("fitted regularity    unavailable ({e})"),
    }
    if let Some(beta) = a.beta {
        let est = besov::BesovEstimate::from_samples(&samples, beta)?;
        println!("{}", besov::BesovEstimate::CSV_HEADER);
        println!("{}", est.csv_row());
    }
    Ok(Outcome::Complete)
}

fn check_cmd(a: &CheckArgs) -> Result<Outcome> {
    let u = a.field.build()?;
    let kernel = MollifierKernel::bump();
    let opts = CetOptions { points_per_radius: a.points_per_radius, allow_under_resolved: a.allow_under_resolved };
    let mut rows: Vec<FluxReport> = Vec::new();
    let mut pass = true;
    println!("eps,identity_relative,trilinear_relative,remainder_psd,rough_psd");
    for &eps in &a.eps {
        let bundle = commutator::cet_decompose(&u, eps, &kernel, &opts)?;
        let report = commutator::flux_from_bundle(&bundle)?;
        let rel_identity = bundle.identity_residual / bundle.scale.max(f64::MIN_POSITIVE);
        let rel_trilinear = report.trilinear.abs() / report.trilinear_scale.max(f64::MIN_POSITIVE);
        let (psd_r, psd_rough) = bundle.psd_violation();
        println!("{eps},{rel_identity:e},{rel_trilinear:e},{psd_r:e},{psd_rough:e}");
        pass &= bundle.identity_residual <= IDENTITY_TOLERANCE * bundle.scale;
        pass &= report.trilinear.abs() <= TRILINEAR_TOLERANCE * report.trilinear_scale;
        rows.push(report);
    }
    if let Some(path) = &a.csv {
        commutator::write_flux_csv(fs::File::create(path)?, &rows)?;
    }
    verdict_line("commutator identity and trilinear term", pass);
    Ok(if pass { Outcome::Complete } else { Outcome::Fail })
}

/// Reads a TOML config and applies `--set` and named overrides.
fn load_config<T: DeserializeOwned>(a: &ConfigArgs) -> Result<T> {
    let text = fs::read_to_string(&a.config)?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", a.config.display())))?;
    let mut overrides = Vec::new();
    if let Some(g) = a.grid {
        overrides.push(("grid".to_string(), toml::Value::Integer(g as i64)));
    }
    if let Some(s) = a.seed {
        overrides.push(("seed".to_string(), toml::Value::Integer(s as i64)));
    }
    for raw in &a.overrides {
        let (key, value) =
            raw.split_once('=').ok_or_else(|| Error::Config(format!("override `{raw}` is not KEY=VALUE")))?;
        overrides.push((key.trim().to_string(), parse_value(value.trim())));
    }
    for (key, value) in overrides {
        set_key(&mut table, &key, value)?;
    }
    toml::Value::Table(table).try_into().map_err(|e| Error::Config(format!("{}: {e}", a.config.display())))
}

/// A TOML literal, or a bare string when it does not parse as one.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key `{key}`")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn finish(report: &Report, a: &ConfigArgs) -> Result<Outcome> {
    for (name, fit) in &report.fits {
        println!("fit {name}: slope {} (R^2 {})", fit.slope, fit.r_squared);
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    for (name, v) in &report.verdicts {
        println!("verdict {name}: {v}");
    }
    if let Some(path) = &a.json {
        report.write_json(path)?;
    }
    Ok(if report.failed() { Outcome::Fail } else { Outcome::Complete })
}

fn write_rows(path: &Option<PathBuf>, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut out: Box<dyn Write> = match path {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(out, "{header}")?;
    for r in rows {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

fn flux_cmd(a: &FluxArgs) -> Result<Outcome> {
    let config: experiments::FluxScalingConfig = load_config(&a.common)?;
    let run = match &a.trajectory {
        Some(path) => Some(experiments::run_solver(&experiments::load_toml(path)?)?),
        None => None,
    };
    let result = experiments::run_flux_scaling(&config, run.as_ref().map(|r| r.trajectory.as_slice()))?;
    println!("predicted slope {}", result.scaling.prediction);
    write_rows(&a.common.csv, FluxReport::CSV_HEADER, result.scaling.rows.iter().map(|r| r.csv_row()))?;
    finish(&result.report(), &a.common)
}

fn gradient_cmd(a: &ConfigArgs) -> Result<Outcome> {
    let config: experiments::GradientScalingConfig = load_config(a)?;
    let result = experiments::run_gradient_scaling(&config)?;
    println!("predicted slope {} at p = {}", result.predicted, result.exponents.p.unwrap_or(f64::NAN));
    write_rows(&a.csv, FluxReport::CSV_HEADER, result.rows.iter().map(|r| r.csv_row()))?;
    finish(&result.report(), a)
}

fn solve_cmd(a: &ConfigArgs) -> Result<Outcome> {
    let config: experiments::RunConfig = load_config(a)?;
    let run = experiments::run_solver(&config)?;
    let first = run.budget.samples.first().map_or(0.0, |s| s.kinetic);
    let last = run.budget.samples.last().map_or(0.0, |s| s.kinetic);
    println!("steps                {} (dt {})", run.steps, run.dt);
    println!("kinetic energy       {first} -> {last}");
    println!("max budget residual  {:e} relative", run.budget.max_relative_residual());
    if let Some(path) = &a.csv {
        run.budget.write_csv(fs::File::create(path)?)?;
    }
    if let Some(path) = &a.json {
        serde_json::to_writer_pretty(
            fs::File::create(path)?,
            &serde_json::json!({ "config": config, "budget": run.budget }),
        )?;
    }
    Ok(Outcome::Complete)
}

fn sweep_cmd(a: &ConfigArgs) -> Result<Outcome> {
    let config: experiments::SweepConfig = load_config(a)?;
    let rates = exponents::thm3_rates(config.alpha, config.beta)?;
    println!(
        "alpha {} beta {}: branch {:?}, eps exponent {}, predicted defect exponent {}",
        config.alpha, config.beta, rates.branch, rates.eps_exponent, rates.defect_exponent
    );
    let result = experiments::run_viscosity_sweep(&config)?;
    match &a.csv {
        Some(p) => result.write_csv(fs::File::create(p)?)?,
        None => result.write_csv(io::stdout().lock())?,
    }
    finish(&result.report(), a)
}

fn plot_cmd(a: &PlotArgs) -> Result<Outcome> {
    let reports = a.reports.iter().map(|p| Report::read_json(p)).collect::<Result<Vec<_>>>()?;
    let script = experiments::emit_plots(&reports, &a.image);
    match &a.output {
        Some(p) => fs::write(p, script)?,
        None => print!("{script}"),
    }
    Ok(Outcome::Complete)
}
