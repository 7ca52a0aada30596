//! Browser bindings: exponent tables, a mollified slice of a synthetic field
//! and the difference-norm curve behind the regularity fit.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use fluxlab::besov::{self, ShiftPolicy, SyntheticFieldSpec};
use fluxlab::exponents;
use fluxlab::mollify::{self, Epsilon, MollifierKernel};
use fluxlab::{Grid, PhysicalField};

/// Largest grid the page may request; keeps a click under a second.
pub const MAX_GRID: usize = 48;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn synthetic(n: usize, slope: f64, seed: u64) -> Result<PhysicalField, String> {
    if n > MAX_GRID {
        return Err(format!("grid {n} exceeds the demo limit {MAX_GRID}"));
    }
    let grid = Grid::new(n).map_err(err)?;
    let spec = SyntheticFieldSpec::full_band(&grid, slope, seed);
    besov::make_synthetic_field(&grid, &spec).map_err(err)
}

/// Exponent tables as JSON: the Besov and vanishing-viscosity rates for
/// `(alpha, beta)` and the gradient-criterion interval for `q = 2/(1-alpha)`.
pub fn exponent_table_json(alpha: f64, beta: f64) -> Result<String, String> {
    let t1 = exponents::thm1_parameters(alpha, beta).map_err(err)?;
    let t2 = exponents::thm2_parameters(t1.q, None).map_err(err)?;
    let t3 = exponents::thm3_rates(alpha, beta).map_err(err)?;
    serde_json::to_string(&serde_json::json!({ "besov": t1, "gradient": t2, "vanishing_viscosity": t3 })).map_err(err)
}

/// `|u|` and `|u_ε|` on the plane `z = 0`, concatenated, `n²` values each,
/// x fastest.
pub fn mollified_slice_values(n: usize, slope: f64, seed: u64, eps: f64) -> Result<Vec<f64>, String> {
    let u = synthetic(n, slope, seed)?;
    let eps = Epsilon::new(eps).map_err(err)?;
    let ue = mollify::mollify_physical(&u, eps, &MollifierKernel::bump()).map_err(err)?;
    let plane = n * n;
    let mut out = u.magnitude();
    out.truncate(plane);
    out.extend_from_slice(&ue.magnitude()[..plane]);
    Ok(out)
}

#[derive(Serialize)]
struct Curve {
    magnitude: Vec<f64>,
    diff_norm: Vec<f64>,
    slope: Option<f64>,
    r_squared: Option<f64>,
}

/// Sampled `(|y|, ‖u(·+y) - u‖_q)` pairs and their log-log fit, as JSON.
pub fn regularity_curve_json(n: usize, slope: f64, seed: u64, q: f64) -> Result<String, String> {
    let u = synthetic(n, slope, seed)?.to_spectral().map_err(err)?;
    let samples = besov::difference_norms(&u, q, &ShiftPolicy::default()).map_err(err)?;
    let fit = besov::fit_regularity(&samples).ok();
    let mut pairs: Vec<(f64, f64)> = samples.samples.iter().map(|s| (s.magnitude, s.diff_norm)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let curve = Curve {
        magnitude: pairs.iter().map(|p| p.0).collect(),
        diff_norm: pairs.iter().map(|p| p.1).collect(),
        slope: fit.map(|f| f.slope),
        r_squared: fit.map(|f| f.r_squared),
    };
    serde_json::to_string(&curve).map_err(err)
}

#[wasm_bindgen]
pub fn exponent_table(alpha: f64, beta: f64) -> Result<String, JsError> {
    exponent_table_json(alpha, beta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mollified_slice(n: usize, slope: f64, seed: u32, eps: f64) -> Result<Vec<f64>, JsError> {
    mollified_slice_values(n, slope, seed as u64, eps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn regularity_curve(n: usize, slope: f64, seed: u32, q: f64) -> Result<String, JsError> {
    regularity_curve_json(n, slope, seed as u64, q).map_err(|e| JsError::new(&e))
}
