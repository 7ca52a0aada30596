use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares line `log y = slope * log x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `log y` against `log x`. Needs at least two points, all positive.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("fit abscissa and ordinate differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("fit needs at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit { slope, intercept, r_squared, points: x.len() })
}

/// Outcome of a one-sided scaling check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The measured quantity vanishes to roundoff, so no slope exists.
    Degenerate,
    /// The input does not satisfy the hypothesis under test.
    HypothesisNotMet,
}

impl Verdict {
    /// Pass when `slope >= prediction - tolerance`. The estimates under test
    /// are upper bounds, so faster decay than predicted is consistent.
    pub fn one_sided(slope: f64, prediction: f64, tolerance: f64) -> Self {
        if slope >= prediction - tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_failure(self) -> bool {
        self == Verdict::Fail
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Degenerate => "degenerate",
            Verdict::HypothesisNotMet => "hypothesis not met",
        })
    }
}
