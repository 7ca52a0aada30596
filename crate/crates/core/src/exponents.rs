//! Closed-form exponents of the three energy-conservation results: the
//! Besov-type criterion, the gradient-integrability criterion and the
//! vanishing-viscosity rates.
//!
//! Inputs that are exactly representable as small rationals are also run
//! through exact rational arithmetic, which supplies the returned values and
//! decides every branch, so rounding can never flip a case split.

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type Q = Ratio<i128>;

/// Largest denominator accepted when recognizing a float as a rational.
const MAX_DENOMINATOR: i128 = 1_000_000;

fn rational(x: f64) -> Option<Q> {
    let r = Q::approximate_float(x)?;
    (*r.denom() <= MAX_DENOMINATOR && r.to_f64() == Some(x)).then_some(r)
}

fn f(r: &Q) -> f64 {
    r.to_f64().expect("small rationals convert to f64")
}

fn q(n: i128, d: i128) -> Q {
    Q::new(n, d)
}

fn check_pair(alpha: f64, beta: f64) -> Result<()> {
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::Constraint("alpha and beta must be finite".into()));
    }
    if alpha <= 1.0 / 3.0 {
        return Err(Error::Constraint(format!("alpha > 1/3 (got {alpha})")));
    }
    if beta <= alpha {
        return Err(Error::Constraint(format!("beta > alpha (got alpha = {alpha}, beta = {beta})")));
    }
    if beta >= 1.0 {
        return Err(Error::Constraint(format!("beta < 1 (got {beta})")));
    }
    Ok(())
}

/// Exponents of the criterion `v ∈ L^{1/α}(0,T; B^β_{q,∞})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm1Params {
    pub alpha: f64,
    pub beta: f64,
    /// `η = (1 - α)/α`.
    pub eta: f64,
    /// `q = 2/(1 - α)`, the spatial integrability.
    pub q: f64,
    /// `1/α = η + 1`, the time integrability.
    pub time_exponent: f64,
    /// `βη + β - 1 = (β - α)/α`, the power of `ε` gained by the flux.
    pub gain: f64,
    /// Whether the constraint system was also verified in exact arithmetic.
    pub exact: bool,
}

impl Thm1Params {
    /// Residuals of `βη + β - 1 > 0`, `η < q - 1` and
    /// `(2 - η)q/(q - (1 + η)) = 2`, as `(gain, q - 1 - η, lhs - 2)`.
    pub fn constraint_residuals(&self) -> (f64, f64, f64) {
        let (eta, q) = (self.eta, self.q);
        (self.beta * eta + self.beta - 1.0, q - 1.0 - eta, (2.0 - eta) * q / (q - (1.0 + eta)) - 2.0)
    }
}

pub fn thm1_parameters(alpha: f64, beta: f64) -> Result<Thm1Params> {
    check_pair(alpha, beta)?;
    let mut p = Thm1Params {
        alpha,
        beta,
        eta: (1.0 - alpha) / alpha,
        q: 2.0 / (1.0 - alpha),
        time_exponent: 1.0 / alpha,
        gain: (beta - alpha) / alpha,
        exact: false,
    };
    if let (Some(a), Some(b)) = (rational(alpha), rational(beta)) {
        let one = Q::one();
        let two = q(2, 1);
        let eta = (one - a) / a;
        let qq = two / (one - a);
        let gain = b * eta + b - one;
        let ok = gain > Q::zero() && eta < qq - one && (two - eta) * qq == two * (qq - (one + eta)) && qq > q(3, 1);
        if !ok {
            return Err(Error::Constraint(format!("exact constraint check failed for alpha = {a}, beta = {b}")));
        }
        p.eta = f(&eta);
        p.q = f(&qq);
        p.time_exponent = f(&(one / a));
        p.gain = f(&gain);
        p.exact = true;
    }
    Ok(p)
}

/// Exponents of the criterion `∇v ∈ L^r(0,T; L^q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm2Params {
    pub q: f64,
    /// `(5q - 6)q/(5q² - 9q + 6)`.
    pub p_lower: f64,
    /// `min(q/2, q/(q - 1))`.
    pub p_upper: f64,
    /// `5q/(5q - 6)`.
    pub r_critical: f64,
    pub p: Option<f64>,
    /// `p' = p/(p - 1)`.
    pub p_conjugate: Option<f64>,
    /// `θ` with `1/(2p) = θ/2 + (1 - θ)/q`.
    pub theta: Option<f64>,
    /// `2q(p - 1)/(p(q - 2)) - 3(1/q - 1/p')`; non-negative on the interval.
    pub eps_exponent: Option<f64>,
    /// `2q(p - 1)/(p(q - 2)) + 1`, the time power of `‖∇v‖_q` in the flux bound.
    pub time_exponent: Option<f64>,
}

impl Thm2Params {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.p_lower + self.p_upper)
    }
}

pub fn thm2_parameters(qv: f64, p: Option<f64>) -> Result<Thm2Params> {
    if !(qv > 2.0) || !qv.is_finite() {
        return Err(Error::Constraint(format!("q > 2 (got {qv})")));
    }
    let (p_lower, p_upper, r_critical) = match rational(qv) {
        Some(r) => {
            let five = q(5, 1);
            let six = q(6, 1);
            let lower = (five * r - six) * r / (five * r * r - q(9, 1) * r + six);
            let upper = (r / q(2, 1)).min(r / (r - Q::one()));
            (f(&lower), f(&upper), f(&(five * r / (five * r - six))))
        }
        None => (
            (5.0 * qv - 6.0) * qv / (5.0 * qv * qv - 9.0 * qv + 6.0),
            (qv / 2.0).min(qv / (qv - 1.0)),
            5.0 * qv / (5.0 * qv - 6.0),
        ),
    };
    let mut out = Thm2Params {
        q: qv,
        p_lower,
        p_upper,
        r_critical,
        p: None,
        p_conjugate: None,
        theta: None,
        eps_exponent: None,
        time_exponent: None,
    };
    if let Some(p) = p {
        if !(p > p_lower) {
            return Err(Error::Constraint(format!("p > (5q-6)q/(5q^2-9q+6) = {p_lower} (got {p})")));
        }
        if !(p < p_upper) {
            return Err(Error::Constraint(format!("p < min(q/2, q/(q-1)) = {p_upper} (got {p})")));
        }
        let pc = p / (p - 1.0);
        let lead = 2.0 * qv * (p - 1.0) / (p * (qv - 2.0));
        out.p = Some(p);
        out.p_conjugate = Some(pc);
        out.theta = Some((1.0 / (2.0 * p) - 1.0 / qv) / (0.5 - 1.0 / qv));
        out.eps_exponent = Some(lead - 3.0 * (1.0 / qv - 1.0 / pc));
        out.time_exponent = Some(lead + 1.0);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `β <= 1/2`.
    Low,
    /// `β > 1/2`.
    High,
}

/// A scaling `ν^a ε^b`, stored as the pair `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub nu: f64,
    pub eps: f64,
}

impl PowerLaw {
    /// The `ν` exponent after substituting `ε = ν^e`.
    pub fn under_coupling(&self, e: f64) -> f64 {
        self.nu + self.eps * e
    }
}

/// Vanishing-viscosity coupling `ε ~ ν^{eps_exponent}` and defect rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm3Rates {
    pub alpha: f64,
    pub beta: f64,
    pub branch: Branch,
    pub eps_exponent: f64,
    /// The energy defect is `O(ν^{defect_exponent})`.
    pub defect_exponent: f64,
    /// `ν ε^{2(β-1)}` (low branch) or `ν ε^{-1}` (high branch).
    pub dissipation: PowerLaw,
    /// Set when `α <= 1/2 < β`; the case split is keyed on `β`.
    pub warning: Option<String>,
}

/// Dissipation bounds `ν∫‖∇v_ε‖² = O(ν ε^{2(β-1)})` and `O(ν ε^{-1})`.
pub fn dissipation_laws(beta: f64) -> [PowerLaw; 2] {
    [PowerLaw { nu: 1.0, eps: 2.0 * (beta - 1.0) }, PowerLaw { nu: 1.0, eps: -1.0 }]
}

pub fn thm3_rates(alpha: f64, beta: f64) -> Result<Thm3Rates> {
    check_pair(alpha, beta)?;
    let exact = rational(alpha).zip(rational(beta));
    let half = q(1, 2);
    let low = match &exact {
        Some((_, b)) => *b <= half,
        None => beta <= 0.5,
    };
    let (branch, eps_exponent, defect_exponent) = match (&exact, low) {
        (Some((a, b)), true) => {
            let d = *a + *b - q(2, 1) * *a * *b;
            (Branch::Low, f(&(*a / d)), f(&((*b - *a) / d)))
        }
        (Some((a, b)), false) => (Branch::High, f(&(*a / *b)), f(&((*b - *a) / *b))),
        (None, true) => {
            let d = alpha + beta - 2.0 * alpha * beta;
            (Branch::Low, alpha / d, (beta - alpha) / d)
        }
        (None, false) => (Branch::High, alpha / beta, (beta - alpha) / beta),
    };
    let laws = dissipation_laws(beta);
    let dissipation = if low { laws[0] } else { laws[1] };
    let warning = (alpha <= 0.5 && beta > 0.5).then(|| {
        format!(
            "alpha = {alpha} and beta = {beta} straddle 1/2; using the beta > 1/2 branch \
             (the alpha <= 1/2 reading would select the other branch)"
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(Thm3Rates { alpha, beta, branch, eps_exponent, defect_exponent, dissipation, warning })
}
