//! Closed-form bounds and admissibility conditions for DBD and RDBD, plus
//! helpers that hold a recorded run against them.

use crate::error::{Error, Result};
use crate::types::{dot, TheoryParams};

/// One bound evaluated against one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub theoretical_value: f64,
    pub empirical_value: f64,
    pub satisfied: bool,
    /// Distance from the bound in its favourable direction; negative when
    /// violated.
    pub margin: f64,
}

impl BoundReport {
    /// Report for a bound of the form `empirical <= theoretical + slack`.
    pub fn upper(name: impl Into<String>, theoretical: f64, empirical: f64, slack: f64) -> Self {
        let margin = theoretical - empirical;
        Self {
            name: name.into(),
            theoretical_value: theoretical,
            empirical_value: empirical,
            satisfied: margin >= -slack,
            margin,
        }
    }
}

/// Iterations after which full-batch DBD is guaranteed to have visited a
/// point with gradient norm at most epsilon: `2 L f_gap / ((1 - gamma^2) eps^2)`.
pub fn dbd_iteration_bound(p: &TheoryParams) -> Result<f64> {
    p.ensure_valid()?;
    Ok(2.0 * p.lipschitz_l * p.f_gap / ((1.0 - p.gamma * p.gamma) * p.epsilon * p.epsilon))
}

/// RDBD iteration bound
/// `sigma sqrt(L f_gap) (1/(1 - gamma) + (1 + gamma)/2) / eps^2`.
pub fn rdbd_iteration_bound(p: &TheoryParams) -> Result<f64> {
    p.ensure_valid()?;
    let factor = 1.0 / (1.0 - p.gamma) + 0.5 * (1.0 + p.gamma);
    Ok(p.sigma * (p.lipschitz_l * p.f_gap).sqrt() * factor / (p.epsilon * p.epsilon))
}

/// Initial rate and meta rate prescribed for an RDBD run of `t` steps:
/// `alpha0 = sqrt(f_gap) / (sigma sqrt(L T))`,
/// `eta = gamma sqrt(f_gap) / (T sigma^3 sqrt(L T))`.
pub fn rdbd_theoretical_hyperparams(p: &TheoryParams, t: u64) -> Result<(f64, f64)> {
    p.ensure_valid()?;
    if t == 0 {
        return Err(Error::invalid("horizon T must be positive"));
    }
    let t = t as f64;
    let root_lt = (p.lipschitz_l * t).sqrt();
    let root_gap = p.f_gap.sqrt();
    let alpha0 = root_gap / (p.sigma * root_lt);
    let eta = p.gamma * root_gap / (t * p.sigma.powi(3) * root_lt);
    Ok((alpha0, eta))
}

/// DBD hyperparameters for the full-batch guarantee: `alpha0 = 1/L`,
/// `eta = gamma / (T sigma^2 L)`.
pub fn dbd_theoretical_hyperparams(p: &TheoryParams, t: u64) -> Result<(f64, f64)> {
    p.ensure_valid()?;
    if t == 0 {
        return Err(Error::invalid("horizon T must be positive"));
    }
    let l = p.lipschitz_l;
    Ok((1.0 / l, p.gamma / (t as f64 * p.sigma * p.sigma * l)))
}

/// `(alpha0 - t eta sigma^2, alpha0 + t eta sigma^2)`.
pub fn alpha_envelope(alpha0: f64, eta: f64, sigma: f64, t: u64) -> (f64, f64) {
    let w = t as f64 * eta * sigma * sigma;
    (alpha0 - w, alpha0 + w)
}

/// Checks `2 / (2 alpha - alpha^2 L) <= 2L / (1 - gamma^2)`.
///
/// Returns `None` when `alpha` lies outside `(0, 2/L)`, where the left side
/// is undefined or negative and the bound does not apply.
pub fn descent_coefficient_bound(alpha: f64, lipschitz_l: f64, gamma: f64) -> Option<BoundReport> {
    if lipschitz_l.is_nan() || lipschitz_l <= 0.0 || !(alpha > 0.0 && alpha < 2.0 / lipschitz_l) {
        return None;
    }
    let lhs = 2.0 / (2.0 * alpha - alpha * alpha * lipschitz_l);
    let rhs = 2.0 * lipschitz_l / (1.0 - gamma * gamma);
    Some(BoundReport::upper("descent_coefficient", rhs, lhs, 1e-12))
}

/// `(eta <= 2/(L sigma^2), alpha <= 2 mu / L)`. Both are non-strict.
pub fn steeper_descent_conditions(p: &TheoryParams, eta: f64, alpha: f64) -> (bool, bool) {
    let l = p.lipschitz_l;
    let eta_ok = eta <= 2.0 / (l * p.sigma * p.sigma);
    let alpha_ok = alpha <= 2.0 * p.mu / l;
    (eta_ok, alpha_ok)
}

/// Derivative of `f(x_t)` with respect to the previous step size:
/// `-<grad f(x_t), grad f(x_{t-1})>`.
pub fn dbd_hypergradient(grad_now: &[f64], grad_prev: &[f64]) -> Result<f64> {
    Ok(-dot(grad_now, grad_prev)?)
}

/// `f(x) - f(y) - <grad f(y), x - y> - L |x - y|^2 / 2`; nonpositive for an
/// L-smooth `f`.
pub fn smoothness_gap(
    f_x: f64,
    f_y: f64,
    grad_y: &[f64],
    x: &[f64],
    y: &[f64],
    lipschitz_l: f64,
) -> Result<f64> {
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let lin = dot(grad_y, &diff)?;
    let sq = dot(&diff, &diff)?;
    Ok(f_x - f_y - lin - 0.5 * lipschitz_l * sq)
}

/// Holds a learning-rate trace against the envelope. `alphas[t]` is the rate
/// after step `t + 1`.
pub fn check_alpha_envelope(
    alphas: &[f64],
    alpha0: f64,
    eta: f64,
    sigma: f64,
    slack: f64,
) -> BoundReport {
    let mut worst_margin = f64::INFINITY;
    let mut at = (0.0, 0.0);
    for (i, &a) in alphas.iter().enumerate() {
        let (lo, hi) = alpha_envelope(alpha0, eta, sigma, i as u64 + 1);
        let width = hi - alpha0;
        let dev = (a - alpha0).abs();
        let margin = (hi - a).min(a - lo);
        if margin < worst_margin {
            worst_margin = margin;
            at = (width, dev);
        }
    }
    if alphas.is_empty() {
        return BoundReport::upper("alpha_envelope", 0.0, 0.0, slack);
    }
    let mut report = BoundReport::upper("alpha_envelope", at.0, at.1, slack);
    report.margin = worst_margin;
    report.satisfied = worst_margin >= -slack;
    report
}

/// Smallest observed |<g_{t+1}, g_t>| over the run, skipping the first
/// step whose dot product is against the zero initial update. `None` when
/// fewer than two steps were taken.
pub fn measured_tau(dots: &[f64]) -> Option<f64> {
    dots.iter().skip(1).map(|h| h.abs()).reduce(f64::min)
}
