//! Shared domain types: parameter vectors, update directions, per-vector
//! schedule state and the constants that feed the closed-form bounds.

use crate::error::{check_finite, check_len, Error, Result};

/// Inner product of two equal-length vectors.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One schedulable weight vector with its own learning rate.
///
/// The length is fixed at construction; all writes go through
/// [`ParamVector::assign`], which rejects length changes and non-finite
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    id: String,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("parameter vector must have length >= 1"));
        }
        check_finite(&values, "parameter vector")?;
        Ok(Self {
            id: id.into(),
            values,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn assign(&mut self, values: &[f64]) -> Result<()> {
        check_len(self.values.len(), values.len())?;
        check_finite(values, "parameter vector")?;
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A stochastic update direction `g_t` together with its step index and
/// cached Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    values: Vec<f64>,
    step: u64,
    norm2: f64,
}

impl GradientEstimate {
    pub fn new(values: Vec<f64>, step: u64) -> Result<Self> {
        check_finite(&values, "gradient")?;
        let norm2 = norm2(&values);
        Ok(Self {
            values,
            step,
            norm2,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-vector delta-bar-delta state.
///
/// `prev_update` is the previous step's update direction and `prev_dot` the
/// previous step's dot product `<g_{t-1}, g_{t-2}>`. Both start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub alpha: f64,
    pub prev_update: Vec<f64>,
    pub prev_dot: f64,
    pub eta: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub step: u64,
}

impl ScheduleState {
    /// Fresh state with the default clamp `[0, +inf)`.
    pub fn new(dim: usize, alpha0: f64, eta: f64) -> Result<Self> {
        Self::with_clamp(dim, alpha0, eta, 0.0, f64::INFINITY)
    }

    /// Fresh state with clamping disabled.
    pub fn unclamped(dim: usize, alpha0: f64, eta: f64) -> Result<Self> {
        Self::with_clamp(dim, alpha0, eta, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn with_clamp(
        dim: usize,
        alpha0: f64,
        eta: f64,
        alpha_min: f64,
        alpha_max: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("schedule dimension must be >= 1"));
        }
        if !alpha0.is_finite() {
            return Err(Error::NonFinite("alpha0"));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::invalid(format!(
                "eta must be finite and >= 0, got {eta}"
            )));
        }
        if alpha_min.is_nan() || alpha_max.is_nan() || alpha_min > alpha_max {
            return Err(Error::invalid(format!(
                "invalid clamp range [{alpha_min}, {alpha_max}]"
            )));
        }
        if alpha_min == f64::INFINITY || alpha_max == f64::NEG_INFINITY {
            return Err(Error::invalid("clamp range is empty"));
        }
        Ok(Self {
            alpha: alpha0.clamp(alpha_min, alpha_max),
            prev_update: vec![0.0; dim],
            prev_dot: 0.0,
            eta,
            alpha_min,
            alpha_max,
            step: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.prev_update.len()
    }

    pub fn clamp(&self, alpha: f64) -> f64 {
        alpha.clamp(self.alpha_min, self.alpha_max)
    }

    pub fn is_clamped(&self) -> bool {
        self.alpha_min > f64::NEG_INFINITY || self.alpha_max < f64::INFINITY
    }
}

/// Constants that appear in the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    /// Lipschitz constant of the gradient.
    pub lipschitz_l: f64,
    /// Bound on every update norm.
    pub sigma: f64,
    /// Gradient-alignment constant: `<grad f, g> >= mu |g|^2`.
    pub mu: f64,
    /// Floor on consecutive update dot products.
    pub tau: f64,
    pub gamma: f64,
    /// Target gradient norm.
    pub epsilon: f64,
    /// `f(x_0) - f*`.
    pub f_gap: f64,
}

impl Default for TheoryParams {
    fn default() -> Self {
        Self {
            lipschitz_l: 1.0,
            sigma: 1.0,
            mu: 1.0,
            tau: 1.0,
            gamma: 0.5,
            epsilon: 1.0,
            f_gap: 1.0,
        }
    }
}

impl TheoryParams {
    /// Returns every violated range constraint. Empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("lipschitz_L", self.lipschitz_l),
            ("sigma", self.sigma),
            ("mu", self.mu),
            ("tau", self.tau),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !v.is_finite() {
                out.push(format!("{name} must be finite"));
            } else if v <= 0.0 {
                out.push(format!("{name} must be > 0"));
            }
        }
        if !self.gamma.is_finite() {
            out.push("gamma must be finite".to_string());
        } else {
            if self.gamma < 0.0 {
                out.push("gamma must be >= 0".to_string());
            }
            if self.gamma >= 1.0 {
                out.push("gamma must be < 1".to_string());
            }
        }
        if !self.f_gap.is_finite() {
            out.push("f_gap must be finite".to_string());
        } else if self.f_gap < 0.0 {
            out.push("f_gap must be >= 0".to_string());
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(violations.join("; ")))
        }
    }
}

/// Result of one scheduler step on one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub new_values: Vec<f64>,
    pub new_alpha: f64,
    /// The previous step's increment was undone before this step.
    pub reverted: bool,
    /// This step's dot product `<g_t, g_{t-1}>`.
    pub h: f64,
}
