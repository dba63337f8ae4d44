//! Unscheduled SGD and Adam, and Adam with an RDBD-scheduled global rate.

use crate::error::{check_finite, check_len, Error, Result};
use crate::schedulers::{plain_step, rdbd_step};
use crate::types::{GradientEstimate, ParamVector, ScheduleState, StepOutcome};

pub const DEFAULT_BETA1: f64 = 0.05;
pub const DEFAULT_BETA2: f64 = 0.99;
pub const DEFAULT_EPS_HAT: f64 = 1e-8;
/// Meta learning rate used when RDBD schedules Adam.
pub const ADAM_RDBD_ETA: f64 = 5e-7;
/// Upper clamp for Adam+RDBD when none is given, as a multiple of `alpha0`.
pub const ADAM_RDBD_ALPHA_MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub step: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_hyperparams(dim, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS_HAT)
    }

    pub fn with_hyperparams(dim: usize, beta1: f64, beta2: f64, eps_hat: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("adam dimension must be >= 1"));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(eps_hat.is_finite() && eps_hat > 0.0) {
            return Err(Error::invalid(format!(
                "eps_hat must be > 0, got {eps_hat}"
            )));
        }
        Ok(Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            beta1,
            beta2,
            eps_hat,
            step: 0,
        })
    }

    /// Updates the moments with `g` and returns the bias-corrected direction
    /// `m_hat / (sqrt(v_hat) + eps_hat)`.
    pub fn direction(&mut self, g: &GradientEstimate) -> Result<Vec<f64>> {
        check_len(self.m.len(), g.len())?;
        check_finite(g.values(), "gradient")?;
        if self.eps_hat.is_nan() || self.eps_hat <= 0.0 {
            return Err(Error::invalid("eps_hat must be > 0"));
        }
        let t = (self.step + 1) as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut u = Vec::with_capacity(self.m.len());
        for ((m, v), &gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(g.values()) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
            *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            u.push(m_hat / (v_hat.sqrt() + self.eps_hat));
        }
        self.step += 1;
        Ok(u)
    }
}

pub fn sgd_step(x: &ParamVector, g: &GradientEstimate, alpha: f64) -> Result<Vec<f64>> {
    plain_step(x, g, alpha)
}

/// Returns the new weights and the direction `u_t` that was applied.
pub fn adam_step(
    state: &mut AdamState,
    x: &ParamVector,
    g: &GradientEstimate,
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(x.len(), g.len())?;
    let u = state.direction(g)?;
    let new_x = x
        .values()
        .iter()
        .zip(&u)
        .map(|(xi, ui)| xi - alpha * ui)
        .collect();
    Ok((new_x, u))
}

/// Schedule state for Adam+RDBD. The upper clamp defaults to
/// `10 * alpha0` when `alpha_max` is `None`.
pub fn adam_rdbd_schedule(
    dim: usize,
    alpha0: f64,
    eta: f64,
    alpha_min: f64,
    alpha_max: Option<f64>,
) -> Result<ScheduleState> {
    let cap = alpha_max.unwrap_or(ADAM_RDBD_ALPHA_MAX_FACTOR * alpha0);
    ScheduleState::with_clamp(dim, alpha0, eta, alpha_min, cap)
}

/// Adam direction fed through RDBD: `u_t` plays the role of the weight
/// update both for the dot products and for the descent step.
pub fn adam_rdbd_step(
    adam: &mut AdamState,
    sched: &mut ScheduleState,
    x: &ParamVector,
    g: &GradientEstimate,
) -> Result<StepOutcome> {
    check_len(x.len(), g.len())?;
    check_len(sched.dim(), g.len())?;
    let u = adam.direction(g)?;
    let u = GradientEstimate::new(u, g.step())?;
    rdbd_step(sched, x, &u)
}
