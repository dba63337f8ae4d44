//! Optimizer × scheduler combinations applied to one parameter vector.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{adam_rdbd_schedule, adam_rdbd_step, AdamState};
use crate::error::{Error, Result};
use crate::schedulers::{scheduled_step, SchedulerKind};
use crate::types::{GradientEstimate, ParamVector, ScheduleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Dbd,
    Rdbd,
    AdamRdbd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Sgd,
        OptimizerKind::Adam,
        OptimizerKind::Dbd,
        OptimizerKind::Rdbd,
        OptimizerKind::AdamRdbd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Dbd => "dbd",
            OptimizerKind::Rdbd => "rdbd",
            OptimizerKind::AdamRdbd => "adam_rdbd",
        }
    }

    pub fn uses_adam(self) -> bool {
        matches!(self, OptimizerKind::Adam | OptimizerKind::AdamRdbd)
    }

    /// Whether the learning rate moves at all.
    pub fn is_scheduled(self) -> bool {
        matches!(
            self,
            OptimizerKind::Dbd | OptimizerKind::Rdbd | OptimizerKind::AdamRdbd
        )
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['+', '-'], "_").as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "dbd" => Ok(OptimizerKind::Dbd),
            "rdbd" => Ok(OptimizerKind::Rdbd),
            "adam_rdbd" => Ok(OptimizerKind::AdamRdbd),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Rates and clamps shared by every vector of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub alpha0: f64,
    pub eta: f64,
    pub alpha_min: f64,
    /// `None` means unbounded, except for Adam+RDBD where it means `10 * alpha0`.
    pub alpha_max: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorStep {
    pub alpha: f64,
    pub h: f64,
    pub reverted: bool,
    /// Norm of the direction the scheduler saw (the gradient, or Adam's u_t).
    pub update_norm: f64,
}

#[derive(Debug, Clone)]
pub struct VectorOptimizer {
    kind: OptimizerKind,
    sched: ScheduleState,
    adam: Option<AdamState>,
}

impl VectorOptimizer {
    pub fn new(kind: OptimizerKind, dim: usize, hp: &Hyperparams) -> Result<Self> {
        let sched = match kind {
            OptimizerKind::AdamRdbd => {
                adam_rdbd_schedule(dim, hp.alpha0, hp.eta, hp.alpha_min, hp.alpha_max)?
            }
            OptimizerKind::Dbd | OptimizerKind::Rdbd => ScheduleState::with_clamp(
                dim,
                hp.alpha0,
                hp.eta,
                hp.alpha_min,
                hp.alpha_max.unwrap_or(f64::INFINITY),
            )?,
            // fixed-rate baselines: the state only tracks h for the trace
            OptimizerKind::Sgd | OptimizerKind::Adam => {
                ScheduleState::with_clamp(dim, hp.alpha0, 0.0, f64::NEG_INFINITY, f64::INFINITY)?
            }
        };
        let adam = if kind.uses_adam() {
            Some(AdamState::with_hyperparams(
                dim, hp.beta1, hp.beta2, hp.eps_hat,
            )?)
        } else {
            None
        };
        Ok(Self { kind, sched, adam })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn schedule(&self) -> &ScheduleState {
        &self.sched
    }

    pub fn alpha(&self) -> f64 {
        self.sched.alpha
    }

    /// Applies one update to `x` in place.
    pub fn step(&mut self, x: &mut ParamVector, g: &GradientEstimate) -> Result<VectorStep> {
        let (outcome, update_norm) = match self.kind {
            OptimizerKind::Sgd => (
                scheduled_step(SchedulerKind::Plain, &mut self.sched, x, g)?,
                g.norm2(),
            ),
            OptimizerKind::Dbd => (
                scheduled_step(SchedulerKind::Dbd, &mut self.sched, x, g)?,
                g.norm2(),
            ),
            OptimizerKind::Rdbd => (
                scheduled_step(SchedulerKind::Rdbd, &mut self.sched, x, g)?,
                g.norm2(),
            ),
            OptimizerKind::Adam => {
                let adam = self.adam.as_mut().expect("adam state");
                let u = GradientEstimate::new(adam.direction(g)?, g.step())?;
                let norm = u.norm2();
                (
                    scheduled_step(SchedulerKind::Plain, &mut self.sched, x, &u)?,
                    norm,
                )
            }
            OptimizerKind::AdamRdbd => {
                let adam = self.adam.as_mut().expect("adam state");
                let out = adam_rdbd_step(adam, &mut self.sched, x, g)?;
                (out, crate::types::norm2(&self.sched.prev_update))
            }
        };
        x.assign(&outcome.new_values)?;
        Ok(VectorStep {
            alpha: outcome.new_alpha,
            h: outcome.h,
            reverted: outcome.reverted,
            update_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{adam_step, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS_HAT};

    fn hp(alpha0: f64, eta: f64) -> Hyperparams {
        Hyperparams {
            alpha0,
            eta,
            alpha_min: 0.0,
            alpha_max: None,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps_hat: DEFAULT_EPS_HAT,
        }
    }

    #[test]
    fn parses_names() {
        for k in OptimizerKind::ALL {
            assert_eq!(k.as_str().parse::<OptimizerKind>().unwrap(), k);
        }
        assert_eq!(
            "Adam+RDBD".parse::<OptimizerKind>().unwrap(),
            OptimizerKind::AdamRdbd
        );
        assert!("lbfgs".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn sgd_keeps_rate_fixed() {
        let mut opt = VectorOptimizer::new(OptimizerKind::Sgd, 2, &hp(0.1, 0.5)).unwrap();
        let mut x = ParamVector::new("x", vec![1.0, 1.0]).unwrap();
        for _ in 0..3 {
            let g = GradientEstimate::new(vec![1.0, 0.0], 0).unwrap();
            let s = opt.step(&mut x, &g).unwrap();
            assert_eq!(s.alpha, 0.1);
        }
        assert!((x.values()[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn adam_matches_baseline() {
        let mut opt = VectorOptimizer::new(OptimizerKind::Adam, 2, &hp(0.01, 0.0)).unwrap();
        let mut state = AdamState::new(2).unwrap();
        let mut x = ParamVector::new("x", vec![1.0, -1.0]).unwrap();
        let mut y = x.clone();
        for t in 0..10 {
            let g = GradientEstimate::new(vec![(t as f64).cos(), 0.5], t).unwrap();
            opt.step(&mut x, &g).unwrap();
            let (ny, _) = adam_step(&mut state, &y, &g, 0.01).unwrap();
            y.assign(&ny).unwrap();
        }
        assert_eq!(x, y);
    }

    #[test]
    fn adam_rdbd_defaults_cap() {
        let opt = VectorOptimizer::new(OptimizerKind::AdamRdbd, 3, &hp(0.005, 5e-7)).unwrap();
        assert!((opt.schedule().alpha_max - 0.05).abs() < 1e-15);
        let opt = VectorOptimizer::new(OptimizerKind::Rdbd, 3, &hp(0.005, 0.01)).unwrap();
        assert_eq!(opt.schedule().alpha_max, f64::INFINITY);
    }
}
