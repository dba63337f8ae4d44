//! Delta-bar-delta learning-rate schedules with a sign-flip revert (RDBD),
//! SGD and Adam baselines, closed-form convergence bounds, a small problem
//! zoo and a seeded experiment harness.
//!
//! ```
//! use rdbd::schedulers::rdbd_step;
//! use rdbd::types::{GradientEstimate, ParamVector, ScheduleState};
//!
//! let mut state = ScheduleState::new(2, 0.1, 0.01).unwrap();
//! let mut x = ParamVector::new("x", vec![1.0, 2.0]).unwrap();
//! let g = GradientEstimate::new(vec![1.0, 2.0], 1).unwrap();
//! let out = rdbd_step(&mut state, &x, &g).unwrap();
//! x.assign(&out.new_values).unwrap();
//! assert_eq!(out.new_alpha, 0.1);
//! ```

pub mod baselines;
pub mod data;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod problems;
pub mod schedulers;
pub mod seeding;
pub mod theory;
pub mod types;

pub use error::{Error, Result};
pub use optimizer::{Hyperparams, OptimizerKind, VectorOptimizer};
pub use schedulers::SchedulerKind;
pub use types::{GradientEstimate, ParamVector, ScheduleState, StepOutcome, TheoryParams};
