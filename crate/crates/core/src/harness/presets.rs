//! Named experiment setups.

use super::{ProblemSpec, RunConfig};
use crate::baselines::ADAM_RDBD_ETA;
use crate::data::{DEFAULT_BLOB_SEPARATION, DEFAULT_SUBSET};
use crate::error::{Error, Result};
use crate::optimizer::OptimizerKind;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub configs: Vec<RunConfig>,
    pub needs_mnist: bool,
}

const NAMES: [&str; 10] = [
    "mnist-default",
    "lr-robustness",
    "cifar-default",
    "logistic-default",
    "logistic-lr-robustness",
    "logistic-batch-size",
    "figure2",
    "figure3",
    "quadratic-fullbatch",
    "rosenbrock",
];

pub const LR_SWEEP: [f64; 5] = [0.01, 0.005, 0.001, 0.0005, 0.0001];
pub const BATCH_SWEEP: [usize; 4] = [4, 16, 64, 256];

pub const MNIST_STEPS: u64 = 3750;
pub const LOGISTIC_STEPS: u64 = 2000;

/// All preset names, including reserved ones that fail to build.
pub fn preset_names() -> &'static [&'static str] {
    &NAMES
}

fn mnist() -> ProblemSpec {
    ProblemSpec::MnistMlp {
        subset: DEFAULT_SUBSET,
        hidden: vec![128, 64],
    }
}

fn logistic() -> ProblemSpec {
    ProblemSpec::Logistic {
        n_samples: 2048,
        dim: 20,
        separation: DEFAULT_BLOB_SEPARATION,
    }
}

fn make(problem: &ProblemSpec, opt: OptimizerKind, steps: u64) -> RunConfig {
    let mut c = RunConfig::new(problem.clone(), opt);
    c.steps = steps;
    if opt == OptimizerKind::AdamRdbd {
        c.eta = ADAM_RDBD_ETA;
    }
    c
}

fn labelled(mut c: RunConfig, label: String) -> RunConfig {
    c.label = Some(label);
    c
}

fn lineup(problem: &ProblemSpec, opts: &[OptimizerKind], steps: u64) -> Vec<RunConfig> {
    opts.iter().map(|&o| make(problem, o, steps)).collect()
}

fn lr_sweep(problem: &ProblemSpec, steps: u64) -> Vec<RunConfig> {
    let mut out = Vec::new();
    for opt in [OptimizerKind::Sgd, OptimizerKind::Rdbd] {
        for a in LR_SWEEP {
            let mut c = make(problem, opt, steps);
            c.alpha0 = a;
            out.push(labelled(c, format!("{opt}-a{a}")));
        }
    }
    out
}

/// Builds the named preset. The CIFAR preset is reserved and returns a
/// configuration error.
pub fn preset(name: &str) -> Result<Preset> {
    use OptimizerKind::*;
    let (description, configs) = match name {
        "mnist-default" => (
            "MLP 784-128-64-10 on a 2048-sample MNIST subset, all optimizers",
            lineup(&mnist(), &OptimizerKind::ALL, MNIST_STEPS),
        ),
        "lr-robustness" => (
            "SGD and RDBD over an initial-rate sweep on MNIST",
            lr_sweep(&mnist(), MNIST_STEPS),
        ),
        "cifar-default" => {
            return Err(Error::Config(
                "preset 'cifar-default' is reserved: CIFAR-10 is not supported".into(),
            ))
        }
        "logistic-default" => (
            "logistic regression on 2048 synthetic points, all optimizers",
            lineup(&logistic(), &OptimizerKind::ALL, LOGISTIC_STEPS),
        ),
        "logistic-lr-robustness" => (
            "SGD and RDBD over an initial-rate sweep on logistic regression",
            lr_sweep(&logistic(), LOGISTIC_STEPS),
        ),
        "logistic-batch-size" => {
            let mut out = Vec::new();
            for opt in [Sgd, Rdbd] {
                for b in BATCH_SWEEP {
                    let mut c = make(&logistic(), opt, LOGISTIC_STEPS);
                    c.batch_size = b;
                    out.push(labelled(c, format!("{opt}-b{b}")));
                }
            }
            ("SGD and RDBD over batch sizes on logistic regression", out)
        }
        "figure2" => (
            "SGD, RDBD, Adam and Adam+RDBD on logistic regression",
            lineup(&logistic(), &[Sgd, Rdbd, Adam, AdamRdbd], LOGISTIC_STEPS),
        ),
        "figure3" => (
            "DBD against RDBD on logistic regression",
            lineup(&logistic(), &[Dbd, Rdbd], LOGISTIC_STEPS),
        ),
        "quadratic-fullbatch" => {
            // A = diag(1, 2), f(x0) - f* = 1, L = 2, |grad f(x0)|^2 = 3,
            // horizon 534 with gamma = 0.5.
            let problem = ProblemSpec::Quadratic {
                diag: vec![1.0, 2.0],
                b: vec![0.0, 0.0],
                x0: Some(vec![1.0, 0.5f64.sqrt()]),
            };
            let steps = 534;
            let configs = [Dbd, Rdbd]
                .iter()
                .map(|&o| {
                    let mut c = make(&problem, o, steps);
                    c.alpha0 = 0.5;
                    c.eta = 0.5 / (steps as f64 * 3.0 * 2.0);
                    c
                })
                .collect();
            (
                "full-batch DBD and RDBD on a 2-d quadratic with theory hyperparameters",
                configs,
            )
        }
        "rosenbrock" => {
            let configs = [Sgd, Dbd, Rdbd]
                .iter()
                .map(|&o| {
                    let mut c = make(&ProblemSpec::Rosenbrock, o, 5000);
                    c.alpha0 = 1e-3;
                    c.eta = 1e-8;
                    c
                })
                .collect();
            ("deterministic Rosenbrock from (-1.2, 1)", configs)
        }
        other => return Err(Error::Config(format!("unknown preset '{other}'"))),
    };
    let needs_mnist = configs.iter().any(|c: &RunConfig| c.problem.needs_mnist());
    Ok(Preset {
        name: NAMES
            .iter()
            .find(|n| **n == name)
            .copied()
            .unwrap_or("custom"),
        description,
        configs,
        needs_mnist,
    })
}
