//! Experiment runner: builds a problem, drives one optimizer per parameter
//! slot over a seeded batch stream and records a per-step trace.

mod compare;
mod config;
mod plot;
mod presets;
mod trace;

use std::path::PathBuf;
use std::time::Instant;

pub use compare::{
    compare, quantile, summarize, ComparisonRow, ComparisonTable, Metric, RunSummary,
};
pub use config::{parse_config, render_config};
pub use plot::{plot_rows, read_plot_csv, write_plot_csv, PlotRow, Series};
pub use presets::{preset, preset_names, Preset};
pub use trace::{
    read_trace_csv, trace_csv_string, write_trace_csv, Trace, TraceRecord, VectorRecord,
};

use crate::baselines::{DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS_HAT};
use crate::data::{self, load_mnist, mnist_subset, synthetic_blobs_with_separation, BatchSampler};
use crate::error::{Error, Result};
use crate::optimizer::{Hyperparams, OptimizerKind, VectorOptimizer};
use crate::problems::{self, LogisticProblem, Problem};
use crate::seeding::{self, Stream};
use crate::types::{norm2, GradientEstimate, ParamVector};

pub const DEFAULT_EVAL_EVERY: u64 = 25;
/// Default loss threshold for the steps-to-threshold metric.
pub const DEFAULT_LOSS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    /// `A = diag(diag)`, linear term `b`, start `x0` (ones when absent).
    Quadratic {
        diag: Vec<f64>,
        b: Vec<f64>,
        x0: Option<Vec<f64>>,
    },
    Rosenbrock,
    Logistic {
        n_samples: usize,
        dim: usize,
        separation: f64,
    },
    /// ReLU MLP on synthetic blobs.
    BlobsMlp {
        n_samples: usize,
        dim: usize,
        classes: usize,
        hidden: Vec<usize>,
        separation: f64,
    },
    /// ReLU MLP on a stratified MNIST subset.
    MnistMlp {
        subset: usize,
        hidden: Vec<usize>,
    },
}

impl ProblemSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ProblemSpec::Quadratic { .. } => "quadratic",
            ProblemSpec::Rosenbrock => "rosenbrock",
            ProblemSpec::Logistic { .. } => "logistic",
            ProblemSpec::BlobsMlp { .. } => "blobs-mlp",
            ProblemSpec::MnistMlp { .. } => "mnist-mlp",
        }
    }

    pub fn needs_mnist(&self) -> bool {
        matches!(self, ProblemSpec::MnistMlp { .. })
    }

    fn sample_count(&self) -> Option<usize> {
        match self {
            ProblemSpec::Quadratic { .. } | ProblemSpec::Rosenbrock => None,
            ProblemSpec::Logistic { n_samples, .. } | ProblemSpec::BlobsMlp { n_samples, .. } => {
                Some(*n_samples)
            }
            ProblemSpec::MnistMlp { subset, .. } => Some(*subset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub label: Option<String>,
    pub problem: ProblemSpec,
    pub optimizer: OptimizerKind,
    pub alpha0: f64,
    pub eta: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub alpha_min: f64,
    pub alpha_max: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub eval_every: u64,
    /// Record wall-clock milliseconds. Off by default so traces are
    /// byte-reproducible.
    pub record_timing: bool,
    pub mnist_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(problem: ProblemSpec, optimizer: OptimizerKind) -> Self {
        Self {
            label: None,
            problem,
            optimizer,
            alpha0: 0.005,
            eta: 0.01,
            batch_size: 16,
            steps: 1000,
            seed: 0,
            alpha_min: 0.0,
            alpha_max: None,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps_hat: DEFAULT_EPS_HAT,
            eval_every: DEFAULT_EVAL_EVERY,
            record_timing: false,
            mnist_dir: None,
            output: None,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            alpha0: self.alpha0,
            eta: self.eta,
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_hat: self.eps_hat,
        }
    }

    /// Disables clamping in both directions.
    pub fn unclamped(mut self) -> Self {
        self.alpha_min = f64::NEG_INFINITY;
        self.alpha_max = Some(f64::INFINITY);
        self
    }

    pub fn run_id(&self) -> String {
        let label = self
            .label
            .clone()
            .unwrap_or_else(|| self.optimizer.to_string());
        format!("{label}-seed{}", self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("eta", self.eta),
            ("eps_hat", self.eps_hat),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.eta < 0.0 {
            return bad("eta must be >= 0".into());
        }
        if self.alpha_min.is_nan()
            || self
                .alpha_max
                .is_some_and(|m| m.is_nan() || m < self.alpha_min)
        {
            return bad("alpha clamp range is invalid".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1)"));
            }
        }
        if let Some(n) = self.problem.sample_count() {
            if self.batch_size > n {
                return bad(format!(
                    "batch_size {} exceeds {n} samples",
                    self.batch_size
                ));
            }
        }
        match &self.problem {
            ProblemSpec::Quadratic { diag, b, x0 } => {
                if diag.is_empty()
                    || diag.len() != b.len()
                    || x0.as_ref().is_some_and(|x| x.len() != b.len())
                {
                    return bad("quadratic diag, b and x0 must share one non-zero length".into());
                }
            }
            ProblemSpec::Logistic { n_samples, dim, .. } => {
                if *dim == 0 || n_samples < dim {
                    return bad("logistic needs dim >= 1 and n_samples >= dim".into());
                }
            }
            ProblemSpec::BlobsMlp {
                n_samples, classes, ..
            } if n_samples < classes => {
                return bad("blobs-mlp needs n_samples >= classes".into());
            }
            _ => {}
        }
        Ok(())
    }
}

/// Instantiates the problem for `config`; datasets are drawn from the
/// config's seed.
pub fn build_problem(config: &RunConfig) -> Result<Box<dyn Problem>> {
    let seed = config.seed;
    Ok(match &config.problem {
        ProblemSpec::Quadratic { diag, b, x0 } => {
            let q = problems::quadratic_diag(diag, b)?;
            match x0 {
                Some(x0) => Box::new(q.with_start(x0.clone())?),
                None => Box::new(q),
            }
        }
        ProblemSpec::Rosenbrock => Box::new(problems::rosenbrock_problem()),
        ProblemSpec::Logistic {
            n_samples,
            dim,
            separation,
        } => {
            let ds = synthetic_blobs_with_separation(*n_samples, *dim, 2, *separation, seed)?;
            Box::new(LogisticProblem::new(ds)?)
        }
        ProblemSpec::BlobsMlp {
            n_samples,
            dim,
            classes,
            hidden,
            separation,
        } => {
            let ds =
                synthetic_blobs_with_separation(*n_samples, *dim, *classes, *separation, seed)?;
            Box::new(problems::mlp_problem(
                &layer_sizes(*dim, hidden, *classes),
                ds,
            )?)
        }
        ProblemSpec::MnistMlp { subset, hidden } => {
            let dir = data::mnist_dir(config.mnist_dir.as_deref()).ok_or_else(|| {
                Error::DataMissing(PathBuf::from(format!("${}", data::MNIST_DIR_ENV)))
            })?;
            let full = load_mnist(&dir, true)?;
            let ds = mnist_subset(&full, *subset, seed)?;
            let sizes = layer_sizes(ds.num_features(), hidden, ds.num_classes());
            Box::new(problems::mlp_problem(&sizes, ds)?)
        }
    })
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

enum Batches {
    Deterministic,
    Full(Vec<usize>),
    Sampled(Box<BatchSampler>),
}

impl Batches {
    fn next(&mut self) -> Vec<usize> {
        match self {
            Batches::Deterministic => Vec::new(),
            Batches::Full(all) => all.clone(),
            Batches::Sampled(s) => s.next_batch(),
        }
    }
}

/// Runs `config` and writes its trace to `config.output` when set.
pub fn run(config: &RunConfig) -> Result<Trace> {
    config.validate()?;
    let problem = build_problem(config)?;
    run_on(config, problem.as_ref())
}

/// Runs `config` against an already constructed problem.
pub fn run_on(config: &RunConfig, problem: &dyn Problem) -> Result<Trace> {
    config.validate()?;
    let mut x = problem.initial_point(&mut seeding::stream_rng(config.seed, Stream::Init));
    let slots = problem.slots();
    let hp = config.hyperparams();
    let mut optimizers = slots
        .iter()
        .map(|s| VectorOptimizer::new(config.optimizer, s.range.len(), &hp))
        .collect::<Result<Vec<_>>>()?;

    let n = problem.num_samples();
    let mut batches = if !problem.is_stochastic() {
        Batches::Deterministic
    } else if config.batch_size >= n {
        Batches::Full((0..n).collect())
    } else {
        Batches::Sampled(Box::new(BatchSampler::new(
            n,
            config.batch_size,
            config.seed,
        )?))
    };

    let mut trace = Trace {
        run_id: config.run_id(),
        optimizer: config.optimizer,
        alpha0: config.alpha0,
        eta: config.eta,
        vector_ids: slots.iter().map(|s| s.id.clone()).collect(),
        initial_loss: problem.loss(&x),
        records: Vec::with_capacity(config.steps as usize),
    };
    let start = Instant::now();

    for step in 1..=config.steps {
        let batch = batches.next();
        let (loss, grad) = problem.batch_loss_and_gradient(&x, &batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return abort(config, trace, step, "non-finite loss or gradient");
        }
        let mut vectors = Vec::with_capacity(slots.len());
        for (slot, opt) in slots.iter().zip(optimizers.iter_mut()) {
            let r = slot.range.clone();
            let g = GradientEstimate::new(grad[r.clone()].to_vec(), step)?;
            let mut pv = ParamVector::new(slot.id.clone(), x[r.clone()].to_vec())?;
            let s = match opt.step(&mut pv, &g) {
                Ok(s) => s,
                Err(Error::NonFinite(what)) => {
                    return abort(
                        config,
                        trace,
                        step,
                        &format!("non-finite {what} in {}", slot.id),
                    )
                }
                Err(e) => return Err(e),
            };
            x[r].copy_from_slice(pv.values());
            vectors.push(VectorRecord {
                grad_norm: g.norm2(),
                update_norm: s.update_norm,
                alpha: s.alpha,
                h: s.h,
                reverted: s.reverted,
            });
        }
        let evaluate =
            !problem.is_stochastic() || step % config.eval_every == 0 || step == config.steps;
        let full_loss = evaluate.then(|| problem.loss(&x));
        if full_loss.is_some_and(|l| !l.is_finite()) {
            return abort(config, trace, step, "non-finite full loss");
        }
        trace.records.push(TraceRecord {
            step,
            loss,
            full_loss,
            vectors,
            wall_ms: if config.record_timing {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        });
    }

    if let Some(path) = &config.output {
        write_trace_csv(&trace, path)?;
    }
    Ok(trace)
}

fn abort(config: &RunConfig, trace: Trace, step: u64, reason: &str) -> Result<Trace> {
    if let Some(path) = &config.output {
        write_trace_csv(&trace, path)?;
    }
    Err(Error::NumericFailure {
        step,
        reason: reason.to_string(),
    })
}

/// Euclidean norm of the full (all-slot) gradient at one record.
pub fn total_grad_norm(record: &TraceRecord) -> f64 {
    norm2(
        &record
            .vectors
            .iter()
            .map(|v| v.grad_norm)
            .collect::<Vec<_>>(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic(opt: OptimizerKind) -> RunConfig {
        let mut c = RunConfig::new(
            ProblemSpec::Logistic {
                n_samples: 128,
                dim: 4,
                separation: 3.0,
            },
            opt,
        );
        c.steps = 60;
        c.eval_every = 10;
        c.seed = 3;
        c
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = logistic(OptimizerKind::Sgd);
        c.steps = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = logistic(OptimizerKind::Sgd);
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = logistic(OptimizerKind::Sgd);
        c.batch_size = 129;
        assert!(c.validate().is_err());
        let mut c = logistic(OptimizerKind::Sgd);
        c.alpha0 = f64::NAN;
        assert!(c.validate().is_err());
        let mut c = logistic(OptimizerKind::Sgd);
        c.alpha_max = Some(-1.0);
        assert!(c.validate().is_err());
        assert!(logistic(OptimizerKind::Sgd).validate().is_ok());
    }

    #[test]
    fn trace_shape() {
        let t = run(&logistic(OptimizerKind::Rdbd)).unwrap();
        assert_eq!(t.records.len(), 60);
        assert_eq!(t.vector_ids, vec!["weight", "bias"]);
        assert!(t.records.windows(2).all(|w| w[0].step < w[1].step));
        let evals: Vec<u64> = t
            .records
            .iter()
            .filter(|r| r.full_loss.is_some())
            .map(|r| r.step)
            .collect();
        assert_eq!(evals, vec![10, 20, 30, 40, 50, 60]);
    }

    #[test]
    fn runs_are_deterministic() {
        for opt in OptimizerKind::ALL {
            let a = run(&logistic(opt)).unwrap();
            let b = run(&logistic(opt)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn optimizers_share_batches_and_init() {
        let a = run(&logistic(OptimizerKind::Sgd)).unwrap();
        let b = run(&logistic(OptimizerKind::Rdbd)).unwrap();
        // identical init and first batch, and RDBD's first step has h = 0
        assert_eq!(a.initial_loss, b.initial_loss);
        assert_eq!(a.records[0].loss, b.records[0].loss);
        assert_eq!(a.records[0].vectors, b.records[0].vectors);
    }

    #[test]
    fn reverted_steps_have_negative_dot_products() {
        let mut c = logistic(OptimizerKind::Rdbd);
        c.steps = 400;
        c.eta = 0.5;
        let t = run(&c).unwrap();
        let mut reverts = 0;
        for v in 0..t.vector_ids.len() {
            for w in t.records.windows(2) {
                if w[1].vectors[v].reverted {
                    reverts += 1;
                    assert!(w[1].vectors[v].h * w[0].vectors[v].h < 0.0);
                }
            }
        }
        assert!(reverts > 0);
    }

    #[test]
    fn numeric_failure_flushes_trace() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(
            ProblemSpec::Quadratic {
                diag: vec![1.0],
                b: vec![0.0],
                x0: None,
            },
            OptimizerKind::Sgd,
        );
        // alpha = 3 on f = x^2/2 multiplies x by -2 each step
        c.alpha0 = 3.0;
        c.steps = 5000;
        c.output = Some(dir.path().join("t.csv"));
        match run(&c) {
            Err(Error::NumericFailure { step, .. }) => {
                let back = read_trace_csv(c.output.as_ref().unwrap()).unwrap();
                assert_eq!(back.len() as u64, step - 1);
            }
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn missing_mnist_is_reported() {
        let mut c = RunConfig::new(
            ProblemSpec::MnistMlp {
                subset: 64,
                hidden: vec![8],
            },
            OptimizerKind::Rdbd,
        );
        c.mnist_dir = Some(PathBuf::from("/nonexistent/mnist"));
        assert!(matches!(run(&c), Err(Error::DataMissing(_))));
    }

    #[test]
    fn blobs_mlp_trains() {
        let mut c = RunConfig::new(
            ProblemSpec::BlobsMlp {
                n_samples: 256,
                dim: 6,
                classes: 3,
                hidden: vec![8],
                separation: 4.0,
            },
            OptimizerKind::Rdbd,
        );
        c.alpha0 = 0.05;
        c.steps = 300;
        let t = run(&c).unwrap();
        assert!(t.final_loss() < t.initial_loss);
    }
}
