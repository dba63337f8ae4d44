//! Loss and gradient oracles.
//!
//! Every problem exposes a flat parameter vector split into named slots;
//! each slot becomes one independently scheduled [`ParamVector`]. Analytic
//! problems also publish whatever constants are known in closed form
//! (Lipschitz constant, optimum) so bounds can be checked against runs.
//!
//! [`ParamVector`]: crate::types::ParamVector

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{synthetic_blobs, Dataset};
use crate::error::{Error, Result};
use crate::seeding;
use crate::types::{norm2, GradientEstimate};

/// A contiguous named block of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub id: String,
    pub range: Range<usize>,
    /// Inputs feeding this block; sets the init scale.
    pub fan_in: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnownConstants {
    pub lipschitz: Option<f64>,
    pub f_star: Option<f64>,
    pub minimizer: Option<Vec<f64>>,
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Full-data loss.
    fn loss(&self, x: &[f64]) -> f64;

    /// Full-data gradient.
    fn full_gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Number of samples the loss averages over; 1 for deterministic problems.
    fn num_samples(&self) -> usize {
        1
    }

    /// Mean loss and gradient over the rows in `batch`. Deterministic
    /// problems ignore the batch.
    fn batch_loss_and_gradient(&self, x: &[f64], _batch: &[usize]) -> (f64, Vec<f64>) {
        (self.loss(x), self.full_gradient(x))
    }

    fn known_constants(&self) -> KnownConstants {
        KnownConstants::default()
    }

    fn slots(&self) -> Vec<Slot> {
        vec![Slot {
            id: "x".to_string(),
            range: 0..self.dim(),
            fan_in: self.dim(),
        }]
    }

    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    fn is_stochastic(&self) -> bool {
        self.num_samples() > 1
    }
}

/// Validated mini-batch gradient wrapped as an update estimate.
pub fn minibatch_gradient(
    problem: &dyn Problem,
    x: &[f64],
    batch: &[usize],
    step: u64,
) -> Result<GradientEstimate> {
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: x.len(),
        });
    }
    if problem.is_stochastic() {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if let Some(&i) = batch.iter().find(|&&i| i >= problem.num_samples()) {
            return Err(Error::invalid(format!("batch index {i} out of range")));
        }
    }
    let (_, g) = problem.batch_loss_and_gradient(x, batch);
    GradientEstimate::new(g, step)
}

/// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per slot.
pub fn fan_in_uniform_init(slots: &[Slot], dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for slot in slots {
        let bound = 1.0 / (slot.fan_in.max(1) as f64).sqrt();
        for v in &mut x[slot.range.clone()] {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    x
}

// ---------------------------------------------------------------------------
// quadratic

/// `f(x) = x^T A x / 2 - b^T x` with symmetric PSD `A`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    x0: Vec<f64>,
    constants: KnownConstants,
}

pub fn quadratic_problem(a: DMatrix<f64>, b: DVector<f64>) -> Result<QuadraticProblem> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::invalid(format!(
            "A must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quadratic coefficients"));
    }
    let scale = a.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::invalid("A must be symmetric"));
            }
        }
    }
    let eig = a.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if lmin < -1e-10 * scale {
        return Err(Error::invalid(format!(
            "A must be positive semidefinite, min eigenvalue {lmin}"
        )));
    }
    let mut constants = KnownConstants {
        lipschitz: Some(lmax.max(0.0)),
        ..Default::default()
    };
    if lmin > 1e-12 * scale {
        if let Some(chol) = a.clone().cholesky() {
            let xs = chol.solve(&b);
            constants.f_star = Some(-0.5 * b.dot(&xs));
            constants.minimizer = Some(xs.iter().copied().collect());
        }
    } else if b.iter().all(|&v| v == 0.0) {
        constants.f_star = Some(0.0);
        constants.minimizer = Some(vec![0.0; n]);
    }
    Ok(QuadraticProblem {
        a,
        b,
        x0: vec![1.0; n],
        constants,
    })
}

/// Quadratic with diagonal `A`.
pub fn quadratic_diag(diag: &[f64], b: &[f64]) -> Result<QuadraticProblem> {
    quadratic_problem(
        DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        DVector::from_column_slice(b),
    )
}

impl QuadraticProblem {
    pub fn with_start(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.b.len() {
            return Err(Error::DimensionMismatch {
                expected: self.b.len(),
                found: x0.len(),
            });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl Problem for QuadraticProblem {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    fn loss(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim());
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.a * &x)) - self.b.dot(&x)
    }

    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let x = DVector::from_column_slice(x);
        (&self.a * x - &self.b).iter().copied().collect()
    }

    fn known_constants(&self) -> KnownConstants {
        self.constants.clone()
    }

    fn initial_point(&self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.x0.clone()
    }
}

// ---------------------------------------------------------------------------
// rosenbrock

#[derive(Debug, Clone, Default)]
pub struct RosenbrockProblem;

pub fn rosenbrock_problem() -> RosenbrockProblem {
    RosenbrockProblem
}

impl Problem for RosenbrockProblem {
    fn name(&self) -> &str {
        "rosenbrock"
    }

    fn dim(&self) -> usize {
        2
    }

    fn loss(&self, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let (a, b) = (x[0], x[1]);
        let r = b - a * a;
        vec![-2.0 * (1.0 - a) - 400.0 * a * r, 200.0 * r]
    }

    fn known_constants(&self) -> KnownConstants {
        KnownConstants {
            lipschitz: None,
            f_star: Some(0.0),
            minimizer: Some(vec![1.0, 1.0]),
        }
    }

    fn initial_point(&self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![-1.2, 1.0]
    }
}

// ---------------------------------------------------------------------------
// logistic regression

/// Mean binary cross-entropy with a sigmoid link. Parameters are the
/// weight vector followed by a scalar bias.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    data: Dataset,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary problem on balanced synthetic blobs drawn from `seed`.
pub fn logistic_problem(n_samples: usize, dim: usize, seed: u64) -> Result<LogisticProblem> {
    if n_samples < dim {
        return Err(Error::invalid(format!(
            "need n_samples >= dim, got {n_samples} < {dim}"
        )));
    }
    LogisticProblem::new(synthetic_blobs(n_samples, dim, 2, seed)?)
}

impl LogisticProblem {
    pub fn new(data: Dataset) -> Result<Self> {
        if data.num_classes() != 2 {
            return Err(Error::invalid(
                "logistic regression needs exactly two classes",
            ));
        }
        Ok(Self { data })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    fn sample_terms(&self, x: &[f64], i: usize) -> (f64, f64) {
        let d = self.data.num_features();
        let row = self.data.row(i);
        let z: f64 = row.iter().zip(&x[..d]).map(|(a, w)| a * w).sum::<f64>() + x[d];
        let y = self.data.label(i) as f64;
        (softplus(z) - y * z, sigmoid(z) - y)
    }

    fn accumulate(&self, x: &[f64], rows: impl Iterator<Item = usize>) -> (f64, Vec<f64>) {
        assert_eq!(x.len(), self.dim());
        let d = self.data.num_features();
        let mut loss = 0.0;
        let mut grad = vec![0.0; d + 1];
        let mut count = 0usize;
        for i in rows {
            let (l, r) = self.sample_terms(x, i);
            loss += l;
            for (g, a) in grad.iter_mut().zip(self.data.row(i)) {
                *g += r * a;
            }
            grad[d] += r;
            count += 1;
        }
        let inv = 1.0 / count.max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }
}

impl Problem for LogisticProblem {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.data.num_features() + 1
    }

    fn loss(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim());
        let n = self.data.len();
        (0..n).map(|i| self.sample_terms(x, i).0).sum::<f64>() / n as f64
    }

    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.accumulate(x, 0..self.data.len()).1
    }

    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn batch_loss_and_gradient(&self, x: &[f64], batch: &[usize]) -> (f64, Vec<f64>) {
        self.accumulate(x, batch.iter().copied())
    }

    fn slots(&self) -> Vec<Slot> {
        let d = self.data.num_features();
        vec![
            Slot {
                id: "weight".into(),
                range: 0..d,
                fan_in: d,
            },
            Slot {
                id: "bias".into(),
                range: d..d + 1,
                fan_in: d,
            },
        ]
    }

    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        fan_in_uniform_init(&self.slots(), self.dim(), rng)
    }
}

// ---------------------------------------------------------------------------
// multilayer perceptron

/// Fully connected ReLU network with a softmax cross-entropy head.
///
/// Parameters are laid out layer by layer as a row-major `out x in` weight
/// matrix followed by its bias; each is its own slot.
#[derive(Debug, Clone)]
pub struct MlpProblem {
    sizes: Vec<usize>,
    data: Dataset,
    offsets: Vec<(usize, usize)>,
    dim: usize,
}

/// Layer sizes used for the MNIST network.
pub const MNIST_LAYERS: [usize; 4] = [784, 128, 64, 10];

pub fn mlp_problem(layer_sizes: &[usize], data: Dataset) -> Result<MlpProblem> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::invalid("an MLP needs at least two non-empty layers"));
    }
    if layer_sizes[0] != data.num_features() {
        return Err(Error::DimensionMismatch {
            expected: data.num_features(),
            found: layer_sizes[0],
        });
    }
    let out = *layer_sizes.last().unwrap();
    if out != data.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: data.num_classes(),
            found: out,
        });
    }
    let mut offsets = Vec::new();
    let mut at = 0;
    for w in layer_sizes.windows(2) {
        let weights = at;
        let bias = weights + w[0] * w[1];
        offsets.push((weights, bias));
        at = bias + w[1];
    }
    Ok(MlpProblem {
        sizes: layer_sizes.to_vec(),
        data,
        offsets,
        dim: at,
    })
}

struct Activations {
    /// post-activation values per layer, index 0 is the input
    acts: Vec<Vec<f64>>,
    /// pre-activation values per layer (excluding input)
    pre: Vec<Vec<f64>>,
}

impl MlpProblem {
    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn forward(&self, x: &[f64], input: &[f64]) -> Activations {
        let mut acts = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(self.layers());
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (wo, bo) = self.offsets[l];
            let a = &acts[l];
            let mut z = x[bo..bo + n_out].to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &x[wo + o * n_in..wo + (o + 1) * n_in];
                *zo += row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>();
            }
            let last = l + 1 == self.layers();
            let h = if last {
                z.clone()
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
            pre.push(z);
            acts.push(h);
        }
        Activations { acts, pre }
    }

    /// Cross-entropy of one sample and the logit gradient `softmax - onehot`.
    fn head(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| (z - m).exp()).sum();
        let lse = m + sum.ln();
        let mut delta: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
        delta[label] -= 1.0;
        (lse - logits[label], delta)
    }

    fn sample_loss(&self, x: &[f64], i: usize) -> f64 {
        let fw = self.forward(x, self.data.row(i));
        Self::head(fw.acts.last().unwrap(), self.data.label(i)).0
    }

    fn accumulate(&self, x: &[f64], rows: impl Iterator<Item = usize>) -> (f64, Vec<f64>) {
        assert_eq!(x.len(), self.dim);
        let mut grad = vec![0.0; self.dim];
        let mut loss = 0.0;
        let mut count = 0usize;
        for i in rows {
            let fw = self.forward(x, self.data.row(i));
            let (l, mut delta) = Self::head(fw.acts.last().unwrap(), self.data.label(i));
            loss += l;
            count += 1;
            for layer in (0..self.layers()).rev() {
                let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
                let (wo, bo) = self.offsets[layer];
                let a = &fw.acts[layer];
                for o in 0..n_out {
                    let d = delta[o];
                    grad[bo + o] += d;
                    if d != 0.0 {
                        for (g, v) in grad[wo + o * n_in..wo + (o + 1) * n_in].iter_mut().zip(a) {
                            *g += d * v;
                        }
                    }
                }
                if layer > 0 {
                    let z = &fw.pre[layer - 1];
                    let mut back = vec![0.0; n_in];
                    for (o, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let row = &x[wo + o * n_in..wo + (o + 1) * n_in];
                        for (bk, w) in back.iter_mut().zip(row) {
                            *bk += d * w;
                        }
                    }
                    for (bk, zk) in back.iter_mut().zip(z) {
                        if *zk <= 0.0 {
                            *bk = 0.0;
                        }
                    }
                    delta = back;
                }
            }
        }
        let inv = 1.0 / count.max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }
}

impl Problem for MlpProblem {
    fn name(&self) -> &str {
        "mlp"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        let n = self.data.len();
        (0..n).map(|i| self.sample_loss(x, i)).sum::<f64>() / n as f64
    }

    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.accumulate(x, 0..self.data.len()).1
    }

    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn batch_loss_and_gradient(&self, x: &[f64], batch: &[usize]) -> (f64, Vec<f64>) {
        self.accumulate(x, batch.iter().copied())
    }

    fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::with_capacity(2 * self.layers());
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (wo, bo) = self.offsets[l];
            out.push(Slot {
                id: format!("layer{l}.weight"),
                range: wo..bo,
                fan_in: n_in,
            });
            out.push(Slot {
                id: format!("layer{l}.bias"),
                range: bo..bo + n_out,
                fan_in: n_in,
            });
        }
        out
    }

    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        fan_in_uniform_init(&self.slots(), self.dim, rng)
    }
}

// ---------------------------------------------------------------------------
// verification helpers

/// Central-difference approximation of the full-data gradient.
pub fn finite_difference_gradient(problem: &dyn Problem, x: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: x.len(),
        });
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = problem.loss(&probe);
        probe[i] = orig - step;
        let down = problem.loss(&probe);
        probe[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Ball to sample when estimating the update-norm bound.
#[derive(Debug, Clone)]
pub struct SigmaRegion {
    pub center: Vec<f64>,
    pub radius: f64,
    pub samples: usize,
    /// Mini-batch size; `None` uses the full gradient.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

/// Safety factor applied to the largest observed norm.
pub const SIGMA_SAFETY: f64 = 1.1;

/// Largest gradient norm seen at points sampled uniformly from the region,
/// times [`SIGMA_SAFETY`].
pub fn estimate_sigma(problem: &dyn Problem, region: &SigmaRegion) -> Result<f64> {
    if region.samples == 0 {
        return Err(Error::invalid("estimate_sigma needs at least one sample"));
    }
    let d = problem.dim();
    if region.center.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: region.center.len(),
        });
    }
    if !(region.radius >= 0.0 && region.radius.is_finite()) {
        return Err(Error::invalid("region radius must be finite and >= 0"));
    }
    let n = problem.num_samples();
    let batch = region.batch_size.map(|b| b.clamp(1, n));
    let mut rng = seeding::stream_rng(region.seed, seeding::Stream::Probe);
    let mut best: f64 = 0.0;
    let mut point = vec![0.0; d];
    for _ in 0..region.samples {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm2(&dir).max(f64::MIN_POSITIVE);
        let r = region.radius * rng.gen::<f64>().powf(1.0 / d as f64);
        for ((p, c), u) in point.iter_mut().zip(&region.center).zip(&dir) {
            *p = c + r * u / len;
        }
        let g = match batch {
            Some(b) if problem.is_stochastic() => {
                let rows: Vec<usize> = (0..b).map(|_| rng.gen_range(0..n)).collect();
                problem.batch_loss_and_gradient(&point, &rows).1
            }
            _ => problem.full_gradient(&point),
        };
        best = best.max(norm2(&g));
    }
    Ok(best * SIGMA_SAFETY)
}
