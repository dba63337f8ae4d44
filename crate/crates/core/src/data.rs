//! Datasets: IDX container parsing, MNIST loading, stratified subsets,
//! synthetic Gaussian blobs and the epoch-shuffling batch sampler.

use std::env;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seeding;

pub const MNIST_DIR_ENV: &str = "MNIST_DIR";
/// Desk-scale MNIST training subset size.
pub const DEFAULT_SUBSET: usize = 2048;

const IDX_UBYTE: u8 = 0x08;

/// Dense row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    num_features: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        num_features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if num_features == 0 || num_classes == 0 {
            return Err(Error::invalid("dataset needs >= 1 feature and >= 1 class"));
        }
        if features.len() != n * num_features {
            return Err(Error::DimensionMismatch {
                expected: n * num_features,
                found: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self {
            features,
            labels,
            num_features,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("row {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, labels, self.num_features, self.num_classes)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// A decoded unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::Idx("missing magic number".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != IDX_UBYTE || bytes[3] == 0 {
        return Err(Error::Idx(format!(
            "bad magic {:02x}{:02x}{:02x}{:02x}",
            bytes[0], bytes[1], bytes[2], bytes[3]
        )));
    }
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Idx("truncated header".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Idx("dimension product overflows".into()))?;
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(Error::Idx(format!(
            "truncated payload: header claims {expected} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Idx(format!(
            "trailing data: header claims {expected} bytes, found {}",
            payload.len()
        )));
    }
    Ok(IdxTensor {
        dims,
        data: payload.to_vec(),
    })
}

pub fn serialize_idx(t: &IdxTensor) -> Result<Vec<u8>> {
    if t.dims.is_empty() || t.dims.len() > u8::MAX as usize {
        return Err(Error::Idx(format!("unsupported rank {}", t.dims.len())));
    }
    let expected: usize = t.dims.iter().product();
    if expected != t.data.len() {
        return Err(Error::Idx(format!(
            "dims describe {expected} bytes but tensor holds {}",
            t.data.len()
        )));
    }
    let mut out = Vec::with_capacity(4 + 4 * t.dims.len() + t.data.len());
    out.extend_from_slice(&[0, 0, IDX_UBYTE, t.dims.len() as u8]);
    for &d in &t.dims {
        let d = u32::try_from(d).map_err(|_| Error::Idx(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&t.data);
    Ok(out)
}

/// Gunzips `bytes` if they carry the gzip magic, otherwise returns them as is.
pub fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

pub fn read_idx_file(path: &Path) -> Result<IdxTensor> {
    parse_idx(&maybe_gunzip(fs::read(path)?)?)
}

/// Resolves the MNIST directory from an explicit path or `MNIST_DIR`.
pub fn mnist_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| env::var_os(MNIST_DIR_ENV).map(PathBuf::from))
}

fn find_idx(dir: &Path, prefix: &str, kind: &str) -> Option<PathBuf> {
    let dotted = kind.replacen('-', ".", 1);
    let stems = [
        format!("{prefix}-{kind}-ubyte"),
        format!("{prefix}-{dotted}-ubyte"),
    ];
    for stem in &stems {
        for suffix in ["", ".gz"] {
            let p = dir.join(format!("{stem}{suffix}"));
            if p.is_file() {
                return Some(p);
            }
        }
    }
    None
}

pub fn mnist_available(dir: &Path) -> bool {
    find_idx(dir, "train", "images-idx3").is_some()
        && find_idx(dir, "train", "labels-idx1").is_some()
}

/// Loads the MNIST training (or test) split with pixels scaled by 1/255.
pub fn load_mnist(dir: &Path, train: bool) -> Result<Dataset> {
    let prefix = if train { "train" } else { "t10k" };
    let images =
        find_idx(dir, prefix, "images-idx3").ok_or_else(|| Error::DataMissing(dir.into()))?;
    let labels =
        find_idx(dir, prefix, "labels-idx1").ok_or_else(|| Error::DataMissing(dir.into()))?;
    let images = read_idx_file(&images)?;
    let labels = read_idx_file(&labels)?;
    dataset_from_idx(&images, &labels, 10)
}

pub fn dataset_from_idx(
    images: &IdxTensor,
    labels: &IdxTensor,
    num_classes: usize,
) -> Result<Dataset> {
    if images.dims.len() < 2 || labels.dims.len() != 1 {
        return Err(Error::Idx(
            "expected an image tensor and a label vector".into(),
        ));
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(Error::Idx(format!(
            "{n} images but {} labels",
            labels.dims[0]
        )));
    }
    let per_image: usize = images.dims[1..].iter().product();
    let features = images.data.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels = labels.data.iter().map(|&l| l as usize).collect();
    Dataset::new(features, labels, per_image, num_classes)
}

/// Deterministic stratified subsample of `n` rows.
///
/// Each class receives its proportional share of `n` (largest remainder),
/// with at least one sample per non-empty class. Selected rows keep their
/// original relative order.
pub fn mnist_subset(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let total = dataset.len();
    if n > total {
        return Err(Error::invalid(format!(
            "subset of {n} from {total} samples"
        )));
    }
    let k = dataset.num_classes();
    if n < k {
        return Err(Error::invalid(format!(
            "subset of {n} cannot cover {k} classes"
        )));
    }
    if n == total {
        return Ok(dataset.clone());
    }
    let counts = dataset.class_counts();
    let quotas = stratified_quotas(&counts, n);

    let mut rng = seeding::stream_rng(seed, seeding::Stream::Subset);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..total {
        by_class[dataset.label(i)].push(i);
    }
    let mut chosen = Vec::with_capacity(n);
    for (members, &q) in by_class.iter_mut().zip(&quotas) {
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..q]);
    }
    chosen.sort_unstable();
    dataset.select(&chosen)
}

fn stratified_quotas(counts: &[usize], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let mut quotas: Vec<usize> = counts.iter().map(|&c| c * n / total).collect();
    let mut assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    // largest fractional part first; ties go to the lower class index
    order.sort_by_key(|&c| std::cmp::Reverse((counts[c] * n) % total));
    for &c in order.iter().cycle() {
        if assigned == n {
            break;
        }
        if quotas[c] < counts[c] {
            quotas[c] += 1;
            assigned += 1;
        }
    }
    // every populated class gets at least one row
    for c in 0..counts.len() {
        if counts[c] > 0 && quotas[c] == 0 {
            let donor = (0..counts.len())
                .max_by_key(|&d| (quotas[d], std::cmp::Reverse(d)))
                .unwrap();
            if quotas[donor] > 1 {
                quotas[donor] -= 1;
                quotas[c] = 1;
            }
        }
    }
    quotas
}

/// Default distance between class means for [`synthetic_blobs`].
pub const DEFAULT_BLOB_SEPARATION: f64 = 3.0;

pub fn synthetic_blobs(n: usize, dim: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    synthetic_blobs_with_separation(n, dim, num_classes, DEFAULT_BLOB_SEPARATION, seed)
}

/// Unit-variance Gaussian clusters. For `num_classes <= dim` the class means
/// sit on scaled coordinate axes so every pair of means is exactly
/// `separation` apart; otherwise means are drawn at random with that scale.
/// Labels are assigned round-robin so classes are balanced.
pub fn synthetic_blobs_with_separation(
    n: usize,
    dim: usize,
    num_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || dim == 0 {
        return Err(Error::invalid("blobs need >= 1 class and >= 1 dimension"));
    }
    if n < num_classes {
        return Err(Error::invalid(format!(
            "{n} samples cannot cover {num_classes} classes"
        )));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::invalid("separation must be finite and >= 0"));
    }
    let mut rng = seeding::stream_rng(seed, seeding::Stream::Data);
    let means = blob_means(dim, num_classes, separation, &mut rng);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % num_classes;
        for mu in &means[c] {
            let z: f64 = rng.sample(StandardNormal);
            features.push(mu + z);
        }
        labels.push(c);
    }
    Dataset::new(features, labels, dim, num_classes)
}

fn blob_means(dim: usize, k: usize, separation: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if k == 1 {
        return vec![vec![0.0; dim]];
    }
    if k <= dim {
        let r = separation / std::f64::consts::SQRT_2;
        return (0..k)
            .map(|c| {
                let mut m = vec![0.0; dim];
                m[c] = r;
                m
            })
            .collect();
    }
    (0..k)
        .map(|_| {
            (0..dim)
                .map(|_| separation * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Without-replacement epoch shuffler. The final batch of an epoch may be
/// short when the batch size does not divide `n`.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cannot sample from an empty dataset"));
        }
        if batch_size == 0 || batch_size > n {
            return Err(Error::invalid(format!(
                "batch size {batch_size} must lie in [1, {n}]"
            )));
        }
        let mut sampler = Self {
            batch_size,
            order: (0..n).collect(),
            cursor: 0,
            epoch: 0,
            rng: seeding::stream_rng(seed, seeding::Stream::Batches),
        };
        sampler.order.shuffle(&mut sampler.rng);
        Ok(sampler)
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn roll_epoch(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
        self.epoch += 1;
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.roll_epoch();
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    /// The remaining batches of the current epoch, or a whole fresh epoch if
    /// the current one is exhausted.
    pub fn epoch_batches(&mut self) -> Vec<Vec<usize>> {
        if self.cursor >= self.order.len() {
            self.roll_epoch();
        }
        let mut out = Vec::new();
        while self.cursor < self.order.len() {
            out.push(self.next_batch());
        }
        out
    }
}
