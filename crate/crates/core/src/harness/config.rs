//! Flat `key = value` run configuration files.
//!
//! Blank lines and `#` comments are ignored. A `preset = <name>` line seeds
//! every field from that preset's first run; later keys override it.
//! Recognised keys:
//!
//! ```text
//! preset, label, problem, optimizer, alpha0, eta, batch_size, steps, seed,
//! alpha_min, alpha_max, beta1, beta2, eps_hat, eval_every, record_timing,
//! mnist_dir, output,
//! diag, b, x0                          (quadratic)
//! n_samples, dim, separation           (logistic, blobs-mlp)
//! classes, hidden                      (blobs-mlp; hidden also for mnist-mlp)
//! subset                               (mnist-mlp)
//! ```
//!
//! Lists are comma separated. `alpha_min = -inf` / `alpha_max = inf`
//! disable clamping; `alpha_max = none` restores the optimizer default.

use std::path::PathBuf;
use std::str::FromStr;

use super::presets::preset;
use super::trace::fmt_f64;
use super::{ProblemSpec, RunConfig};
use crate::data::{DEFAULT_BLOB_SEPARATION, DEFAULT_SUBSET};
use crate::error::{Error, Result};
use crate::optimizer::OptimizerKind;

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{v}' for '{key}'"))),
    }
}

#[derive(Default)]
struct ProblemFields {
    kind: Option<String>,
    diag: Option<Vec<f64>>,
    b: Option<Vec<f64>>,
    x0: Option<Vec<f64>>,
    n_samples: Option<usize>,
    dim: Option<usize>,
    separation: Option<f64>,
    classes: Option<usize>,
    hidden: Option<Vec<usize>>,
    subset: Option<usize>,
}

impl ProblemFields {
    fn touched(&self) -> bool {
        self.kind.is_some()
            || self.diag.is_some()
            || self.b.is_some()
            || self.x0.is_some()
            || self.n_samples.is_some()
            || self.dim.is_some()
            || self.separation.is_some()
            || self.classes.is_some()
            || self.hidden.is_some()
            || self.subset.is_some()
    }

    /// Merges the fields over `base`, which supplies any missing values when
    /// it is the same kind of problem.
    fn build(self, base: Option<&ProblemSpec>) -> Result<ProblemSpec> {
        let kind = self
            .kind
            .clone()
            .or_else(|| base.map(|b| b.kind_name().to_string()))
            .ok_or_else(|| Error::Config("missing 'problem'".into()))?;
        let base = base.filter(|b| b.kind_name() == kind);
        Ok(match kind.as_str() {
            "quadratic" => {
                let (bd, bb, bx) = match base {
                    Some(ProblemSpec::Quadratic { diag, b, x0 }) => {
                        (Some(diag.clone()), Some(b.clone()), x0.clone())
                    }
                    _ => (None, None, None),
                };
                let diag = self
                    .diag
                    .or(bd)
                    .ok_or_else(|| Error::Config("quadratic needs 'diag'".into()))?;
                let b = self.b.or(bb).unwrap_or_else(|| vec![0.0; diag.len()]);
                ProblemSpec::Quadratic {
                    diag,
                    b,
                    x0: self.x0.or(bx),
                }
            }
            "rosenbrock" => ProblemSpec::Rosenbrock,
            "logistic" => {
                let (bn, bd, bs) = match base {
                    Some(ProblemSpec::Logistic {
                        n_samples,
                        dim,
                        separation,
                    }) => (Some(*n_samples), Some(*dim), Some(*separation)),
                    _ => (None, None, None),
                };
                ProblemSpec::Logistic {
                    n_samples: self.n_samples.or(bn).unwrap_or(2048),
                    dim: self.dim.or(bd).unwrap_or(20),
                    separation: self.separation.or(bs).unwrap_or(DEFAULT_BLOB_SEPARATION),
                }
            }
            "blobs-mlp" => {
                let b = match base {
                    Some(ProblemSpec::BlobsMlp {
                        n_samples,
                        dim,
                        classes,
                        hidden,
                        separation,
                    }) => Some((*n_samples, *dim, *classes, hidden.clone(), *separation)),
                    _ => None,
                };
                ProblemSpec::BlobsMlp {
                    n_samples: self.n_samples.or(b.as_ref().map(|b| b.0)).unwrap_or(1024),
                    dim: self.dim.or(b.as_ref().map(|b| b.1)).unwrap_or(16),
                    classes: self.classes.or(b.as_ref().map(|b| b.2)).unwrap_or(4),
                    hidden: self
                        .hidden
                        .or(b.as_ref().map(|b| b.3.clone()))
                        .unwrap_or_else(|| vec![32, 16]),
                    separation: self
                        .separation
                        .or(b.as_ref().map(|b| b.4))
                        .unwrap_or(DEFAULT_BLOB_SEPARATION),
                }
            }
            "mnist-mlp" => {
                let (bs, bh) = match base {
                    Some(ProblemSpec::MnistMlp { subset, hidden }) => {
                        (Some(*subset), Some(hidden.clone()))
                    }
                    _ => (None, None),
                };
                ProblemSpec::MnistMlp {
                    subset: self.subset.or(bs).unwrap_or(DEFAULT_SUBSET),
                    hidden: self.hidden.or(bh).unwrap_or_else(|| vec![128, 64]),
                }
            }
            other => return Err(Error::Config(format!("unknown problem '{other}'"))),
        })
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", no + 1)))?;
        entries.push((k.trim().to_string(), v.trim().to_string()));
    }

    let base = match entries.iter().find(|(k, _)| k == "preset") {
        Some((_, name)) => Some(
            preset(name)?
                .configs
                .into_iter()
                .next()
                .ok_or_else(|| Error::Config(format!("preset '{name}' has no runs")))?,
        ),
        None => None,
    };

    let mut pf = ProblemFields::default();
    let mut optimizer = base.as_ref().map(|b| b.optimizer);
    let mut scalar = Vec::new();
    for (k, v) in &entries {
        match k.as_str() {
            "preset" => {}
            "problem" => pf.kind = Some(v.clone()),
            "diag" => pf.diag = Some(parse_list(k, v)?),
            "b" => pf.b = Some(parse_list(k, v)?),
            "x0" => pf.x0 = Some(parse_list(k, v)?),
            "n_samples" => pf.n_samples = Some(parse(k, v)?),
            "dim" => pf.dim = Some(parse(k, v)?),
            "separation" => pf.separation = Some(parse(k, v)?),
            "classes" => pf.classes = Some(parse(k, v)?),
            "hidden" => pf.hidden = Some(parse_list(k, v)?),
            "subset" => pf.subset = Some(parse(k, v)?),
            "optimizer" => optimizer = Some(v.parse::<OptimizerKind>()?),
            _ => scalar.push((k, v)),
        }
    }
    let problem = match &base {
        Some(b) if !pf.touched() => b.problem.clone(),
        _ => pf.build(base.as_ref().map(|b| &b.problem))?,
    };
    let optimizer = optimizer.ok_or_else(|| Error::Config("missing 'optimizer'".into()))?;
    let mut cfg = match base {
        Some(mut b) => {
            b.problem = problem;
            b.optimizer = optimizer;
            b
        }
        None => RunConfig::new(problem, optimizer),
    };

    for (k, v) in scalar {
        match k.as_str() {
            "label" => cfg.label = Some(v.clone()),
            "alpha0" => cfg.alpha0 = parse(k, v)?,
            "eta" => cfg.eta = parse(k, v)?,
            "batch_size" => cfg.batch_size = parse(k, v)?,
            "steps" => cfg.steps = parse(k, v)?,
            "seed" => cfg.seed = parse(k, v)?,
            "alpha_min" => cfg.alpha_min = parse(k, v)?,
            "alpha_max" => {
                cfg.alpha_max = if v == "none" {
                    None
                } else {
                    Some(parse(k, v)?)
                }
            }
            "beta1" => cfg.beta1 = parse(k, v)?,
            "beta2" => cfg.beta2 = parse(k, v)?,
            "eps_hat" => cfg.eps_hat = parse(k, v)?,
            "eval_every" => cfg.eval_every = parse(k, v)?,
            "record_timing" => cfg.record_timing = parse_bool(k, v)?,
            "mnist_dir" => cfg.mnist_dir = Some(PathBuf::from(v)),
            "output" => cfg.output = Some(PathBuf::from(v)),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders `cfg` in the format accepted by [`parse_config`].
pub fn render_config(cfg: &RunConfig) -> String {
    let mut lines = Vec::new();
    let mut kv = |k: &str, v: String| lines.push(format!("{k} = {v}"));
    if let Some(l) = &cfg.label {
        kv("label", l.clone());
    }
    kv("problem", cfg.problem.kind_name().to_string());
    match &cfg.problem {
        ProblemSpec::Quadratic { diag, b, x0 } => {
            kv("diag", join(diag));
            kv("b", join(b));
            if let Some(x0) = x0 {
                kv("x0", join(x0));
            }
        }
        ProblemSpec::Rosenbrock => {}
        ProblemSpec::Logistic {
            n_samples,
            dim,
            separation,
        } => {
            kv("n_samples", n_samples.to_string());
            kv("dim", dim.to_string());
            kv("separation", fmt_f64(*separation));
        }
        ProblemSpec::BlobsMlp {
            n_samples,
            dim,
            classes,
            hidden,
            separation,
        } => {
            kv("n_samples", n_samples.to_string());
            kv("dim", dim.to_string());
            kv("classes", classes.to_string());
            kv("hidden", join_usize(hidden));
            kv("separation", fmt_f64(*separation));
        }
        ProblemSpec::MnistMlp { subset, hidden } => {
            kv("subset", subset.to_string());
            kv("hidden", join_usize(hidden));
        }
    }
    kv("optimizer", cfg.optimizer.to_string());
    kv("alpha0", fmt_f64(cfg.alpha0));
    kv("eta", fmt_f64(cfg.eta));
    kv("batch_size", cfg.batch_size.to_string());
    kv("steps", cfg.steps.to_string());
    kv("seed", cfg.seed.to_string());
    kv("alpha_min", fmt_f64(cfg.alpha_min));
    kv(
        "alpha_max",
        cfg.alpha_max.map_or("none".to_string(), fmt_f64),
    );
    kv("beta1", fmt_f64(cfg.beta1));
    kv("beta2", fmt_f64(cfg.beta2));
    kv("eps_hat", fmt_f64(cfg.eps_hat));
    kv("eval_every", cfg.eval_every.to_string());
    kv("record_timing", cfg.record_timing.to_string());
    if let Some(d) = &cfg.mnist_dir {
        kv("mnist_dir", d.display().to_string());
    }
    if let Some(o) = &cfg.output {
        kv("output", o.display().to_string());
    }
    lines.join("\n") + "\n"
}
