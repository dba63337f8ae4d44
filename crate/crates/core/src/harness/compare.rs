use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use super::trace::fmt_f64;
use super::{run, total_grad_norm, RunConfig, Trace, DEFAULT_LOSS_THRESHOLD};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    FinalLoss,
    StepsToThreshold(f64),
    MinGradNorm,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::FinalLoss => "final_loss",
            Metric::StepsToThreshold(_) => "steps_to_threshold",
            Metric::MinGradNorm => "min_grad_norm",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::StepsToThreshold(t) => write!(f, "steps_to_threshold({t})"),
            m => f.write_str(m.name()),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final_loss" => Ok(Metric::FinalLoss),
            "min_grad_norm" => Ok(Metric::MinGradNorm),
            "steps_to_threshold" => Ok(Metric::StepsToThreshold(DEFAULT_LOSS_THRESHOLD)),
            other => other
                .strip_prefix("steps_to_threshold=")
                .and_then(|t| t.parse().ok())
                .map(Metric::StepsToThreshold)
                .ok_or_else(|| Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

/// Scalar outcomes of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub final_loss: f64,
    /// First evaluated step whose full loss is at or below the threshold.
    pub steps_to_threshold: Option<u64>,
    pub min_grad_norm: f64,
    pub reverts: usize,
}

pub fn summarize(trace: &Trace, threshold: f64) -> RunSummary {
    RunSummary {
        run_id: trace.run_id.clone(),
        final_loss: trace.final_loss(),
        steps_to_threshold: trace
            .records
            .iter()
            .find(|r| r.full_loss.is_some_and(|l| l <= threshold))
            .map(|r| r.step),
        min_grad_norm: trace
            .records
            .iter()
            .map(total_grad_norm)
            .fold(f64::INFINITY, f64::min),
        reverts: trace.revert_count(),
    }
}

impl RunSummary {
    /// Value under `metric`; lower is better. A run that never reaches the
    /// threshold scores infinity.
    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::FinalLoss => self.final_loss,
            Metric::StepsToThreshold(_) => {
                self.steps_to_threshold.map_or(f64::INFINITY, |s| s as f64)
            }
            Metric::MinGradNorm => self.min_grad_norm,
        }
    }
}

/// Linear-interpolation quantile of `values` (sorted internally).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || v[lo] == v[hi] {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub optimizer: String,
    pub values: Vec<f64>,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub reverts: usize,
    pub winner: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub metric: Metric,
    pub seeds: Vec<u64>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "label",
            "optimizer",
            "metric",
            "median",
            "q1",
            "q3",
            "n",
            "reverts",
            "winner",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.optimizer.clone(),
                self.metric.name().to_string(),
                fmt_f64(r.median),
                fmt_f64(r.q1),
                fmt_f64(r.q3),
                r.values.len().to_string(),
                r.reverts.to_string(),
                u8::from(r.winner).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric: {} over {} seeds", self.metric, self.seeds.len())?;
        writeln!(
            f,
            "{:<20} {:>14} {:>14} {:>14} {:>8}",
            "label", "median", "q1", "q3", "reverts"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<20} {:>14.6e} {:>14.6e} {:>14.6e} {:>8}{}",
                r.label,
                r.median,
                r.q1,
                r.q3,
                r.reverts,
                if r.winner { "  *" } else { "" }
            )?;
        }
        Ok(())
    }
}

fn row_label(c: &RunConfig) -> String {
    c.label.clone().unwrap_or_else(|| c.optimizer.to_string())
}

/// Runs every config under every seed and tabulates `metric`.
///
/// All configs must describe the same problem. Each row reports the median
/// and inter-quartile range over seeds; the row with the lowest median wins.
pub fn compare(configs: &[RunConfig], seeds: &[u64], metric: Metric) -> Result<ComparisonTable> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config("nothing to compare".into()))?;
    if seeds.is_empty() {
        return Err(Error::Config("compare needs at least one seed".into()));
    }
    if let Some(c) = configs.iter().find(|c| c.problem != first.problem) {
        return Err(Error::Config(format!(
            "mismatched problems: '{}' vs '{}'",
            row_label(first),
            row_label(c)
        )));
    }
    let mut labels: Vec<String> = configs.iter().map(row_label).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != configs.len() {
        return Err(Error::Config(
            "compared configs need distinct labels".into(),
        ));
    }
    let threshold = match metric {
        Metric::StepsToThreshold(t) => t,
        _ => DEFAULT_LOSS_THRESHOLD,
    };

    let jobs: Vec<(usize, RunConfig)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            seeds.iter().map(move |&s| {
                let mut c = c.clone();
                c.seed = s;
                c.output = None;
                (i, c)
            })
        })
        .collect();
    let summaries: Vec<(usize, RunSummary)> = jobs
        .par_iter()
        .map(|(i, c)| run(c).map(|t| (*i, summarize(&t, threshold))))
        .collect::<Result<_>>()?;

    let mut rows: Vec<ComparisonRow> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mine: Vec<&RunSummary> = summaries
                .iter()
                .filter(|(j, _)| *j == i)
                .map(|(_, s)| s)
                .collect();
            let values: Vec<f64> = mine.iter().map(|s| s.value(metric)).collect();
            ComparisonRow {
                label: row_label(c),
                optimizer: c.optimizer.to_string(),
                median: quantile(&values, 0.5),
                q1: quantile(&values, 0.25),
                q3: quantile(&values, 0.75),
                reverts: mine.iter().map(|s| s.reverts).sum(),
                values,
                winner: false,
            }
        })
        .collect();
    let best = rows.iter().map(|r| r.median).fold(f64::INFINITY, f64::min);
    for r in &mut rows {
        r.winner = r.median == best;
    }
    Ok(ComparisonTable {
        metric,
        seeds: seeds.to_vec(),
        rows,
    })
}
