//! Long-format plot data: one row per (run, step, series) observation.

use std::path::Path;

use super::trace::fmt_f64;
use super::Trace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Loss,
    FullLoss,
    /// One series per slot: `alpha:<id>`.
    Alpha,
    H,
    GradNorm,
    Reverted,
}

impl Series {
    pub const ALL: [Series; 6] = [
        Series::Loss,
        Series::FullLoss,
        Series::Alpha,
        Series::H,
        Series::GradNorm,
        Series::Reverted,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub run_id: String,
    pub step: u64,
    pub series: String,
    pub value: f64,
}

/// Flattens traces into plot rows. Steps without a value for a series (for
/// example non-evaluation steps for `full_loss`) produce no row.
pub fn plot_rows(traces: &[Trace], series: &[Series]) -> Vec<PlotRow> {
    let mut out = Vec::new();
    for t in traces {
        for r in &t.records {
            for s in series {
                let mut push = |name: String, value: f64| {
                    out.push(PlotRow {
                        run_id: t.run_id.clone(),
                        step: r.step,
                        series: name,
                        value,
                    })
                };
                match s {
                    Series::Loss => push("loss".into(), r.loss),
                    Series::FullLoss => {
                        if let Some(l) = r.full_loss {
                            push("full_loss".into(), l)
                        }
                    }
                    Series::Alpha | Series::H | Series::GradNorm | Series::Reverted => {
                        for (id, v) in t.vector_ids.iter().zip(&r.vectors) {
                            let (prefix, value) = match s {
                                Series::Alpha => ("alpha", v.alpha),
                                Series::H => ("h", v.h),
                                Series::GradNorm => ("grad_norm", v.grad_norm),
                                _ => ("reverted", f64::from(u8::from(v.reverted))),
                            };
                            push(format!("{prefix}:{id}"), value);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Writes `run_id,step,series,value`.
pub fn write_plot_csv(rows: &[PlotRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("no plot rows to write"));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run_id", "step", "series", "value"])?;
    for r in rows {
        w.write_record([
            r.run_id.as_str(),
            &r.step.to_string(),
            &r.series,
            &fmt_f64(r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_plot_csv(path: &Path) -> Result<Vec<PlotRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |what: &str| Error::Config(format!("bad {what} in plot csv"));
        out.push(PlotRow {
            run_id: rec[0].to_string(),
            step: rec[1].parse().map_err(|_| bad("step"))?,
            series: rec[2].to_string(),
            value: rec[3].parse().map_err(|_| bad("value"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run, ProblemSpec, RunConfig};
    use crate::optimizer::OptimizerKind;

    fn trace(steps: u64) -> Trace {
        let mut c = RunConfig::new(
            ProblemSpec::Logistic {
                n_samples: 64,
                dim: 3,
                separation: 3.0,
            },
            OptimizerKind::Rdbd,
        );
        c.steps = steps;
        c.eval_every = 10;
        run(&c).unwrap()
    }

    #[test]
    fn row_counts() {
        let t = trace(30);
        let rows = plot_rows(std::slice::from_ref(&t), &[Series::Loss]);
        assert_eq!(rows.len(), 30);
        // two slots: alpha:weight and alpha:bias
        let rows = plot_rows(std::slice::from_ref(&t), &[Series::Loss, Series::Alpha]);
        assert_eq!(rows.len(), 30 * 3);
        let rows = plot_rows(std::slice::from_ref(&t), &[Series::FullLoss]);
        assert_eq!(
            rows.iter().map(|r| r.step).collect::<Vec<_>>(),
            vec![10, 20, 30]
        );
    }

    #[test]
    fn single_slot_loss_and_alpha() {
        let mut c = RunConfig::new(ProblemSpec::Rosenbrock, OptimizerKind::Dbd);
        c.alpha0 = 1e-3;
        c.eta = 1e-8;
        c.steps = 12;
        let t = run(&c).unwrap();
        let rows = plot_rows(&[t], &[Series::Loss, Series::Alpha]);
        assert_eq!(rows.len(), 2 * 12);
        assert!(rows.iter().any(|r| r.series == "alpha:x"));
    }

    #[test]
    fn csv_round_trip_preserves_min_loss() {
        let t = trace(40);
        let rows = plot_rows(std::slice::from_ref(&t), &Series::ALL);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out/plot.csv");
        write_plot_csv(&rows, &p).unwrap();
        let back = read_plot_csv(&p).unwrap();
        assert_eq!(back, rows);
        let min_back = back
            .iter()
            .filter(|r| r.series == "loss")
            .map(|r| r.value)
            .fold(f64::INFINITY, f64::min);
        let min_trace = t
            .records
            .iter()
            .map(|r| r.loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min_back, min_trace);
    }

    #[test]
    fn empty_input_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_plot_csv(&[], &dir.path().join("p.csv")).is_err());
        assert!(plot_rows(&[], &Series::ALL).is_empty());
    }
}
