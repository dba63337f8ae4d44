use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizer::OptimizerKind;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    /// Norm of this slot's mini-batch gradient.
    pub grad_norm: f64,
    /// Norm of the direction handed to the scheduler.
    pub update_norm: f64,
    pub alpha: f64,
    pub h: f64,
    pub reverted: bool,
}

/// One optimisation step.
///
/// `loss` is the mini-batch loss at the weights the gradient was taken at;
/// `full_loss` is the full-data loss after the update, present on
/// evaluation steps only.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub loss: f64,
    pub full_loss: Option<f64>,
    pub vectors: Vec<VectorRecord>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub run_id: String,
    pub optimizer: OptimizerKind,
    pub alpha0: f64,
    pub eta: f64,
    pub vector_ids: Vec<String>,
    pub initial_loss: f64,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    /// Full loss at the last evaluation, or the initial loss for an empty trace.
    pub fn final_loss(&self) -> f64 {
        self.records
            .iter()
            .rev()
            .find_map(|r| r.full_loss)
            .unwrap_or(self.initial_loss)
    }

    pub fn revert_count(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.vectors.iter().filter(|v| v.reverted).count())
            .sum()
    }

    /// Largest update norm seen by slot `v`.
    pub fn max_update_norm(&self, v: usize) -> f64 {
        self.records
            .iter()
            .map(|r| r.vectors[v].update_norm)
            .fold(0.0, f64::max)
    }

    pub fn alphas(&self, v: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.vectors[v].alpha).collect()
    }

    pub fn dots(&self, v: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.vectors[v].h).collect()
    }
}

/// Shortest round-trip text for a float; scientific notation for very
/// small or very large magnitudes.
pub(crate) fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_f64(s: &str, field: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Config(format!("bad number '{s}' in column {field}")))
}

const VECTOR_FIELDS: [&str; 5] = ["grad_norm", "update_norm", "alpha", "h", "reverted"];

fn header(ids: &[String]) -> Vec<String> {
    let mut cols = vec![
        "step".to_string(),
        "loss".to_string(),
        "full_loss".to_string(),
    ];
    for id in ids {
        for f in VECTOR_FIELDS {
            cols.push(format!("{f}:{id}"));
        }
    }
    cols.push("wall_ms".to_string());
    cols
}

fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&trace.vector_ids))?;
    for r in &trace.records {
        let mut row = vec![
            r.step.to_string(),
            fmt_f64(r.loss),
            r.full_loss.map(fmt_f64).unwrap_or_default(),
        ];
        for v in &r.vectors {
            row.push(fmt_f64(v.grad_norm));
            row.push(fmt_f64(v.update_norm));
            row.push(fmt_f64(v.alpha));
            row.push(fmt_f64(v.h));
            row.push(u8::from(v.reverted).to_string());
        }
        row.push(fmt_f64(r.wall_ms));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Trace CSV: `step,loss,full_loss`, then `grad_norm:<id>,update_norm:<id>,
/// alpha:<id>,h:<id>,reverted:<id>` per slot, then `wall_ms`.
pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_trace(trace, File::create(path)?)
}

pub fn trace_csv_string(trace: &Trace) -> Result<String> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Reads the records of a trace CSV back.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let head = rdr.headers()?.clone();
    let n_vec = head
        .len()
        .checked_sub(4)
        .filter(|k| k % VECTOR_FIELDS.len() == 0)
        .ok_or_else(|| Error::Config("malformed trace header".into()))?
        / VECTOR_FIELDS.len();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let step = rec[0]
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("bad step '{}'", &rec[0])))?;
        let full_loss = match &rec[2] {
            "" => None,
            s => Some(parse_f64(s, "full_loss")?),
        };
        let mut vectors = Vec::with_capacity(n_vec);
        for v in 0..n_vec {
            let base = 3 + v * VECTOR_FIELDS.len();
            vectors.push(VectorRecord {
                grad_norm: parse_f64(&rec[base], "grad_norm")?,
                update_norm: parse_f64(&rec[base + 1], "update_norm")?,
                alpha: parse_f64(&rec[base + 2], "alpha")?,
                h: parse_f64(&rec[base + 3], "h")?,
                reverted: &rec[base + 4] == "1",
            });
        }
        out.push(TraceRecord {
            step,
            loss: parse_f64(&rec[1], "loss")?,
            full_loss,
            vectors,
            wall_ms: parse_f64(&rec[rec.len() - 1], "wall_ms")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_format_round_trips_common_values() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(0.005), "0.005");
        assert_eq!(fmt_f64(5e-7), "5e-7");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    proptest! {
        #[test]
        fn float_format_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_round_trip() {
        let trace = Trace {
            run_id: "r".into(),
            optimizer: OptimizerKind::Rdbd,
            alpha0: 0.1,
            eta: 0.01,
            vector_ids: vec!["a".into(), "b".into()],
            initial_loss: 1.0,
            records: (1..=3)
                .map(|s| TraceRecord {
                    step: s,
                    loss: 1.0 / s as f64,
                    full_loss: (s == 3).then_some(0.3),
                    vectors: vec![
                        VectorRecord {
                            grad_norm: 0.5,
                            update_norm: 0.5,
                            alpha: 0.1,
                            h: -1e-9,
                            reverted: s == 2,
                        },
                        VectorRecord {
                            grad_norm: 2.0,
                            update_norm: 1.0,
                            alpha: 0.2,
                            h: 3.0,
                            reverted: false,
                        },
                    ],
                    wall_ms: 0.0,
                })
                .collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/trace.csv");
        write_trace_csv(&trace, &p).unwrap();
        assert_eq!(read_trace_csv(&p).unwrap(), trace.records);
        let text = trace_csv_string(&trace).unwrap();
        assert!(text
            .starts_with("step,loss,full_loss,grad_norm:a,update_norm:a,alpha:a,h:a,reverted:a,"));
        assert!(text.lines().next().unwrap().ends_with(",wall_ms"));
        assert_eq!(trace.revert_count(), 1);
        assert_eq!(trace.final_loss(), 0.3);
    }
}
