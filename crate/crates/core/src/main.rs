use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use rdbd::harness::{
    compare, parse_config, plot_rows, preset, preset_names, run, summarize, write_plot_csv,
    write_trace_csv, Metric, RunConfig, Series, Trace, DEFAULT_LOSS_THRESHOLD,
};
use rdbd::{Error, OptimizerKind};

#[derive(Parser)]
#[command(
    name = "rdbd",
    version,
    about = "Delta-bar-delta learning-rate experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configuration of a preset, or a single config file.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// Directory for trace CSVs (a file path when running a config file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run configurations over several seeds and tabulate a metric.
    Compare {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// Restrict to these optimizers (comma separated).
        #[arg(long, value_delimiter = ',')]
        optimizers: Vec<OptimizerKind>,
        /// Number of seeds, starting at 1.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// final_loss, min_grad_norm, steps_to_threshold or steps_to_threshold=<loss>.
        #[arg(long, default_value = "final_loss")]
        metric: Metric,
        /// Comparison CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configuration over several seeds and emit traces and plot data.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Output directory.
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
    },
    /// List presets.
    Presets,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    preset: Option<String>,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    /// Record wall-clock time per step (traces are then not reproducible).
    #[arg(long)]
    timing: bool,
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(o) = self.optimizer {
            c.optimizer = o;
        }
        if let Some(v) = self.alpha0 {
            c.alpha0 = v;
        }
        if let Some(v) = self.eta {
            c.eta = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.steps {
            c.steps = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(d) = &self.mnist_dir {
            c.mnist_dir = Some(d.clone());
        }
        c.record_timing |= self.timing;
    }
}

fn load(source: &Source, overrides: &Overrides) -> anyhow::Result<Vec<RunConfig>> {
    let mut configs = match (&source.preset, &source.config) {
        (Some(name), _) => preset(name)?.configs,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            vec![parse_config(&text)?]
        }
        (None, None) => unreachable!("clap enforces one source"),
    };
    for c in &mut configs {
        overrides.apply(c);
        c.validate()?;
    }
    Ok(configs)
}

fn trace_path(dir: &Path, trace: &Trace) -> PathBuf {
    dir.join(format!("{}.csv", trace.run_id))
}

fn report(trace: &Trace) {
    let s = summarize(trace, DEFAULT_LOSS_THRESHOLD);
    println!(
        "{:<28} final_loss={:.6e} min_grad_norm={:.6e} reverts={}",
        s.run_id, s.final_loss, s.min_grad_norm, s.reverts
    );
}

fn cmd_run(source: &Source, overrides: &Overrides, out: Option<&Path>) -> anyhow::Result<()> {
    let mut configs = load(source, overrides)?;
    let single_file = source.config.is_some();
    for c in &mut configs {
        match out {
            Some(p) if single_file => c.output = Some(p.to_path_buf()),
            Some(dir) => c.output = Some(dir.join(format!("{}.csv", c.run_id()))),
            None => {}
        }
    }
    let traces = configs.par_iter().map(run).collect::<Result<Vec<_>, _>>()?;
    for t in &traces {
        report(t);
    }
    Ok(())
}

fn cmd_compare(
    source: &Source,
    overrides: &Overrides,
    optimizers: &[OptimizerKind],
    seeds: u64,
    metric: Metric,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut configs = load(source, overrides)?;
    if !optimizers.is_empty() {
        configs.retain(|c| optimizers.contains(&c.optimizer));
    }
    let seeds: Vec<u64> = (1..=seeds).collect();
    let table = compare(&configs, &seeds, metric)?;
    print!("{table}");
    if let Some(p) = out {
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        table.write_csv(File::create(p)?)?;
    }
    Ok(())
}

fn cmd_sweep(source: &Source, overrides: &Overrides, seeds: u64, out: &Path) -> anyhow::Result<()> {
    let configs = load(source, overrides)?;
    let jobs: Vec<RunConfig> = configs
        .iter()
        .flat_map(|c| {
            (1..=seeds).map(move |s| {
                let mut c = c.clone();
                c.seed = s;
                c.output = None;
                c
            })
        })
        .collect();
    let traces = jobs.par_iter().map(run).collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(out)?;
    for t in &traces {
        write_trace_csv(t, &trace_path(out, t))?;
        report(t);
    }
    let rows = plot_rows(
        &traces,
        &[
            Series::Loss,
            Series::FullLoss,
            Series::Alpha,
            Series::Reverted,
        ],
    );
    write_plot_csv(&rows, &out.join("plot.csv"))?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<clap::Error>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::InvalidArgument(_)) => 2,
        Some(Error::DataMissing(_)) => 3,
        Some(Error::NumericFailure { .. } | Error::NonFinite(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            source,
            overrides,
            out,
        } => cmd_run(source, overrides, out.as_deref()),
        Command::Compare {
            source,
            overrides,
            optimizers,
            seeds,
            metric,
            out,
        } => cmd_compare(
            source,
            overrides,
            optimizers,
            *seeds,
            *metric,
            out.as_deref(),
        ),
        Command::Sweep {
            source,
            overrides,
            seeds,
            out,
        } => cmd_sweep(source, overrides, *seeds, out),
        Command::Presets => {
            for name in preset_names() {
                match preset(name) {
                    Ok(p) => println!("{name:<24} {} ({} runs)", p.description, p.configs.len()),
                    Err(_) => println!("{name:<24} reserved"),
                }
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
