use std::path::Path;
use std::process::{Command, Output};

fn rdbd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdbd"))
        .args(args)
        .env_remove("MNIST_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn lists_presets() {
    let out = rdbd(&["presets"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("mnist-default"));
    assert!(text.contains("cifar-default") && text.contains("reserved"));
}

#[test]
fn run_config_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.cfg",
        "problem = logistic\noptimizer = rdbd\nn_samples = 128\ndim = 4\nsteps = 30\n",
    );
    let trace = dir.path().join("trace.csv");
    let out = rdbd(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "7",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert!(text.starts_with("step,loss,full_loss,grad_norm:weight,"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.cfg",
        "problem = logistic\noptimizer = rdbd\nsteps = 0\n",
    );
    assert_eq!(code(&rdbd(&["run", "--config", &cfg])), 2);
    assert_eq!(code(&rdbd(&["run", "--preset", "cifar-default"])), 2);
    assert_eq!(code(&rdbd(&["run", "--preset", "no-such-preset"])), 2);
    assert_eq!(code(&rdbd(&["run"])), 2);
}

#[test]
fn missing_mnist_exits_3() {
    let out = rdbd(&[
        "run",
        "--preset",
        "mnist-default",
        "--steps",
        "5",
        "--mnist-dir",
        "/nonexistent/mnist",
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn divergence_exits_4_with_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "div.cfg",
        "problem = quadratic\ndiag = 1\noptimizer = sgd\nalpha0 = 3\nsteps = 5000\n",
    );
    let trace = dir.path().join("t.csv");
    let out = rdbd(&["run", "--config", &cfg, "--out", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(std::fs::read_to_string(&trace).unwrap().lines().count() > 1);
}

#[test]
fn compare_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cmp.csv");
    let out = rdbd(&[
        "compare",
        "--preset",
        "figure2",
        "--optimizers",
        "sgd,rdbd",
        "--seeds",
        "2",
        "--steps",
        "50",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("label,optimizer,metric,median,q1,q3,n,reverts,winner"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn sweep_emits_traces_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let out = rdbd(&[
        "sweep",
        "--preset",
        "figure3",
        "--seeds",
        "2",
        "--steps",
        "20",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for id in ["dbd-seed1", "dbd-seed2", "rdbd-seed1", "rdbd-seed2"] {
        assert!(out_dir.join(format!("{id}.csv")).is_file(), "{id}");
    }
    let plot = std::fs::read_to_string(out_dir.join("plot.csv")).unwrap();
    assert!(plot.starts_with("run_id,step,series,value"));
}
