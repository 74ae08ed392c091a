//! End-to-end tests of the `lp` binary: exit codes, file outputs,
//! reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lp() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lp"));
    cmd.env("LP_LOG_LEVEL", "error");
    cmd
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const XOR_CONFIG: &str = "\
dataset.kind = xor
network.arch = mlp
network.widths = 2,8,1
network.activation = tanh
network.loss = squared_error
constraint.kind = identity
train.eta_w = 0.05
train.eta_x = 0.05
train.eta_lambda = 0.1
train.max_iters = 20000
train.target_residual = 0.01
train.seed = 1
train.log_every = 500
reg.rho = 1.0
";

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn train_then_infer_on_xor() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("xor.cfg");
    write(&config, XOR_CONFIG);
    let out_dir = dir.path().join("run");
    let out = lp()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let metrics = std::fs::read_to_string(out_dir.join("metrics.jsonl")).unwrap();
    let last = metrics.lines().last().unwrap();
    let record: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(record["train_accuracy"], serde_json::json!(1.0), "{record}");
    assert!(record["max_abs_residual"].as_f64().unwrap() < 0.01, "{record}");

    // Infer over the four XOR points.
    let inputs = dir.path().join("points.csv");
    write(&inputs, "0,0\n0,1\n1,0\n1,1\n");
    let out = lp()
        .args(["infer", "--weights"])
        .arg(out_dir.join("weights.bin"))
        .arg("--data")
        .arg(&inputs)
        .arg("--out")
        .arg(dir.path().join("pred"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let predictions =
        std::fs::read_to_string(dir.path().join("pred").join("predictions.csv")).unwrap();
    let preds: Vec<&str> = predictions
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(preds, vec!["0", "1", "1", "0"], "{predictions}");
}

#[test]
fn unknown_config_key_exits_1_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    write(&config, &format!("{XOR_CONFIG}train.etaw = 0.1\n"));
    let out = lp().args(["train", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("train.etaw"), "stderr: {}", stderr(&out));
}

#[test]
fn divergent_step_sizes_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("boom.cfg");
    write(
        &config,
        "dataset.kind = xor\nnetwork.arch = mlp\nnetwork.widths = 2,8,1\n\
network.activation = tanh\nnetwork.loss = squared_error\nconstraint.kind = identity\n\
train.eta_w = 1000\ntrain.eta_x = 1000\ntrain.eta_lambda = 1000\ntrain.max_iters = 5000\n",
    );
    let out = lp()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("diverge"), "stderr: {}", stderr(&out));
}

#[test]
fn gradcheck_passes_and_corruption_hook_trips_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("check.cfg");
    write(&config, XOR_CONFIG);
    let out = lp()
        .args(["gradcheck", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.contains("backprop recovery discrepancy"), "{stdout}");

    let out = lp()
        .args(["gradcheck", "--config"])
        .arg(&config)
        .env("LP_GRADCHECK_CORRUPT", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
}

#[test]
fn gradcheck_with_eps_constraints_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("check.cfg");
    write(
        &config,
        "dataset.kind = xor\nnetwork.arch = mlp\nnetwork.widths = 2,6,1\n\
network.activation = tanh\nnetwork.loss = squared_error\nconstraint.kind = eps_abs\n\
constraint.epsilon = 0.2\nreg.rho = 0.1\nreg.alpha = 0.01\n",
    );
    let out = lp()
        .args(["gradcheck", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
}

#[test]
fn infer_rejects_mismatched_widths() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("xor.cfg");
    write(&config, XOR_CONFIG);
    let out_dir = dir.path().join("run");
    let out = lp()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));

    let inputs = dir.path().join("three.csv");
    write(&inputs, "0,0,0\n");
    let out = lp()
        .args(["infer", "--weights"])
        .arg(out_dir.join("weights.bin"))
        .arg("--data")
        .arg(&inputs)
        .arg("--out")
        .arg(dir.path().join("pred"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
}

#[test]
fn infer_on_empty_dataset_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("xor.cfg");
    write(&config, XOR_CONFIG);
    let out_dir = dir.path().join("run");
    lp().args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    let inputs = dir.path().join("empty.csv");
    write(&inputs, "");
    let out = lp()
        .args(["infer", "--weights"])
        .arg(out_dir.join("weights.bin"))
        .arg("--data")
        .arg(&inputs)
        .arg("--out")
        .arg(dir.path().join("pred"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let predictions =
        std::fs::read_to_string(dir.path().join("pred").join("predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 1);
}

#[test]
fn metrics_are_bitwise_reproducible_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("xor.cfg");
    // Short run: reproducibility does not need convergence.
    write(
        &config,
        &XOR_CONFIG.replace("train.max_iters = 20000", "train.max_iters = 300"),
    );
    let run = |out_dir: &PathBuf, workers: Option<usize>| -> Vec<u8> {
        let mut cmd = lp();
        cmd.args(["train", "--config"]).arg(&config).arg("--out").arg(out_dir);
        if let Some(w) = workers {
            cmd.arg("--workers").arg(w.to_string());
        }
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        std::fs::read(out_dir.join("metrics.jsonl")).unwrap()
    };
    let a = run(&dir.path().join("a"), None);
    let b = run(&dir.path().join("b"), None);
    let c = run(&dir.path().join("c"), Some(2));
    assert_eq!(a, b, "same config and seed must give identical metrics bytes");
    assert_eq!(a, c, "worker count must not change the metrics bytes");
    // Weights files as well.
    let wa = std::fs::read(dir.path().join("a").join("weights.bin")).unwrap();
    let wc = std::fs::read(dir.path().join("c").join("weights.bin")).unwrap();
    assert_eq!(wa, wc);
}

#[test]
fn csv_dataset_trains_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("xor.csv");
    write(&csv, "a,b,label\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n");
    let config = dir.path().join("csv.cfg");
    write(
        &config,
        &format!(
            "dataset.kind = csv\ndataset.path = {}\ndataset.input_cols = 0,1\n\
dataset.target_cols = 2\nnetwork.arch = mlp\nnetwork.widths = 2,8,1\n\
network.activation = tanh\nnetwork.loss = squared_error\nconstraint.kind = identity\n\
train.max_iters = 200\ntrain.log_every = 100\nreg.rho = 1.0\n",
            csv.display()
        ),
    );
    let out = lp()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
}
