//! End-to-end tests of the `cfpc` binary: artifact layout, exit codes,
//! determinism of repeated runs, and the documented error paths.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cfpc(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cfpc"));
    cmd.current_dir(dir);
    cmd
}

/// Small, fast configuration shared by the tests.
const TINY_CONFIG: &str = r#"
master_seed = 11

[system]
num_ues = 3
num_aps = 6

[train]
samples = 24
epochs = 3
batch_size = 8
hidden = [10, 8]

[eval]
test_samples = 6

[bench]
samples = 5
"#;

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("tiny.toml"), TINY_CONFIG).expect("write config");
        Workspace { _dir: dir, root }
    }

    fn run(&self, args: &[&str]) -> Output {
        cfpc(&self.root)
            .args(["--config", "tiny.toml"])
            .args(args)
            .output()
            .expect("spawn cfpc")
    }
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn generate_is_deterministic_per_seed() {
    let ws = Workspace::new();
    assert_success(&ws.run(&["generate", "--samples", "6", "--out", "a/ds.json"]));
    assert_success(&ws.run(&["generate", "--samples", "6", "--out", "b/ds.json"]));
    let a = std::fs::read(ws.root.join("a/ds.json")).unwrap();
    let b = std::fs::read(ws.root.join("b/ds.json")).unwrap();
    assert_eq!(a, b, "same seed must give a byte-identical dataset");

    // A different master seed changes the file.
    let out = cfpc(&ws.root)
        .args(["--config", "tiny.toml", "--seed", "99"])
        .args(["generate", "--samples", "6", "--out", "c/ds.json"])
        .output()
        .unwrap();
    assert_success(&out);
    let c = std::fs::read(ws.root.join("c/ds.json")).unwrap();
    assert_ne!(a, c);

    // The sample count flag is honored.
    let text = std::fs::read_to_string(ws.root.join("a/ds.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["samples"].as_array().unwrap().len(), 6);
    assert!(ws.root.join("a/manifest.json").is_file());
}

#[test]
fn train_reruns_are_byte_identical() {
    let ws = Workspace::new();
    assert_success(&ws.run(&["--out-root", "r1", "train", "--loss", "maxmin"]));
    assert_success(&ws.run(&["--out-root", "r2", "train", "--loss", "maxmin"]));
    for name in ["checkpoint.json", "curve.csv"] {
        let a = std::fs::read(ws.root.join("r1/train-maxmin").join(name)).unwrap();
        let b = std::fs::read(ws.root.join("r2/train-maxmin").join(name)).unwrap();
        assert_eq!(a, b, "{name} must be byte-identical across reruns");
    }
}

#[test]
fn full_pipeline_generate_train_eval_bench() {
    let ws = Workspace::new();
    assert_success(&ws.run(&["--out-root", "out", "generate"]));
    assert_success(&ws.run(&[
        "--out-root",
        "out",
        "train",
        "--loss",
        "maxmin",
        "--dataset",
        "out/dataset.json",
    ]));
    let ckpt = "out/train-maxmin/checkpoint.json";
    assert_success(&ws.run(&["--out-root", "out", "eval", "--checkpoint", ckpt]));
    assert_success(&ws.run(&["--out-root", "out", "bench", "--checkpoint", ckpt]));

    let curve = std::fs::read_to_string(ws.root.join("out/train-maxmin/curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,loss,lr\n"));
    assert_eq!(curve.lines().count(), 4, "header plus three epochs");

    let cdf = std::fs::read_to_string(ws.root.join("out/eval-maxmin/cdf.csv")).unwrap();
    assert!(cdf.starts_with("method,x_se,F\n"));
    for name in ["equal_power", "maxmin_bisection", "dl_maxmin"] {
        assert!(cdf.contains(name), "cdf.csv missing method {name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.root.join("out/eval-maxmin/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["metadata"]["num_ues"], 3);
    assert_eq!(report["results"].as_array().unwrap().len(), 3);

    let timing = std::fs::read_to_string(ws.root.join("out/bench-maxmin/timing.csv")).unwrap();
    let mut lines = timing.lines();
    assert_eq!(lines.next(), Some("method,sec_per_sample"));
    for line in lines {
        let (method, sec) = line.split_once(',').expect("two columns");
        assert!(!method.is_empty());
        assert!(sec.parse::<f64>().unwrap() > 0.0);
    }

    // Every stage wrote its manifest.
    for dir in ["out", "out/train-maxmin", "out/eval-maxmin", "out/bench-maxmin"] {
        assert!(ws.root.join(dir).join("manifest.json").is_file(), "{dir}");
    }
}

#[test]
fn eval_rejects_checkpoint_with_wrong_k() {
    let ws = Workspace::new();
    assert_success(&ws.run(&["--out-root", "out", "train", "--loss", "maxmin"]));
    // Default config trains K=8; the checkpoint above is K=3.
    let out = cfpc(&ws.root)
        .args([
            "eval",
            "--checkpoint",
            "out/train-maxmin/checkpoint.json",
            "--test-samples",
            "2",
        ])
        .output()
        .unwrap();
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("K=3") && stderr.contains("K=8"), "{stderr}");
}

#[test]
fn missing_inputs_exit_with_io_code() {
    let ws = Workspace::new();
    let out = ws.run(&["eval", "--checkpoint", "missing.json"]);
    assert_exit(&out, 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let out = ws.run(&["train", "--loss", "maxmin", "--dataset", "missing-ds.json"]);
    assert_exit(&out, 4);
}

#[test]
fn invalid_config_exits_with_config_code() {
    let ws = Workspace::new();
    std::fs::write(
        ws.root.join("bad.toml"),
        "[train]\nloss = \"maximin\"\n",
    )
    .unwrap();
    let out = cfpc(&ws.root)
        .args(["--config", "bad.toml", "train"])
        .output()
        .unwrap();
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("maximin"));

    std::fs::write(ws.root.join("unknown.toml"), "not_a_field = 3\n").unwrap();
    let out = cfpc(&ws.root)
        .args(["--config", "unknown.toml", "generate", "--samples", "1"])
        .output()
        .unwrap();
    assert_exit(&out, 2);

    // Dataset generated under one geometry cannot train another.
    assert_success(&ws.run(&["--out-root", "out", "generate", "--samples", "4"]));
    let out = cfpc(&ws.root)
        .args([
            "train",
            "--loss",
            "maxmin",
            "--dataset",
            "out/dataset.json",
        ])
        .output()
        .unwrap();
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("regenerate"));
}

#[test]
fn diverged_training_exits_numerical_and_saves_partial_curve() {
    let ws = Workspace::new();
    let out = cfpc(&ws.root)
        .args(["--config", "tiny.toml", "--seed", "12", "--out-root", "dv"])
        .args(["train", "--loss", "sumrate", "--lr0", "1e200", "--epochs", "4"])
        .output()
        .unwrap();
    assert_exit(&out, 3);
    let curve = std::fs::read_to_string(ws.root.join("dv/train-sumrate/curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,loss,lr"), "partial curve saved");
    assert!(!ws.root.join("dv/train-sumrate/checkpoint.json").exists());
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(ws.root.join("dv/train-sumrate/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["resolved"]["status"], "diverged");
}

#[test]
fn out_root_env_var_is_honored() {
    let ws = Workspace::new();
    let out = cfpc(&ws.root)
        .env("CFPC_OUT_ROOT", "from-env")
        .args(["--config", "tiny.toml", "generate", "--samples", "2"])
        .output()
        .unwrap();
    assert_success(&out);
    assert!(ws.root.join("from-env/dataset.json").is_file());

    // The explicit flag still wins over the environment.
    let out = cfpc(&ws.root)
        .env("CFPC_OUT_ROOT", "from-env-2")
        .args(["--config", "tiny.toml", "--out-root", "from-flag"])
        .args(["generate", "--samples", "2"])
        .output()
        .unwrap();
    assert_success(&out);
    assert!(ws.root.join("from-flag/dataset.json").is_file());
    assert!(!ws.root.join("from-env-2").exists());
}

#[test]
fn per_loss_default_learning_rates_reach_the_curve() {
    let ws = Workspace::new();
    for (loss, lr) in [("maxmin", "0.3"), ("sumrate", "1"), ("product", "0.03")] {
        let dir = format!("lr-{loss}");
        assert_success(&ws.run(&[
            "--out-root",
            &dir,
            "train",
            "--loss",
            loss,
            "--epochs",
            "1",
        ]));
        let curve = std::fs::read_to_string(
            ws.root.join(&dir).join(format!("train-{loss}")).join("curve.csv"),
        )
        .unwrap();
        let line = curve.lines().nth(1).expect("one epoch");
        assert!(
            line.ends_with(&format!(",{lr}")),
            "loss {loss}: expected default lr {lr}, curve line: {line}"
        );
    }
}
