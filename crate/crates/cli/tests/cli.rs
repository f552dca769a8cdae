use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_marginflat");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("MARGINFLAT_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A quick configuration: shorter pretraining, otherwise the defaults.
fn write_config(dir: &Path) -> PathBuf {
    ok(dir, &["init-config", "--out", "cfg.toml"]);
    let path = dir.join("cfg.toml");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("steps = 1000", "steps = 300")
        .replace("seed = 0", "seed = 5");
    fs::write(&path, text).unwrap();
    path
}

fn prepare(dir: &Path) {
    write_config(dir);
    ok(
        dir,
        &["gen-data", "--config", "cfg.toml", "--out", "corpus.txt"],
    );
    ok(
        dir,
        &[
            "pretrain",
            "--config",
            "cfg.toml",
            "--corpus",
            "corpus.txt",
            "--out",
            "ref.ckpt",
        ],
    );
}

#[test]
fn init_config_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["init-config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[solver]") && text.contains("eta_lambda = 0.5"));
    fs::write(dir.path().join("c.toml"), text).unwrap();
    ok(
        dir.path(),
        &["gen-data", "--config", "c.toml", "--out", "c.txt"],
    );
}

#[test]
fn missing_field_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let text: String = fs::read_to_string(&cfg)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("warmup_epochs"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&cfg, text).unwrap();
    let out = run(
        dir.path(),
        &["gen-data", "--config", "cfg.toml", "--out", "c.txt"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("warmup_epochs"), "{err}");
}

#[test]
fn unknown_key_and_bad_value_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let base = fs::read_to_string(&cfg).unwrap();
    for broken in [
        base.replace("alpha = 0.05", "alpha = 0.05\nbeta = 1"),
        base.replace("eta_lambda = 0.5", "eta_lambda = -0.5"),
        base.replace("vocab_size = 64\nembed_dim", "vocab_size = 32\nembed_dim"),
    ] {
        fs::write(&cfg, broken).unwrap();
        let out = run(
            dir.path(),
            &["gen-data", "--config", "cfg.toml", "--out", "c.txt"],
        );
        assert_eq!(
            out.status.code(),
            Some(2),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let out = run(
        dir.path(),
        &[
            "pretrain", "--config", "cfg.toml", "--corpus", "nope.txt", "--out", "r.ckpt",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_gates_on_the_retain_budget() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let eval = |ckpt: &str| {
        run(
            d,
            &[
                "eval",
                "--config",
                "cfg.toml",
                "--corpus",
                "corpus.txt",
                "--checkpoint",
                ckpt,
                "--reference",
                "ref.ckpt",
                "--out",
                "report.txt",
            ],
        )
    };
    assert_eq!(eval("ref.ckpt").status.code(), Some(0));
    let report = fs::read_to_string(d.join("report.txt")).unwrap();
    assert!(report.contains("retain.satisfied = true"));
    assert!(report.contains("bound_compliance = 1"));

    // An undertrained checkpoint exceeds the reference's retain budget.
    let cfg = fs::read_to_string(d.join("cfg.toml"))
        .unwrap()
        .replace("steps = 300", "steps = 5");
    fs::write(d.join("short.toml"), cfg).unwrap();
    ok(
        d,
        &[
            "pretrain",
            "--config",
            "short.toml",
            "--corpus",
            "corpus.txt",
            "--out",
            "short.ckpt",
        ],
    );
    assert_eq!(eval("short.ckpt").status.code(), Some(1));
    let report = fs::read_to_string(d.join("report.txt")).unwrap();
    assert!(report.contains("retain.satisfied = false"));
}

#[test]
fn mismatched_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let cfg = fs::read_to_string(d.join("cfg.toml"))
        .unwrap()
        .replace("hidden_dim = 64", "hidden_dim = 32");
    fs::write(d.join("other.toml"), cfg).unwrap();
    let out = run(
        d,
        &[
            "eval",
            "--config",
            "other.toml",
            "--corpus",
            "corpus.txt",
            "--checkpoint",
            "ref.ckpt",
            "--reference",
            "ref.ckpt",
            "--out",
            "r.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unlearn_writes_run_directory_and_honors_forget_loss_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let out = ok(
        d,
        &[
            "unlearn",
            "--config",
            "cfg.toml",
            "--corpus",
            "corpus.txt",
            "--reference",
            "ref.ckpt",
            "--out-dir",
            "run",
            "--forget-loss",
            "uniform-ce",
        ],
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("epsilon = ") && stdout.contains("alpha = 0.05"),
        "{stdout}"
    );
    for f in ["params.ckpt", "trace.csv", "summary.txt", "config.toml"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let materialized = fs::read_to_string(d.join("run/config.toml")).unwrap();
    assert!(materialized.contains("forget_loss = \"uniform-ce\""));
    let trace = fs::read_to_string(d.join("run/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 200);

    let bad = run(
        d,
        &[
            "unlearn",
            "--config",
            "cfg.toml",
            "--corpus",
            "corpus.txt",
            "--reference",
            "ref.ckpt",
            "--out-dir",
            "run2",
            "--forget-loss",
            "hinge",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn diverging_run_exits_3_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let cfg = fs::read_to_string(d.join("cfg.toml"))
        .unwrap()
        .replace("eta_theta = 0.01", "eta_theta = 5.0");
    fs::write(d.join("hot.toml"), cfg).unwrap();
    let out = run(
        d,
        &[
            "unlearn",
            "--config",
            "hot.toml",
            "--corpus",
            "corpus.txt",
            "--reference",
            "ref.ckpt",
            "--out-dir",
            "hot",
            "--forget-loss",
            "negative-ce",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = fs::read_to_string(d.join("hot/summary.txt")).unwrap();
    assert!(summary.contains("status = failed"));
    assert!(
        fs::read_to_string(d.join("hot/trace.csv"))
            .unwrap()
            .lines()
            .count()
            > 1
    );
}

fn file_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for entry in fs::read_dir(&p).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

/// Runs every subcommand in `dir`, each from the previous step's materialized config.
fn pipeline(dir: &Path, config: &str) {
    fs::write(dir.join("cfg.toml"), config).unwrap();
    ok(
        dir,
        &["gen-data", "--config", "cfg.toml", "--out", "corpus.txt"],
    );
    ok(
        dir,
        &[
            "pretrain",
            "--config",
            "corpus.txt.config.toml",
            "--corpus",
            "corpus.txt",
            "--out",
            "ref.ckpt",
        ],
    );
    ok(
        dir,
        &[
            "pretrain",
            "--config",
            "ref.ckpt.config.toml",
            "--corpus",
            "corpus.txt",
            "--out",
            "oracle.ckpt",
            "--retain-only",
        ],
    );
    ok(
        dir,
        &[
            "unlearn",
            "--config",
            "ref.ckpt.config.toml",
            "--corpus",
            "corpus.txt",
            "--reference",
            "ref.ckpt",
            "--out-dir",
            "run",
        ],
    );
    ok(
        dir,
        &[
            "eval",
            "--config",
            "run/config.toml",
            "--corpus",
            "corpus.txt",
            "--checkpoint",
            "run/params.ckpt",
            "--reference",
            "ref.ckpt",
            "--oracle",
            "oracle.ckpt",
            "--out",
            "report.txt",
        ],
    );
    ok(
        dir,
        &[
            "export-logits",
            "--config",
            "run/config.toml",
            "--corpus",
            "corpus.txt",
            "--checkpoint",
            "run/params.ckpt",
            "--out",
            "logits.txt",
        ],
    );
}

#[test]
fn every_output_is_reproducible_bit_for_bit() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = {
        let scratch = tempfile::tempdir().unwrap();
        fs::read_to_string(write_config(scratch.path())).unwrap()
    };
    pipeline(a.path(), &config);
    pipeline(b.path(), &config);
    let fa = file_bytes(a.path());
    let fb = file_bytes(b.path());
    assert_eq!(fa.len(), fb.len());
    assert!(fa.len() >= 15);
    for ((pa, ba), (pb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(pa, pb);
        assert!(ba == bb, "{} differs", pa.display());
    }
}

#[test]
fn output_root_env_relocates_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d);
    let out = Command::new(BIN)
        .args([
            "gen-data",
            "--config",
            "cfg.toml",
            "--out",
            "nested/corpus.txt",
        ])
        .current_dir(d)
        .env("MARGINFLAT_OUTPUT_ROOT", d.join("root"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("root/nested/corpus.txt").exists());
    assert!(d.join("root/nested/corpus.txt.config.toml").exists());
}
