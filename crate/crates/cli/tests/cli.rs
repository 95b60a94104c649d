use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bbrl_cli::files::{read_distribution, without_timings, ResultFile};
use bbrl_cli::format::read_text;
use bbrl_core::prior::make_gdl;

fn bbrl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbrl"))
        .current_dir(dir)
        .args(args)
        .env_remove("BBRL_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = bbrl(dir, args);
    assert!(
        out.status.success(),
        "bbrl {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// GDL distribution plus a small experiment in `dir`.
fn setup(dir: &Path, n_mdps: &str) {
    ok(
        dir,
        &["distrib-generate", "--preset", "gdl", "--out", "gdl.dist"],
    );
    ok(
        dir,
        &[
            "experiment-new",
            "--out",
            "gdl.exp",
            "--test",
            "gdl.dist",
            "--n-mdps",
            n_mdps,
            "--gamma",
            "0.95",
            "--seed",
            "7",
        ],
    );
}

fn train(dir: &Path, out: &str, algorithm: &str, params: &[&str]) {
    let mut args = vec![
        "offline-learn",
        "--out",
        out,
        "--algorithm",
        algorithm,
        "--prior",
        "gdl.dist",
        "--experiment",
        "gdl.exp",
    ];
    for p in params {
        args.push("--param");
        args.push(p);
    }
    ok(dir, &args);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bbrl(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(bbrl(dir.path(), &["run"]).status.code(), Some(1));
    assert_eq!(bbrl(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(bbrl(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn preset_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["distrib-generate", "--preset", "gdl", "--out", "gdl.dist"],
    );
    assert_eq!(
        read_distribution(&dir.path().join("gdl.dist")).unwrap(),
        make_gdl()
    );
}

#[test]
fn explicit_distribution_and_uniform_like() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "distrib-generate",
            "--out",
            "tiny.dist",
            "--name",
            "tiny",
            "--states",
            "2",
            "--actions",
            "1",
            "--transition-weights",
            "1 1 0 2",
            "--reward-type",
            "RT_CONSTANT",
            "--reward-means",
            "0 1 0 0",
        ],
    );
    let tiny = read_distribution(&dir.path().join("tiny.dist")).unwrap();
    assert_eq!(tiny.theta(), &[1.0, 1.0, 0.0, 2.0]);
    ok(
        dir.path(),
        &[
            "distrib-generate",
            "--preset",
            "uniform",
            "--like",
            "tiny.dist",
            "--out",
            "u.dist",
        ],
    );
    let u = read_distribution(&dir.path().join("u.dist")).unwrap();
    assert_eq!(u.theta(), &[1.0; 4]);
    assert_eq!(u.rewards(), tiny.rewards());

    let bad = bbrl(
        dir.path(),
        &[
            "distrib-generate",
            "--out",
            "bad.dist",
            "--states",
            "2",
            "--actions",
            "1",
            "--transition-weights",
            "1 1 0 2",
            "--reward-type",
            "RT_GAUSSIAN",
            "--reward-means",
            "0 1 0 0",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("RT_GAUSSIAN"));
    assert!(!dir.path().join("bad.dist").exists());
}

#[test]
fn walkthrough() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "20");
    train(d, "random.agent", "random", &[]);
    train(d, "egreedy.agent", "egreedy", &["epsilon=0.1"]);
    train(d, "opps.agent", "opps-ds", &["space=F2", "beta=20"]);
    assert!(read_text(&d.join("opps.agent"))
        .unwrap()
        .contains("\nformula="));
    for name in ["random", "egreedy", "opps"] {
        let out = ok(
            d,
            &[
                "run",
                "--agent",
                &format!("{name}.agent"),
                "--experiment",
                "gdl.exp",
                "--out",
                &format!("results/{name}.result"),
                "--workers",
                "2",
            ],
        );
        assert!(String::from_utf8_lossy(&out.stderr).contains("20/20 trajectories"));
    }
    let out = ok(d, &["export", "--out", "report", "--latex", "results"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.starts_with("Agent"));
    assert!(table.contains("Mean online time (per decision)"));
    for f in [
        "summary.tsv",
        "summary.txt",
        "summary.tex",
        "scatter_offline.tsv",
        "scatter_online.tsv",
        "frontier.tsv",
    ] {
        assert!(d.join("report").join(f).exists(), "{f}");
    }
    let tsv = fs::read_to_string(d.join("report/summary.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 4);
    let scatter = fs::read_to_string(d.join("report/scatter_offline.tsv")).unwrap();
    assert_eq!(scatter.lines().count(), 4);

    let before: Vec<Vec<u8>> = ["summary.tsv", "frontier.tsv"]
        .iter()
        .map(|f| fs::read(d.join("report").join(f)).unwrap())
        .collect();
    ok(d, &["export", "--out", "report", "--latex", "results"]);
    let after: Vec<Vec<u8>> = ["summary.tsv", "frontier.tsv"]
        .iter()
        .map(|f| fs::read(d.join("report").join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "16");
    train(d, "a.agent", "egreedy", &["epsilon=0.2"]);
    ok(
        d,
        &[
            "run",
            "--agent",
            "a.agent",
            "--experiment",
            "gdl.exp",
            "--out",
            "one.result",
            "--workers",
            "1",
            "-q",
        ],
    );
    ok(
        d,
        &[
            "run",
            "--agent",
            "a.agent",
            "--experiment",
            "gdl.exp",
            "--out",
            "eight.result",
            "--workers",
            "8",
            "-q",
        ],
    );
    let one = without_timings(&read_text(&d.join("one.result")).unwrap());
    let eight = without_timings(&read_text(&d.join("eight.result")).unwrap());
    assert_eq!(one, eight);
}

#[test]
fn compressed_results_hold_the_same_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "8");
    train(d, "a.agent", "beb", &["beta=1"]);
    ok(
        d,
        &[
            "run",
            "--agent",
            "a.agent",
            "--experiment",
            "gdl.exp",
            "--out",
            "plain.result",
            "-q",
        ],
    );
    ok(
        d,
        &[
            "run",
            "--agent",
            "a.agent",
            "--experiment",
            "gdl.exp",
            "--out",
            "packed.result.gz",
            "--compress",
            "-q",
        ],
    );
    let raw = fs::read(d.join("packed.result.gz")).unwrap();
    assert_eq!(&raw[..2], &[0x1f, 0x8b]);
    let plain = ResultFile::read(&d.join("plain.result")).unwrap();
    let packed = ResultFile::read(&d.join("packed.result.gz")).unwrap();
    assert!(plain.results.same_outcome(&packed.results));
}

#[test]
fn missing_agent_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "4");
    let out = bbrl(
        d,
        &[
            "run",
            "--agent",
            "nowhere.agent",
            "--experiment",
            "gdl.exp",
            "--out",
            "x.result",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.agent"));
    assert!(!d.join("x.result").exists());
}

#[test]
fn future_versions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "4");
    train(d, "a.agent", "random", &[]);
    let text = fs::read_to_string(d.join("a.agent")).unwrap();
    fs::write(
        d.join("b.agent"),
        text.replacen("bbrl-agent v1", "bbrl-agent v2", 1),
    )
    .unwrap();
    let out = bbrl(
        d,
        &[
            "run",
            "--agent",
            "b.agent",
            "--experiment",
            "gdl.exp",
            "--out",
            "x.result",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unsupported agent file version 2"), "{err}");
}

#[test]
fn gamma_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "4");
    ok(
        d,
        &[
            "offline-learn",
            "--out",
            "a.agent",
            "--algorithm",
            "random",
            "--prior",
            "gdl.dist",
            "--gamma",
            "0.5",
            "--horizon",
            "10",
        ],
    );
    let out = bbrl(
        d,
        &[
            "run",
            "--agent",
            "a.agent",
            "--experiment",
            "gdl.exp",
            "--out",
            "x.result",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn export_of_nothing_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("empty")).unwrap();
    let out = bbrl(d, &["export", "--out", "report", "empty"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("report").exists());
}

fn write_batch(dir: &Path) -> PathBuf {
    let path = dir.join("batch.toml");
    fs::write(
        &path,
        r#"
out = "runs"

[[experiment]]
name = "gdl"
prior = "preset:gdl"
test = "preset:gdl"
n_mdps = 6
gamma = 0.95
seed = 3

[[agent]]
algorithm = "egreedy"
"#,
    )
    .unwrap();
    path
}

#[test]
fn batch_runs_the_grid_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_batch(d);
    ok(d, &["batch", "batch.toml", "--workers", "2"]);
    let results = d.join("runs/gdl/results");
    let count = |p: &Path| fs::read_dir(p).unwrap().count();
    assert_eq!(count(&results), 11);
    assert_eq!(count(&d.join("runs/gdl/agents")), 11);
    let summary = fs::read_to_string(d.join("runs/gdl/report/summary.tsv")).unwrap();
    assert_eq!(summary.lines().count(), 2);

    let victim = results.join("egreedy-epsilon-0.5.result");
    let kept = results.join("egreedy-epsilon-0.result");
    let kept_bytes = fs::read(&kept).unwrap();
    fs::remove_file(&victim).unwrap();
    ok(d, &["batch", "batch.toml", "--workers", "2"]);
    assert!(victim.exists());
    assert_eq!(fs::read(&kept).unwrap(), kept_bytes);
}

#[test]
fn batch_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("batch.toml"),
        r#"
[[experiment]]
name = "good"
prior = "preset:gdl"
test = "preset:gdl"
n_mdps = 2
gamma = 0.9

[[experiment]]
name = "bad"
prior = "missing.dist"
test = "preset:gdl"
n_mdps = 2
gamma = 0.9

[[agent]]
algorithm = "random"
"#,
    )
    .unwrap();
    let out = bbrl(d, &["batch", "batch.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.dist"));
    assert!(d.join("out/good/results/random.result").exists());
}

#[test]
fn offline_learning_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "4");
    train(d, "a.agent", "opps-ds", &["space=F2", "beta=30"]);
    train(d, "b.agent", "opps-ds", &["space=F2", "beta=30"]);
    let a = read_text(&d.join("a.agent")).unwrap();
    let b = read_text(&d.join("b.agent")).unwrap();
    assert_eq!(without_timings(&a), without_timings(&b));
    assert!(a.contains("offline_time_ns="));
    assert!(!without_timings(&a).contains("offline_time_ns="));
}

#[test]
fn wrong_theta_length_names_the_expected_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = bbrl(
        dir.path(),
        &[
            "distrib-generate",
            "--out",
            "x.dist",
            "--states",
            "2",
            "--actions",
            "1",
            "--transition-weights",
            "1 1 1",
            "--reward-means",
            "0 0 0 0",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains('4'));
}
