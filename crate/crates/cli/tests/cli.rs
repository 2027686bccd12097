use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imbalance-rl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
[agent]
algorithm = "dqn"
hidden = [8]
batch_size = 16
buffer_capacity = 4096
update_every = 16

[run]
episodes = 2
eval_every = 1
log_every = 120
"#;

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn grad_check_passes() {
    let o = cli(&["grad-check", "--nets", "9", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).trim_end().ends_with("PASS"));
}

#[test]
fn oracle_on_the_default_square_wave() {
    let o = cli(&["oracle"]);
    assert!(o.status.success());
    assert!(
        stdout(&o).contains("average optimal profit 3600.00 EUR/day"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn train_then_evaluate_heatmap_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();

    let o = cli(&["train", "--config", &config, "--out", run_s, "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "best.ckpt",
        "final.ckpt",
        "learning_curve.csv",
        "train.ndjson",
        "config.toml",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let curve = fs::read_to_string(run.join("learning_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    let saved = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 1"));

    let final_ckpt = run.join("final.ckpt");
    let best_ckpt = run.join("best.ckpt");
    let eval_dir = dir.path().join("eval");
    let o = cli(&[
        "evaluate",
        final_ckpt.to_str().unwrap(),
        "--config",
        &config,
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("avg_daily_profit_eur"));
    assert!(eval_dir.join("eval_report.json").exists());

    let o = cli(&[
        "heatmap",
        final_ckpt.to_str().unwrap(),
        "--price-steps",
        "5",
        "--soc-steps",
        "4",
        "--price-min",
        "-100",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 6);

    let o = cli(&[
        "compare",
        "--config",
        &config,
        "--checkpoints",
        best_ckpt.to_str().unwrap(),
        final_ckpt.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = cli(&["compare", "--checkpoints", final_ckpt.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn unknown_config_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[agent]\ngama = 0.9\n").unwrap();
    let o = cli(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}
