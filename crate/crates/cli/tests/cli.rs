use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn meam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meam"))
        .current_dir(dir)
        .env_remove("MEAM_THREADS")
        .args(args)
        .output()
        .expect("spawn meam")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = "\
env = bandit-zs
offline_steps = 20
online_steps = 10
hidden_width = 16
ensemble_size = 2
batch_size = 16
score_batch = 16
eval_every = 10
checkpoint_every = 10
eval_episodes = 20
";

/// Writes the small config and a 200-row bandit dataset, then trains.
fn trained_run(dir: &Path) {
    fs::write(dir.join("c.txt"), SMALL).unwrap();
    let g = meam(dir, &["gen-data", "--env", "bandit-zs", "--n", "200", "--out", "b.csv"]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    let t = meam(dir, &["train", "--config", "c.txt", "--dataset", "b.csv", "--out", "run"]);
    assert_eq!(code(&t), 0, "{}", stderr(&t));
}

#[test]
fn gen_data_same_seed_same_bytes() {
    let tmp = TempDir::new().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = meam(tmp.path(), &["gen-data", "--env", "bandit-zs", "--n", "300", "--seed", "7", "--out", name]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).contains("300 rows"));
    }
    let a = fs::read(tmp.path().join("a.csv")).unwrap();
    let b = fs::read(tmp.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let out = meam(tmp.path(), &["gen-data", "--env", "bandit-zs", "--n", "300", "--seed", "8", "--out", "c.csv"]);
    assert_eq!(code(&out), 0);
    assert_ne!(a, fs::read(tmp.path().join("c.csv")).unwrap());
}

#[test]
fn maze_rows_bounded_by_horizon() {
    let tmp = TempDir::new().unwrap();
    let out = meam(tmp.path(), &["gen-data", "--env", "maze-sparse", "--n", "200", "--seed", "3", "--out", "m.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("m.csv")).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert!(rows > 200 && rows <= 200 * 50, "{rows} rows");
}

#[test]
fn unknown_env_exits_2_and_lists_names() {
    let tmp = TempDir::new().unwrap();
    let out = meam(tmp.path(), &["gen-data", "--env", "cartpole", "--n", "10", "--out", "x.csv"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("bandit-zs") && err.contains("maze-sparse"), "{err}");
    assert!(!tmp.path().join("x.csv").exists());
}

#[test]
fn missing_args_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&meam(tmp.path(), &["gen-data", "--env", "bandit-zs"])), 2);
    assert_eq!(code(&meam(tmp.path(), &["frobnicate"])), 2);
}

#[test]
fn bad_config_lists_every_problem() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.txt"), "env = bandit-zs\nlerning_rate = 1e-3\ngamma = 1.5\nbatch_size = 0\n").unwrap();
    let g = meam(tmp.path(), &["gen-data", "--env", "bandit-zs", "--n", "50", "--out", "b.csv"]);
    assert_eq!(code(&g), 0);
    let out = meam(tmp.path(), &["train", "--config", "bad.txt", "--dataset", "b.csv", "--out", "run"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    for key in ["lerning_rate", "gamma", "batch_size"] {
        assert!(err.contains(key), "missing {key} in: {err}");
    }
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn bad_thread_count_exits_2() {
    let tmp = TempDir::new().unwrap();
    for v in ["0", "-1", "four"] {
        let out = Command::new(env!("CARGO_BIN_EXE_meam"))
            .current_dir(tmp.path())
            .env("MEAM_THREADS", v)
            .args(["verify"])
            .output()
            .unwrap();
        assert_eq!(code(&out), 2, "MEAM_THREADS={v}");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_meam"))
        .current_dir(tmp.path())
        .env("MEAM_THREADS", "3")
        .args(["verify"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn verify_theory_passes() {
    let tmp = TempDir::new().unwrap();
    let out = meam(tmp.path(), &["verify", "--suite", "theory"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("check,value,condition,passed"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() >= 5);
    assert!(rows.iter().all(|r| r.ends_with(",true")), "{text}");
}

#[test]
fn verify_unknown_suite_exits_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&meam(tmp.path(), &["verify", "--suite", "practice"])), 2);
}

#[test]
fn train_then_eval() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained_run(dir);
    let run = dir.join("run");
    for f in ["metrics.csv", "config.txt", "dataset.txt", "checkpoints/final/state.txt", "checkpoints/step_0000010/state.txt"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 20);

    let out = meam(dir, &["eval", "--checkpoint", "run/checkpoints/final", "--episodes", "50"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("success ") && text.contains(" to ") && text.contains("mean return"), "{text}");
    assert!(!text.contains('\u{2013}') && !text.contains('\u{2014}'));
}

#[test]
fn untrained_policy_rarely_succeeds() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("c.txt"), SMALL.replace("offline_steps = 20", "offline_steps = 0")).unwrap();
    assert_eq!(code(&meam(dir, &["gen-data", "--env", "bandit-zs", "--n", "50", "--out", "b.csv"])), 0);
    let t = meam(dir, &["train", "--config", "c.txt", "--dataset", "b.csv", "--out", "run"]);
    assert_eq!(code(&t), 0, "{}", stderr(&t));
    let out = meam(dir, &["eval", "--checkpoint", "run/checkpoints/final", "--episodes", "400"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rate: f64 = stdout(&out).split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(rate < 0.05, "untrained success {rate}");
}

#[test]
fn checkpoint_version_mismatch_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained_run(dir);
    let state = dir.join("run/checkpoints/final/state.txt");
    let text = fs::read_to_string(&state).unwrap();
    fs::write(&state, text.replacen("meam-state v1", "meam-state v9", 1)).unwrap();
    let out = meam(dir, &["eval", "--checkpoint", "run/checkpoints/final"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("version"), "{}", stderr(&out));
}

#[test]
fn finetune_finds_recorded_dataset() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained_run(dir);
    let out = meam(dir, &["finetune", "--config", "c.txt", "--checkpoint", "run/checkpoints/final", "--out", "ft"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("fine-tuned 10 env steps"), "{}", stdout(&out));
    assert!(dir.join("ft/metrics.csv").exists());
    assert!(dir.join("ft/checkpoints/final/state.txt").exists());
}

#[test]
fn finetune_rejects_shape_change() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained_run(dir);
    fs::write(dir.join("wide.txt"), SMALL.replace("hidden_width = 16", "hidden_width = 32")).unwrap();
    let out = meam(dir, &["finetune", "--config", "wide.txt", "--checkpoint", "run/checkpoints/final", "--out", "ft"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}
