use std::path::Path;
use std::process::{Command, Output};

fn eprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eprop"))
        .args(args)
        .env_remove("EPROP_DATA_DIR")
        .output()
        .unwrap()
}

fn train_tca(dir: &Path, name: &str, seed: &str) -> String {
    let out = dir.join(name);
    let o = eprop(&[
        "train",
        "--task",
        "tca",
        "--updates",
        "6",
        "--batch",
        "4",
        "--cells",
        "4",
        "--seed",
        seed,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn train_writes_reproducible_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tca(dir.path(), "a.csv", "3");
    let b = train_tca(dir.path(), "b.csv", "3");
    assert_eq!(a, b);
    assert!(a.starts_with(
        "step,epoch,train_loss,train_error,running_error,test_accuracy,wallclock_ms,peak_sequence_bytes\n"
    ));
    assert_eq!(a.lines().count(), 7);
}

#[test]
fn config_file_flags_and_set_layer_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "task = tca\nupdates = 50\ncells = 4\nbatch = 4\nseed = 1\n").unwrap();
    let saved = dir.path().join("saved.cfg");
    let out = dir.path().join("m.csv");
    let o = eprop(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--updates",
        "3",
        "--set",
        "seed=9",
        "--out",
        out.to_str().unwrap(),
        "--save-config",
        saved.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let saved = std::fs::read_to_string(saved).unwrap();
    assert!(saved.contains("updates = 3\n") && saved.contains("seed = 9\n") && saved.contains("cells = 4\n"));
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 4);
}

#[test]
fn unmet_threshold_and_bad_config_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let o = eprop(&[
        "train",
        "--task",
        "tca",
        "--updates",
        "3",
        "--batch",
        "2",
        "--cells",
        "3",
        "--running-window",
        "2",
        "--stop-at",
        "0.0001",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = eprop(&["train", "--task", "tca", "--lr", "fast"]);
    assert_eq!(o.status.code(), Some(2));
    let o = eprop(&["train", "--task", "smnist", "--updates", "1"]);
    assert_eq!(o.status.code(), Some(2), "missing data dir must be reported");
}

#[test]
fn gradcheck_passes_on_small_settings() {
    let o = eprop(&["gradcheck", "--instances", "3", "--seq-len", "6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("(a) bptt vs finite differences") && text.contains("PASS") && text.contains("INFO"));
}

#[test]
fn compare_renders_a_table_and_rejects_mixed_schemas() {
    let dir = tempfile::tempdir().unwrap();
    train_tca(dir.path(), "p1.csv", "1");
    train_tca(dir.path(), "p2.csv", "2");
    train_tca(dir.path(), "c1.csv", "3");
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let plain = format!("plain={},{}", path("p1.csv"), path("p2.csv"));
    let combined = format!("combined={}", path("c1.csv"));
    let o = eprop(&["compare", "--group", &plain, "--group", &combined]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("| running_error | plain | combined |"));

    std::fs::write(path("other.csv"), "episode,return\n1,10\n").unwrap();
    let other = format!("rl={}", path("other.csv"));
    let o = eprop(&["compare", "--group", &plain, "--group", &other]);
    assert_eq!(o.status.code(), Some(2));
}
