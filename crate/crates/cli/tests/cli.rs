//! Command-line behavior: exit codes and one-line diagnostics.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparsevote"))
}

fn tmp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("sparsevote-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn missing_config_file_fails_with_diagnostic() {
    let out = bin().args(["run", "/no/such/file.cfg"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
}

#[test]
fn bad_config_field_is_named_in_the_error() {
    let dir = tmp_dir("badfield");
    let path = dir.join("bad.cfg");
    std::fs::write(
        &path,
        "schema = 1\nseed = 1\nworkers = 0\nscheme = mv\ninput_dim = 8\nsamples = 8\n\
rounds = 1\nphi = 0.5\nlr = 0.1\nout = x.csv\n",
    )
    .unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("workers"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_key_is_named_in_the_error() {
    let dir = tmp_dir("unknown");
    let path = dir.join("unknown.cfg");
    std::fs::write(
        &path,
        "schema = 1\nseed = 1\nworkers = 2\nscheme = mv\ninput_dim = 8\nsamples = 8\n\
rounds = 1\nphi = 0.5\nlr = 0.1\nout = x.csv\nphy = 3\n",
    )
    .unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("phy"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unwritable_output_path_is_an_io_error() {
    let dir = tmp_dir("unwritable");
    let path = dir.join("cfg.cfg");
    // the metrics path nests under a regular file, which cannot be a directory
    let blocker = dir.join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let out_path = blocker.join("metrics.csv");
    std::fs::write(
        &path,
        format!(
            "schema = 1\nseed = 1\nworkers = 2\nscheme = mv\ninput_dim = 8\nsamples = 8\n\
rounds = 1\nphi = 0.5\nlr = 0.1\nout = {}\n",
            out_path.display()
        ),
    )
    .unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_exits_zero_and_prints_summary() {
    let dir = tmp_dir("ok");
    let out_path = dir.join("m.csv");
    let path = dir.join("ok.cfg");
    std::fs::write(
        &path,
        format!(
            "schema = 1\nseed = 1\nworkers = 2\nscheme = mv\ninput_dim = 16\nsamples = 32\n\
rounds = 3\nphi = 0.25\nlr = 0.01\nbatch_size = 4\nout = {}\n",
            out_path.display()
        ),
    )
    .unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("final_train_loss ="));
    assert!(stdout.contains("compression_up ="));
    assert!(out_path.exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn codec_selftest_small_run_passes() {
    let out = bin()
        .args(["codec-selftest", "--masks", "50", "--values", "20", "--seed", "9"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}
