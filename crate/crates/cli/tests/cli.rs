use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seed = 3

[synth]
n_dialogues = 1500
n_planted_variables = 12
effect_min = 1.5
effect_max = 2.5

[phrasing]
min_support = 25

[embedding]
pca_components = 16

[models]
model = "logreg"

[evaluation]
q_list = [0.0, 50.0, 100.0]
folds = 3
criteria = ["frequency"]
"#;

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

fn ltc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltc"))
        .current_dir(dir)
        .env_remove("LTC_STORE")
        .args(["--config", "run.toml", "--store", "store"])
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_then_auto_sweep_then_report() {
    let dir = setup();
    let out = ltc(dir.path(), &["synth"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("stage=synth status=ran"));

    let out = ltc(dir.path(), &["--auto", "sweep"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("stage=sweep status=ran"));

    let out = ltc(dir.path(), &["report"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("stage=report status=ran"));
    assert!(text.lines().any(|l| l.trim_start().starts_with("report/")));
    assert!(dir.path().join("store/report").is_dir());

    let out = ltc(dir.path(), &["report"]);
    assert!(stdout(&out).contains("stage=report status=up-to-date"));
    let out = ltc(dir.path(), &["--auto", "sweep"]);
    assert!(stdout(&out).contains("stage=sweep status=up-to-date"));
}

#[test]
fn train_before_its_inputs_fails_cleanly() {
    let dir = setup();
    let out = ltc(dir.path(), &["train"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error: kind=missing_artifact message=missing artifact: clean_corpus"), "{err}");
    assert!(err.contains("ltc clean"));
    assert!(stdout(&out).is_empty());
}

#[test]
fn store_location_comes_from_the_environment() {
    let dir = setup();
    let out = Command::new(env!("CARGO_BIN_EXE_ltc"))
        .current_dir(dir.path())
        .env("LTC_STORE", "from-env")
        .args(["--config", "run.toml", "synth"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("from-env/manifest.json").is_file());
}

#[test]
fn bad_flags_are_rejected() {
    let dir = setup();
    let out = ltc(dir.path(), &["--q-list", "0,150", "sweep"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: kind=invalid_argument"), "{}", stderr(&out));
    let out = ltc(dir.path(), &["--model", "svm", "train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("svm"));
}
