use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_structcf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn compare_dirs(got: &Path, want: &Path) {
    let list = |d: &Path| {
        let mut v: Vec<String> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    assert_eq!(list(got), list(want), "file sets differ");
    for f in list(want) {
        let a = fs::read(got.join(&f)).unwrap();
        let b = fs::read(want.join(&f)).unwrap();
        assert!(a == b, "{f} differs from the golden copy");
    }
}

fn golden(sub: &str, config: &str, name: &str) {
    let out = tempfile::tempdir().unwrap();
    let cfg = fixtures().join(config);
    let o = run(&[
        sub,
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    compare_dirs(out.path(), &fixtures().join("golden").join(name));
}

#[test]
fn golden_counterfactual() {
    golden("counterfactual", "counterfactual.toml", "counterfactual");
}

#[test]
fn golden_irf() {
    golden("estimate-irf", "irf.toml", "irf");
}

#[test]
fn golden_historical() {
    golden("scenario", "historical.toml", "historical");
}

#[test]
fn golden_future() {
    golden("scenario", "future.toml", "future");
}

#[test]
fn golden_intervention() {
    golden("intervene", "intervene.toml", "intervene");
}

#[test]
fn simulate_reproduces_fixture_data() {
    let out = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("simulate.toml");
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read(out.path().join("data.csv")).unwrap();
    let b = fs::read(fixtures().join("data.csv")).unwrap();
    assert!(a == b);
}

/// Config text with `data.path` pointing at the shipped data.
fn with_data(text: &str) -> String {
    let data = fixtures().join("data.csv");
    text.replace("\"data.csv\"", &format!("{:?}", data.to_str().unwrap()))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("c.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn null_historical_path_gives_zero_disparity() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixtures().join("historical.toml")).unwrap();
    let text = with_data(&text).replace("offset:-0.25@0..3", "baseline");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = run(&[
        "scenario",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let est = fs::read_to_string(out.join("estimates.csv")).unwrap();
    let rows: Vec<&str> = est.lines().skip(1).collect();
    assert_eq!(rows.len(), 7);
    for r in rows {
        let v: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(v, 0.0, "{r}");
    }
}

#[test]
fn invalid_roles_are_input_errors_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixtures().join("counterfactual.toml")).unwrap();
    let cfg = write_config(
        dir.path(),
        &with_data(&text).replace("roles.outcome = \"y\"", "roles.outcome = \"gdp\""),
    );
    let o = run(&["counterfactual", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("assign roles"), "{}", stderr(&o));
}

#[test]
fn numerical_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = fs::read_to_string(fixtures().join("data.csv")).unwrap();
    // Instrument identical to zero: the cross-moment matrix is singular.
    let zeroed: String = data
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let mut f: Vec<&str> = l.split(',').collect();
            if i > 0 {
                f[4] = "0";
            }
            f.join(",") + "\n"
        })
        .collect();
    fs::write(dir.path().join("data.csv"), zeroed).unwrap();
    let text = fs::read_to_string(fixtures().join("counterfactual.toml")).unwrap();
    let cfg = write_config(dir.path(), &text);
    let o = run(&["counterfactual", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("local projection"), "{}", stderr(&o));
}

#[test]
fn subcommand_must_match_task() {
    let cfg = fixtures().join("counterfactual.toml");
    let o = run(&["intervene", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn overrides_apply() {
    let cfg = fixtures().join("counterfactual.toml");
    let o = run(&[
        "counterfactual",
        "--config",
        cfg.to_str().unwrap(),
        "--horizon",
        "2",
        "--level",
        "0.95",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows = text.lines().filter(|l| l.starts_with("psi")).count();
    assert_eq!(rows, 3);
    assert!(text.contains("level") && text.contains("0.95"));
    let bad = run(&["counterfactual", "--config", cfg.to_str().unwrap(), "--level", "1.5"]);
    assert_eq!(bad.status.code(), Some(1));
}
