use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rare-ring"));
    c.env_remove("RARE_RING_OUT");
    c
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn quick_run(out: &Path, extra: &[&str]) -> Output {
    let mut c = bin();
    c.args([
        "run",
        "--benchmark",
        "wavy_circle",
        "--budget",
        "40",
        "--n-is",
        "2000",
        "--n-is-final",
        "5000",
    ])
    .arg("--out")
    .arg(out)
    .args(extra);
    c.output().unwrap()
}

#[test]
fn list_benchmarks_names_all() {
    let o = bin().arg("list-benchmarks").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    for name in [
        "wavy_circle",
        "four_branch",
        "black_swan",
        "linear",
        "nataf",
    ] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn plan_prints_layers() {
    let o = bin()
        .args(["plan", "--dim", "2", "--levels", "3"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    let first: Vec<&str> = rows[0].split_whitespace().collect();
    assert_eq!(first[0], "1");
    assert_eq!(first[2], "5");
}

#[test]
fn run_writes_artifacts_and_refuses_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = quick_run(&out, &["--binary-only"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["history.csv", "report.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(out.join("history.csv")).unwrap();
    let n_sim: Vec<usize> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(n_sim.windows(2).all(|w| w[0] <= w[1]));

    let again = quick_run(&out, &[]);
    assert_eq!(again.status.code(), Some(2));
    let forced = quick_run(&out, &["--force"]);
    assert!(forced.status.success());

    let est = bin()
        .args(["estimate-only", "--n-is", "5000", "--ed"])
        .arg(out.join("report.json"))
        .output()
        .unwrap();
    assert!(
        est.status.success(),
        "{}",
        String::from_utf8_lossy(&est.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&est)).unwrap();
    assert_eq!(v["n_sim"], 40);
}

#[test]
fn json_history_and_env_out() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args([
            "run",
            "--benchmark",
            "wavy_circle",
            "--budget",
            "15",
            "--n-is",
            "1000",
            "--n-is-final",
            "1000",
        ])
        .args(["--format", "json"])
        .env("RARE_RING_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("history.json").exists());
    assert!(!dir.path().join("history.csv").exists());
}

#[test]
fn repeat_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args([
            "run",
            "--benchmark",
            "wavy_circle",
            "--budget",
            "20",
            "--n-is",
            "1000",
            "--n-is-final",
            "1000",
        ])
        .args(["--repeat", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("seed-1").join("report.json").exists());
    assert!(dir.path().join("seed-2").join("report.json").exists());
    let text = stdout(&o);
    let summary = text.lines().find(|l| l.starts_with("wavy_circle")).unwrap();
    assert_eq!(summary.split_whitespace().count(), 5);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--benchmark", "nope"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = quick_run(&dir.path().join("x"), &["--stop-psi-ratio", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin()
        .args(["run", "--benchmark", "black_swan", "--dim", "3"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[cfg(unix)]
#[test]
fn external_model_and_evaluator_errors() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("model.sh");
    // Failure beyond x1 = 2.5. One awk per line keeps the answers unbuffered.
    std::fs::write(
        &script,
        "while read -r line; do echo \"$line\" | awk '{ print ($1 > 2.5) ? \"failure\" : \"safe\" }'; done\n",
    )
    .unwrap();
    let o = bin()
        .args([
            "run",
            "--dim",
            "2",
            "--budget",
            "30",
            "--n-is",
            "2000",
            "--n-is-final",
            "2000",
            "--out",
        ])
        .arg(dir.path().join("ext"))
        .arg("--external")
        .args(["sh", script.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = bin()
        .args(["run", "--dim", "2", "--budget", "10", "--out"])
        .arg(dir.path().join("bad"))
        .args(["--external", "false"])
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
