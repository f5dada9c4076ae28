//! End-to-end checks of the command-line interface and its exit codes.

use std::io::Write;
use std::process::{Command, Output};

fn c2st(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_c2st"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_temp(content: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(content.as_bytes()).unwrap();
    f
}

fn toy_csv(rows_per_group: usize) -> String {
    // deterministic wiggly columns; enough rows for the split pipelines
    let mut s = String::from("a,b,y,group\n");
    for g in [1, 2] {
        for i in 0..rows_per_group {
            let t = i as f64 / rows_per_group as f64;
            let a = (13.0 * t + g as f64).sin();
            let b = (7.0 * t).cos() * g as f64;
            let y = a - b + (31.0 * t).sin() * 0.5;
            s.push_str(&format!("{a:.6},{b:.6},{y:.6},{g}\n"));
        }
    }
    s
}

#[test]
fn simulate_writes_a_report() {
    let plan = write_temp(
        "plan.repetitions = 20\nplan.seed = 3\nscenario.grid = S1B\nscenario.hypothesis = null\nscenario.n = 60\nmethod.grid = uniform-p,always-reject\n",
    );
    let out_path = tempfile::NamedTempFile::new().unwrap();
    let out = c2st(&[
        "simulate",
        "--plan",
        plan.path().to_str().unwrap(),
        "--out",
        out_path.path().to_str().unwrap(),
        "--format",
        "csv",
        "--jobs",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = std::fs::read_to_string(out_path.path()).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,support,hypothesis,n,method,rate,ci_lo,ci_hi,reps,failures"
    );
    assert_eq!(lines.len(), 3); // one cell per method
    assert!(lines.iter().any(|l| l.contains("always-reject,1.000")));
}

#[test]
fn simulate_rejects_a_bad_plan_with_exit_two() {
    let plan = write_temp("scenario.grid = S9Q\nscenario.n = 10\nmethod.grid = clf\n");
    let out_path = tempfile::NamedTempFile::new().unwrap();
    let out = c2st(&[
        "simulate",
        "--plan",
        plan.path().to_str().unwrap(),
        "--out",
        out_path.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn test_subcommand_prints_an_outcome() {
    let data = write_temp(&toy_csv(60));
    let out = c2st(&[
        "test",
        "--method",
        "mmd-l",
        "--data",
        data.path().to_str().unwrap(),
        "--alpha",
        "0.05",
        "--seed",
        "7",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("method        mmd-l"));
    assert!(text.contains("p_value"));
    assert!(text.contains("reject"));
}

#[test]
fn test_subcommand_supports_two_files_and_rank() {
    let csv = toy_csv(40);
    let mut first = String::from("a,b,y\n");
    let mut second = String::from("a,b,y\n");
    for (i, line) in csv.lines().skip(1).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let row = format!("{},{},{}\n", cols[0], cols[1], cols[2]);
        if i < 40 {
            first.push_str(&row);
        } else {
            second.push_str(&row);
        }
    }
    let f1 = write_temp(&first);
    let f2 = write_temp(&second);
    let out = c2st(&[
        "test",
        "--method",
        "rank",
        "--data",
        f1.path().to_str().unwrap(),
        "--data2",
        f2.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("method        rank"));
    assert!(text.contains("not calibrated"));
}

#[test]
fn test_subcommand_maps_data_errors_to_exit_three() {
    // missing group 2
    let data = write_temp("a,y,group\n1,1,1\n2,2,1\n3,3,1\n");
    let out = c2st(&[
        "test",
        "--method",
        "mean",
        "--data",
        data.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // unknown method is a configuration error
    let data = write_temp(&toy_csv(20));
    let out = c2st(&[
        "test",
        "--method",
        "no-such-test",
        "--data",
        data.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_reports_ks_diagnostics() {
    let sample = tempfile::NamedTempFile::new().unwrap();
    let out = c2st(&[
        "calibrate",
        "--method",
        "mmd-l",
        "--scenario",
        "S1B",
        "--n",
        "80",
        "--reps",
        "40",
        "--out",
        sample.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("ks_d="), "{text}");
    assert!(text.contains("ks_p="));
    let stats = std::fs::read_to_string(sample.path()).unwrap();
    assert_eq!(stats.lines().count(), 40);

    let out = c2st(&["calibrate", "--method", "mmd-l", "--scenario", "S7X"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn jobs_env_variable_is_honored() {
    let plan = write_temp(
        "plan.repetitions = 12\nplan.seed = 4\nscenario.grid = S1B\nscenario.hypothesis = null\nscenario.n = 60\nmethod.grid = uniform-p\n",
    );
    let out_a = tempfile::NamedTempFile::new().unwrap();
    let out_b = tempfile::NamedTempFile::new().unwrap();
    let run = |jobs: &str, path: &std::path::Path| {
        let out = Command::new(env!("CARGO_BIN_EXE_c2st"))
            .args([
                "simulate",
                "--plan",
                plan.path().to_str().unwrap(),
                "--out",
                path.to_str().unwrap(),
            ])
            .env("C2ST_JOBS", jobs)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run("1", out_a.path());
    run("3", out_b.path());
    // results do not depend on the worker count
    assert_eq!(
        std::fs::read_to_string(out_a.path()).unwrap(),
        std::fs::read_to_string(out_b.path()).unwrap()
    );
}
