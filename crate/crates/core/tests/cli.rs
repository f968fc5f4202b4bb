//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

use mvhmm::io::{load_timeline, write_timeline};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvhmm")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn indices(report: &str) -> Vec<Vec<u32>> {
    report
        .lines()
        .filter(|l| l.starts_with("component "))
        .map(|l| {
            let start = l.find('[').unwrap() + 1;
            let end = l.find(']').unwrap();
            l[start..end].split(',').map(|c| c.parse().unwrap()).collect()
        })
        .collect()
}

#[test]
fn filter_single_time_has_one_component() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.conf", "model = fv\ntheta = 2\n");
    let data = write(dir.path(), "d.csv", "time,label,count\n0,A,2\n0,B,1\n");
    let out = run(&["filter", "--config", &config, "--data", &data, "--at", "0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("components = 1\n"));
    assert_eq!(indices(&text), vec![vec![2, 1]]);
}

#[test]
fn smooth_worked_example_keeps_shared_types() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.conf", "model = fv\ntheta = 1.5\n");
    let data = write(
        dir.path(),
        "d.csv",
        "time,label,count\n0,A,1\n0,B,3\n1,C,1\n2,B,2\n2,C,1\n",
    );
    let out = run(&["smooth", "--config", &config, "--data", &data, "--at", "1"]);
    assert!(out.status.success());
    let comps = indices(&stdout(&out));
    assert!(!comps.is_empty());
    for c in comps {
        // Past and future both contribute type B; the future contributes C.
        assert!(c[0] <= 1 && (2..=5).contains(&c[1]) && c[2] == 2, "{c:?}");
    }
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.conf", "model = dw\ntheta = 1.2\nbeta = 0.7\nseed = 4\n");
    let data = write(dir.path(), "d.csv", "time,draw,label,count\n0,1,A,1\n0,2,B,2\n1.5,1,A,1\n");
    let args = ["predict", "--config", &config, "--data", &data, "--at", "1", "--samples", "20", "--pmf"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("count_mean = "));
}

#[test]
fn simulate_writes_canonical_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "c.conf",
        "model = fv\ntheta = 2\nbase = discrete\np0.a = 0.5\np0.b = 0.5\nseed = 3\n",
    );
    let out_path = dir.path().join("sim.csv");
    let out = run(&["simulate", "--config", &config, "--times", "0,0.5,1", "--size", "4", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = load_timeline(&out_path, false).unwrap();
    assert_eq!(data.timeline.len(), 3);
    assert!((0..3).all(|i| data.timeline.counts(i).total() == 4));
    let mut again = Vec::new();
    write_timeline(&mut again, &data).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), std::fs::read_to_string(&out_path).unwrap());
}

#[test]
fn validate_duality_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.conf", "model = dw\ntheta = 2\nbeta = 1\n");
    let out = run(&["validate", "--config", &config, "--suite", "duality"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).ends_with("result = pass\n"));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.conf", "model = fv\ntheta = 2\n");
    let empty = write(dir.path(), "e.csv", "time,label,count\n");
    let out = run(&["filter", "--config", &config, "--data", &empty, "--at", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least one time required"));

    let bad = write(dir.path(), "b.conf", "model = dw\ntheta = 2\n");
    let data = write(dir.path(), "d.csv", "time,draw,label,count\n0,1,A,1\n");
    let out = run(&["filter", "--config", &bad, "--data", &data, "--at", "0"]);
    assert!(!out.status.success());

    assert!(!run(&["smooth"]).status.success());
}
