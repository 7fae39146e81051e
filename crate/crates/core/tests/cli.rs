use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mcsched::model::{CheckpointProfile, Task};
use mcsched::Taskset;

const BIN: &str = env!("CARGO_BIN_EXE_mcsched");
const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn data(file: &str) -> String {
    format!("{DATA}/{file}")
}

fn write_taskset(dir: &Path, name: &str, ts: &Taskset) -> String {
    let path = dir.join(name);
    fs::write(&path, ts.to_json()).unwrap();
    path.display().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["rta"]).status.code(), Some(1));
    assert_eq!(run(&["rta", "/no/such/file.json"]).status.code(), Some(1));
    assert_eq!(
        run(&["sweep", "--vary", "colour", "--values", "1"]).status.code(),
        Some(1)
    );
}

#[test]
fn unschedulable_and_infeasible_inputs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let overloaded = Taskset::new(
        "overloaded",
        vec![
            Task::hc(1, 6, 9, 10, 1).with_checkpoint(CheckpointProfile::new(3)),
            Task::lc(2, 5, 10, 2),
        ],
    );
    let path = write_taskset(dir.path(), "overloaded.json", &overloaded);
    let rta = run(&["rta", &path]);
    assert_eq!(rta.status.code(), Some(2));
    // the verdict is still printed
    let verdict: serde_json::Value = serde_json::from_slice(&rta.stdout).unwrap();
    assert_eq!(verdict["schedulable"], false);

    assert_eq!(run(&["audsley", &path]).status.code(), Some(2));
    assert_eq!(
        run(&["extend", &path, "--task", "1", "--extra", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["simulate", &path, "--policy", "pastime"]).status.code(), Some(2));
    assert_eq!(
        run(&["gen", "--n", "2", "--util", "1.9", "--max-attempts", "50"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn rta_csv_lists_every_task() {
    let out = run(&["--format", "csv", "rta", &data("example.json")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "task,r_lo,r_hi,r_star\n1,3,6,6\n2,5,,\n3,15,28,38\n");
}

#[test]
fn extend_reports_the_worked_decision() {
    let out = run(&["extend", &data("example.json"), "--task", "1", "--extra", "2"]);
    assert!(out.status.success());
    let d: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(d["approved"], true);
    assert_eq!(d["responses"][2]["r_star_ext"], 40);
}

#[test]
fn checkpoint_formats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for input in ["two_loops.json", "two_loops.dot"] {
        let annotated = dir.path().join(format!("annotated-{input}"));
        let out = run(&["checkpoint", &data(input), "--annotated", annotated.to_str().unwrap()]);
        assert!(out.status.success(), "{input}");
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["checkpoints"][0]["id"]["block"], "BB5");
        assert_eq!(report["loop_headers"], serde_json::json!(["BB2", "BB6"]));
        // the annotated graph parses again and places the same checkpoint
        let again = run(&["checkpoint", annotated.to_str().unwrap()]);
        let report: serde_json::Value = serde_json::from_slice(&again.stdout).unwrap();
        assert_eq!(report["checkpoints"][0]["id"]["block"], "BB5");
    }
    let dot = fs::read_to_string(dir.path().join("annotated-two_loops.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
}

#[test]
fn gen_writes_schedulable_tasksets() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sets");
    let out = run(&[
        "--seed",
        "7",
        "--out",
        out_dir.to_str().unwrap(),
        "gen",
        "--n",
        "6",
        "--util",
        "0.5",
        "--count",
        "3",
    ]);
    assert!(out.status.success());
    let mut files: Vec<_> = fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 3);
    for f in &files {
        let ts = Taskset::load(f).unwrap();
        assert_eq!(ts.len(), 6);
        assert!(mcsched::rta::amc_rtb_schedulable(&ts).schedulable);
        let rta = run(&["rta", f.to_str().unwrap()]);
        assert_eq!(rta.status.code(), Some(0));
    }
}

#[test]
fn simulate_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let metrics = dir.path().join("metrics.json");
    let out = run(&[
        "--out",
        metrics.to_str().unwrap(),
        "simulate",
        &data("example_us.json"),
        "--policy",
        "pastime",
        "--model",
        "linear:0.5",
        "--horizon",
        "200000",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(report["metrics"]["horizon"], 200000);
    assert_eq!(report["metrics"]["hc_deadline_misses"], 0);
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("time,kind,task,detail\n0,release,"));
}

#[test]
fn simulate_reconfigures_checkpoints_and_lc_budgets() {
    let base = [
        "--format",
        "csv",
        "simulate",
        &data("example_us.json"),
        "--horizon",
        "100000",
    ];
    let moved = run(&[&base[..], &["--checkpoint-frac", "0.2"]].concat());
    assert!(moved.status.success());
    let csv = String::from_utf8(moved.stdout).unwrap();
    // t1's checkpoint moves to 20% of 3000 ticks
    assert!(csv.contains("600,checkpoint,t1#0,"), "{csv}");

    assert_eq!(
        run(&[&base[..], &["--lc-hi-budget", "1.5"]].concat()).status.code(),
        Some(1)
    );
    assert!(run(&[&base[..], &["--lc-hi-budget", "0.5"]].concat()).status.success());
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "--seed".to_string(),
            "3".into(),
            "--format".into(),
            "csv".into(),
            "--out".into(),
            out.to_string(),
            "sweep".into(),
            "--vary".into(),
            "model".into(),
            "--values".into(),
            "linear,compensate,mem".into(),
            "--reps".into(),
            "2".into(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = Command::new(BIN).args(args(path.to_str().unwrap())).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
    // header names every configuration column; 3 values x 2 reps x 2 policies
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("variable,value,rep,policy,seed,"));
    assert_eq!(text.lines().count(), 1 + 12);
}
