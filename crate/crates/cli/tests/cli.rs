use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trafficmtl"));
    cmd.env_remove("TRAFFICMTL_CONFIG");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).trim().to_owned()
}

#[test]
fn synth_label_train_evaluate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "synth",
        "--classes",
        "5",
        "--flows",
        "500",
        "--seed",
        "1",
        "--out",
        &p(d, "packets.csv"),
        "--labels-out",
        &p(d, "truth.csv"),
    ]);
    let ingest = ok(&[
        "ingest",
        "--in",
        &p(d, "packets.csv"),
        "--out",
        &p(d, "flows.jsonl"),
        "--udp-timeout",
        "15",
        "--min-packets",
        "100",
        "--labels",
        &p(d, "truth.csv"),
    ]);
    assert!(ingest.contains("2500 kept"), "{ingest}");
    ok(&[
        "label",
        "--flows",
        &p(d, "flows.jsonl"),
        "--out",
        &p(d, "labels.csv"),
        "--dividers-out",
        &p(d, "dividers.json"),
    ]);
    let labels = std::fs::read_to_string(d.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 2501);
    assert_eq!(labels.lines().filter(|l| l.ends_with(",1")).count(), 100);

    let train = [
        "train",
        "--flows",
        &p(d, "flows.jsonl"),
        "--dividers",
        &p(d, "dividers.json"),
        "--k",
        "30",
        "--epochs",
        "1",
        "--finetune-epochs",
        "1",
        "--seed",
        "3",
        "--deterministic",
    ];
    let mut first = train.to_vec();
    let (m1, c1) = (p(d, "m1.json"), p(d, "c1.csv"));
    first.extend(["--out", &m1, "--metrics", &c1]);
    ok(&first);
    let mut second = train.to_vec();
    let (m2, c2) = (p(d, "m2.json"), p(d, "c2.csv"));
    second.extend(["--out", &m2, "--metrics", &c2]);
    ok(&second);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());

    // evaluate on the re-derived test split reproduces the training-time metrics
    ok(&[
        "evaluate",
        "--model",
        &m1,
        "--flows",
        &p(d, "flows.jsonl"),
        "--metrics",
        &p(d, "eval.csv"),
        "--predictions",
        &p(d, "pred.csv"),
    ]);
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(d.join("eval.csv")).unwrap());
    let pred = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    assert!(pred.starts_with("flow_id,bw_class,dur_class,traffic_class,p_traffic_max\n"));
    assert_eq!(pred.lines().count(), 501);

    ok(&[
        "predict",
        "--model",
        &m1,
        "--flows",
        &p(d, "flows.jsonl"),
        "--out",
        &p(d, "all.csv"),
    ]);
    assert_eq!(
        std::fs::read_to_string(d.join("all.csv")).unwrap().lines().count(),
        2501
    );
}

#[test]
fn timestamps_only_without_deterministic_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "synth",
        "--classes",
        "3",
        "--flows",
        "10",
        "--out",
        &p(d, "p.csv"),
        "--labels-out",
        &p(d, "t.csv"),
    ]);
    ok(&[
        "ingest",
        "--in",
        &p(d, "p.csv"),
        "--out",
        &p(d, "f.jsonl"),
        "--labels",
        &p(d, "t.csv"),
    ]);
    let base = [
        "train",
        "--flows",
        &p(d, "f.jsonl"),
        "--k",
        "30",
        "--epochs",
        "1",
        "--finetune-epochs",
        "1",
        "--labels-per-class",
        "3",
    ];
    let mut a = base.to_vec();
    let m = p(d, "m.json");
    a.extend(["--out", &m]);
    ok(&a);
    assert!(std::fs::read_to_string(&m).unwrap().contains("created_unix"));
    a.push("--deterministic");
    ok(&a);
    assert!(!std::fs::read_to_string(&m).unwrap().contains("created_unix"));
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck", "--k", "12", "--tol", "1e-4"]);
    assert!(out.contains("PASS"), "{out}");
    for layer in ["conv1d", "dense", "head 'traffic'"] {
        assert!(out.contains(layer), "{layer} missing from\n{out}");
    }
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let unknown = run(&["ingest", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr_line(&unknown).starts_with("error[usage]:"));

    let missing = run(&["ingest", "--in", &p(d, "nope.csv"), "--out", &p(d, "f.jsonl")]);
    assert_eq!(missing.status.code(), Some(6));
    assert!(stderr_line(&missing).starts_with("error[io]:"));

    std::fs::write(d.join("bad.csv"), "time,src\n1,2\n").unwrap();
    let bad = run(&["ingest", "--in", &p(d, "bad.csv"), "--out", &p(d, "f.jsonl")]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(stderr_line(&bad).starts_with("error[data-format]:"));

    ok(&[
        "synth",
        "--classes",
        "3",
        "--flows",
        "5",
        "--out",
        &p(d, "p.csv"),
        "--labels-out",
        &p(d, "t.csv"),
    ]);
    ok(&[
        "ingest",
        "--in",
        &p(d, "p.csv"),
        "--out",
        &p(d, "f.jsonl"),
        "--labels",
        &p(d, "t.csv"),
    ]);
    let shape = run(&[
        "train",
        "--flows",
        &p(d, "f.jsonl"),
        "--k",
        "20",
        "--out",
        &p(d, "m.json"),
    ]);
    assert_eq!(shape.status.code(), Some(4));
    assert!(stderr_line(&shape).contains("zero-dimensional"));
    assert_eq!(stderr_line(&shape).lines().count(), 1);

    let missing_flag = run(&["train", "--out", &p(d, "m.json")]);
    assert_eq!(missing_flag.status.code(), Some(2));
}

#[test]
fn config_file_fills_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--classes", "2", "--flows", "4", "--out", &p(d, "p.csv")]);
    let config = d.join("cfg.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"in": "{}", "out": "{}", "min-packets": 100000}}"#,
            p(d, "p.csv"),
            p(d, "f.jsonl")
        ),
    )
    .unwrap();

    let from_config = bin()
        .args(["ingest"])
        .env("TRAFFICMTL_CONFIG", &config)
        .output()
        .unwrap();
    assert!(from_config.status.success(), "{}", stderr_line(&from_config));
    assert!(String::from_utf8_lossy(&from_config.stdout).contains("0 kept"));

    let overridden = ok(&[
        "--config",
        &config.display().to_string(),
        "ingest",
        "--min-packets",
        "1",
    ]);
    assert!(overridden.contains("8 kept"), "{overridden}");
}

#[test]
fn sweep_writes_combined_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "synth",
        "--classes",
        "3",
        "--flows",
        "12",
        "--out",
        &p(d, "p.csv"),
        "--labels-out",
        &p(d, "t.csv"),
    ]);
    ok(&[
        "ingest",
        "--in",
        &p(d, "p.csv"),
        "--out",
        &p(d, "f.jsonl"),
        "--labels",
        &p(d, "t.csv"),
    ]);
    let out = ok(&[
        "sweep",
        "--flows",
        &p(d, "f.jsonl"),
        "--axis",
        "labels",
        "--values",
        "2,50",
        "--seeds",
        "1",
        "--k",
        "30",
        "--epochs",
        "1",
        "--finetune-epochs",
        "1",
        "--out",
        &p(d, "sweep.csv"),
    ]);
    assert!(out.contains("labels=50: failed"), "{out}");
    let csv = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("axis,value,seed,task,accuracy,regime,k,lambda,labels_per_class")
    );
    assert_eq!(csv.lines().filter(|l| l.starts_with("labels,2,1,")).count(), 3);
}
