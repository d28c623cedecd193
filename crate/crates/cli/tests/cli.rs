use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_classtrack"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(scenario: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sc.toml"), scenario).unwrap();
    dir
}

#[test]
fn simulate_writes_header_plus_frames() {
    let dir = setup("num_frames = 3\n");
    let o = run(&["simulate", "--config", "sc.toml", "--out", "d.jsonl", "--truth", "t.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with(r#"{"type":"header""#));
    assert_eq!(fs::read_to_string(dir.path().join("t.jsonl")).unwrap().lines().count(), 3);
}

#[test]
fn suite_writes_numbered_pairs() {
    let dir = setup("");
    let o = run(&["simulate", "--config", "sc.toml", "--out", "s", "--suite", "20"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = fs::read_dir(dir.path().join("s"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".detections.jsonl")).count(), 20);
    assert_eq!(names.iter().filter(|n| n.ends_with(".truth.jsonl")).count(), 20);
}

#[test]
fn clean_file_keeps_one_track() {
    let dir = setup("num_frames = 10\nwalk_sigma = 2.0\n");
    run(&["simulate", "--config", "sc.toml", "--out", "d.jsonl"], dir.path());
    let o = run(&["track", "--detections", "d.jsonl", "--mode", "robust", "--out", "tr.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("born: 1, dead: 0, lost: 0"), "{}", stdout(&o));
    let tracks = fs::read_to_string(dir.path().join("tr.jsonl")).unwrap();
    assert_eq!(tracks.lines().count(), 10);
    assert!(tracks.lines().all(|l| l.contains(r#""id":0,"#)));
}

#[test]
fn standard_mode_reports_one_lost() {
    let dir = setup("");
    run(&["simulate", "--config", "sc.toml", "--out", "s", "--suite", "1"], dir.path());
    let det = "s/seq000.detections.jsonl";
    let o = run(&["track", "--detections", det, "--mode", "standard", "--out", "tr.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("lost: 1"), "{}", stdout(&o));
    let o = run(&["track", "--detections", det, "--mode", "robust", "--out", "tr.jsonl"], dir.path());
    assert!(stdout(&o).contains("lost: 0"), "{}", stdout(&o));
}

#[test]
fn evaluate_clean_suite_loses_nothing() {
    let dir = setup("num_frames = 3\n");
    run(&["simulate", "--config", "sc.toml", "--out", "s", "--suite", "5", "--clean"], dir.path());
    let o = run(&["evaluate", "--suite-dir", "s", "--report", "r.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["n"], 5);
    assert_eq!(report["lost_robust"], 0);
    assert_eq!(report["lost_standard"], 0);
    assert!(stdout(&o).contains("Number of lost tracks"));
}

#[test]
fn missing_header_exits_2_with_line_1() {
    let dir = setup("num_frames = 2\n");
    run(&["simulate", "--config", "sc.toml", "--out", "d.jsonl"], dir.path());
    let text = fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("bad.jsonl"), body).unwrap();
    for args in [
        &["check", "--detections", "bad.jsonl"][..],
        &["track", "--detections", "bad.jsonl", "--mode", "robust", "--out", "o.jsonl"][..],
    ] {
        let o = run(args, dir.path());
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
    }
}

#[test]
fn non_monotonic_exits_4() {
    let dir = setup("num_frames = 3\n");
    run(&["simulate", "--config", "sc.toml", "--out", "d.jsonl"], dir.path());
    let text = fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    fs::write(dir.path().join("bad.jsonl"), text.replace(r#""t":2"#, r#""t":1"#)).unwrap();
    let o = run(&["track", "--detections", "bad.jsonl", "--mode", "robust", "--out", "o.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    assert_eq!(run(&["check", "--detections", "bad.jsonl"], dir.path()).status.code(), Some(4));
}

#[test]
fn bad_config_exits_2_and_missing_file_exits_3() {
    let dir = setup("num_classes = 0\n");
    let o = run(&["simulate", "--config", "sc.toml", "--out", "d.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate", "--config", "nope.toml", "--out", "d.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["track", "--detections", "nope.jsonl", "--mode", "robust", "--out", "o.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn tracker_config_file_is_honoured() {
    let dir = setup("num_frames = 3\n");
    fs::write(dir.path().join("tr.toml"), "birth_threshold = 0.95\n").unwrap();
    run(&["simulate", "--config", "sc.toml", "--out", "d.jsonl"], dir.path());
    let o = run(
        &["track", "--detections", "d.jsonl", "--mode", "robust", "--config", "tr.toml", "--out", "o.jsonl"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("born: 0"), "{}", stdout(&o));
    fs::write(dir.path().join("bad.toml"), "[gain]\nkind = \"sometimes\"\n").unwrap();
    let o = run(
        &["track", "--detections", "d.jsonl", "--mode", "robust", "--config", "bad.toml", "--out", "o.jsonl"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_data_has_expected_columns() {
    let dir = setup("num_frames = 3\n");
    run(&["simulate", "--config", "sc.toml", "--out", "d.jsonl", "--truth", "t.jsonl"], dir.path());
    let o = run(
        &["track", "--detections", "d.jsonl", "--mode", "robust", "--out", "o.jsonl", "--plot-data", "p", "--truth", "t.jsonl"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("p/d_robust.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    for line in csv.lines() {
        assert_eq!(line.split(',').count(), 1 + 2 * 5 + 3 + 1);
    }
}
