use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn didgov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_didgov"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios")
}

fn golden() -> Vec<PathBuf> {
    let mut files: Vec<_> = fs::read_dir(scenarios_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn seed(n: u8) -> String {
    hex::encode([n; 32])
}

fn write_scenario(dir: &Path, actions: &str) -> PathBuf {
    let json = format!(
        r#"{{"seed_keys": {{"alice": "{}", "bob": "{}", "carol": "{}", "subject": "{}"}},
           "actions": {actions}}}"#,
        seed(1),
        seed(2),
        seed(3),
        seed(4)
    );
    let path = dir.join("scenario.json");
    fs::write(&path, json).unwrap();
    path
}

const ANCHOR: &str = r#"{"action": "anchor", "did": "subject", "groups": [{
    "group_id": 0, "edit_right": "all", "authz_kind": "acl",
    "authz_config": {"members": ["alice", "bob", "carol"]},
    "coord_kind": "n_of_m", "coord_config": {"n": 2, "m": 3}, "execution": "on_chain"}]}"#;

#[test]
fn key_rotation_reaches_version_two() {
    let out_dir = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("key-rotation-2of3.json");
    let out = didgov(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let state: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.path().join("state.json")).unwrap())
            .unwrap();
    let docs = state["documents"].as_object().unwrap();
    assert_eq!(docs.len(), 1);
    assert_eq!(docs.values().next().unwrap()["version"], 2);
    assert!(out_dir.path().join("events.jsonl").exists());
    assert!(out_dir.path().join("costs.csv").exists());
}

#[test]
fn golden_scenarios_run_and_replay() {
    let files = golden();
    assert!(files.len() >= 5);
    for scenario in files {
        let dir = tempfile::tempdir().unwrap();
        let run = didgov(&[
            "run",
            scenario.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(
            run.status.success(),
            "{}: {}",
            scenario.display(),
            stderr(&run)
        );
        let events = dir.path().join("events.jsonl");
        let replay = didgov(&["replay", events.to_str().unwrap()]);
        assert!(
            replay.status.success(),
            "{}: {}",
            scenario.display(),
            stderr(&replay)
        );
    }
}

#[test]
fn runs_are_deterministic() {
    let scenario = scenarios_dir().join("governance-evolution.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = didgov(&[
            "run",
            scenario.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    for file in ["events.jsonl", "costs.csv", "state.json"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn undeclared_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        r#"[{"action": "decide", "proposal": 1, "controller": "mallory", "verdict": "approve"}]"#,
    );
    let out = didgov(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ParseError"));
    assert!(stderr(&out).contains("mallory"));
}

#[test]
fn malformed_json_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\n  \"seed_keys\": {}\n  \"actions\": []\n}").unwrap();
    let out = didgov(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn wrong_version_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        &format!(
            r#"[{ANCHOR},
            {{"action": "propose", "did": "subject", "proposer": "alice", "group": 0,
              "change_set": {{"new_public_keys": ["bob"]}}}},
            {{"action": "decide", "proposal": 1, "controller": "alice", "verdict": "approve"}},
            {{"action": "assert_state", "did": "subject", "version": 3}}]"#
        ),
    );
    let out = didgov(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(
        err.contains("AssertionFailed") && err.contains("action 3"),
        "{err}"
    );
    assert!(err.contains("expected 3, got 1"), "{err}");
}

#[test]
fn engine_error_exits_three_with_index_and_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        &format!(
            r#"[{ANCHOR},
            {{"action": "propose", "did": "subject", "proposer": "alice", "group": 0,
              "change_set": {{"new_public_keys": ["bob"]}}}},
            {{"action": "decide", "proposal": 1, "controller": "subject", "verdict": "approve"}}]"#
        ),
    );
    let out = didgov(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(
        err.contains("[NotAMember]") && err.contains("action 2"),
        "{err}"
    );
    // partial artifacts are still written
    assert!(dir.path().join("o/events.jsonl").exists());
}

#[test]
fn tampered_snapshot_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenarios_dir().join("key-rotation-2of3.json");
    assert!(didgov(&[
        "run",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap()
    ])
    .status
    .success());
    let state = dir.path().join("state.json");
    let text = fs::read_to_string(&state).unwrap();
    fs::write(&state, text.replace("\"version\": 2", "\"version\": 3")).unwrap();
    let out = didgov(&["replay", dir.path().join("events.jsonl").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

fn csv_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn bench_grid_has_one_row_per_point_and_phase() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("costs.csv");
    let args = [
        "bench",
        "--groups",
        "1..10",
        "--members",
        "1..10",
        "--authz",
        "acl",
        "--coord",
        "nofm",
        "--out",
        csv_path.to_str().unwrap(),
    ];
    let out = didgov(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let first = fs::read_to_string(&csv_path).unwrap();
    let rows = csv_rows(&first);
    for phase in ["anchor", "propose", "decide", "resolve"] {
        assert_eq!(
            rows.iter().filter(|r| r[0] == phase).count(),
            100,
            "{phase}"
        );
    }

    assert!(didgov(&args).status.success());
    assert_eq!(fs::read_to_string(&csv_path).unwrap(), first);
}

#[test]
fn bench_offchain_credentials() {
    let out = didgov(&[
        "bench",
        "--members",
        "1..3",
        "--authz",
        "token,vc",
        "--coord",
        "weighted",
        "--execution",
        "offchain",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 3 * 2 * 4);
    assert!(rows.iter().all(|r| r[5] == "offchain"));
    assert!(rows.iter().any(|r| r[3] == "token") && rows.iter().any(|r| r[3] == "vc"));
}

#[test]
fn bench_rejects_bad_grid() {
    let out = didgov(&["bench", "--members", "5..2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = didgov(&["bench", "--authz", "rbac"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_accepts_a_custom_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let schedule = dir.path().join("schedule.json");
    fs::write(
        &schedule,
        r#"{"base_tx": 1, "storage_write_new": 1, "storage_write_update": 1, "event_base": 1,
            "event_per_byte": 1, "sig_verify": 1, "iteration_step": 1}"#,
    )
    .unwrap();
    let out = didgov(&["bench", "--schedule", schedule.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    // unit schedule: base tx contributes exactly 1
    assert!(rows.iter().all(|r| r[8] == "1"));

    fs::write(&schedule, r#"{"base_tx": 0}"#).unwrap();
    let out = didgov(&["bench", "--schedule", schedule.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
