use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"{
    "registry": [{"id":"location","kind":"equality","domain":["DE","US"]}],
    "topology": {"preset":"uniform","rtt_ms":40,"capabilities":[
        {"node_id":0,"supported":{"location":["DE"]}},
        {"node_id":1,"supported":{"location":["DE"]}},
        {"node_id":2,"supported":{"location":["US"]}}]}
}"#;

fn prada(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prada")).args(args).current_dir(dir).output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cluster.json"), CONFIG).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn runs_inline_statements() {
    let dir = setup();
    let out = prada(
        &[
            "run",
            "--config",
            "cluster.json",
            "INSERT INTO t (k, c1) VALUES ('x', 'hello') WITH REQUIREMENTS location = { 'US' }",
            "SELECT * FROM t WHERE key = 'x'",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("line 1: ok"), "{text}");
    assert!(text.contains("c1=hello"), "{text}");
}

#[test]
fn failed_statements_set_the_exit_code() {
    let dir = setup();
    let absent = "SELECT * FROM t WHERE key = 'missing'";
    let out = prada(&["run", "--config", "cluster.json", absent], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("not-found"), "{}", stdout(&out));
    let out = prada(&["run", "--config", "cluster.json", "--keep-going", absent], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn parse_errors_report_the_offset() {
    let dir = setup();
    std::fs::write(
        dir.path().join("stmts.sql"),
        "-- one good line, one bad\nSELECT * FROM t WHERE key = 'a'\nINSERT INTO t (k, c1) VALUES ('a', 'b') WITH REQUIREMENTS colour = { 'red' }\n",
    )
    .unwrap();
    let out = prada(&["run", "--config", "cluster.json", "--statements", "stmts.sql"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("at byte 58"), "{err}");
}

/// Writes a snapshot with several US-bound keys and returns it parsed.
fn snapshot(dir: &Path) -> Value {
    let stmts: Vec<String> = (0..8)
        .map(|i| format!("INSERT INTO t (k, c1) VALUES ('key{i}', 'v') WITH REQUIREMENTS location = {{ 'US' }}"))
        .collect();
    let mut args = vec!["run", "--config", "cluster.json", "--out", "out"];
    args.extend(stmts.iter().map(String::as_str));
    let out = prada(&args, dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/snapshot.json")).unwrap()).unwrap()
}

/// Index of a node holding a relay, and the relay's key and single target.
fn some_relay(snap: &Value) -> (usize, Value, u64) {
    let nodes = snap["nodes"].as_array().unwrap();
    let (i, node) = nodes.iter().enumerate().find(|(_, n)| !n["relays"].as_array().unwrap().is_empty()).unwrap();
    let relay = &node["relays"][0];
    (i, relay["key"].clone(), relay["targets"][0].as_u64().unwrap())
}

fn check(dir: &Path, name: &str, snap: &Value) -> (Option<i32>, String) {
    std::fs::create_dir_all(dir.join(name)).unwrap();
    std::fs::write(dir.join(name).join("snap.json"), serde_json::to_string(snap).unwrap()).unwrap();
    let out = prada(&["check", name], dir);
    (out.status.code(), stdout(&out))
}

#[test]
fn check_reports_clean_and_broken_snapshots() {
    let dir = setup();
    let clean = snapshot(dir.path());
    let (code, text) = check(dir.path(), "clean", &clean);
    assert_eq!(code, Some(0), "{text}");
    assert!(text.contains("0 violation(s)"));

    let (holder, key, target) = some_relay(&clean);

    let mut dangling = clean.clone();
    let node = dangling["nodes"].as_array_mut().unwrap().iter_mut().find(|n| n["node"] == target).unwrap();
    node["targets"].as_array_mut().unwrap().retain(|item| item["key"] != key);
    let (code, text) = check(dir.path(), "dangling", &dangling);
    assert_eq!(code, Some(1));
    assert!(text.contains("1 violation(s)") && text.contains("dangling"), "{text}");

    let mut orphan = clean;
    orphan["nodes"][holder]["relays"].as_array_mut().unwrap().retain(|r| r["key"] != key);
    let (code, text) = check(dir.path(), "orphan", &orphan);
    assert_eq!(code, Some(1));
    assert!(text.contains("1 violation(s)") && text.contains("unreferenced"), "{text}");
}
