use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gridcoop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridcoop")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &["--dims", "20x20", "--agents", "4", "--steps", "30", "--seed", "2"];
// enough agents and steps for the planner to run
const BUSY: &[&str] = &["--dims", "20x20", "--agents", "15", "--steps", "60", "--seed", "2"];

#[test]
fn run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("m.log");
    let mut args = vec!["run", "--log", log.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let out = gridcoop(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = gridcoop(&["replay", log.to_str().unwrap()]);
    assert_eq!(code(&rep), 0);
    assert_eq!(text(&out), text(&rep));

    let mut bytes = fs::read(&log).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x20;
    fs::write(&log, bytes).unwrap();
    let bad = gridcoop(&["replay", log.to_str().unwrap()]);
    assert_eq!(code(&bad), 3);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("checksum"));
}

#[test]
fn golden_log_replays() {
    let out = gridcoop(&["replay", fixture("golden.log").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
}

#[test]
fn config_errors_exit_one() {
    for args in [
        &["run", "--preset", "r9"][..],
        &["run", "--dims", "8x8"],
        &["run", "--dims", "0x30"],
        &["run", "--steps", "0"],
        &["run", "--agents", "0"],
        &["cache-stats", "/nonexistent/gridcoop"],
        &["replay", "/nonexistent/gridcoop.log"],
        &["check-protocol", "--agents", "7"],
    ] {
        let out = gridcoop(args);
        assert_eq!(code(&out), 1, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn protocol_fixtures_pass_and_faults_fail() {
    let mut args = vec!["check-protocol".to_string(), "--trace".to_string()];
    for i in fs::read_dir(fixture("protocol")).unwrap() {
        let p = i.unwrap().path();
        if p.is_file() {
            args.push(p.to_string_lossy().into_owned());
        }
    }
    assert_eq!(args.len(), 8);
    let out = Command::new(env!("CARGO_BIN_EXE_gridcoop")).args(&args).output().unwrap();
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert_eq!(text(&out).lines().filter(|l| l.starts_with("PASS")).count(), 3 + 6 * 4);

    for f in fs::read_dir(fixture("protocol/faults")).unwrap() {
        let p = f.unwrap().path();
        let out = gridcoop(&["check-protocol", "--trace", p.to_str().unwrap()]);
        assert_eq!(code(&out), 2, "{}", p.display());
        let s = text(&out);
        let fail = s.lines().position(|l| l.starts_with("FAIL")).expect("a failing check");
        // the counterexample follows on the next line
        assert!(s.lines().nth(fail + 1).unwrap().starts_with("  sight."), "{s}");
    }
}

#[test]
fn cache_dir_warms_up() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("plans");
    let c = cache.to_str().unwrap();
    fs::create_dir(&cache).unwrap();
    let fresh = gridcoop(&["cache-stats", c]);
    assert!(text(&fresh).contains("\"keys\": 0"));

    // (misses, hits)
    let lookups = |args: &[&str]| -> (u64, u64) {
        let mut a = vec!["run"];
        a.extend_from_slice(args);
        a.extend_from_slice(BUSY);
        let out = gridcoop(&a);
        assert_eq!(code(&out), 0);
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        (v["cache"]["misses"].as_u64().unwrap(), v["cache"]["hits"].as_u64().unwrap())
    };
    let cold = lookups(&["--cache-dir", c]);
    assert!(cold.0 > 0);
    let stats: serde_json::Value = serde_json::from_slice(&gridcoop(&["cache-stats", c]).stdout).unwrap();
    assert!(stats["keys"].as_u64().unwrap() > 0);
    assert_eq!(lookups(&["--cache-dir", c]), (0, cold.0 + cold.1));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let e = empty.to_str().unwrap();
    // nothing is ever stored, so repeats within the run miss too
    assert_eq!(lookups(&["--cache-dir", e, "--cache-readonly"]), (cold.0 + cold.1, 0));
    assert_eq!(fs::read_dir(&empty).unwrap().count(), 0);
}

#[test]
fn export_map_dumps_the_main_group() {
    let mut args = vec!["export-map"];
    args.extend_from_slice(SMALL);
    let out = gridcoop(&args);
    assert_eq!(code(&out), 0);
    let s = text(&out);
    let mut lines = s.lines();
    assert!(lines.next().unwrap().starts_with("owner A"));
    assert!(lines.next().unwrap().starts_with("dims "));
    assert!(lines.all(|l| ["dispenser ", "goal ", "taskboard "].iter().any(|p| l.starts_with(p))));
    let mut with_agent = args.clone();
    with_agent.extend_from_slice(&["--agent", "nobody"]);
    assert_eq!(code(&gridcoop(&with_agent)), 1);
}
