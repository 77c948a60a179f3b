use std::fs;

use gridcoop::store::{cache_stats, key_class, DirStore};
use gridcoop_core::plan_cache::{encode, solve_cached, Lookup, PlanKey, PlanStore};
use gridcoop_core::planner::{solve, Label, Problem};
use gridcoop_core::sim::{plan_sequence, run_match, MatchConfig};
use gridcoop_core::torus::{Dims, RelOffset};
use gridcoop_core::world::WorldConfig;

fn problem(goal: (i32, i32), clear: bool) -> Problem {
    let mut p = Problem::open(RelOffset::new(goal.0, goal.1), None, clear).unwrap();
    p.set(RelOffset::new(1, 0), Label::Obstacle);
    p
}

#[test]
fn plans_persist_one_file_per_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem((3, 0), false);
    let mut calls = 0;
    {
        let mut store = DirStore::open(dir.path(), false).unwrap();
        let (plan, l, err) = solve_cached(&p, &mut store, &mut |q| {
            calls += 1;
            solve(q)
        });
        assert_eq!((l, err.is_none()), (Lookup::Miss, true));
        let file = dir.path().join(encode(&p).as_str());
        assert_eq!(fs::read_to_string(&file).unwrap(), plan.to_text());
        assert!(plan.to_text().lines().all(|l| l.starts_with("move_") || l.starts_with("rotate_") || l.starts_with("clear_")));
    }
    // a new instance over the same directory
    let mut store = DirStore::open(dir.path(), false).unwrap();
    let (_, l, _) = solve_cached(&p, &mut store, &mut |q| {
        calls += 1;
        solve(q)
    });
    assert_eq!((l, calls), (Lookup::Hit, 1));
    assert_eq!(store.len(), 1);
    // no temp files left behind
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn corrupt_entry_is_repaired() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem((0, 4), true);
    let key = encode(&p);
    fs::write(dir.path().join(key.as_str()), "move_up\n").unwrap();
    let mut store = DirStore::open(dir.path(), false).unwrap();
    let (plan, l, _) = solve_cached(&p, &mut store, &mut |q| solve(q));
    assert_eq!(l, Lookup::Repaired);
    assert_eq!(fs::read_to_string(dir.path().join(key.as_str())).unwrap(), plan.to_text());
}

#[test]
fn readonly_store_never_writes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(DirStore::open(dir.path().join("missing"), true).is_err());
    let mut store = DirStore::open(dir.path(), true).unwrap();
    let (_, l, err) = solve_cached(&problem((2, 2), false), &mut store, &mut |q| solve(q));
    assert_eq!((l, err.is_none()), (Lookup::Miss, true));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn stats_classify_and_flag_invalid_entries() {
    let dir = tempfile::tempdir().unwrap();
    let fresh = cache_stats(dir.path()).unwrap();
    assert_eq!((fresh.keys, fresh.bytes, fresh.invalid.len()), (0, 0, 0));

    let mut store = DirStore::open(dir.path(), false).unwrap();
    for (g, c) in [((3, 0), false), ((0, 3), false), ((-2, 1), true)] {
        solve_cached(&problem(g, c), &mut store, &mut |q| solve(q));
    }
    let attached = Problem::open(RelOffset::new(0, -3), Some(RelOffset::new(0, 1)), true).unwrap();
    solve_cached(&attached, &mut store, &mut |q| solve(q));
    assert_eq!(key_class(&encode(&attached)), "c01");

    fs::write(dir.path().join("not-a-key"), "move_n\n").unwrap();
    let bad_plan = encode(&problem((4, 0), false));
    fs::write(dir.path().join(bad_plan.as_str()), "jump\n").unwrap();

    let s = cache_stats(dir.path()).unwrap();
    assert_eq!(s.keys, 4);
    assert_eq!(s.classes.get("n").copied(), Some(2));
    assert_eq!(s.classes.get("c").copied(), Some(1));
    assert_eq!(s.classes.get("c01").copied(), Some(1));
    assert_eq!(s.invalid, {
        let mut v = vec!["not-a-key".to_string(), bad_plan.as_str().to_string()];
        v.sort();
        v
    });
    assert!(s.bytes > 0);
    assert_eq!(store.len(), 5);
    assert!(PlanKey::parse("not-a-key").is_err());
}

#[test]
fn warm_directory_removes_searches() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = MatchConfig::new(WorldConfig::standard(Dims::new(20, 20).unwrap(), 15), 5);
    cfg.steps = 60;
    let cold = run_match(&cfg, &mut DirStore::open(dir.path(), false).unwrap(), |_, _| {}).unwrap();
    assert!(cold.report.planner_searches > 0);
    let keys = cache_stats(dir.path()).unwrap().keys;
    assert!(keys > 0);
    let warm = run_match(&cfg, &mut DirStore::open(dir.path(), false).unwrap(), |_, _| {}).unwrap();
    assert!(warm.report.cache.misses < cold.report.cache.misses);
    assert_eq!(warm.report.cache.misses, 0);
    assert_eq!(warm.report.planner_searches, 0);
    let strip = |v: Vec<(String, String, Option<Lookup>)>| v.into_iter().map(|(a, p, _)| (a, p)).collect::<Vec<_>>();
    assert_eq!(strip(plan_sequence(&cold.records)), strip(plan_sequence(&warm.records)));
    assert_eq!(cache_stats(dir.path()).unwrap().keys, keys);
}
