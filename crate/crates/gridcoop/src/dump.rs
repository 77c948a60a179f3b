//! Plain-text map dumps for golden files.

use std::fmt::Write;

use gridcoop_core::mapping::{AxisSizes, MapStore, StaticEntities};

fn axis(v: Option<i32>) -> String {
    v.map_or_else(|| "?".into(), |n| n.to_string())
}

/// `owner`, `dims`, then one sorted line per entity in the owner's frame.
pub fn dump_map(owner: &str, sizes: &AxisSizes, map: &StaticEntities) -> String {
    let mut out = String::new();
    writeln!(out, "owner {owner}").unwrap();
    writeln!(out, "dims {}x{}", axis(sizes.w), axis(sizes.h)).unwrap();
    for (p, k) in &map.dispensers {
        writeln!(out, "dispenser {} {} {k}", p.dx, p.dy).unwrap();
    }
    for p in &map.goals {
        writeln!(out, "goal {} {}", p.dx, p.dy).unwrap();
    }
    for p in &map.taskboards {
        writeln!(out, "taskboard {} {}", p.dx, p.dy).unwrap();
    }
    out
}

/// Leader of the largest group; ties go to the smaller name.
pub fn main_leader(store: &MapStore) -> Option<String> {
    store.leaders().into_iter().max_by(|a, b| store.members(a).len().cmp(&store.members(b).len()).then_with(|| b.cmp(a)))
}

/// Dump of the group map seen by `name` (the main leader when `None`).
pub fn dump_group(store: &MapStore, name: Option<&str>) -> Option<String> {
    let name = match name {
        Some(n) => n.to_string(),
        None => main_leader(store)?,
    };
    store.map(&name)?;
    let leader = store.leader_of(&name).to_string();
    Some(dump_map(&leader, &store.sizes(), store.group_map(&name)))
}
