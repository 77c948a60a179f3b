use std::collections::BTreeMap;

use gridcoop_core::mapping::AxisSizes;
use gridcoop_core::planner::{solve, NavStep, Navigator};
use gridcoop_core::torus::{delta, torus_distance, Dims, RelOffset, TorusCoord};
use gridcoop_core::world::{AgentId, TeamId, Terrain, World, WorldConfig};
use proptest::prelude::*;

fn frame_pos(world: &World, id: AgentId, start: TorusCoord) -> RelOffset {
    delta(start, world.agent(id).unwrap().pos, world.dims())
}

/// Drives one agent toward `target`; returns the steps taken, or None when
/// it gave up or ran out of time.
fn drive(world: &mut World, target: TorusCoord, limit: u64, clear_threshold: u32) -> Option<u64> {
    let id = world.agent_ids(TeamId::A)[0];
    let start = world.agent(id).unwrap().pos;
    let dims = world.dims();
    let sizes = AxisSizes { w: Some(dims.w()), h: Some(dims.h()) };
    let dest = delta(start, target, dims);
    let mut nav = Navigator::new();
    for step in 0..limit {
        let p = world.percept(id).unwrap();
        let here = frame_pos(world, id, start);
        match nav.next(&p, here, dest, &sizes, clear_threshold, &mut |q| solve(q)) {
            NavStep::Arrived => return Some(step),
            NavStep::Stuck => return None,
            NavStep::Act(a) => {
                world.step(&BTreeMap::from([(id, a)]));
            }
        }
    }
    None
}

fn lone_agent(dims: Dims, at: TorusCoord, obstacle_permille: u32, seed: u64) -> World {
    let mut cfg = WorldConfig::empty(dims, [1, 0]);
    cfg.obstacle_permille = obstacle_permille;
    let mut w = World::generate(cfg, seed).unwrap();
    let id = w.agent_ids(TeamId::A)[0];
    w.set_terrain(at, Terrain::Empty);
    assert!(w.teleport(id, at) || w.agent(id).unwrap().pos == at);
    w
}

#[test]
fn open_field_takes_the_shortest_route() {
    let dims = Dims::new(30, 25).unwrap();
    let from = TorusCoord { x: 2, y: 3 };
    for (tx, ty) in [(12, 3), (2, 20), (25, 22), (17, 14)] {
        let target = TorusCoord { x: tx, y: ty };
        let mut w = lone_agent(dims, from, 0, 1);
        let steps = drive(&mut w, target, 200, 60).unwrap();
        assert_eq!(steps as i32, torus_distance(from, target, dims), "to {target:?}");
    }
}

#[test]
fn wall_is_cleared_or_walked_around() {
    let dims = Dims::new(30, 30).unwrap();
    let from = TorusCoord { x: 5, y: 15 };
    let target = TorusCoord { x: 15, y: 15 };
    for (threshold, label) in [(0, "clearing"), (u32::MAX, "detour")] {
        let mut w = lone_agent(dims, from, 0, 1);
        for y in 0..30 {
            if !(13..=17).contains(&y) || threshold == 0 {
                w.set_terrain(TorusCoord { x: 10, y }, Terrain::Obstacle);
            }
        }
        let steps = drive(&mut w, target, 300, threshold);
        assert!(steps.is_some(), "{label}");
        assert_eq!(w.agent(AgentId(0)).unwrap().pos, target);
    }
}

#[test]
fn enclosed_agent_reports_stuck() {
    let dims = Dims::new(20, 20).unwrap();
    let from = TorusCoord { x: 10, y: 10 };
    let mut w = lone_agent(dims, from, 0, 1);
    for (dx, dy) in [(0, -1), (0, 1), (1, 0), (-1, 0)] {
        w.set_terrain(TorusCoord { x: 10 + dx, y: 10 + dy }, Terrain::Obstacle);
    }
    // clearing not allowed: no way out
    assert_eq!(drive(&mut w, TorusCoord { x: 2, y: 2 }, 500, u32::MAX), None);
    assert_eq!(w.agent(AgentId(0)).unwrap().pos, from);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reaches_targets_through_scattered_obstacles(
        seed in 0u64..1000,
        side in 20i32..40,
        density in 0u32..=100,
        tx in 0i32..40,
        ty in 0i32..40,
    ) {
        let dims = Dims::new(side, side).unwrap();
        let from = TorusCoord { x: 0, y: 0 };
        let target = TorusCoord { x: tx % side, y: ty % side };
        let mut w = lone_agent(dims, from, density, seed);
        w.set_terrain(target, Terrain::Empty);
        let d = torus_distance(from, target, dims) as u64;
        let steps = drive(&mut w, target, 6 * d + 60, 30);
        prop_assert!(steps.is_some(), "distance {} density {}", d, density);
        prop_assert!(steps.unwrap() >= d);
    }
}
