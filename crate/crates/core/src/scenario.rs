//! Scripted worlds for the end-to-end checks.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::mapping::Axis;
use crate::opponents::OpponentKind;
use crate::plan_cache::MemoryStore;
use crate::sim::{run_match_in, ConfigError, MatchConfig, MatchRun};
use crate::team::TeamEvent;
use crate::torus::{torus_distance, Dims, RelOffset, TorusCoord, VISION_RADIUS};
use crate::world::{
    Action, BlockType, Facility, RemovalCause, Spawn, Task, TeamId, Terrain, World, WorldConfig, WorldEvent,
};

/// Four agents and nothing else on a `dims` torus with some obstacles.
pub fn cartography_config(dims: Dims, obstacle_permille: u32, seed: u64) -> MatchConfig {
    let mut world = WorldConfig::empty(dims, [4, 0]);
    world.obstacle_permille = obstacle_permille;
    world.spawn = Spawn::Clustered { radius: 2 };
    let mut cfg = MatchConfig::new(world, seed);
    cfg.steps = 3 * (dims.w() + dims.h()) as u64 + 150;
    cfg
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Measured {
    pub lengths: BTreeMap<Axis, i32>,
    pub faults: usize,
    pub done_at: Option<u64>,
}

/// Axis lengths the team settled on, and how many measurements disagreed.
pub fn measured(run: &MatchRun) -> Measured {
    let mut out = Measured { lengths: BTreeMap::new(), faults: 0, done_at: None };
    for r in &run.records {
        for e in &r.team {
            match e {
                TeamEvent::AxisMeasured { axis, length } => {
                    out.lengths.insert(*axis, *length);
                    if out.lengths.len() == 2 && out.done_at.is_none() {
                        out.done_at = Some(r.step);
                    }
                }
                TeamEvent::CartographyFault { .. } => out.faults += 1,
                _ => {}
            }
        }
    }
    out
}

pub fn run_cartography(dims: Dims, obstacle_permille: u32, seed: u64) -> Result<MatchRun, ConfigError> {
    let cfg = cartography_config(dims, obstacle_permille, seed);
    let world = World::generate(cfg.world.clone(), cfg.seed)?;
    run_match_in(&cfg, world, &mut MemoryStore::new(), &mut |_, _| {})
}

/// Centre of the 3x3 goal cluster in the interception world.
pub const GOAL_CENTRE: TorusCoord = TorusCoord { x: 20, y: 20 };

/// A 40x40 world with one of our agents next to a goal cluster and a
/// courier that accepts a task in the west, fetches a block and carries it
/// east into the cluster.
pub fn interception_world(seed: u64) -> Result<(MatchConfig, World), ConfigError> {
    let dims = Dims::new(40, 40).expect("positive");
    let mut wc = WorldConfig::empty(dims, [1, 1]);
    wc.block_types = 1;
    let mut cfg = MatchConfig::new(wc.clone(), seed);
    cfg.opponent = OpponentKind::GreedyCourier;
    cfg.cartography = false;
    cfg.steps = 60;
    let y = GOAL_CENTRE.y;
    let bully_at = TorusCoord { x: GOAL_CENTRE.x, y: y - 2 };
    let courier_at = TorusCoord { x: 4, y };
    let mut world = World::with_positions(wc, seed, &[bully_at, courier_at])?;
    for dy in -1..=1 {
        for dx in -1..=1 {
            world.set_terrain(TorusCoord { x: GOAL_CENTRE.x + dx, y: y + dy }, Terrain::Goal);
        }
    }
    world.set_facility(TorusCoord { x: 4, y: y - 2 }, Some(Facility::Taskboard));
    world.set_facility(TorusCoord { x: 6, y }, Some(Facility::Dispenser(BlockType(0))));
    world.set_tasks(alloc::vec![Task {
        name: "delivery".into(),
        reward: 10,
        deadline: 1000,
        requirements: alloc::vec![(RelOffset::new(0, 1), BlockType(0))],
    }]);
    Ok((cfg, world))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interception {
    /// First step after which an enemy-held block was within our agent's view.
    pub sighted_at: Option<u64>,
    /// Step whose clear removed the carried block.
    pub cleared_at: Option<u64>,
    /// Steps on which our agent issued a clear.
    pub clears: Vec<u64>,
    pub delivered: bool,
}

/// Runs the interception world and reports when the carried block was cleared.
pub fn run_interception(seed: u64) -> Result<(Interception, MatchRun), ConfigError> {
    let (cfg, world) = interception_world(seed)?;
    let mut out = Interception::default();
    let run = run_match_in(&cfg, world, &mut MemoryStore::new(), &mut |r, w| {
        let ours = w.agent_ids(TeamId::A)[0];
        let me = w.agent(ours).expect("agent");
        if out.sighted_at.is_none() {
            let carried = w.blocks().any(|b| {
                torus_distance(me.pos, b.pos, w.dims()) <= VISION_RADIUS
                    && w.block_holders(b.id).iter().any(|h| w.agent(*h).is_some_and(|a| a.team == TeamId::B))
            });
            if carried {
                out.sighted_at = Some(r.step);
            }
        }
        for e in &r.world {
            match e {
                WorldEvent::Action { agent, action: Action::Clear(_), .. } if *agent == ours => out.clears.push(r.step),
                WorldEvent::BlockRemoved { cause: RemovalCause::Cleared, .. } if out.cleared_at.is_none() => {
                    out.cleared_at = Some(r.step)
                }
                WorldEvent::TaskCompleted { .. } => out.delivered = true,
                _ => {}
            }
        }
    })?;
    Ok((out, run))
}
