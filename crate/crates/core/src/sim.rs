//! A match: one world, our team as team A, a scripted opponent as team B.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mapping::Axis;
use crate::opponents::{Opponent, OpponentKind};
use crate::plan_cache::{encode, solve_cached, CacheStats, Lookup, PlanStore};
use crate::planner::{solve_with_stats, Problem};
use crate::team::{PlanOutcome, Role, TeamConfig, TeamController, TeamEvent};
use crate::torus::Dims;
use crate::world::{TeamId, World, WorldConfig, WorldError, WorldEvent};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub world: WorldConfig,
    pub seed: u64,
    pub steps: u64,
    pub opponent: OpponentKind,
    pub cartography: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown preset {0:?} (expected r1, r2 or r3)")]
    UnknownPreset(String),
    #[error("steps must be positive")]
    NoSteps,
    #[error("team A needs at least one agent")]
    NoAgents,
    #[error("grid {w}x{h} is smaller than the 11x11 field of view")]
    TooSmall { w: i32, h: i32 },
    #[error("world: {0}")]
    World(#[from] WorldError),
}

pub const DEFAULT_STEPS: u64 = 300;

impl MatchConfig {
    pub fn new(world: WorldConfig, seed: u64) -> Self {
        MatchConfig { world, seed, steps: DEFAULT_STEPS, opponent: OpponentKind::Idle, cartography: true }
    }

    /// Contest-sized rounds: 15, 30 and 50 agents a side.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let (side, agents) = match name {
            "r1" => (40, 15),
            "r2" => (60, 30),
            "r3" => (70, 50),
            _ => return Err(ConfigError::UnknownPreset(name.into())),
        };
        let dims = Dims::new(side, side).expect("positive");
        Ok(Self::new(WorldConfig::standard(dims, agents), 1))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.steps == 0 {
            return Err(ConfigError::NoSteps);
        }
        if self.world.team_sizes[0] == 0 {
            return Err(ConfigError::NoAgents);
        }
        let (w, h) = (self.world.dims.w(), self.world.dims.h());
        if w < 11 || h < 11 {
            return Err(ConfigError::TooSmall { w, h });
        }
        Ok(())
    }
}

/// Everything that happened in one step, in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub team: Vec<TeamEvent>,
    pub world: Vec<WorldEvent>,
}

/// Summary of a match, computed from its records alone.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub steps: u64,
    pub scores: [u64; 2],
    pub tasks_completed: [u32; 2],
    pub cache: CacheStats,
    pub planner_searches: u64,
    pub search_expansions: u64,
    pub measured: Vec<(Axis, i32, u64)>,
    pub merges: u64,
    pub identifications: u64,
    pub stuck: u64,
    pub swap_windows: Vec<u64>,
    pub bully_fires: u64,
    pub blocks_cleared: u64,
    pub census: BTreeMap<Role, u32>,
}

impl MatchReport {
    pub fn from_records(records: &[StepRecord]) -> Self {
        let mut r = MatchReport { steps: records.len() as u64, ..Default::default() };
        for rec in records {
            for e in &rec.team {
                match e {
                    TeamEvent::Plan { lookup, expansions, .. } => {
                        if let Some(l) = lookup {
                            r.cache.record(*l);
                        }
                        if let Some(x) = expansions {
                            r.planner_searches += 1;
                            r.search_expansions += x;
                        }
                    }
                    TeamEvent::AxisMeasured { axis, length } => r.measured.push((*axis, *length, rec.step)),
                    TeamEvent::Merged { .. } => r.merges += 1,
                    TeamEvent::Identified { .. } => r.identifications += 1,
                    TeamEvent::Stuck { .. } => r.stuck += 1,
                    TeamEvent::SwapAttach { window, .. } => r.swap_windows.push(*window),
                    TeamEvent::BullyFire { .. } => r.bully_fires += 1,
                    TeamEvent::Census { counts } => r.census = counts.clone(),
                    _ => {}
                }
            }
            for e in &rec.world {
                match e {
                    WorldEvent::TaskCompleted { team, reward, .. } => {
                        r.scores[team.0 as usize] += *reward as u64;
                        r.tasks_completed[team.0 as usize] += 1;
                    }
                    WorldEvent::BlockRemoved { cause: crate::world::RemovalCause::Cleared, .. } => r.blocks_cleared += 1,
                    _ => {}
                }
            }
        }
        r
    }

    pub fn max_swap_window(&self) -> u64 {
        self.swap_windows.iter().copied().max().unwrap_or(0)
    }

    /// Step at which both axis lengths were known.
    pub fn dims_known_at(&self) -> Option<u64> {
        let h = self.measured.iter().find(|m| m.0 == Axis::Horizontal)?.2;
        let v = self.measured.iter().find(|m| m.0 == Axis::Vertical)?.2;
        Some(h.max(v))
    }
}

pub struct MatchRun {
    pub report: MatchReport,
    pub records: Vec<StepRecord>,
    pub world: World,
    pub team: TeamController,
}

/// Runs a match. `on_step` sees every record as it is produced, together
/// with the world after that step.
pub fn run_match<S: PlanStore>(
    config: &MatchConfig,
    store: &mut S,
    mut on_step: impl FnMut(&StepRecord, &World),
) -> Result<MatchRun, ConfigError> {
    config.validate()?;
    let world = World::generate(config.world.clone(), config.seed)?;
    run_match_in(config, world, store, &mut on_step)
}

/// As [`run_match`] on an already built world (for scripted scenarios).
pub fn run_match_in<S: PlanStore>(
    config: &MatchConfig,
    mut world: World,
    store: &mut S,
    on_step: &mut dyn FnMut(&StepRecord, &World),
) -> Result<MatchRun, ConfigError> {
    let ours: Vec<_> = world
        .agent_ids(TeamId::A)
        .into_iter()
        .map(|id| (id, world.agent(id).unwrap().name.clone()))
        .collect();
    let mut tc = TeamConfig::new(TeamId::A, ours.len(), config.seed);
    tc.clear_cost = config.world.energy.clear_cost;
    tc.clear_range = config.world.energy.clear_range;
    tc.accept_radius = config.world.accept_radius;
    tc.cartography = config.cartography;
    let mut team = TeamController::new(tc, &ours);
    let mut opponent = Opponent::new(config.opponent, TeamId::B, config.seed);
    let mut records = Vec::new();

    for _ in 0..config.steps {
        let step = world.step_number();
        let mut percepts = BTreeMap::new();
        for (id, _) in &ours {
            percepts.insert(*id, world.percept(*id)?);
        }
        let mut hook = |p: &Problem| -> PlanOutcome {
            let key = encode(p);
            let mut expansions = None;
            let (plan, lookup, _err) = solve_cached(p, store, &mut |q| {
                let (plan, stats) = solve_with_stats(q);
                expansions = Some(stats.expansions);
                plan
            });
            PlanOutcome { plan, key: key.as_str().into(), lookup: Some(lookup), expansions }
        };
        let (mut actions, team_events) = team.decide(step, &percepts, &mut hook);
        actions.extend(opponent.decide(&world));
        let world_events = world.step(&actions);
        let rec = StepRecord { step, team: team_events, world: world_events };
        on_step(&rec, &world);
        records.push(rec);
    }
    let report = MatchReport::from_records(&records);
    Ok(MatchRun { report, records, world, team })
}

/// Lookup outcome of every planning request, in order.
pub fn plan_sequence(records: &[StepRecord]) -> Vec<(String, String, Option<Lookup>)> {
    records
        .iter()
        .flat_map(|r| r.team.iter())
        .filter_map(|e| match e {
            TeamEvent::Plan { agent, plan, lookup, .. } => Some((agent.clone(), plan.clone(), *lookup)),
            _ => None,
        })
        .collect()
}
