use serde::{Deserialize, Serialize};

use crate::torus::Dims;

/// How each team's agents are placed at generation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spawn {
    Scattered,
    /// All agents of a team start within this Manhattan radius of a random centre.
    Clustered { radius: i32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub initial: u32,
    pub max_active: u32,
    /// Chance per step (per mille) of generating a task while below `max_active`.
    pub spawn_permille: u32,
    pub min_blocks: u32,
    pub max_blocks: u32,
    pub deadline_min: u64,
    pub deadline_max: u64,
    pub reward_per_block: u32,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            initial: 3,
            max_active: 6,
            spawn_permille: 100,
            min_blocks: 1,
            max_blocks: 3,
            deadline_min: 80,
            deadline_max: 200,
            reward_per_block: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub initial: u32,
    pub max: u32,
    pub recharge: u32,
    /// Energy needed for every charge; deducted once when the clear completes.
    pub clear_cost: u32,
    /// Maximum Manhattan distance of a clear target.
    pub clear_range: i32,
    /// Consecutive charges on one target needed to complete a clear.
    pub clear_charges: u32,
    /// Radius of the area affected by a completed clear action.
    pub clear_area: i32,
    pub disable_steps: u64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            initial: 100,
            max: 100,
            recharge: 1,
            clear_cost: 30,
            clear_range: 5,
            clear_charges: 3,
            clear_area: 0,
            disable_steps: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearEventConfig {
    pub permille: u32,
    pub radius: i32,
}

impl Default for ClearEventConfig {
    fn default() -> Self {
        Self { permille: 5, radius: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub dims: Dims,
    pub team_sizes: [u32; 2],
    pub block_types: u8,
    pub dispensers: u32,
    pub goal_clusters: u32,
    pub goal_cluster_size: u32,
    pub taskboards: u32,
    pub obstacle_permille: u32,
    pub spawn: Spawn,
    pub accept_radius: i32,
    pub tasks: TaskConfig,
    pub energy: EnergyConfig,
    pub clear_events: ClearEventConfig,
}

impl WorldConfig {
    /// Contest-like defaults for a square grid with `agents` per team.
    pub fn standard(dims: Dims, agents: u32) -> Self {
        Self {
            dims,
            team_sizes: [agents, agents],
            block_types: 3,
            dispensers: 6,
            goal_clusters: 3,
            goal_cluster_size: 8,
            taskboards: 3,
            obstacle_permille: 60,
            spawn: Spawn::Clustered { radius: 4 },
            accept_radius: 2,
            tasks: TaskConfig::default(),
            energy: EnergyConfig::default(),
            clear_events: ClearEventConfig::default(),
        }
    }

    /// Blank map: no facilities, goals, obstacles, tasks or random events.
    pub fn empty(dims: Dims, team_sizes: [u32; 2]) -> Self {
        let mut cfg = Self::standard(dims, 0);
        cfg.team_sizes = team_sizes;
        cfg.dispensers = 0;
        cfg.goal_clusters = 0;
        cfg.taskboards = 0;
        cfg.obstacle_permille = 0;
        cfg.spawn = Spawn::Scattered;
        cfg.tasks.initial = 0;
        cfg.tasks.spawn_permille = 0;
        cfg.clear_events.permille = 0;
        cfg
    }
}
