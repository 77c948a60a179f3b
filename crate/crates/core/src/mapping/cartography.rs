//! Measuring a torus side with a pair of agents.
//!
//! Two agents that just identified each other walk away from each other along
//! one axis, counting successful moves. When they identify each other again
//! from the far side, the axis length is the sum of both counts, the distance
//! between them at the start and the gap left when they met again.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::{Axis, AxisSizes};
use crate::torus::{Direction, RelOffset, VISION_RADIUS};
use crate::world::{Action, Percept, TerrainKind, ThingKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CartoStatus {
    Active,
    Finished(i32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum Refusal {
    #[error("axis length already known")]
    AxisKnown,
    #[error("another pair is measuring this axis")]
    AxisBusy,
    #[error("agent already measuring")]
    AgentBusy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("non-positive axis length {0}")]
pub struct CartoFault(pub i32);

/// Axis length from the two step counts, the starting gap and the gap at the
/// second meeting (negative when the agents had already passed each other).
pub fn finish_dimension(steps_a: u32, steps_b: u32, initial_distance: i32, residual: i32) -> Result<i32, CartoFault> {
    let size = steps_a as i32 + steps_b as i32 + initial_distance + residual;
    if size <= 0 || (steps_a == 0 && steps_b == 0) {
        return Err(CartoFault(size));
    }
    Ok(size)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartographyState {
    pub axis: Axis,
    /// Walks toward decreasing coordinates (west or north).
    pub neg: String,
    /// Walks toward increasing coordinates (east or south).
    pub pos: String,
    pub initial_distance: i32,
    pub steps_neg: u32,
    pub steps_pos: u32,
    /// Set once the pair can no longer see each other.
    pub separated: bool,
    pub status: CartoStatus,
}

/// Starts a measurement if the axis is unknown and free.
pub fn adopt<'a>(
    axis: Axis,
    a: &str,
    b: &str,
    offset_ab: RelOffset,
    sizes: &AxisSizes,
    active: impl IntoIterator<Item = &'a CartographyState>,
) -> Result<CartographyState, Refusal> {
    if sizes.get(axis).is_some() {
        return Err(Refusal::AxisKnown);
    }
    for s in active {
        if s.status != CartoStatus::Active {
            continue;
        }
        if s.axis == axis {
            return Err(Refusal::AxisBusy);
        }
        if [a, b].iter().any(|n| *n == s.neg || *n == s.pos) {
            return Err(Refusal::AgentBusy);
        }
    }
    let d = axis.of(offset_ab);
    let (neg, pos) = if d >= 0 { (a, b) } else { (b, a) };
    Ok(CartographyState {
        axis,
        neg: neg.into(),
        pos: pos.into(),
        initial_distance: d.abs(),
        steps_neg: 0,
        steps_pos: 0,
        separated: false,
        status: CartoStatus::Active,
    })
}

impl CartographyState {
    pub fn involves(&self, agent: &str) -> bool {
        self.neg == agent || self.pos == agent
    }

    pub fn partner(&self, agent: &str) -> Option<&str> {
        if agent == self.neg {
            Some(&self.pos)
        } else if agent == self.pos {
            Some(&self.neg)
        } else {
            None
        }
    }

    pub fn direction(&self, agent: &str) -> Option<Direction> {
        let negative = if agent == self.neg {
            true
        } else if agent == self.pos {
            false
        } else {
            return None;
        };
        Some(match (self.axis, negative) {
            (Axis::Horizontal, true) => Direction::W,
            (Axis::Horizontal, false) => Direction::E,
            (Axis::Vertical, true) => Direction::N,
            (Axis::Vertical, false) => Direction::S,
        })
    }

    /// Counts a successful move along the measured axis.
    pub fn record_step(&mut self, agent: &str) {
        if self.status != CartoStatus::Active {
            return;
        }
        if agent == self.neg {
            self.steps_neg += 1;
        } else if agent == self.pos {
            self.steps_pos += 1;
        }
        if self.initial_distance + (self.steps_neg + self.steps_pos) as i32 > VISION_RADIUS {
            self.separated = true;
        }
    }

    /// `observer` identified its partner at `x`. Returns the length once the
    /// pair has been apart and meets again.
    pub fn resighted(&mut self, observer: &str, x: RelOffset) -> Option<Result<i32, CartoFault>> {
        if self.status != CartoStatus::Active || !self.separated {
            return None;
        }
        let residual = if observer == self.pos {
            self.axis.of(x)
        } else if observer == self.neg {
            -self.axis.of(x)
        } else {
            return None;
        };
        let r = finish_dimension(self.steps_neg, self.steps_pos, self.initial_distance, residual);
        if let Ok(size) = r {
            self.status = CartoStatus::Finished(size);
        }
        Some(r)
    }
}

/// Consecutive blocked moves after which a walker steps aside.
pub const SIDESTEP_AFTER: u32 = 8;

/// Movement policy of one walker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Walker {
    pub dir: Direction,
    pub fail_streak: u32,
    sidestep_left: bool,
}

impl Walker {
    pub fn new(dir: Direction) -> Self {
        Walker { dir, fail_streak: 0, sidestep_left: true }
    }

    /// Updates the failure count from the previous action's outcome.
    /// Returns true if that action was a successful step along `dir`.
    pub fn observe(&mut self, percept: &Percept) -> bool {
        match (&percept.last_action, percept.last_action_result.is_success()) {
            (Action::Move(d), true) if *d == self.dir => {
                self.fail_streak = 0;
                true
            }
            (Action::Move(d), false) if *d == self.dir => {
                self.fail_streak += 1;
                false
            }
            _ => false,
        }
    }

    pub fn act(&mut self, percept: &Percept, clear_cost: u32) -> Action {
        let ahead = self.dir.offset();
        let blocked_static = percept.terrain_at(ahead) == Some(TerrainKind::Obstacle)
            || percept.things_at(ahead).any(|k| matches!(k, ThingKind::Block(_)));
        let agent_ahead = percept.things_at(ahead).any(|k| matches!(k, ThingKind::Entity(_)));
        if blocked_static && !agent_ahead {
            return if percept.energy >= clear_cost { Action::Clear(ahead) } else { Action::Skip };
        }
        if agent_ahead && self.fail_streak >= SIDESTEP_AFTER {
            let side = if self.sidestep_left { ahead.rotate_ccw() } else { ahead.rotate_cw() };
            self.sidestep_left = !self.sidestep_left;
            self.fail_streak = 0;
            if let Some(d) = side.direction() {
                return Action::Move(d);
            }
        }
        Action::Move(self.dir)
    }
}
