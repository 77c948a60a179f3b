//! Forgiving plan execution: a plan is carried out to the end even when some
//! of its actions fail, then the agent plans again from wherever it is.

use alloc::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{build_problem, fallback_one_step, select_good_cell, Plan, PlanStep, Problem};
use crate::mapping::AxisSizes;
use crate::torus::RelOffset;
use crate::world::{Action, Percept};

/// Planning cycles in a row without a successful move before giving up.
pub const STUCK_AFTER_CYCLES: u32 = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NavStep {
    Act(Action),
    Arrived,
    Stuck,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Navigator {
    queue: VecDeque<PlanStep>,
    /// A cycle is in progress (plan or fallback issued).
    in_cycle: bool,
    cycle_moves: u32,
    idle_cycles: u32,
    pub failed_moves: u64,
    pub plans: u64,
    pub fallbacks: u64,
}

impl Navigator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops the current plan, e.g. after a change of destination.
    pub fn reset(&mut self) {
        self.queue.clear();
        self.in_cycle = false;
        self.cycle_moves = 0;
        self.idle_cycles = 0;
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Next action toward `destination`. `here` is the agent's position in the
    /// same frame; `solver` is asked for plans (possibly through a cache).
    pub fn next(
        &mut self,
        percept: &Percept,
        here: RelOffset,
        destination: RelOffset,
        sizes: &AxisSizes,
        clear_threshold: u32,
        solver: &mut dyn FnMut(&Problem) -> Plan,
    ) -> NavStep {
        if let Action::Move(_) = percept.last_action {
            if percept.last_action_result.is_success() {
                self.cycle_moves += 1;
            } else {
                self.failed_moves += 1;
            }
        }
        if sizes.distance(here, destination) == 0 {
            self.reset();
            return NavStep::Arrived;
        }
        if let Some(step) = self.queue.pop_front() {
            return NavStep::Act(step.action());
        }
        if self.in_cycle {
            if self.cycle_moves == 0 {
                self.idle_cycles += 1;
            } else {
                self.idle_cycles = 0;
            }
        }
        self.cycle_moves = 0;
        self.in_cycle = true;
        if self.idle_cycles >= STUCK_AFTER_CYCLES {
            self.idle_cycles = 0;
            self.in_cycle = false;
            return NavStep::Stuck;
        }
        let plan = select_good_cell(percept, destination, here, sizes)
            .and_then(|cell| build_problem(percept, cell, percept.energy, clear_threshold).ok())
            .map(|p| solver(&p))
            .unwrap_or_default();
        if plan.is_empty() {
            self.fallbacks += 1;
            return NavStep::Act(fallback_one_step(percept, here, destination, sizes));
        }
        self.plans += 1;
        self.queue.extend(plan.steps);
        NavStep::Act(self.queue.pop_front().unwrap().action())
    }
}
