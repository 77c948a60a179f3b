//! Bullies patrol goal clusters and clear blocks that enemies carry in.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mapping::AxisSizes;
use crate::planner::fallback_one_step;
use crate::torus::RelOffset;
use crate::world::{Action, Percept, ThingKind};

/// Steps without prey after which a hunter moves on to the next cluster.
pub const RELOCATE_AFTER: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BullyKind {
    Bouncer,
    Hunter,
}

/// Ring of radius 2 around a centre, clockwise from north.
pub fn patrol_ring() -> [RelOffset; 8] {
    [
        RelOffset::new(0, -2),
        RelOffset::new(1, -1),
        RelOffset::new(2, 0),
        RelOffset::new(1, 1),
        RelOffset::new(0, 2),
        RelOffset::new(-1, 1),
        RelOffset::new(-2, 0),
        RelOffset::new(-1, -1),
    ]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BullyState {
    pub kind: BullyKind,
    pub cluster: usize,
    pub phase: usize,
    pub idle: u32,
    /// Steps of prey movement added to the prediction.
    pub lead: i32,
    /// Frame cell being charged and charges issued.
    pub charge: Option<(RelOffset, u32)>,
    prey_last: Option<RelOffset>,
    fired: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BullyDecision {
    /// None when no cluster is known yet.
    pub action: Option<Action>,
    pub fired: bool,
    pub relocated: Option<usize>,
}

impl BullyState {
    pub fn new(kind: BullyKind, cluster: usize) -> Self {
        BullyState { kind, cluster, phase: 0, idle: 0, lead: 2, charge: None, prey_last: None, fired: false }
    }

    /// Drops the remembered prey position, e.g. after a change of frame.
    pub fn forget_prey(&mut self) {
        self.prey_last = None;
    }
}

/// Nearest block next to an enemy and away from every teammate.
fn find_prey(percept: &Percept, spared: &dyn Fn(RelOffset) -> bool) -> Option<RelOffset> {
    let mut enemies = Vec::new();
    let mut friends = Vec::new();
    let mut blocks = Vec::new();
    for t in &percept.things {
        match t.kind {
            ThingKind::Entity(team) if team == percept.team => friends.push(t.offset),
            ThingKind::Entity(_) => enemies.push(t.offset),
            ThingKind::Block(_) => blocks.push(t.offset),
            ThingKind::Dispenser(_) => {}
        }
    }
    let near = |a: RelOffset, b: RelOffset| (a - b).norm1() == 1;
    blocks
        .into_iter()
        .filter(|&b| enemies.iter().any(|&e| near(b, e)) && !friends.iter().any(|&f| near(b, f)))
        .filter(|b| !percept.attached.iter().any(|(o, _)| o == b) && !spared(*b))
        .min_by_key(|b| (b.norm1(), *b))
}

fn teammate_at(percept: &Percept, o: RelOffset) -> bool {
    percept.things.iter().any(|t| t.offset == o && t.kind == ThingKind::Entity(percept.team))
}

/// One step of a bully. `centers` are goal positions of the known clusters
/// in the agent's frame.
pub fn bully_policy(
    state: &mut BullyState,
    percept: &Percept,
    here: RelOffset,
    centers: &[RelOffset],
    sizes: &AxisSizes,
    clear_cost: u32,
    clear_range: i32,
) -> BullyDecision {
    bully_policy_guarded(state, percept, here, centers, sizes, clear_cost, clear_range, &|_| false)
}

/// As [`bully_policy`], never aiming at frame cells for which `protected`
/// holds (the team's own structures).
#[allow(clippy::too_many_arguments)]
pub fn bully_policy_guarded(
    state: &mut BullyState,
    percept: &Percept,
    here: RelOffset,
    centers: &[RelOffset],
    sizes: &AxisSizes,
    clear_cost: u32,
    clear_range: i32,
    protected: &dyn Fn(RelOffset) -> bool,
) -> BullyDecision {
    let mut out = BullyDecision::default();
    let prey = find_prey(percept, &|b| protected(here + b));
    if state.fired {
        state.fired = false;
        if prey.is_some() {
            state.lead = if state.lead == 2 { 3 } else { 2 };
        }
    }
    if let Some((target, count)) = state.charge {
        let rel = sizes.delta(here, target);
        if teammate_at(percept, rel) || rel.norm1() > clear_range || rel == RelOffset::ZERO {
            state.charge = None;
        } else {
            let count = count + 1;
            if count >= 3 {
                state.charge = None;
                state.fired = true;
                state.prey_last = None;
                out.fired = true;
            } else {
                state.charge = Some((target, count));
            }
            out.action = Some(Action::Clear(rel));
            return out;
        }
    }

    if let Some(b) = prey {
        state.idle = 0;
        let at = sizes.norm(here + b);
        let Some(last) = state.prey_last.replace(at) else {
            out.action = Some(Action::Skip);
            return out;
        };
        let mut v = sizes.delta(last, at);
        if v.norm1() > 1 {
            v = RelOffset::ZERO;
        }
        let aim = b + RelOffset::new(v.dx * state.lead, v.dy * state.lead);
        let in_range = aim != RelOffset::ZERO && aim.norm1() <= clear_range;
        if in_range && !teammate_at(percept, aim) && !protected(here + aim) && percept.energy >= clear_cost {
            state.charge = Some((sizes.norm(here + aim), 1));
            out.action = Some(Action::Clear(aim));
            return out;
        }
        out.action = Some(fallback_one_step(percept, here, at, sizes));
        return out;
    }

    state.prey_last = None;
    if centers.is_empty() {
        return out;
    }
    state.idle += 1;
    if state.kind == BullyKind::Hunter && state.idle >= RELOCATE_AFTER {
        state.idle = 0;
        state.cluster = (state.cluster + 1) % centers.len();
        state.phase = 0;
        out.relocated = Some(state.cluster);
    }
    let center = centers[state.cluster % centers.len()];
    let ring = patrol_ring();
    let mut action = Action::Skip;
    for _ in 0..ring.len() {
        let spot = sizes.norm(center + ring[state.phase]);
        if sizes.distance(here, spot) == 0 {
            state.phase = (state.phase + 1) % ring.len();
            continue;
        }
        action = fallback_one_step(percept, here, spot, sizes);
        if action != Action::Skip {
            break;
        }
        state.phase = (state.phase + 1) % ring.len();
    }
    out.action = Some(action);
    out
}
