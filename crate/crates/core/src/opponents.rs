//! Scripted opponents. They read the world directly; they exist to give the
//! team something to play against, not to be fair.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::torus::{delta, torus_distance, Direction, RelOffset, TorusCoord};
use crate::world::{Action, AgentId, BlockType, Facility, Occupant, Rotation, TeamId, Terrain, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpponentKind {
    Idle,
    RandomWalk,
    GreedyCourier,
}

impl fmt::Display for OpponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpponentKind::Idle => "idle",
            OpponentKind::RandomWalk => "random",
            OpponentKind::GreedyCourier => "courier",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown opponent {0:?} (expected idle, random or courier)")]
pub struct UnknownOpponent(pub String);

impl FromStr for OpponentKind {
    type Err = UnknownOpponent;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "idle" => Ok(OpponentKind::Idle),
            "random" => Ok(OpponentKind::RandomWalk),
            "courier" => Ok(OpponentKind::GreedyCourier),
            _ => Err(UnknownOpponent(s.into())),
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Courier {
    flip: bool,
}

#[derive(Clone, Debug)]
pub struct Opponent {
    kind: OpponentKind,
    team: TeamId,
    rng: ChaCha8Rng,
    couriers: BTreeMap<AgentId, Courier>,
}

/// One step from `from` toward `to`: along x first, or along y when `flip`.
fn straight_step(world: &World, from: TorusCoord, to: TorusCoord, flip: bool) -> Option<Direction> {
    let d = delta(from, to, world.dims());
    let x = match d.dx.signum() {
        1 => Some(Direction::E),
        -1 => Some(Direction::W),
        _ => None,
    };
    let y = match d.dy.signum() {
        1 => Some(Direction::S),
        -1 => Some(Direction::N),
        _ => None,
    };
    if flip {
        y.or(x)
    } else {
        x.or(y)
    }
}

fn nearest(world: &World, from: TorusCoord, cells: impl Iterator<Item = TorusCoord>) -> Option<TorusCoord> {
    cells.min_by_key(|c| (torus_distance(from, *c, world.dims()), c.y, c.x))
}

impl Opponent {
    pub fn new(kind: OpponentKind, team: TeamId, seed: u64) -> Self {
        Opponent { kind, team, rng: ChaCha8Rng::seed_from_u64(seed ^ 0x0dd0_face), couriers: BTreeMap::new() }
    }

    pub fn kind(&self) -> OpponentKind {
        self.kind
    }

    pub fn decide(&mut self, world: &World) -> BTreeMap<AgentId, Action> {
        let ids = world.agent_ids(self.team);
        let mut out = BTreeMap::new();
        for id in ids {
            let a = match self.kind {
                OpponentKind::Idle => Action::Skip,
                OpponentKind::RandomWalk => Action::Move(Direction::ALL[(self.rng.next_u32() % 4) as usize]),
                OpponentKind::GreedyCourier => self.courier(world, id),
            };
            out.insert(id, a);
        }
        out
    }

    fn courier(&mut self, world: &World, id: AgentId) -> Action {
        let Some(me) = world.agent(id) else { return Action::Skip };
        if me.disabled_until.is_some() {
            return Action::Skip;
        }
        let state = self.couriers.entry(id).or_default();
        if matches!(me.last_action, Action::Move(_)) && !me.last_result.is_success() {
            state.flip = !state.flip;
        }
        let flip = state.flip;
        let dims = world.dims();
        let attached = world.attached_blocks(id);
        let task = me.accepted.as_ref().and_then(|n| world.tasks().iter().find(|t| &t.name == n));

        let Some(task) = task else {
            if let Some((o, _)) = attached.first() {
                return o.direction().map(Action::Detach).unwrap_or(Action::Skip);
            }
            let Some(pick) = world
                .tasks()
                .iter()
                .filter(|t| t.requirements.len() == 1 && t.deadline > world.step_number() + 40)
                .max_by(|a, b| a.reward.cmp(&b.reward).then_with(|| b.name.cmp(&a.name)))
            else {
                return Action::Skip;
            };
            let boards = world.coords().filter(|c| world.cell(*c).facility == Some(Facility::Taskboard));
            let Some(board) = nearest(world, me.pos, boards) else { return Action::Skip };
            if torus_distance(me.pos, board, dims) <= world.config().accept_radius {
                return Action::Accept(pick.name.clone());
            }
            return straight_step(world, me.pos, board, flip).map(Action::Move).unwrap_or(Action::Skip);
        };

        let (want_at, kind): (RelOffset, BlockType) = task.requirements[0];
        match attached.as_slice() {
            [] => {
                let disp = world
                    .coords()
                    .filter(|c| world.cell(*c).facility == Some(Facility::Dispenser(kind)));
                let Some(d) = nearest(world, me.pos, disp) else { return Action::Skip };
                let rel = delta(me.pos, d, dims);
                if rel.norm1() == 1 {
                    let dir = rel.direction().unwrap();
                    return match world.cell(d).occupant {
                        Some(Occupant::Block(b)) if world.block(b).is_some_and(|s| s.kind == kind) => Action::Attach(dir),
                        None => Action::Request(dir),
                        _ => Action::Skip,
                    };
                }
                straight_step(world, me.pos, d, flip).map(Action::Move).unwrap_or(Action::Skip)
            }
            [(o, _)] => {
                if world.cell(me.pos).terrain == Terrain::Goal {
                    return if *o == want_at { Action::Submit(task.name.clone()) } else { Action::Rotate(Rotation::Cw) };
                }
                let goals = world.coords().filter(|c| {
                    let cell = world.cell(*c);
                    cell.terrain == Terrain::Goal && (cell.occupant.is_none() || *c == me.pos)
                });
                let Some(g) = nearest(world, me.pos, goals) else { return Action::Skip };
                straight_step(world, me.pos, g, flip).map(Action::Move).unwrap_or(Action::Skip)
            }
            _ => {
                let dirs: Vec<Direction> = attached.iter().filter_map(|(o, _)| o.direction()).collect();
                dirs.first().copied().map(Action::Detach).unwrap_or(Action::Skip)
            }
        }
    }
}
