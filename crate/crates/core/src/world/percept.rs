use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::*;
use crate::torus::{diamond_cells, shift, RelOffset, VISION_RADIUS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ThingKind {
    /// Another agent. Only its team is visible, never its name.
    Entity(TeamId),
    Block(BlockType),
    Dispenser(BlockType),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Thing {
    pub offset: RelOffset,
    pub kind: ThingKind,
}

impl Thing {
    pub fn new(dx: i32, dy: i32, kind: ThingKind) -> Self {
        Thing { offset: RelOffset::new(dx, dy), kind }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TerrainKind {
    Obstacle,
    Goal,
}

/// An agent's view of one step. Offsets all lie in the vision diamond.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Percept {
    pub step: u64,
    pub team: TeamId,
    pub energy: u32,
    pub disabled: bool,
    pub attached: Vec<(RelOffset, BlockType)>,
    pub things: Vec<Thing>,
    pub terrain: Vec<(RelOffset, TerrainKind)>,
    pub taskboards: Vec<RelOffset>,
    pub tasks: Vec<Task>,
    pub accepted: Option<String>,
    pub last_action: Action,
    pub last_action_result: ActionResult,
}

impl Percept {
    pub fn entities(&self) -> impl Iterator<Item = (RelOffset, TeamId)> + '_ {
        self.things.iter().filter_map(|t| match t.kind {
            ThingKind::Entity(team) => Some((t.offset, team)),
            _ => None,
        })
    }

    pub fn terrain_at(&self, o: RelOffset) -> Option<TerrainKind> {
        self.terrain.iter().find(|(p, _)| *p == o).map(|&(_, k)| k)
    }

    pub fn things_at(&self, o: RelOffset) -> impl Iterator<Item = ThingKind> + '_ {
        self.things.iter().filter(move |t| t.offset == o).map(|t| t.kind)
    }
}

impl World {
    pub fn percept(&self, id: AgentId) -> Result<Percept, WorldError> {
        let agent = self.agents.get(&id).ok_or(WorldError::UnknownAgent(id))?;
        let mut things = Vec::new();
        let mut terrain = Vec::new();
        let mut taskboards = Vec::new();
        // The diamond lists each offset once, but on tiny tori two offsets can
        // name the same cell; each is reported as seen from its own offset.
        for o in diamond_cells(VISION_RADIUS) {
            let c = shift(agent.pos, o, self.dims);
            let cell = self.cell(c);
            match cell.terrain {
                Terrain::Obstacle => terrain.push((o, TerrainKind::Obstacle)),
                Terrain::Goal => terrain.push((o, TerrainKind::Goal)),
                Terrain::Empty => {}
            }
            match cell.facility {
                Some(Facility::Dispenser(k)) => things.push(Thing { offset: o, kind: ThingKind::Dispenser(k) }),
                Some(Facility::Taskboard) => taskboards.push(o),
                None => {}
            }
            match cell.occupant {
                Some(Occupant::Agent(a)) if a != id => {
                    things.push(Thing { offset: o, kind: ThingKind::Entity(self.agents[&a].team) })
                }
                Some(Occupant::Block(b)) => things.push(Thing { offset: o, kind: ThingKind::Block(self.blocks[&b].kind) }),
                _ => {}
            }
        }
        Ok(Percept {
            step: self.step,
            team: agent.team,
            energy: agent.energy,
            disabled: agent.disabled_until.is_some(),
            attached: self.attached_blocks(id),
            things,
            terrain,
            taskboards,
            tasks: self.tasks.clone(),
            accepted: agent.accepted.clone(),
            last_action: agent.last_action.clone(),
            last_action_result: agent.last_result,
        })
    }
}
