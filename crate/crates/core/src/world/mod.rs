//! Ground-truth synchronous simulator.
//!
//! One [`World`] holds every cell, agent, block and task. [`World::step`]
//! applies one action per agent in ascending id order, then runs the
//! environment phase (clear events, task expiry and generation, recharge).
//! Every random choice comes from a ChaCha stream seeded at construction.

mod actions;
mod config;
mod gen;
mod percept;

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::torus::{delta, shift, Dims, Direction, RelOffset, TorusCoord};

pub use config::{ClearEventConfig, EnergyConfig, Spawn, TaskConfig, WorldConfig};
pub use percept::{Percept, TerrainKind, Thing, ThingKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TeamId(pub u8);

impl TeamId {
    pub const A: TeamId = TeamId(0);
    pub const B: TeamId = TeamId(1);

    pub fn name(self) -> String {
        String::from(char::from(b'A' + self.0))
    }

    pub fn other(self) -> TeamId {
        TeamId(1 - self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockType(pub u8);

impl fmt::Display for BlockType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terrain {
    Empty,
    Obstacle,
    Goal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Facility {
    Dispenser(BlockType),
    Taskboard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Occupant {
    Agent(AgentId),
    Block(BlockId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub terrain: Terrain,
    pub facility: Option<Facility>,
    pub occupant: Option<Occupant>,
}

impl Cell {
    fn empty() -> Self {
        Cell { terrain: Terrain::Empty, facility: None, occupant: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearCharge {
    pub target: TorusCoord,
    pub count: u32,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub name: String,
    pub team: TeamId,
    pub pos: TorusCoord,
    pub energy: u32,
    pub disabled_until: Option<u64>,
    pub clear_charge: Option<ClearCharge>,
    pub accepted: Option<String>,
    pub last_action: Action,
    pub last_result: ActionResult,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockState {
    pub id: BlockId,
    pub kind: BlockType,
    pub pos: TorusCoord,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub reward: u32,
    pub deadline: u64,
    /// Offsets relative to the submitting agent; all strictly south (`dy >= 1`).
    pub requirements: Vec<(RelOffset, BlockType)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rotation {
    Cw,
    Ccw,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    #[default]
    Skip,
    Move(Direction),
    Rotate(Rotation),
    Attach(Direction),
    Detach(Direction),
    /// Joins `mine` (a block in the issuer's structure) with `theirs` (a block in
    /// the partner's structure). Offsets are relative to the issuer. Succeeds only
    /// if the partner issues the mirrored action in the same step.
    Connect { partner: AgentId, mine: RelOffset, theirs: RelOffset },
    Request(Direction),
    Accept(String),
    Submit(String),
    Clear(RelOffset),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailReason {
    Disabled,
    Blocked,
    SharedStructure,
    NoBlock,
    NotAttached,
    AlreadyAttached,
    EnemyAttached,
    NoDispenser,
    Occupied,
    TooFar,
    UnknownTask,
    NotAccepted,
    NotOnGoal,
    Mismatch,
    NoEnergy,
    OutOfRange,
    PartnerMismatch,
    InvalidTarget,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionResult {
    #[default]
    Success,
    Failed(FailReason),
}

impl ActionResult {
    pub fn is_success(&self) -> bool {
        matches!(self, ActionResult::Success)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovalCause {
    Cleared,
    ClearEvent,
    Submitted,
}

/// Everything the world reports about one tick.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorldEvent {
    Action { agent: AgentId, action: Action, result: ActionResult },
    BlockCreated { block: BlockId, kind: BlockType, at: TorusCoord },
    BlockRemoved { block: BlockId, cause: RemovalCause },
    ObstacleRemoved { at: TorusCoord },
    AgentDisabled { agent: AgentId, until: u64 },
    ClearWarning { center: TorusCoord, radius: i32 },
    ClearEvent { center: TorusCoord, radius: i32 },
    TaskCreated { name: String, reward: u32, deadline: u64, blocks: u32 },
    TaskExpired { name: String },
    TaskCompleted { name: String, team: TeamId, agent: AgentId, reward: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("configuration infeasible: {0}")]
    Infeasible(String),
    #[error("unknown agent {0:?}")]
    UnknownAgent(AgentId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("world invariant violated at step {step}: {detail}")]
pub struct InvariantViolation {
    pub step: u64,
    pub detail: String,
}

/// Vertex of the attachment graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Agent(AgentId),
    Block(BlockId),
}

#[derive(Clone)]
pub struct World {
    config: WorldConfig,
    dims: Dims,
    cells: Vec<Cell>,
    agents: BTreeMap<AgentId, AgentState>,
    blocks: BTreeMap<BlockId, BlockState>,
    links: BTreeSet<(Node, Node)>,
    tasks: Vec<Task>,
    step: u64,
    scores: BTreeMap<TeamId, u64>,
    rng: ChaCha8Rng,
    next_block: u32,
    next_task: u32,
    pending_clear: Option<(TorusCoord, i32)>,
}

impl fmt::Debug for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("World")
            .field("dims", &self.dims)
            .field("step", &self.step)
            .field("agents", &self.agents.len())
            .field("blocks", &self.blocks.len())
            .field("tasks", &self.tasks.len())
            .finish()
    }
}

fn link(a: Node, b: Node) -> (Node, Node) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl World {
    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn step_number(&self) -> u64 {
        self.step
    }

    pub fn cell(&self, c: TorusCoord) -> &Cell {
        &self.cells[self.dims.index(c)]
    }

    pub fn cell_mut(&mut self, c: TorusCoord) -> &mut Cell {
        let i = self.dims.index(c);
        &mut self.cells[i]
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.values()
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.get(&id)
    }

    pub fn agent_ids(&self, team: TeamId) -> Vec<AgentId> {
        self.agents.values().filter(|a| a.team == team).map(|a| a.id).collect()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BlockState> {
        self.blocks.values()
    }

    pub fn block(&self, id: BlockId) -> Option<&BlockState> {
        self.blocks.get(&id)
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn score(&self, team: TeamId) -> u64 {
        self.scores.get(&team).copied().unwrap_or(0)
    }

    pub fn links(&self) -> &BTreeSet<(Node, Node)> {
        &self.links
    }

    pub fn coords(&self) -> impl Iterator<Item = TorusCoord> + '_ {
        (0..self.dims.area()).map(|i| self.dims.coord_at(i))
    }

    fn neighbors(&self, n: Node) -> impl Iterator<Item = Node> + '_ {
        self.links.iter().filter_map(move |&(a, b)| {
            if a == n {
                Some(b)
            } else if b == n {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Connected component of `start` in the attachment graph.
    pub fn component(&self, start: Node) -> BTreeSet<Node> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(start);
        queue.push_back(start);
        while let Some(n) = queue.pop_front() {
            for m in self.neighbors(n) {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// Blocks connected to the agent, as offsets from the agent.
    pub fn attached_blocks(&self, id: AgentId) -> Vec<(RelOffset, BlockType)> {
        let Some(agent) = self.agents.get(&id) else { return Vec::new() };
        let mut out: Vec<_> = self
            .component(Node::Agent(id))
            .into_iter()
            .filter_map(|n| match n {
                Node::Block(b) => self.blocks.get(&b).map(|bs| (delta(agent.pos, bs.pos, self.dims), bs.kind)),
                Node::Agent(_) => None,
            })
            .collect();
        out.sort();
        out
    }

    /// Agents (of any team) connected to the block's structure.
    pub fn block_holders(&self, id: BlockId) -> Vec<AgentId> {
        self.component(Node::Block(id))
            .into_iter()
            .filter_map(|n| match n {
                Node::Agent(a) => Some(a),
                Node::Block(_) => None,
            })
            .collect()
    }

    fn remove_links_of(&mut self, n: Node) {
        self.links.retain(|&(a, b)| a != n && b != n);
    }

    fn remove_block(&mut self, id: BlockId, cause: RemovalCause, events: &mut Vec<WorldEvent>) {
        if let Some(b) = self.blocks.remove(&id) {
            self.cell_mut(b.pos).occupant = None;
            self.remove_links_of(Node::Block(id));
            events.push(WorldEvent::BlockRemoved { block: id, cause });
        }
    }

    fn disable_agent(&mut self, id: AgentId, events: &mut Vec<WorldEvent>) {
        let until = self.step + self.config.energy.disable_steps;
        if let Some(a) = self.agents.get_mut(&id) {
            a.disabled_until = Some(until);
            a.clear_charge = None;
        }
        self.remove_links_of(Node::Agent(id));
        events.push(WorldEvent::AgentDisabled { agent: id, until });
    }

    /// Removes obstacles and blocks in the area and disables agents there.
    fn clear_area(&mut self, center: TorusCoord, radius: i32, cause: RemovalCause, events: &mut Vec<WorldEvent>) {
        for o in crate::torus::diamond_cells(radius) {
            let c = shift(center, o, self.dims);
            if self.cell(c).terrain == Terrain::Obstacle {
                self.cell_mut(c).terrain = Terrain::Empty;
                events.push(WorldEvent::ObstacleRemoved { at: c });
            }
            match self.cell(c).occupant {
                Some(Occupant::Block(b)) => self.remove_block(b, cause, events),
                Some(Occupant::Agent(a)) => self.disable_agent(a, events),
                None => {}
            }
        }
    }

    fn below(&mut self, n: u32) -> u32 {
        if n <= 1 {
            0
        } else {
            (self.rng.next_u64() % n as u64) as u32
        }
    }

    fn chance(&mut self, permille: u32) -> bool {
        self.below(1000) < permille
    }

    fn random_coord(&mut self) -> TorusCoord {
        let x = self.below(self.dims.w() as u32) as i32;
        let y = self.below(self.dims.h() as u32) as i32;
        TorusCoord { x, y }
    }

    /// Advances one tick. Agents without an entry skip.
    pub fn step(&mut self, actions: &BTreeMap<AgentId, Action>) -> Vec<WorldEvent> {
        let mut events = Vec::new();
        let ids: Vec<AgentId> = self.agents.keys().copied().collect();
        for id in ids {
            let action = actions.get(&id).cloned().unwrap_or_default();
            let result = self.apply_action(id, &action, actions, &mut events);
            let agent = self.agents.get_mut(&id).expect("agent listed");
            if !matches!(action, Action::Clear(_)) {
                agent.clear_charge = None;
            }
            agent.last_action = action.clone();
            agent.last_result = result;
            events.push(WorldEvent::Action { agent: id, action, result });
        }
        self.environment_phase(&mut events);
        self.step += 1;
        debug_assert_eq!(self.check_invariants(), Ok(()));
        events
    }

    fn environment_phase(&mut self, events: &mut Vec<WorldEvent>) {
        if let Some((center, radius)) = self.pending_clear.take() {
            events.push(WorldEvent::ClearEvent { center, radius });
            self.clear_area(center, radius, RemovalCause::ClearEvent, events);
        }
        let cfg = self.config.clear_events;
        if cfg.permille > 0 && self.chance(cfg.permille) {
            let center = self.random_coord();
            self.pending_clear = Some((center, cfg.radius));
            events.push(WorldEvent::ClearWarning { center, radius: cfg.radius });
        }

        let step = self.step;
        let mut expired = Vec::new();
        self.tasks.retain(|t| {
            if t.deadline <= step {
                expired.push(t.name.clone());
                false
            } else {
                true
            }
        });
        events.extend(expired.into_iter().map(|name| WorldEvent::TaskExpired { name }));

        let tc = self.config.tasks;
        if (self.tasks.len() as u32) < tc.max_active && self.chance(tc.spawn_permille) {
            let t = self.generate_task();
            events.push(WorldEvent::TaskCreated {
                name: t.name.clone(),
                reward: t.reward,
                deadline: t.deadline,
                blocks: t.requirements.len() as u32,
            });
            self.tasks.push(t);
        }

        let e = self.config.energy;
        for a in self.agents.values_mut() {
            a.energy = (a.energy + e.recharge).min(e.max);
            if a.disabled_until.is_some_and(|u| u <= step) {
                a.disabled_until = None;
            }
        }
    }

    fn generate_task(&mut self) -> Task {
        let tc = self.config.tasks;
        let span = tc.max_blocks.saturating_sub(tc.min_blocks) + 1;
        let n = (tc.min_blocks + self.below(span)).max(1);
        let mut cells: Vec<RelOffset> = alloc::vec![RelOffset::new(0, 1)];
        while (cells.len() as u32) < n {
            let base = cells[self.below(cells.len() as u32) as usize];
            let dir = [Direction::S, Direction::E, Direction::W, Direction::N][self.below(4) as usize];
            let next = base + dir.offset();
            if next.dy >= 1 && !cells.contains(&next) {
                cells.push(next);
            }
        }
        let types = self.config.block_types.max(1) as u32;
        let requirements = cells.into_iter().map(|c| (c, BlockType(self.below(types) as u8))).collect();
        let dspan = tc.deadline_max.saturating_sub(tc.deadline_min) + 1;
        let deadline = self.step + tc.deadline_min + (self.rng.next_u64() % dspan);
        let name = format!("task{}", self.next_task);
        self.next_task += 1;
        Task { name, reward: tc.reward_per_block * n, deadline, requirements }
    }

    /// Structural self-check: occupancy, back-references, attachment sanity.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let fail = |detail: String| Err(InvariantViolation { step: self.step, detail });
        let mut seen_agents = 0usize;
        let mut seen_blocks = 0usize;
        for (i, cell) in self.cells.iter().enumerate() {
            let c = self.dims.coord_at(i);
            match cell.occupant {
                Some(Occupant::Agent(a)) => {
                    seen_agents += 1;
                    match self.agents.get(&a) {
                        Some(st) if st.pos == c => {}
                        _ => return fail(format!("cell {c:?} claims agent {a:?}")),
                    }
                }
                Some(Occupant::Block(b)) => {
                    seen_blocks += 1;
                    match self.blocks.get(&b) {
                        Some(st) if st.pos == c => {}
                        _ => return fail(format!("cell {c:?} claims block {b:?}")),
                    }
                }
                None => {}
            }
            if cell.occupant.is_some() && cell.terrain == Terrain::Obstacle {
                return fail(format!("occupied obstacle at {c:?}"));
            }
        }
        if seen_agents != self.agents.len() || seen_blocks != self.blocks.len() {
            return fail(format!(
                "occupancy count mismatch: {seen_agents}/{} agents, {seen_blocks}/{} blocks",
                self.agents.len(),
                self.blocks.len()
            ));
        }
        for &(a, b) in &self.links {
            for n in [a, b] {
                let exists = match n {
                    Node::Agent(id) => self.agents.contains_key(&id),
                    Node::Block(id) => self.blocks.contains_key(&id),
                };
                if !exists {
                    return fail(format!("dangling link {a:?}-{b:?}"));
                }
            }
            let (pa, pb) = (self.node_pos(a), self.node_pos(b));
            if crate::torus::torus_distance(pa, pb, self.dims) != 1 {
                return fail(format!("link between non-adjacent {a:?}-{b:?}"));
            }
        }
        for a in self.agents.values() {
            if let Some(ch) = a.clear_charge {
                if ch.count == 0 || ch.count > self.config.energy.clear_charges {
                    return fail(format!("clear charge {} out of range", ch.count));
                }
            }
        }
        Ok(())
    }

    fn node_pos(&self, n: Node) -> TorusCoord {
        match n {
            Node::Agent(a) => self.agents[&a].pos,
            Node::Block(b) => self.blocks[&b].pos,
        }
    }

    /// Generates a world, then moves agents (in id order) onto `positions`.
    pub fn with_positions(config: WorldConfig, seed: u64, positions: &[TorusCoord]) -> Result<World, WorldError> {
        let mut world = World::generate(config, seed)?;
        let ids: Vec<AgentId> = world.agents.keys().copied().collect();
        if positions.len() > ids.len() {
            return Err(WorldError::Infeasible(format!("{} positions for {} agents", positions.len(), ids.len())));
        }
        for (id, p) in ids.iter().zip(positions) {
            let from = world.agents[id].pos;
            world.cell_mut(from).occupant = None;
            world.agents.get_mut(id).unwrap().pos = *p;
        }
        for id in &ids {
            let p = world.agents[id].pos;
            if world.cell(p).occupant.is_some() || world.cell(p).terrain == Terrain::Obstacle {
                return Err(WorldError::Infeasible(format!("position {p:?} for {id:?} is taken")));
            }
            world.cell_mut(p).occupant = Some(Occupant::Agent(*id));
        }
        Ok(world)
    }

    /// Test and scenario helper: drops a block on an empty cell.
    pub fn spawn_block(&mut self, at: TorusCoord, kind: BlockType) -> Option<BlockId> {
        if self.cell(at).occupant.is_some() || self.cell(at).terrain == Terrain::Obstacle {
            return None;
        }
        let id = BlockId(self.next_block);
        self.next_block += 1;
        self.blocks.insert(id, BlockState { id, kind, pos: at });
        self.cell_mut(at).occupant = Some(Occupant::Block(id));
        Some(id)
    }

    /// Scenario helper: attaches a block to an adjacent agent without an action.
    pub fn force_attach(&mut self, agent: AgentId, block: BlockId) -> bool {
        let (Some(a), Some(b)) = (self.agents.get(&agent), self.blocks.get(&block)) else { return false };
        if crate::torus::torus_distance(a.pos, b.pos, self.dims) != 1 {
            return false;
        }
        self.links.insert(link(Node::Agent(agent), Node::Block(block)));
        true
    }

    /// Scenario helper: relocates an agent (and nothing attached) to an empty cell.
    pub fn teleport(&mut self, agent: AgentId, to: TorusCoord) -> bool {
        if self.cell(to).occupant.is_some() || self.cell(to).terrain == Terrain::Obstacle {
            return false;
        }
        let Some(a) = self.agents.get(&agent) else { return false };
        let from = a.pos;
        self.remove_links_of(Node::Agent(agent));
        self.cell_mut(from).occupant = None;
        self.cell_mut(to).occupant = Some(Occupant::Agent(agent));
        self.agents.get_mut(&agent).unwrap().pos = to;
        true
    }

    pub fn set_terrain(&mut self, at: TorusCoord, terrain: Terrain) {
        if terrain == Terrain::Obstacle && self.cell(at).occupant.is_some() {
            return;
        }
        self.cell_mut(at).terrain = terrain;
    }

    pub fn set_facility(&mut self, at: TorusCoord, facility: Option<Facility>) {
        self.cell_mut(at).facility = facility;
    }

    /// Replaces the active task list.
    pub fn set_tasks(&mut self, tasks: Vec<Task>) {
        self.tasks = tasks;
    }

    pub fn set_energy(&mut self, agent: AgentId, energy: u32) {
        if let Some(a) = self.agents.get_mut(&agent) {
            a.energy = energy;
        }
    }
}

#[cfg(test)]
mod tests;
