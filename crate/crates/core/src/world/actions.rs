use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::*;
use crate::torus::{diamond_cells, shift, torus_distance, Direction, RelOffset, TorusCoord};

use FailReason::*;

impl World {
    pub(super) fn apply_action(
        &mut self,
        id: AgentId,
        action: &Action,
        all: &BTreeMap<AgentId, Action>,
        events: &mut Vec<WorldEvent>,
    ) -> ActionResult {
        let agent = &self.agents[&id];
        if agent.disabled_until.is_some() {
            return ActionResult::Failed(Disabled);
        }
        let r = match action {
            Action::Skip => Ok(()),
            Action::Move(d) => self.do_move(id, *d),
            Action::Rotate(r) => self.do_rotate(id, *r),
            Action::Attach(d) => self.do_attach(id, *d),
            Action::Detach(d) => self.do_detach(id, *d),
            Action::Connect { partner, mine, theirs } => self.do_connect(id, *partner, *mine, *theirs, all),
            Action::Request(d) => self.do_request(id, *d, events),
            Action::Accept(name) => self.do_accept(id, name),
            Action::Submit(name) => self.do_submit(id, name, events),
            Action::Clear(o) => self.do_clear(id, *o, events),
        };
        match r {
            Ok(()) => ActionResult::Success,
            Err(reason) => ActionResult::Failed(reason),
        }
    }

    fn can_enter(&self, c: TorusCoord, moving: &BTreeSet<Node>) -> bool {
        let cell = self.cell(c);
        if cell.terrain == Terrain::Obstacle {
            return false;
        }
        match cell.occupant {
            None => true,
            Some(Occupant::Agent(a)) => moving.contains(&Node::Agent(a)),
            Some(Occupant::Block(b)) => moving.contains(&Node::Block(b)),
        }
    }

    /// Moves the listed nodes to new cells in one shot.
    fn relocate(&mut self, moves: &[(Node, TorusCoord)]) {
        for (n, _) in moves {
            let p = self.node_pos(*n);
            self.cell_mut(p).occupant = None;
        }
        for &(n, to) in moves {
            match n {
                Node::Agent(a) => {
                    self.agents.get_mut(&a).unwrap().pos = to;
                    self.cell_mut(to).occupant = Some(Occupant::Agent(a));
                }
                Node::Block(b) => {
                    self.blocks.get_mut(&b).unwrap().pos = to;
                    self.cell_mut(to).occupant = Some(Occupant::Block(b));
                }
            }
        }
    }

    fn do_move(&mut self, id: AgentId, d: Direction) -> Result<(), FailReason> {
        let comp = self.component(Node::Agent(id));
        if comp.iter().any(|n| matches!(n, Node::Agent(a) if *a != id)) {
            return Err(SharedStructure);
        }
        let moves: Vec<(Node, TorusCoord)> =
            comp.iter().map(|&n| (n, shift(self.node_pos(n), d.offset(), self.dims))).collect();
        if !moves.iter().all(|&(_, to)| self.can_enter(to, &comp)) {
            return Err(Blocked);
        }
        self.relocate(&moves);
        Ok(())
    }

    fn do_rotate(&mut self, id: AgentId, r: Rotation) -> Result<(), FailReason> {
        let comp = self.component(Node::Agent(id));
        if comp.iter().any(|n| matches!(n, Node::Agent(a) if *a != id)) {
            return Err(SharedStructure);
        }
        let origin = self.agents[&id].pos;
        let moves: Vec<(Node, TorusCoord)> = comp
            .iter()
            .filter(|n| matches!(n, Node::Block(_)))
            .map(|&n| {
                let rel = delta(origin, self.node_pos(n), self.dims);
                let rot = match r {
                    Rotation::Cw => rel.rotate_cw(),
                    Rotation::Ccw => rel.rotate_ccw(),
                };
                (n, shift(origin, rot, self.dims))
            })
            .collect();
        if !moves.iter().all(|&(_, to)| self.can_enter(to, &comp)) {
            return Err(Blocked);
        }
        self.relocate(&moves);
        Ok(())
    }

    fn block_at(&self, c: TorusCoord) -> Option<BlockId> {
        match self.cell(c).occupant {
            Some(Occupant::Block(b)) => Some(b),
            _ => None,
        }
    }

    fn do_attach(&mut self, id: AgentId, d: Direction) -> Result<(), FailReason> {
        let agent = &self.agents[&id];
        let team = agent.team;
        let target = shift(agent.pos, d.offset(), self.dims);
        let b = self.block_at(target).ok_or(NoBlock)?;
        let edge = link(Node::Agent(id), Node::Block(b));
        if self.links.contains(&edge) {
            return Err(AlreadyAttached);
        }
        let enemy = self.component(Node::Block(b)).iter().any(|n| match n {
            Node::Agent(a) => self.agents[a].team != team,
            Node::Block(_) => false,
        });
        if enemy {
            return Err(EnemyAttached);
        }
        self.links.insert(edge);
        Ok(())
    }

    fn do_detach(&mut self, id: AgentId, d: Direction) -> Result<(), FailReason> {
        let target = shift(self.agents[&id].pos, d.offset(), self.dims);
        let b = self.block_at(target).ok_or(NoBlock)?;
        if !self.links.remove(&link(Node::Agent(id), Node::Block(b))) {
            return Err(NotAttached);
        }
        Ok(())
    }

    fn do_connect(
        &mut self,
        id: AgentId,
        partner: AgentId,
        mine: RelOffset,
        theirs: RelOffset,
        all: &BTreeMap<AgentId, Action>,
    ) -> Result<(), FailReason> {
        let me = &self.agents[&id];
        let other = self.agents.get(&partner).ok_or(PartnerMismatch)?;
        if partner == id || other.team != me.team || other.disabled_until.is_some() {
            return Err(PartnerMismatch);
        }
        let Some(Action::Connect { partner: back, mine: pm, theirs: pt }) = all.get(&partner) else {
            return Err(PartnerMismatch);
        };
        let my_block_cell = shift(me.pos, mine, self.dims);
        let their_block_cell = shift(me.pos, theirs, self.dims);
        if *back != id
            || shift(other.pos, *pm, self.dims) != their_block_cell
            || shift(other.pos, *pt, self.dims) != my_block_cell
        {
            return Err(PartnerMismatch);
        }
        let bm = self.block_at(my_block_cell).ok_or(NoBlock)?;
        let bt = self.block_at(their_block_cell).ok_or(NoBlock)?;
        if torus_distance(my_block_cell, their_block_cell, self.dims) != 1 {
            return Err(InvalidTarget);
        }
        let edge = link(Node::Block(bm), Node::Block(bt));
        if self.links.contains(&edge) {
            // The partner's half of the same handshake already joined them.
            return Ok(());
        }
        if !self.component(Node::Agent(id)).contains(&Node::Block(bm))
            || !self.component(Node::Agent(partner)).contains(&Node::Block(bt))
        {
            return Err(NotAttached);
        }
        self.links.insert(edge);
        Ok(())
    }

    fn do_request(&mut self, id: AgentId, d: Direction, events: &mut Vec<WorldEvent>) -> Result<(), FailReason> {
        let target = shift(self.agents[&id].pos, d.offset(), self.dims);
        let Some(Facility::Dispenser(kind)) = self.cell(target).facility else {
            return Err(NoDispenser);
        };
        let b = self.spawn_block(target, kind).ok_or(Occupied)?;
        events.push(WorldEvent::BlockCreated { block: b, kind, at: target });
        Ok(())
    }

    fn do_accept(&mut self, id: AgentId, name: &str) -> Result<(), FailReason> {
        if !self.tasks.iter().any(|t| t.name == name) {
            return Err(UnknownTask);
        }
        let pos = self.agents[&id].pos;
        let near = diamond_cells(self.config.accept_radius)
            .into_iter()
            .any(|o| self.cell(shift(pos, o, self.dims)).facility == Some(Facility::Taskboard));
        if !near {
            return Err(TooFar);
        }
        self.agents.get_mut(&id).unwrap().accepted = Some(name.into());
        Ok(())
    }

    fn do_submit(&mut self, id: AgentId, name: &str, events: &mut Vec<WorldEvent>) -> Result<(), FailReason> {
        let ti = self.tasks.iter().position(|t| t.name == name).ok_or(UnknownTask)?;
        let agent = &self.agents[&id];
        if agent.accepted.as_deref() != Some(name) {
            return Err(NotAccepted);
        }
        if self.cell(agent.pos).terrain != Terrain::Goal {
            return Err(NotOnGoal);
        }
        let comp = self.component(Node::Agent(id));
        if comp.iter().any(|n| matches!(n, Node::Agent(a) if *a != id)) {
            return Err(SharedStructure);
        }
        let mut have = self.attached_blocks(id);
        let mut want = self.tasks[ti].requirements.clone();
        have.sort();
        want.sort();
        if have != want {
            return Err(Mismatch);
        }
        let team = agent.team;
        let task = self.tasks.remove(ti);
        for n in comp {
            if let Node::Block(b) = n {
                self.remove_block(b, RemovalCause::Submitted, events);
            }
        }
        *self.scores.entry(team).or_insert(0) += task.reward as u64;
        self.agents.get_mut(&id).unwrap().accepted = None;
        events.push(WorldEvent::TaskCompleted { name: task.name, team, agent: id, reward: task.reward });
        Ok(())
    }

    fn do_clear(&mut self, id: AgentId, o: RelOffset, events: &mut Vec<WorldEvent>) -> Result<(), FailReason> {
        let e = self.config.energy;
        if o == RelOffset::ZERO || o.norm1() > e.clear_range {
            return Err(OutOfRange);
        }
        let step = self.step;
        let agent = self.agents.get_mut(&id).unwrap();
        if agent.energy < e.clear_cost {
            agent.clear_charge = None;
            return Err(NoEnergy);
        }
        let target = shift(agent.pos, o, self.dims);
        let count = match agent.clear_charge {
            Some(ch) if ch.target == target && ch.step + 1 == step => ch.count + 1,
            _ => 1,
        };
        if count < e.clear_charges {
            agent.clear_charge = Some(ClearCharge { target, count, step });
            return Ok(());
        }
        agent.clear_charge = None;
        agent.energy -= e.clear_cost;
        self.clear_area(target, e.clear_area, RemovalCause::Cleared, events);
        Ok(())
    }
}
