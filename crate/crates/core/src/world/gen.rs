use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use super::*;
use crate::torus::{diamond_cells, shift, Direction, TorusCoord};

impl World {
    /// Builds a fresh world. Identical `(config, seed)` pairs give identical worlds.
    pub fn generate(config: WorldConfig, seed: u64) -> Result<World, WorldError> {
        let dims = config.dims;
        if config.block_types == 0 {
            return Err(WorldError::Infeasible("at least one block type is required".into()));
        }
        if config.tasks.min_blocks > config.tasks.max_blocks || config.tasks.deadline_min > config.tasks.deadline_max {
            return Err(WorldError::Infeasible("task ranges are inverted".into()));
        }
        if config.obstacle_permille > 1000 {
            return Err(WorldError::Infeasible("obstacle density above 1000 per mille".into()));
        }
        let mut world = World {
            dims,
            cells: alloc::vec![Cell::empty(); dims.area()],
            agents: BTreeMap::new(),
            blocks: BTreeMap::new(),
            links: BTreeSet::new(),
            tasks: Vec::new(),
            step: 0,
            scores: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_block: 0,
            next_task: 0,
            pending_clear: None,
            config,
        };

        for i in 0..dims.area() {
            if world.chance(world.config.obstacle_permille) {
                world.cells[i].terrain = Terrain::Obstacle;
            }
        }

        for _ in 0..world.config.goal_clusters {
            world.grow_goal_cluster();
        }

        for k in 0..world.config.dispensers {
            let kind = BlockType((k % world.config.block_types as u32) as u8);
            let c = world.free_facility_cell()?;
            world.cell_mut(c).facility = Some(Facility::Dispenser(kind));
        }
        for _ in 0..world.config.taskboards {
            let c = world.free_facility_cell()?;
            world.cell_mut(c).facility = Some(Facility::Taskboard);
        }

        world.place_agents()?;

        for _ in 0..world.config.tasks.initial.min(world.config.tasks.max_active) {
            let t = world.generate_task();
            world.tasks.push(t);
        }
        world.check_invariants().map_err(|v| WorldError::Infeasible(v.detail))?;
        Ok(world)
    }

    fn grow_goal_cluster(&mut self) {
        let target = self.config.goal_cluster_size.min(self.dims.area() as u32) as usize;
        if target == 0 {
            return;
        }
        let start = self.random_coord();
        let mut cluster = alloc::vec![start];
        let mut members: BTreeSet<TorusCoord> = cluster.iter().copied().collect();
        let mut guard = 0;
        while cluster.len() < target && guard < target * 64 {
            guard += 1;
            let base = cluster[self.below(cluster.len() as u32) as usize];
            let dir = Direction::ALL[self.below(4) as usize];
            let next = shift(base, dir.offset(), self.dims);
            if members.insert(next) {
                cluster.push(next);
            }
        }
        for c in cluster {
            let cell = self.cell_mut(c);
            cell.terrain = Terrain::Goal;
            cell.facility = None;
        }
    }

    fn is_plain(&self, c: TorusCoord) -> bool {
        let cell = self.cell(c);
        cell.terrain == Terrain::Empty && cell.facility.is_none() && cell.occupant.is_none()
    }

    /// Random plain cell; falls back to a scan if sampling keeps missing.
    fn free_facility_cell(&mut self) -> Result<TorusCoord, WorldError> {
        for _ in 0..256 {
            let c = self.random_coord();
            if self.is_plain(c) {
                return Ok(c);
            }
        }
        let start = self.below(self.dims.area() as u32) as usize;
        (0..self.dims.area())
            .map(|i| self.dims.coord_at((start + i) % self.dims.area()))
            .find(|&c| self.is_plain(c))
            .ok_or_else(|| WorldError::Infeasible("no free cell for a facility".into()))
    }

    fn place_agents(&mut self) -> Result<(), WorldError> {
        let total: u32 = self.config.team_sizes.iter().sum();
        let free = self.coords().filter(|&c| self.is_plain(c)).count() as u32;
        if total > free {
            return Err(WorldError::Infeasible(format!("{total} agents but only {free} free cells")));
        }
        let mut slots: [Vec<TorusCoord>; 2] = [Vec::new(), Vec::new()];
        for team in 0..2 {
            let n = self.config.team_sizes[team] as usize;
            let cells = match self.config.spawn {
                Spawn::Scattered => self.scattered_cells(n, &slots),
                Spawn::Clustered { radius } => self.clustered_cells(n, radius, &slots),
            }?;
            slots[team] = cells;
        }
        // Interleave ids: A1=0, B1=1, A2=2, ...
        let max_n = self.config.team_sizes.iter().copied().max().unwrap_or(0) as usize;
        let mut next_id = 0u32;
        for i in 0..max_n {
            for team in 0..2u8 {
                let Some(&pos) = slots[team as usize].get(i) else { continue };
                let id = AgentId(next_id);
                next_id += 1;
                let name = format!("{}{}", TeamId(team).name(), i + 1);
                self.cell_mut(pos).occupant = Some(Occupant::Agent(id));
                self.agents.insert(
                    id,
                    AgentState {
                        id,
                        name,
                        team: TeamId(team),
                        pos,
                        energy: self.config.energy.initial,
                        disabled_until: None,
                        clear_charge: None,
                        accepted: None,
                        last_action: Action::Skip,
                        last_result: ActionResult::Success,
                    },
                );
            }
        }
        Ok(())
    }

    fn taken(slots: &[Vec<TorusCoord>; 2], c: TorusCoord) -> bool {
        slots.iter().any(|s| s.contains(&c))
    }

    fn scattered_cells(&mut self, n: usize, slots: &[Vec<TorusCoord>; 2]) -> Result<Vec<TorusCoord>, WorldError> {
        let mut out: Vec<TorusCoord> = Vec::new();
        let mut guard = 0;
        while out.len() < n {
            guard += 1;
            let c = if guard < 4096 {
                self.random_coord()
            } else {
                self.coords()
                    .find(|&c| self.is_plain(c) && !Self::taken(slots, c) && !out.contains(&c))
                    .ok_or_else(|| WorldError::Infeasible("ran out of spawn cells".into()))?
            };
            if self.is_plain(c) && !Self::taken(slots, c) && !out.contains(&c) {
                out.push(c);
            }
        }
        Ok(out)
    }

    fn clustered_cells(
        &mut self,
        n: usize,
        radius: i32,
        slots: &[Vec<TorusCoord>; 2],
    ) -> Result<Vec<TorusCoord>, WorldError> {
        let center = self.random_coord();
        let mut r = radius.max(0);
        loop {
            let mut candidates: Vec<TorusCoord> = diamond_cells(r)
                .into_iter()
                .map(|o| shift(center, o, self.dims))
                .filter(|&c| self.is_plain(c) && !Self::taken(slots, c))
                .collect();
            candidates.sort();
            candidates.dedup();
            if candidates.len() >= n {
                let mut out = Vec::with_capacity(n);
                while out.len() < n {
                    let i = self.below(candidates.len() as u32) as usize;
                    out.push(candidates.swap_remove(i));
                }
                return Ok(out);
            }
            if r > self.dims.w() + self.dims.h() {
                return Err(WorldError::Infeasible("ran out of spawn cells".into()));
            }
            r += 1;
        }
    }
}
