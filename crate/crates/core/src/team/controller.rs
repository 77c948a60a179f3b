//! Per-team decision loop.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::bully::{bully_policy_guarded, BullyKind, BullyState};
use super::{bottom_most_free, goal_clusters, select_task, Placement, Role, Roster, TeamEvent};
use crate::identity::{identification_round, IdEvent, IdentityBook};
use crate::mapping::cartography::{adopt, CartoStatus, CartographyState, Walker};
use crate::mapping::{Axis, LeaderRule, MapStore, StaticKind};
use crate::plan_cache::Lookup;
use crate::planner::{NavStep, Navigator, Plan, Problem};
use crate::torus::{Direction, RelOffset, VISION_RADIUS};
use crate::world::{Action, AgentId, BlockType, Percept, Rotation, Task, TeamId, TerrainKind, ThingKind};

/// Longest stretch, in steps, between the origin letting go of a finished
/// structure and the deliverer attaching it.
pub const SWAP_WINDOW_MAX: u64 = 3;

/// Measurements abandoned after this many combined walker steps.
const CARTO_GIVE_UP: u32 = 400;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamConfig {
    pub team: TeamId,
    pub round_size: usize,
    pub seed: u64,
    pub leader_rule: LeaderRule,
    pub clear_cost: u32,
    pub clear_range: i32,
    pub accept_radius: i32,
    /// Energy an agent keeps in reserve before its planner may clear.
    pub nav_clear_threshold: u32,
    pub explore_radius: i32,
    pub cartography: bool,
}

impl TeamConfig {
    pub fn new(team: TeamId, round_size: usize, seed: u64) -> Self {
        TeamConfig {
            team,
            round_size,
            seed,
            leader_rule: LeaderRule::SmallestName,
            clear_cost: 30,
            clear_range: 5,
            accept_radius: 2,
            nav_clear_threshold: 60,
            explore_radius: 15,
            cartography: true,
        }
    }
}

/// What the planning hook returns: the plan plus how it was obtained.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlanOutcome {
    pub plan: Plan,
    pub key: String,
    pub lookup: Option<Lookup>,
    pub expansions: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Member {
    id: AgentId,
    role: Role,
    group: Option<usize>,
    nav: Navigator,
    nav_dest: Option<RelOffset>,
    explore_to: Option<RelOffset>,
    walker: Option<Walker>,
    bully: Option<BullyState>,
    slot: Option<usize>,
    requested: bool,
    waited: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Handshake {
    Offer,
    Detach,
    Verify,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Presenting {
    slot: usize,
    retriever: String,
    stage: Handshake,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum SwapStage {
    Moving,
    Attaching,
    Submitting,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Swap {
    stage: SwapStage,
    detached_at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Group {
    cluster_seed: RelOffset,
    anchor: Option<RelOffset>,
    avoid: BTreeSet<RelOffset>,
    origin: Option<String>,
    deliverer: Option<String>,
    bully: Option<String>,
    target: Option<Task>,
    filled: Vec<bool>,
    presenting: Option<Presenting>,
    swap: Option<Swap>,
    waiting: u32,
}

impl Group {
    fn translate(&mut self, t: RelOffset) {
        self.cluster_seed = self.cluster_seed + t;
        self.anchor = self.anchor.map(|a| a + t);
        self.avoid = self.avoid.iter().map(|a| *a + t).collect();
    }
}

/// Decides every action of one team from its agents' percepts.
#[derive(Clone, Debug)]
pub struct TeamController {
    config: TeamConfig,
    store: MapStore,
    books: BTreeMap<String, IdentityBook>,
    members: BTreeMap<String, Member>,
    names: BTreeMap<AgentId, String>,
    cartography: Vec<CartographyState>,
    roster: Roster,
    groups: Vec<Group>,
    rng: ChaCha8Rng,
    last_census: BTreeMap<Role, u32>,
    dims_known_at: Option<u64>,
}

fn free_in_view(p: &Percept, rel: RelOffset) -> bool {
    if rel.norm1() > VISION_RADIUS || rel == RelOffset::ZERO {
        return true;
    }
    p.terrain_at(rel) != Some(TerrainKind::Obstacle)
        && !p.things_at(rel).any(|k| matches!(k, ThingKind::Entity(_) | ThingKind::Block(_)))
}

fn dir_to(rel: RelOffset) -> Option<Direction> {
    rel.direction()
}

fn step_action(s: NavStep) -> Action {
    match s {
        NavStep::Act(a) => a,
        NavStep::Arrived | NavStep::Stuck => Action::Skip,
    }
}

/// Index of the earliest requirement adjacent to requirement `i`.
fn dependency(reqs: &[(RelOffset, BlockType)], i: usize) -> Option<usize> {
    (0..i).find(|&k| (reqs[k].0 - reqs[i].0).norm1() == 1)
}

impl TeamController {
    /// `agents` lists the team's ids and names.
    pub fn new(config: TeamConfig, agents: &[(AgentId, String)]) -> Self {
        let mut store = MapStore::new(config.leader_rule);
        let mut members = BTreeMap::new();
        let mut names = BTreeMap::new();
        for (id, name) in agents {
            store.join(name);
            names.insert(*id, name.clone());
            members.insert(
                name.clone(),
                Member {
                    id: *id,
                    role: Role::Explorer,
                    group: None,
                    nav: Navigator::new(),
                    nav_dest: None,
                    explore_to: None,
                    walker: None,
                    bully: None,
                    slot: None,
                    requested: false,
                    waited: 0,
                },
            );
        }
        let seed = config.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(config.team.0 as u64 + 1));
        TeamController {
            roster: Roster::new(config.round_size),
            config,
            store,
            books: BTreeMap::new(),
            members,
            names,
            cartography: Vec::new(),
            groups: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_census: BTreeMap::new(),
            dims_known_at: None,
        }
    }

    pub fn store(&self) -> &MapStore {
        &self.store
    }

    pub fn role(&self, name: &str) -> Option<Role> {
        self.members.get(name).map(|m| m.role)
    }

    pub fn roles(&self) -> BTreeMap<String, Role> {
        self.members.iter().map(|(n, m)| (n.clone(), m.role)).collect()
    }

    pub fn census(&self) -> BTreeMap<Role, u32> {
        let mut c = BTreeMap::new();
        for m in self.members.values() {
            *c.entry(m.role).or_insert(0) += 1;
        }
        c
    }

    /// Role counts per group.
    pub fn group_census(&self) -> Vec<BTreeMap<Role, u32>> {
        let mut out = alloc::vec![BTreeMap::new(); self.groups.len()];
        for m in self.members.values() {
            if let Some(g) = m.group {
                *out[g].entry(m.role).or_insert(0) += 1;
            }
        }
        out
    }

    pub fn cartography(&self) -> &[CartographyState] {
        &self.cartography
    }

    fn set_role(&mut self, name: &str, to: Role, events: &mut Vec<TeamEvent>) {
        let m = self.members.get_mut(name).expect("member");
        if m.role == to {
            return;
        }
        debug_assert!(m.role.may_become(to), "{} -> {}", m.role, to);
        events.push(TeamEvent::RoleChanged { agent: name.into(), from: m.role, to, group: m.group });
        m.role = to;
        m.slot = None;
        m.walker = None;
        m.nav.reset();
        m.nav_dest = None;
        m.requested = false;
    }

    /// One decision round. Every agent of the team gets an action.
    pub fn decide(
        &mut self,
        step: u64,
        percepts: &BTreeMap<AgentId, Percept>,
        planner: &mut dyn FnMut(&Problem) -> PlanOutcome,
    ) -> (BTreeMap<AgentId, Action>, Vec<TeamEvent>) {
        let mut events = Vec::new();
        let by_name: BTreeMap<String, Percept> =
            percepts.iter().filter_map(|(id, p)| self.names.get(id).map(|n| (n.clone(), p.clone()))).collect();

        for (name, p) in &by_name {
            self.store.observe(name, p);
            if let Some(w) = self.members.get_mut(name).and_then(|m| m.walker.as_mut()) {
                if w.observe(p) {
                    for c in self.cartography.iter_mut().filter(|c| c.involves(name)) {
                        c.record_step(name);
                    }
                }
            }
        }

        self.identify(step, &by_name, &mut events);
        self.adopt_cartography(&by_name, &mut events);
        self.form_and_join(step, &mut events);

        let mut actions: BTreeMap<String, Action> = BTreeMap::new();
        for gi in 0..self.groups.len() {
            self.run_group(gi, step, &by_name, &mut actions, planner, &mut events);
        }
        let names: Vec<String> = self.members.keys().cloned().collect();
        for name in names {
            if actions.contains_key(&name) {
                continue;
            }
            let Some(p) = by_name.get(&name) else { continue };
            let a = if p.disabled { Action::Skip } else { self.act(&name, p, step, planner, &mut events) };
            actions.insert(name, a);
        }

        let census = self.census();
        if census != self.last_census {
            events.push(TeamEvent::Census { counts: census.clone() });
            self.last_census = census;
        }
        let out = actions.into_iter().map(|(n, a)| (self.members[&n].id, a)).collect();
        (out, events)
    }

    fn identify(&mut self, step: u64, by_name: &BTreeMap<String, Percept>, events: &mut Vec<TeamEvent>) {
        let store = &self.store;
        let round = identification_round(step, by_name, &mut self.books, |n, x| store.explains(n, x));
        let mut sightings = Vec::new();
        let mut measured = Vec::new();
        for e in round.events {
            let IdEvent::Identified { observer, subject, offset } = e else { continue };
            events.push(TeamEvent::Identified { observer: observer.clone(), subject: subject.clone(), offset });
            for c in self.cartography.iter_mut() {
                if c.partner(&observer) == Some(subject.as_str()) {
                    if let Some(r) = c.resighted(&observer, offset) {
                        measured.push((c.axis, r));
                    }
                }
            }
            if self.store.leader_of(&observer) != self.store.leader_of(&subject) {
                sightings.push((observer, subject, offset));
            }
        }

        if !sightings.is_empty() {
            let before: BTreeMap<String, RelOffset> = self.members.keys().map(|n| (n.clone(), self.store.pos(n))).collect();
            let transcript = self.store.merge_all(&sightings);
            for ab in &transcript.absorbed {
                events.push(TeamEvent::Merged { winner: ab.winner.clone(), loser: ab.loser.clone(), members: ab.members.len() });
            }
            self.rebase(&before);
        }

        for (axis, r) in measured {
            match r {
                Ok(len) if self.store.sizes().get(axis).is_none() => {
                    self.store.set_axis(axis, len);
                    events.push(TeamEvent::AxisMeasured { axis, length: len });
                    if self.store.sizes().dims().is_some() && self.dims_known_at.is_none() {
                        self.dims_known_at = Some(step);
                    }
                }
                Ok(_) => {}
                Err(f) => events.push(TeamEvent::CartographyFault { axis, value: f.0 }),
            }
        }
        // retire finished or hopeless measurements
        let sizes = self.store.sizes();
        let mut retired = Vec::new();
        self.cartography.retain(|c| {
            let done = c.status != CartoStatus::Active
                || sizes.get(c.axis).is_some()
                || c.steps_neg + c.steps_pos > CARTO_GIVE_UP;
            if done {
                retired.push((c.neg.clone(), c.pos.clone()));
            }
            !done
        });
        for (a, b) in retired {
            for n in [a, b] {
                if self.members[&n].role == Role::Cartographer {
                    self.set_role(&n, Role::Explorer, events);
                }
            }
        }
    }

    /// Moves stored coordinates into the frames that merges produced.
    fn rebase(&mut self, before: &BTreeMap<String, RelOffset>) {
        let mut shift: BTreeMap<String, RelOffset> = BTreeMap::new();
        for (n, old) in before {
            let t = self.store.pos(n) - *old;
            if t != RelOffset::ZERO {
                shift.insert(n.clone(), t);
            }
        }
        for (n, t) in &shift {
            let m = self.members.get_mut(n).unwrap();
            m.explore_to = m.explore_to.map(|e| e + *t);
            if let Some(b) = m.bully.as_mut() {
                b.charge = b.charge.map(|(c, k)| (c + *t, k));
                b.forget_prey();
            }
            m.nav.reset();
            m.nav_dest = None;
        }
        for gi in 0..self.groups.len() {
            let rep = self.members.iter().find(|(_, m)| m.group == Some(gi)).map(|(n, _)| n.clone());
            if let Some(t) = rep.and_then(|n| shift.get(&n).copied()) {
                self.groups[gi].translate(t);
            }
        }
    }

    fn adopt_cartography(&mut self, by_name: &BTreeMap<String, Percept>, events: &mut Vec<TeamEvent>) {
        if !self.config.cartography {
            return;
        }
        let sizes = self.store.sizes();
        for axis in [Axis::Horizontal, Axis::Vertical] {
            if sizes.get(axis).is_some() || self.cartography.iter().any(|c| c.axis == axis) {
                continue;
            }
            let free: Vec<&String> = self
                .members
                .iter()
                .filter(|(n, m)| {
                    m.role == Role::Explorer && by_name.get(*n).is_some_and(|p| !p.disabled) && !self.cartography.iter().any(|c| c.involves(n))
                })
                .map(|(n, _)| n)
                .collect();
            let mut found = None;
            'pairs: for (i, a) in free.iter().enumerate() {
                for b in &free[i + 1..] {
                    if self.store.leader_of(a) != self.store.leader_of(b) {
                        continue;
                    }
                    let off = sizes.delta(self.store.pos(a), self.store.pos(b));
                    let sees = by_name[*a].entities().any(|(o, t)| o == off && t == self.config.team);
                    if off.norm1() <= VISION_RADIUS && sees {
                        if let Ok(state) = adopt(axis, a, b, off, &sizes, self.cartography.iter()) {
                            found = Some(state);
                            break 'pairs;
                        }
                    }
                }
            }
            if let Some(state) = found {
                events.push(TeamEvent::CartographyStarted {
                    axis,
                    neg: state.neg.clone(),
                    pos: state.pos.clone(),
                    distance: state.initial_distance,
                });
                for n in [state.neg.clone(), state.pos.clone()] {
                    self.set_role(&n, Role::Cartographer, events);
                    let dir = state.direction(&n).unwrap();
                    self.members.get_mut(&n).unwrap().walker = Some(Walker::new(dir));
                }
                self.cartography.push(state);
            }
        }
    }

    fn main_leader(&self) -> String {
        let mut best: Option<(usize, String)> = None;
        for l in self.store.leaders() {
            let n = self.store.members(&l).len();
            if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
                best = Some((n, l));
            }
        }
        best.map(|(_, l)| l).unwrap_or_default()
    }

    fn clusters_of(&self, name: &str) -> Vec<Vec<RelOffset>> {
        goal_clusters(&self.store.group_map(name).goals, &self.store.sizes())
    }

    fn form_and_join(&mut self, step: u64, events: &mut Vec<TeamEvent>) {
        let _ = step;
        let main = self.main_leader();
        if main.is_empty() {
            return;
        }
        let clusters = self.clusters_of(&main);
        if clusters.is_empty() {
            return;
        }
        let joiners: Vec<String> = self
            .members
            .iter()
            .filter(|(n, m)| m.role == Role::Explorer && m.group.is_none() && self.store.leader_of(n) == main)
            .map(|(n, _)| n.clone())
            .collect();
        for name in joiners {
            match self.roster.join() {
                Placement::Group { group, role } => {
                    while self.groups.len() <= group {
                        let k = self.groups.len();
                        self.groups.push(Group {
                            cluster_seed: clusters[k % clusters.len()][0],
                            anchor: None,
                            avoid: BTreeSet::new(),
                            origin: None,
                            deliverer: None,
                            bully: None,
                            target: None,
                            filled: Vec::new(),
                            presenting: None,
                            swap: None,
                            waiting: 0,
                        });
                    }
                    self.members.get_mut(&name).unwrap().group = Some(group);
                    match role {
                        Role::Origin => self.groups[group].origin = Some(name.clone()),
                        Role::Deliverer => self.groups[group].deliverer = Some(name.clone()),
                        Role::BullyBouncer => self.groups[group].bully = Some(name.clone()),
                        _ => {}
                    }
                    if role.is_bully() {
                        self.members.get_mut(&name).unwrap().bully = Some(BullyState::new(BullyKind::Bouncer, group));
                    }
                    self.set_role(&name, role, events);
                }
                Placement::Leftover => {
                    let k = self.members.values().filter(|m| m.role.is_bully()).count();
                    self.members.get_mut(&name).unwrap().bully = Some(BullyState::new(BullyKind::Bouncer, k));
                    self.set_role(&name, Role::BullyBouncer, events);
                }
            }
        }
        if self.store.sizes().dims().is_some() && !self.groups.is_empty() {
            let bouncers: Vec<String> =
                self.members.iter().filter(|(_, m)| m.role == Role::BullyBouncer).map(|(n, _)| n.clone()).collect();
            for n in bouncers {
                self.set_role(&n, Role::BullyHunter, events);
                if let Some(b) = self.members.get_mut(&n).unwrap().bully.as_mut() {
                    b.kind = BullyKind::Hunter;
                }
            }
        }
    }

    fn navigate(
        &mut self,
        name: &str,
        p: &Percept,
        dest: RelOffset,
        planner: &mut dyn FnMut(&Problem) -> PlanOutcome,
        events: &mut Vec<TeamEvent>,
    ) -> NavStep {
        let sizes = self.store.sizes();
        let here = self.store.pos(name);
        let dest = sizes.norm(dest);
        let threshold = self.config.nav_clear_threshold;
        let m = self.members.get_mut(name).unwrap();
        if m.nav_dest != Some(dest) {
            m.nav.reset();
            m.nav_dest = Some(dest);
        }
        let mut hook = |prob: &Problem| {
            let out = planner(prob);
            events.push(TeamEvent::Plan {
                agent: name.to_string(),
                key: out.key,
                lookup: out.lookup,
                expansions: out.expansions,
                plan: out.plan.to_text(),
            });
            out.plan
        };
        let s = m.nav.next(p, here, dest, &sizes, threshold, &mut hook);
        if s == NavStep::Stuck {
            m.nav_dest = None;
            events.push(TeamEvent::Stuck { agent: name.into() });
        }
        s
    }

    fn explore(
        &mut self,
        name: &str,
        p: &Percept,
        center: Option<RelOffset>,
        planner: &mut dyn FnMut(&Problem) -> PlanOutcome,
        events: &mut Vec<TeamEvent>,
    ) -> Action {
        let sizes = self.store.sizes();
        let here = self.store.pos(name);
        let r = self.config.explore_radius;
        let need = match self.members[name].explore_to {
            None => true,
            Some(t) => sizes.distance(here, t) <= 1,
        };
        if need {
            let span = (2 * r + 1) as u32;
            let dx = (self.rng.next_u32() % span) as i32 - r;
            let dy = (self.rng.next_u32() % span) as i32 - r;
            let base = center.unwrap_or(here);
            self.members.get_mut(name).unwrap().explore_to = Some(sizes.norm(base + RelOffset::new(dx, dy)));
        }
        let dest = self.members[name].explore_to.unwrap();
        let s = self.navigate(name, p, dest, planner, events);
        if matches!(s, NavStep::Arrived | NavStep::Stuck) {
            self.members.get_mut(name).unwrap().explore_to = None;
        }
        step_action(s)
    }

    /// Actions for agents not driven by their group this step.
    fn act(
        &mut self,
        name: &str,
        p: &Percept,
        step: u64,
        planner: &mut dyn FnMut(&Problem) -> PlanOutcome,
        events: &mut Vec<TeamEvent>,
    ) -> Action {
        let m = &self.members[name];
        if m.role != Role::Cartographer {
            if let Some(a) = self.keep_out(name, p) {
                self.members.get_mut(name).unwrap().explore_to = None;
                return a;
            }
        }
        let m = &self.members[name];
        match m.role {
            Role::Cartographer => {
                let cost = self.config.clear_cost;
                match self.members.get_mut(name).unwrap().walker.as_mut() {
                    Some(w) => w.act(p, cost),
                    None => Action::Skip,
                }
            }
            Role::BullyBouncer | Role::BullyHunter => self.act_bully(name, p, planner, events),
            Role::Retriever => self.act_retriever(name, p, step, planner, events),
            Role::Explorer => self.explore(name, p, None, planner, events),
            // the group drives these; here only when it could not
            Role::Origin | Role::Deliverer => {
                let center = m.group.and_then(|g| self.groups[g].anchor);
                if center.is_some() {
                    Action::Skip
                } else {
                    self.explore(name, p, None, planner, events)
                }
            }
        }
    }

    /// Steps off the cells next to an anchor; the origin needs one of them
    /// free to hand over. Origins, deliverers and retrievers about to offer
    /// a block are exempt.
    fn keep_out(&self, name: &str, p: &Percept) -> Option<Action> {
        let sizes = self.store.sizes();
        let here = self.store.pos(name);
        let m = &self.members[name];
        for (gi, g) in self.groups.iter().enumerate() {
            let Some(a) = g.anchor else { continue };
            if g.origin.as_deref() == Some(name) || g.deliverer.as_deref() == Some(name) {
                continue;
            }
            let offering = m.slot.is_some() && !p.attached.is_empty() && m.group == Some(gi);
            if offering || self.store.leader_of(name) != self.store.leader_of(g.origin.as_deref().unwrap_or(name)) {
                continue;
            }
            let a = sizes.norm(a);
            if sizes.distance(here, a) > 1 {
                continue;
            }
            return Some(
                Direction::ALL
                    .into_iter()
                    .filter(|d| sizes.distance(here + d.offset(), a) > sizes.distance(here, a))
                    .find(|d| free_in_view(p, d.offset()) && p.attached.iter().all(|(o, _)| free_in_view(p, *o + d.offset()) || *o + d.offset() == RelOffset::ZERO))
                    .map(Action::Move)
                    .unwrap_or(Action::Skip),
            );
        }
        None
    }

    fn structure_cells(&self) -> BTreeSet<RelOffset> {
        let sizes = self.store.sizes();
        let mut cells = BTreeSet::new();
        for g in &self.groups {
            if let (Some(a), Some(t)) = (g.anchor, &g.target) {
                cells.insert(sizes.norm(a));
                for (o, _) in &t.requirements {
                    cells.insert(sizes.norm(a + *o));
                }
            }
        }
        cells
    }

    fn act_bully(
        &mut self,
        name: &str,
        p: &Percept,
        planner: &mut dyn FnMut(&Problem) -> PlanOutcome,
        events: &mut Vec<TeamEvent>,
    ) -> Action {
        let sizes = self.store.sizes();
        let here = self.store.pos(name);
        let clusters = self.clusters_of(name);
        let mut centers: Vec<RelOffset> = clusters.iter().map(|c| c[c.len() / 2]).collect();
        // a bouncer keeps to its group's cluster
        let group_center = self.members[name].group.and_then(|g| {
            let seed = self.groups[g].cluster_seed;
            clusters.iter().find(|c| c.contains(&sizes.norm(seed))).map(|c| c[c.len() / 2])
        });
        if self.members[name].role == Role::BullyBouncer {
            if let Some(c) = group_center {
                centers = alloc::vec![c];
            }
        }
        let protected = self.structure_cells();
        let (cost, range) = (self.config.clear_cost, self.config.clear_range);
        let state = self.members.get_mut(name).unwrap().bully.get_or_insert_with(|| BullyState::new(BullyKind::Hunter, 0));
        let d = bully_policy_guarded(state, p, here, &centers, &sizes, cost, range, &|c| protected.contains(&sizes.norm(c)));
        if d.fired {
            events.push(TeamEvent::BullyFire { agent: name.into() });
        }
        if let Some(c) = d.relocated {
            events.push(TeamEvent::Relocated { agent: name.into(), cluster: c });
        }
        match d.action {
            Some(a) => a,
            None => self.explore(name, p, None, planner, events),
        }
    }

    fn act_retriever(
        &mut self,
        name: &str,
        p: &Percept,
        step: u64,
        planner: &mut dyn FnMut(&Problem) -> PlanOutcome,
        events: &mut Vec<TeamEvent>,
    ) -> Action {
        let _ = step;
        let sizes = self.store.sizes();
        let here = self.store.pos(name);
        let m = &self.members[name];
        let Some(gi) = m.group else { return self.explore(name, p, None, planner, events) };
        let g = &self.groups[gi];
        let (Some(slot), Some(task)) = (m.slot, g.target.clone()) else {
            if let Some((o, _)) = p.attached.first() {
                if let Some(d) = dir_to(*o) {
                    return Action::Detach(d);
                }
            }
            return self.explore(name, p, None, planner, events);
        };
        let (req_off, kind) = task.requirements[slot];

        if p.attached.len() > 1 || p.attached.first().is_some_and(|(_, k)| *k != kind) {
            let d = p.attached.iter().find_map(|(o, _)| dir_to(*o));
            return d.map(Action::Detach).unwrap_or(Action::Skip);
        }

        if let Some(&(held, _)) = p.attached.first() {
            let Some(anchor) = g.anchor else { return Action::Skip };
            let target = sizes.norm(anchor + req_off);
            let open = match dependency(&task.requirements, slot) {
                None => slot == 0 && g.swap.is_none(),
                Some(k) => g.filled.get(k).copied().unwrap_or(false),
            };
            let busy = g.presenting.as_ref().is_some_and(|pr| pr.retriever != name) || g.swap.is_some();
            if !open || busy || g.filled.get(slot).copied().unwrap_or(true) {
                if sizes.distance(here, target) <= 5 {
                    return Action::Skip;
                }
                return step_action(self.navigate(name, p, target, planner, events));
            }
            let taken: BTreeSet<RelOffset> = core::iter::once(sizes.norm(anchor))
                .chain(task.requirements.iter().map(|(o, _)| sizes.norm(anchor + *o)))
                .collect();
            let stand = [Direction::S, Direction::E, Direction::W, Direction::N]
                .iter()
                .map(|d| (sizes.norm(target + d.offset()), *d))
                .filter(|(c, _)| !taken.contains(c))
                .filter(|(c, _)| *c == here || free_in_view(p, sizes.delta(here, *c)))
                .min_by_key(|(c, _)| sizes.distance(here, *c));
            let Some((cell, d)) = stand else { return Action::Skip };
            if cell != here {
                return step_action(self.navigate(name, p, cell, planner, events));
            }
            let want = -d.offset();
            if held == want {
                return Action::Skip;
            }
            let failed_cw = p.last_action == Action::Rotate(Rotation::Cw) && !p.last_action_result.is_success();
            if held.rotate_cw() == want && !failed_cw {
                return Action::Rotate(Rotation::Cw);
            }
            return if failed_cw || held.rotate_ccw() == want {
                Action::Rotate(Rotation::Ccw)
            } else {
                Action::Rotate(Rotation::Cw)
            };
        }

        // empty-handed: fetch from the nearest dispenser of the right type
        let map = self.store.group_map(name);
        let Some(disp) = map.nearest(StaticKind::Dispenser(kind), here, &sizes) else {
            return self.explore(name, p, None, planner, events);
        };
        let rel = sizes.delta(here, disp);
        if rel.norm1() == 1 {
            let d = dir_to(rel).unwrap();
            let block_there = p.things_at(rel).any(|k| k == ThingKind::Block(kind));
            let m = self.members.get_mut(name).unwrap();
            if block_there {
                let others_near = p.entities().any(|(o, _)| (o - rel).norm1() == 1);
                if m.requested || !others_near || m.waited > 6 {
                    m.requested = false;
                    m.waited = 0;
                    return Action::Attach(d);
                }
                m.waited += 1;
                return Action::Skip;
            }
            if p.things_at(rel).any(|k| matches!(k, ThingKind::Entity(_) | ThingKind::Block(_))) {
                m.waited += 1;
                return Action::Skip;
            }
            m.requested = true;
            m.waited = 0;
            return Action::Request(d);
        }
        let stand = Direction::ALL
            .iter()
            .map(|d| sizes.norm(disp + d.offset()))
            .filter(|c| free_in_view(p, sizes.delta(here, *c)))
            .min_by_key(|c| (sizes.distance(here, *c), *c));
        match stand {
            Some(c) => step_action(self.navigate(name, p, c, planner, events)),
            None => step_action(self.navigate(name, p, disp, planner, events)),
        }
    }

    /// Origin, deliverer and handshake partners of one group.
    fn run_group(
        &mut self,
        gi: usize,
        step: u64,
        by_name: &BTreeMap<String, Percept>,
        actions: &mut BTreeMap<String, Action>,
        planner: &mut dyn FnMut(&Problem) -> PlanOutcome,
        events: &mut Vec<TeamEvent>,
    ) {
        let sizes = self.store.sizes();
        let Some(origin) = self.groups[gi].origin.clone() else { return };
        let Some(op) = by_name.get(&origin) else { return };
        if op.disabled {
            return;
        }
        let opos = self.store.pos(&origin);

        // anchor on the bottom-most free goal cell of the cluster
        let clusters = self.clusters_of(&origin);
        let mut seed = sizes.norm(self.groups[gi].cluster_seed);
        if self.groups[gi].anchor.is_none() && op.attached.is_empty() {
            // earlier groups keep their cluster; wait for an unclaimed one
            let taken: Vec<RelOffset> = self.groups[..gi].iter().map(|g| sizes.norm(g.cluster_seed)).collect();
            let claimed = |c: &Vec<RelOffset>| taken.iter().any(|t| c.contains(t));
            if clusters.iter().find(|c| c.contains(&seed)).is_none_or(claimed) {
                match clusters.iter().find(|c| !claimed(c)) {
                    Some(free) => {
                        seed = free[0];
                        self.groups[gi].cluster_seed = seed;
                    }
                    None => {
                        let a = self.explore(&origin, op, None, planner, events);
                        actions.insert(origin, a);
                        return;
                    }
                }
            }
        }
        let Some(cluster) = clusters.iter().find(|c| c.contains(&seed)).or(clusters.first()).cloned() else { return };
        if self.groups[gi].anchor.is_none() {
            let mut occupied: BTreeSet<RelOffset> = self.groups[gi].avoid.iter().map(|a| sizes.norm(*a)).collect();
            for (n, _) in self.members.iter().filter(|(n, _)| **n != origin) {
                if self.store.leader_of(n) == self.store.leader_of(&origin) {
                    occupied.insert(self.store.pos(n));
                }
            }
            for (o, _) in op.entities() {
                occupied.insert(sizes.norm(opos + o));
            }
            self.groups[gi].anchor = bottom_most_free(&cluster, &occupied, &sizes);
        }
        let Some(anchor) = self.groups[gi].anchor else { return };
        let anchor = sizes.norm(anchor);
        if sizes.distance(opos, anchor) != 0 && self.groups[gi].swap.is_none() {
            let rel = sizes.delta(opos, anchor);
            if rel.norm1() <= VISION_RADIUS && op.entities().any(|(o, _)| o == rel) {
                self.groups[gi].avoid.insert(anchor);
                self.groups[gi].anchor = None;
                actions.insert(origin, Action::Skip);
                return;
            }
            let a = step_action(self.navigate(&origin, op, anchor, planner, events));
            actions.insert(origin, a);
            return;
        }

        if self.groups[gi].swap.is_some() {
            self.run_swap(gi, step, anchor, by_name, actions, planner, events);
            return;
        }

        // target task
        let staged = op.attached.clone();
        let valid = self.groups[gi]
            .target
            .as_ref()
            .is_some_and(|t| t.deadline > step + 2 && op.tasks.iter().any(|x| x.name == t.name));
        if !valid {
            let retrievable: BTreeSet<BlockType> =
                self.store.group_map(&origin).dispensers.iter().map(|(_, k)| *k).collect();
            let pick = select_task(&op.tasks, &staged, &retrievable, step, |t| {
                let missing = t.requirements.iter().filter(|r| !staged.contains(r)).count() as u64;
                30 + 30 * missing
            });
            let g = &mut self.groups[gi];
            g.presenting = None;
            match pick {
                Some(t) => {
                    events.push(TeamEvent::TaskSelected { group: gi, task: t.name.clone() });
                    g.filled = t.requirements.iter().map(|r| staged.contains(r)).collect();
                    g.target = Some(t);
                    g.waiting = 0;
                }
                None => {
                    g.target = None;
                    g.filled.clear();
                    g.waiting += 1;
                }
            }
            for m in self.members.values_mut().filter(|m| m.group == Some(gi)) {
                m.slot = None;
            }
            if self.groups[gi].target.is_none() {
                if !staged.is_empty() && self.groups[gi].waiting > 60 {
                    // give up on the structure and build elsewhere
                    let g = &mut self.groups[gi];
                    g.avoid.insert(anchor);
                    g.anchor = None;
                    g.waiting = 0;
                    actions.insert(origin, Action::Detach(Direction::S));
                } else {
                    actions.insert(origin, Action::Skip);
                }
                return;
            }
        }
        let task = self.groups[gi].target.clone().unwrap();
        for (i, r) in task.requirements.iter().enumerate() {
            self.groups[gi].filled[i] = staged.contains(r);
        }

        self.assign_slots(gi, &task, by_name);
        self.handshake(gi, &origin, op, anchor, &task, by_name, actions, events);

        if !actions.contains_key(&origin) {
            // clear what sits on the next open slot
            let next = (0..task.requirements.len()).find(|&i| {
                !self.groups[gi].filled[i] && dependency(&task.requirements, i).is_none_or(|k| self.groups[gi].filled[k])
            });
            let mut a = Action::Skip;
            if let Some(i) = next {
                let c = task.requirements[i].0;
                let obstacle = op.terrain_at(c) == Some(TerrainKind::Obstacle);
                let loose = op.things_at(c).any(|k| matches!(k, ThingKind::Block(_)))
                    && !op.entities().any(|(o, _)| (o - c).norm1() == 1)
                    && !staged.iter().any(|(o, _)| *o == c);
                if (obstacle || loose) && op.energy >= self.config.clear_cost {
                    a = Action::Clear(c);
                }
            }
            actions.insert(origin.clone(), a);
        }

        self.run_deliverer(gi, step, anchor, &task, by_name, actions, planner, events);
    }

    fn assign_slots(&mut self, gi: usize, task: &Task, by_name: &BTreeMap<String, Percept>) {
        let n = task.requirements.len();
        for i in 0..n {
            if self.groups[gi].filled[i] {
                for m in self.members.values_mut().filter(|m| m.group == Some(gi) && m.slot == Some(i)) {
                    m.slot = None;
                }
                continue;
            }
            if self.members.values().any(|m| m.group == Some(gi) && m.slot == Some(i) && m.role == Role::Retriever) {
                continue;
            }
            let kind = task.requirements[i].1;
            let free: Vec<String> = self
                .members
                .iter()
                .filter(|(_, m)| m.group == Some(gi) && m.role == Role::Retriever && m.slot.is_none())
                .map(|(n, _)| n.clone())
                .collect();
            let holding = free.iter().find(|n| by_name.get(*n).is_some_and(|p| p.attached.len() == 1 && p.attached[0].1 == kind));
            if let Some(pick) = holding.or(free.first()).cloned() {
                self.members.get_mut(&pick).unwrap().slot = Some(i);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn handshake(
        &mut self,
        gi: usize,
        origin: &str,
        op: &Percept,
        anchor: RelOffset,
        task: &Task,
        by_name: &BTreeMap<String, Percept>,
        actions: &mut BTreeMap<String, Action>,
        events: &mut Vec<TeamEvent>,
    ) {
        let sizes = self.store.sizes();
        let reqs = &task.requirements;
        // block held by `r` sitting on slot `i`, relative to `r`
        let presented = |store: &MapStore, r: &str, i: usize| -> Option<RelOffset> {
            let rp = by_name.get(r)?;
            let rel = sizes.delta(store.pos(r), anchor + reqs[i].0);
            (rp.attached.len() == 1 && rp.attached[0] == (rel, reqs[i].1) && rel.norm1() == 1 && !rp.disabled).then_some(rel)
        };

        if self.groups[gi].presenting.is_none() {
            let open = (0..reqs.len()).filter(|&i| {
                !self.groups[gi].filled[i] && dependency(reqs, i).is_none_or(|k| self.groups[gi].filled[k])
            });
            let mut pick = None;
            for i in open {
                let cand = self
                    .members
                    .iter()
                    .filter(|(_, m)| m.group == Some(gi) && m.slot == Some(i))
                    .find(|(n, _)| presented(&self.store, n, i).is_some())
                    .map(|(n, _)| n.clone());
                if let Some(r) = cand {
                    pick = Some(Presenting { slot: i, retriever: r, stage: Handshake::Offer });
                    break;
                }
            }
            self.groups[gi].presenting = pick;
        }
        let Some(pres) = self.groups[gi].presenting.clone() else { return };
        let i = pres.slot;
        let r = pres.retriever.clone();
        let Some(rp) = by_name.get(&r) else {
            self.groups[gi].presenting = None;
            return;
        };
        let rid = self.members[&r].id;
        let oid = self.members[origin].id;
        let staged_has = op.attached.contains(&reqs[i]);
        let mut stage = pres.stage;
        if stage == Handshake::Verify {
            if staged_has && rp.attached.is_empty() {
                self.groups[gi].filled[i] = true;
                self.groups[gi].presenting = None;
                events.push(TeamEvent::SlotFilled { group: gi, slot: i, by: r.clone() });
                self.members.get_mut(&r).unwrap().slot = None;
                if self.groups[gi].deliverer.is_none() {
                    self.groups[gi].deliverer = Some(r.clone());
                    self.set_role(&r, Role::Deliverer, events);
                }
                return;
            }
            stage = if staged_has { Handshake::Detach } else { Handshake::Offer };
        }
        if stage == Handshake::Detach && staged_has {
            let held = sizes.delta(self.store.pos(&r), anchor + reqs[i].0);
            if let Some(d) = dir_to(held) {
                actions.insert(r.clone(), Action::Detach(d));
                actions.insert(origin.into(), Action::Skip);
                self.groups[gi].presenting.as_mut().unwrap().stage = Handshake::Verify;
                return;
            }
        }
        // offer
        let Some(rel) = presented(&self.store, &r, i) else {
            self.groups[gi].presenting = None;
            return;
        };
        match dependency(reqs, i) {
            None => {
                actions.insert(origin.into(), Action::Attach(Direction::S));
                actions.insert(r.clone(), Action::Detach(dir_to(rel).unwrap()));
                self.groups[gi].presenting.as_mut().unwrap().stage = Handshake::Verify;
            }
            Some(k) => {
                let theirs = sizes.delta(self.store.pos(&r), anchor + reqs[k].0);
                actions.insert(origin.into(), Action::Connect { partner: rid, mine: reqs[k].0, theirs: reqs[i].0 });
                actions.insert(r.clone(), Action::Connect { partner: oid, mine: rel, theirs });
                self.groups[gi].presenting.as_mut().unwrap().stage = Handshake::Detach;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run_deliverer(
        &mut self,
        gi: usize,
        step: u64,
        anchor: RelOffset,
        task: &Task,
        by_name: &BTreeMap<String, Percept>,
        actions: &mut BTreeMap<String, Action>,
        planner: &mut dyn FnMut(&Problem) -> PlanOutcome,
        events: &mut Vec<TeamEvent>,
    ) {
        let sizes = self.store.sizes();
        let Some(d) = self.groups[gi].deliverer.clone() else { return };
        let Some(dp) = by_name.get(&d) else { return };
        if dp.disabled {
            actions.insert(d, Action::Skip);
            return;
        }
        let origin = self.groups[gi].origin.clone().unwrap();
        let op = &by_name[&origin];
        let here = self.store.pos(&d);
        let complete = self.groups[gi].presenting.is_none() && {
            let mut a = op.attached.clone();
            let mut b = task.requirements.clone();
            a.sort();
            b.sort();
            a == b
        };
        if dp.accepted.as_deref() != Some(task.name.as_str()) {
            let boards = self.store.group_map(&d).positions(StaticKind::Taskboard);
            let Some(tb) = crate::mapping::nearest(boards, anchor, &sizes) else {
                let a = self.explore(&d, dp, Some(anchor), planner, events);
                actions.insert(d, a);
                return;
            };
            let a = if sizes.distance(here, tb) <= self.config.accept_radius {
                if complete {
                    Action::Accept(task.name.clone())
                } else {
                    Action::Skip
                }
            } else {
                step_action(self.navigate(&d, dp, tb, planner, events))
            };
            actions.insert(d, a);
            return;
        }

        // accepted: go to the cell on top of the origin
        let tops: Vec<RelOffset> = [Direction::N, Direction::W, Direction::E]
            .iter()
            .map(|dir| sizes.norm(anchor + dir.offset()))
            .collect();
        if let Some(&t) = tops.iter().find(|t| sizes.distance(here, **t) == 0) {
            if !complete {
                actions.insert(d, Action::Skip);
                return;
            }
            let escape = Self::escape_dir(op, sizes.delta(anchor, t));
            if escape.is_some() && !actions.get(&origin).is_some_and(|a| *a != Action::Skip) {
                actions.insert(origin, Action::Detach(Direction::S));
                actions.insert(d, Action::Skip);
                self.groups[gi].presenting = None;
                self.groups[gi].swap = Some(Swap { stage: SwapStage::Moving, detached_at: step });
                events.push(TeamEvent::SwapDetach { group: gi });
            } else {
                actions.insert(d, Action::Skip);
            }
            return;
        }
        let t = tops
            .iter()
            .copied()
            .filter(|t| free_in_view(dp, sizes.delta(here, *t)))
            .min_by_key(|t| sizes.distance(here, *t))
            .unwrap_or(tops[0]);
        let a = step_action(self.navigate(&d, dp, t, planner, events));
        actions.insert(d, a);
    }

    /// Free neighbour of the origin other than south and the deliverer's cell.
    fn escape_dir(op: &Percept, deliverer_rel: RelOffset) -> Option<Direction> {
        [Direction::N, Direction::W, Direction::E]
            .into_iter()
            .filter(|d| d.offset() != deliverer_rel)
            .find(|d| free_in_view(op, d.offset()))
    }

    #[allow(clippy::too_many_arguments)]
    fn run_swap(
        &mut self,
        gi: usize,
        step: u64,
        anchor: RelOffset,
        by_name: &BTreeMap<String, Percept>,
        actions: &mut BTreeMap<String, Action>,
        planner: &mut dyn FnMut(&Problem) -> PlanOutcome,
        events: &mut Vec<TeamEvent>,
    ) {
        let _ = planner;
        let sizes = self.store.sizes();
        let origin = self.groups[gi].origin.clone().unwrap();
        let Some(d) = self.groups[gi].deliverer.clone() else {
            self.groups[gi].swap = None;
            return;
        };
        let (op, dp) = (&by_name[&origin], &by_name[&d]);
        let swap = self.groups[gi].swap.clone().unwrap();
        let task = self.groups[gi].target.clone();
        let opos = self.store.pos(&origin);
        let dpos = self.store.pos(&d);
        match swap.stage {
            SwapStage::Moving => {
                if sizes.distance(opos, anchor) == 0 && step >= swap.detached_at + 2 {
                    // the origin could not step aside: take the structure back
                    actions.insert(origin.clone(), Action::Attach(Direction::S));
                    actions.insert(d.clone(), Action::Skip);
                    self.groups[gi].swap = None;
                    events.push(TeamEvent::SwapAbort { group: gi });
                    return;
                }
                if sizes.distance(opos, anchor) == 0 {
                    let drel = sizes.delta(anchor, dpos);
                    let a = Self::escape_dir(op, drel).map(Action::Move).unwrap_or(Action::Skip);
                    actions.insert(origin.clone(), a);
                } else {
                    actions.insert(origin.clone(), Action::Skip);
                }
                let rel = sizes.delta(dpos, anchor);
                if rel == RelOffset::ZERO {
                    actions.insert(d.clone(), Action::Attach(Direction::S));
                    self.groups[gi].swap.as_mut().unwrap().stage = SwapStage::Attaching;
                } else {
                    actions.insert(d.clone(), dir_to(rel).map(Action::Move).unwrap_or(Action::Skip));
                }
            }
            SwapStage::Attaching => {
                actions.insert(origin.clone(), Action::Skip);
                if !dp.attached.is_empty() {
                    let window = (step - 1) - swap.detached_at;
                    events.push(TeamEvent::SwapAttach { group: gi, window });
                    let name = task.map(|t| t.name).unwrap_or_default();
                    actions.insert(d.clone(), Action::Submit(name));
                    self.groups[gi].swap.as_mut().unwrap().stage = SwapStage::Submitting;
                } else {
                    actions.insert(d.clone(), Action::Attach(Direction::S));
                }
            }
            SwapStage::Submitting => {
                actions.insert(origin.clone(), Action::Skip);
                if dp.attached.is_empty() {
                    if let Some(t) = &task {
                        events.push(TeamEvent::Submitted { group: gi, task: t.name.clone(), agent: d.clone() });
                    }
                }
                // either way the deliverer now holds the anchor
                self.set_role(&origin, Role::Retriever, events);
                self.set_role(&d, Role::Origin, events);
                let g = &mut self.groups[gi];
                g.origin = Some(d.clone());
                g.deliverer = None;
                g.target = None;
                g.filled.clear();
                g.presenting = None;
                g.swap = None;
                let _ = dp;
                actions.insert(d, Action::Skip);
            }
        }
    }
}
