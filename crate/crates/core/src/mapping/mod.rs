//! Static-entity maps, the team blackboard and torus size discovery.
//!
//! Each agent records dispensers, goals and taskboards in a frame anchored at
//! its own start cell. Agents that identify each other merge groups; every
//! group keeps one combined map in its leader's frame. Once an axis length is
//! known all coordinates on that axis are reduced modulo it.

pub mod cartography;
pub mod protocol;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::torus::{axis_delta, Dims, RelOffset};
use crate::world::{Action, BlockType, Percept, TerrainKind, ThingKind};

pub use protocol::{Board, Event as MergeEvent, LeaderRule, Membership};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    Horizontal,
    Vertical,
}

impl Axis {
    pub fn of(self, o: RelOffset) -> i32 {
        match self {
            Axis::Horizontal => o.dx,
            Axis::Vertical => o.dy,
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::Horizontal => Axis::Vertical,
            Axis::Vertical => Axis::Horizontal,
        }
    }
}

/// Torus side lengths as far as they are known.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSizes {
    pub w: Option<i32>,
    pub h: Option<i32>,
}

impl AxisSizes {
    pub fn known(dims: Dims) -> Self {
        AxisSizes { w: Some(dims.w()), h: Some(dims.h()) }
    }

    pub fn get(&self, axis: Axis) -> Option<i32> {
        match axis {
            Axis::Horizontal => self.w,
            Axis::Vertical => self.h,
        }
    }

    pub fn set(&mut self, axis: Axis, len: i32) {
        match axis {
            Axis::Horizontal => self.w = Some(len),
            Axis::Vertical => self.h = Some(len),
        }
    }

    pub fn dims(&self) -> Option<Dims> {
        Dims::new(self.w?, self.h?)
    }

    /// Reduces known axes into `[0, len)`; unknown axes are left as they are.
    pub fn norm(&self, p: RelOffset) -> RelOffset {
        RelOffset::new(
            self.w.map_or(p.dx, |w| p.dx.rem_euclid(w)),
            self.h.map_or(p.dy, |h| p.dy.rem_euclid(h)),
        )
    }

    /// Shortest displacement from `a` to `b`, wrapping on known axes only.
    pub fn delta(&self, a: RelOffset, b: RelOffset) -> RelOffset {
        RelOffset::new(
            self.w.map_or(b.dx - a.dx, |w| axis_delta(a.dx, b.dx, w)),
            self.h.map_or(b.dy - a.dy, |h| axis_delta(a.dy, b.dy, h)),
        )
    }

    pub fn distance(&self, a: RelOffset, b: RelOffset) -> i32 {
        self.delta(a, b).norm1()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticEntities {
    pub dispensers: BTreeSet<(RelOffset, BlockType)>,
    pub goals: BTreeSet<RelOffset>,
    pub taskboards: BTreeSet<RelOffset>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StaticKind {
    Dispenser(BlockType),
    Goal,
    Taskboard,
}

impl StaticEntities {
    pub fn len(&self) -> usize {
        self.dispensers.len() + self.goals.len() + self.taskboards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn translated(&self, t: RelOffset) -> StaticEntities {
        StaticEntities {
            dispensers: self.dispensers.iter().map(|&(p, k)| (p + t, k)).collect(),
            goals: self.goals.iter().map(|&p| p + t).collect(),
            taskboards: self.taskboards.iter().map(|&p| p + t).collect(),
        }
    }

    pub fn absorb(&mut self, other: &StaticEntities) {
        self.dispensers.extend(other.dispensers.iter().copied());
        self.goals.extend(other.goals.iter().copied());
        self.taskboards.extend(other.taskboards.iter().copied());
    }

    pub fn normalize(&mut self, sizes: &AxisSizes) {
        self.dispensers = self.dispensers.iter().map(|&(p, k)| (sizes.norm(p), k)).collect();
        self.goals = self.goals.iter().map(|&p| sizes.norm(p)).collect();
        self.taskboards = self.taskboards.iter().map(|&p| sizes.norm(p)).collect();
    }

    /// Adds what `percept` shows, seen from `at`.
    pub fn record(&mut self, percept: &Percept, at: RelOffset, sizes: &AxisSizes) {
        for t in &percept.things {
            if let ThingKind::Dispenser(k) = t.kind {
                self.dispensers.insert((sizes.norm(at + t.offset), k));
            }
        }
        for &(o, kind) in &percept.terrain {
            if kind == TerrainKind::Goal {
                self.goals.insert(sizes.norm(at + o));
            }
        }
        for &o in &percept.taskboards {
            self.taskboards.insert(sizes.norm(at + o));
        }
    }

    pub fn positions(&self, kind: StaticKind) -> Vec<RelOffset> {
        match kind {
            StaticKind::Dispenser(k) => self.dispensers.iter().filter(|d| d.1 == k).map(|d| d.0).collect(),
            StaticKind::Goal => self.goals.iter().copied().collect(),
            StaticKind::Taskboard => self.taskboards.iter().copied().collect(),
        }
    }

    pub fn nearest(&self, kind: StaticKind, from: RelOffset, sizes: &AxisSizes) -> Option<RelOffset> {
        nearest(self.positions(kind), from, sizes)
    }
}

/// Closest point to `from`; ties go to the smaller `(y, x)`.
pub fn nearest(points: impl IntoIterator<Item = RelOffset>, from: RelOffset, sizes: &AxisSizes) -> Option<RelOffset> {
    points.into_iter().min_by_key(|&p| (sizes.distance(from, p), p.dy, p.dx))
}

/// One agent's record of static entities in its own start frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalMap {
    pub owner: String,
    pub statics: StaticEntities,
    pub self_pos: RelOffset,
    pub sizes: AxisSizes,
}

impl LocalMap {
    pub fn new(owner: impl Into<String>) -> Self {
        LocalMap { owner: owner.into(), statics: StaticEntities::default(), self_pos: RelOffset::ZERO, sizes: AxisSizes::default() }
    }

    pub fn record_statics(&mut self, percept: &Percept) {
        self.statics.record(percept, self.self_pos, &self.sizes);
    }

    pub fn normalize(&mut self, sizes: AxisSizes) {
        self.sizes = sizes;
        self.statics.normalize(&sizes);
        self.self_pos = sizes.norm(self.self_pos);
    }

    /// Applies the outcome of the previous action to `self_pos`.
    pub fn track_move(&mut self, percept: &Percept) {
        if let (Action::Move(d), true) = (&percept.last_action, percept.last_action_result.is_success()) {
            self.self_pos = self.sizes.norm(self.self_pos + d.offset());
        }
    }
}

/// Record of one merge as seen on the blackboard.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeTranscript {
    pub events: Vec<MergeEvent>,
    pub absorbed: Vec<protocol::Absorbed>,
}

impl MergeTranscript {
    pub fn merged(&self) -> bool {
        !self.absorbed.is_empty()
    }
}

/// Team blackboard: every agent's own map, group membership and the
/// combined map of each group in its leader's frame.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapStore {
    maps: BTreeMap<String, LocalMap>,
    board: Board,
    merged: BTreeMap<String, StaticEntities>,
    sizes: AxisSizes,
    rule: LeaderRule,
}

impl MapStore {
    pub fn new(rule: LeaderRule) -> Self {
        MapStore { rule, ..Default::default() }
    }

    pub fn join(&mut self, name: &str) {
        if self.maps.contains_key(name) {
            return;
        }
        let mut map = LocalMap::new(name);
        map.sizes = self.sizes;
        self.maps.insert(name.into(), map);
        self.board.insert(name.into(), Membership { leader: name.into(), offset: RelOffset::ZERO });
        self.merged.insert(name.into(), StaticEntities::default());
    }

    pub fn sizes(&self) -> AxisSizes {
        self.sizes
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn map(&self, name: &str) -> Option<&LocalMap> {
        self.maps.get(name)
    }

    pub fn membership(&self, name: &str) -> &Membership {
        &self.board[name]
    }

    pub fn leader_of(&self, name: &str) -> &str {
        &self.board[name].leader
    }

    pub fn members(&self, leader: &str) -> Vec<String> {
        self.board.iter().filter(|(_, m)| m.leader == leader).map(|(n, _)| n.clone()).collect()
    }

    pub fn leaders(&self) -> Vec<String> {
        self.board.iter().filter(|(n, m)| **n == m.leader).map(|(n, _)| n.clone()).collect()
    }

    /// Combined static map of `name`'s group, in the leader's frame.
    pub fn group_map(&self, name: &str) -> &StaticEntities {
        &self.merged[self.leader_of(name)]
    }

    /// Position in the agent's own frame.
    pub fn own_pos(&self, name: &str) -> RelOffset {
        self.maps[name].self_pos
    }

    /// Position in the leader's frame.
    pub fn pos(&self, name: &str) -> RelOffset {
        self.sizes.norm(self.maps[name].self_pos + self.board[name].offset)
    }

    /// Converts an offset seen by `name` into its leader's frame.
    pub fn to_frame(&self, name: &str, o: RelOffset) -> RelOffset {
        self.sizes.norm(self.pos(name) + o)
    }

    /// Tracks movement and records statics for one agent.
    pub fn observe(&mut self, name: &str, percept: &Percept) {
        let map = self.maps.get_mut(name).expect("joined");
        map.track_move(percept);
        map.record_statics(percept);
        let at = self.pos(name);
        let leader = self.board[name].leader.clone();
        let sizes = self.sizes;
        self.merged.get_mut(&leader).unwrap().record(percept, at, &sizes);
    }

    /// Is the entity `name` sees at `x` a known group member?
    pub fn explains(&self, name: &str, x: RelOffset) -> bool {
        let leader = self.leader_of(name);
        let target = self.sizes.norm(self.pos(name) + x);
        self.board.iter().any(|(m, mem)| m != name && mem.leader == leader && self.pos(m) == target)
    }

    /// Group members that `name` should currently see at `x`, if any.
    pub fn member_at(&self, name: &str, x: RelOffset) -> Option<&str> {
        let leader = self.leader_of(name);
        let target = self.sizes.norm(self.pos(name) + x);
        self.board
            .iter()
            .find(|(m, mem)| *m != name && mem.leader == leader && self.pos(m) == target)
            .map(|(m, _)| m.as_str())
    }

    /// Runs the merge protocol for one sighting of `b` at `offset` from `a`.
    pub fn merge(&mut self, a: &str, b: &str, offset: RelOffset) -> MergeTranscript {
        self.merge_all(&[(a.into(), b.into(), offset)])
    }

    /// Runs the merge protocol for several concurrent sightings.
    pub fn merge_all(&mut self, sightings: &[(String, String, RelOffset)]) -> MergeTranscript {
        let rules = protocol::Rules {
            rule: self.rule,
            sightings: sightings
                .iter()
                .map(|(a, b, o)| protocol::SightingSpec { a: a.clone(), b: b.clone(), offset: *o })
                .collect(),
            positions: self.maps.iter().map(|(n, m)| (n.clone(), m.self_pos)).collect(),
            single_group: false,
            drop_notify: false,
        };
        let start = protocol::ProtoState::new(self.board.clone(), sightings.len());
        let (end, events, absorbed) = protocol::run_canonical(&rules, start);
        for ab in &absorbed {
            let loser_map = self.merged.remove(&ab.loser).unwrap_or_default();
            let moved = loser_map.translated(ab.translation);
            let win = self.merged.entry(ab.winner.clone()).or_default();
            win.absorb(&moved);
            win.normalize(&self.sizes);
        }
        self.board = end.board;
        for m in self.board.values_mut() {
            m.offset = self.sizes.norm(m.offset);
        }
        MergeTranscript { events, absorbed }
    }

    /// Publishes a measured axis length and reduces every map.
    pub fn set_axis(&mut self, axis: Axis, len: i32) {
        self.sizes.set(axis, len);
        let sizes = self.sizes;
        for map in self.maps.values_mut() {
            map.normalize(sizes);
        }
        for m in self.merged.values_mut() {
            m.normalize(&sizes);
        }
        for m in self.board.values_mut() {
            m.offset = sizes.norm(m.offset);
        }
    }
}
