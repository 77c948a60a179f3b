//! Transition rules of the leader-based merge protocol.
//!
//! Both the live blackboard ([`super::MapStore::merge`]) and the explicit-state
//! checker drive merges through [`ProtoState::enabled`], so the two cannot
//! drift apart. A merge runs as:
//!
//! 1. `sight.a.b` opens a sighting between agents `a` and `b`.
//! 2. `report.x.L` each sighting agent sends its position, in its leader's frame, to its leader.
//! 3. `propose.Lb.La` b's leader forwards b's report to a's current leader.
//! 4. `absorb.W.L` a's leader, holding both, picks a winner, rewrites the board and
//!    posts a notification to every absorbed member. If either group changed since
//!    the reports were sent it emits `abort.a.b` instead and the sighting reopens;
//!    if a and b already share a leader it emits `skip.a.b`.
//! 5. `notify.m.W` updates a member's belief about its leader.
//! 6. `done` once every sighting is closed, no message is in flight and every
//!    belief matches the board.
//!
//! Channels are unordered sets: any in-flight message may be delivered next.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::torus::RelOffset;

/// How the absorbing leader picks the surviving frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LeaderRule {
    /// The lexicographically smallest leader name survives.
    #[default]
    SmallestName,
    /// The larger group survives; ties go to the smaller name.
    LargerGroup,
    /// Either leader may win. Only useful to exercise the checker.
    Either,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Membership {
    pub leader: String,
    /// Adding this to a position in the member's own frame gives the leader frame.
    pub offset: RelOffset,
}

pub type Board = BTreeMap<String, Membership>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SightingSpec {
    pub a: String,
    pub b: String,
    /// Position of `b` relative to `a` when they saw each other.
    pub offset: RelOffset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    Open { a_sent: bool, b_sent: bool, proposed: bool },
    Closed,
}

const OPEN: Phase = Phase::Open { a_sent: false, b_sent: false, proposed: false };

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Msg {
    Report { sighting: usize, agent: String, leader: String, pos: RelOffset },
    Propose { sighting: usize, from: String, to: String, pos: RelOffset },
    Notify { member: String, leader: String, version: u64 },
}

/// Fixed inputs of one protocol run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rules {
    pub rule: LeaderRule,
    pub sightings: Vec<SightingSpec>,
    /// Each agent's position in its own frame; constant during a run.
    pub positions: BTreeMap<String, RelOffset>,
    /// `done` also requires a single group.
    pub single_group: bool,
    /// Fault injection: absorbs do not notify the absorbed leader.
    pub drop_notify: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Event {
    Sight { a: String, b: String },
    Report { agent: String, leader: String },
    Propose { from: String, to: String },
    Absorb { winner: String, loser: String },
    Skip { a: String, b: String },
    Abort { a: String, b: String },
    Notify { member: String, leader: String },
    Done,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Sight { a, b } => write!(f, "sight.{a}.{b}"),
            Event::Report { agent, leader } => write!(f, "report.{agent}.{leader}"),
            Event::Propose { from, to } => write!(f, "propose.{from}.{to}"),
            Event::Absorb { winner, loser } => write!(f, "absorb.{winner}.{loser}"),
            Event::Skip { a, b } => write!(f, "skip.{a}.{b}"),
            Event::Abort { a, b } => write!(f, "abort.{a}.{b}"),
            Event::Notify { member, leader } => write!(f, "notify.{member}.{leader}"),
            Event::Done => f.write_str("done"),
        }
    }
}

pub const EVENT_KINDS: [&str; 8] = ["sight", "report", "propose", "absorb", "skip", "abort", "notify", "done"];

/// Side effect of an absorb, for callers that keep per-group data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Absorbed {
    pub winner: String,
    pub loser: String,
    /// Adding this to a loser-frame position gives the winner frame.
    pub translation: RelOffset,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProtoState {
    pub board: Board,
    pub belief: BTreeMap<String, (String, u64)>,
    pub phases: Vec<Phase>,
    pub channel: BTreeSet<Msg>,
    pub version: u64,
    pub done: bool,
}

pub fn group_size(board: &Board, leader: &str) -> usize {
    board.values().filter(|m| m.leader == leader).count()
}

pub fn group_count(board: &Board) -> usize {
    board.values().map(|m| &m.leader).collect::<BTreeSet<_>>().len()
}

/// Every agent points at a leader that points at itself with a zero offset.
pub fn check_board(board: &Board) -> Result<(), String> {
    for (name, m) in board {
        match board.get(&m.leader) {
            Some(l) if l.leader == m.leader && l.offset == RelOffset::ZERO => {}
            _ => return Err(format!("{name} points at {} which is not a root", m.leader)),
        }
    }
    Ok(())
}

impl ProtoState {
    pub fn new(board: Board, sightings: usize) -> Self {
        let belief = board.iter().map(|(n, m)| (n.clone(), (m.leader.clone(), 0))).collect();
        ProtoState {
            board,
            belief,
            phases: alloc::vec![Phase::Idle; sightings],
            channel: BTreeSet::new(),
            version: 0,
            done: false,
        }
    }

    fn leader(&self, agent: &str) -> &str {
        &self.board[agent].leader
    }

    fn frame_pos(&self, rules: &Rules, agent: &str) -> RelOffset {
        rules.positions.get(agent).copied().unwrap_or(RelOffset::ZERO) + self.board[agent].offset
    }

    fn is_done(&self, rules: &Rules) -> bool {
        self.phases.iter().all(|p| *p == Phase::Closed)
            && self.channel.is_empty()
            && self.board.iter().all(|(n, m)| self.belief.get(n).map(|b| &b.0) == Some(&m.leader))
            && (!rules.single_group || group_count(&self.board) <= 1)
    }

    /// All transitions out of this state, in a fixed order.
    pub fn enabled(&self, rules: &Rules) -> Vec<(Event, ProtoState, Option<Absorbed>)> {
        self.successors(rules, false)
    }

    /// The first entry of [`ProtoState::enabled`], without building the rest.
    pub fn first_enabled(&self, rules: &Rules) -> Option<(Event, ProtoState, Option<Absorbed>)> {
        self.successors(rules, true).into_iter().next()
    }

    fn successors(&self, rules: &Rules, first_only: bool) -> Vec<(Event, ProtoState, Option<Absorbed>)> {
        let mut out = Vec::new();
        if self.done {
            return out;
        }
        for (i, s) in rules.sightings.iter().enumerate() {
            if first_only && !out.is_empty() {
                return out;
            }
            match self.phases[i] {
                Phase::Idle => {
                    let mut next = self.clone();
                    next.phases[i] = OPEN;
                    out.push((Event::Sight { a: s.a.clone(), b: s.b.clone() }, next, None));
                }
                Phase::Open { a_sent, b_sent, proposed } => {
                    if !a_sent && !b_sent && self.leader(&s.a) == self.leader(&s.b) {
                        let mut next = self.clone();
                        next.phases[i] = Phase::Closed;
                        out.push((Event::Skip { a: s.a.clone(), b: s.b.clone() }, next, None));
                        continue;
                    }
                    for (agent, sent) in [(&s.a, a_sent), (&s.b, b_sent)] {
                        if sent {
                            continue;
                        }
                        let leader = String::from(self.leader(agent));
                        let mut next = self.clone();
                        next.channel.insert(Msg::Report {
                            sighting: i,
                            agent: agent.clone(),
                            leader: leader.clone(),
                            pos: self.frame_pos(rules, agent),
                        });
                        next.phases[i] = if agent == &s.a && !a_sent {
                            Phase::Open { a_sent: true, b_sent, proposed }
                        } else {
                            Phase::Open { a_sent, b_sent: true, proposed }
                        };
                        out.push((Event::Report { agent: agent.clone(), leader }, next, None));
                    }
                    self.push_propose(rules, i, &mut out);
                    self.push_absorb(rules, i, &mut out);
                }
                Phase::Closed => {}
            }
        }
        for msg in &self.channel {
            if first_only && !out.is_empty() {
                return out;
            }
            if let Msg::Notify { member, leader, version } = msg {
                let mut next = self.clone();
                next.channel.remove(msg);
                let cur = next.belief.get(member).map(|b| b.1).unwrap_or(0);
                if *version > cur {
                    next.belief.insert(member.clone(), (leader.clone(), *version));
                }
                out.push((Event::Notify { member: member.clone(), leader: leader.clone() }, next, None));
            }
        }
        if first_only && !out.is_empty() {
            return out;
        }
        if self.is_done(rules) {
            let mut next = self.clone();
            next.done = true;
            out.push((Event::Done, next, None));
        }
        out
    }

    fn push_propose(&self, rules: &Rules, i: usize, out: &mut Vec<(Event, ProtoState, Option<Absorbed>)>) {
        let s = &rules.sightings[i];
        let Phase::Open { a_sent, b_sent, proposed: false } = self.phases[i] else { return };
        let report = self.channel.iter().find(|m| matches!(m, Msg::Report { sighting, agent, .. } if *sighting == i && *agent == s.b));
        let Some(report @ Msg::Report { leader, pos, .. }) = report else { return };
        let to = String::from(self.leader(&s.a));
        let mut next = self.clone();
        next.channel.remove(report);
        next.channel.insert(Msg::Propose { sighting: i, from: leader.clone(), to: to.clone(), pos: *pos });
        next.phases[i] = Phase::Open { a_sent, b_sent, proposed: true };
        out.push((Event::Propose { from: leader.clone(), to }, next, None));
    }

    fn push_absorb(&self, rules: &Rules, i: usize, out: &mut Vec<(Event, ProtoState, Option<Absorbed>)>) {
        let s = &rules.sightings[i];
        let find_report =
            |m: &&Msg| matches!(m, Msg::Report { sighting, agent, .. } if *sighting == i && *agent == s.a);
        let find_proposal = |m: &&Msg| matches!(m, Msg::Propose { sighting, .. } if *sighting == i);
        let (Some(ra), Some(pb)) = (self.channel.iter().find(find_report), self.channel.iter().find(find_proposal)) else {
            return;
        };
        let (Msg::Report { leader: la, pos: pos_a, .. }, Msg::Propose { from: lb, to, pos: pos_b, .. }) = (ra, pb) else {
            unreachable!()
        };
        let mut base = self.clone();
        base.channel.remove(ra);
        base.channel.remove(pb);

        if self.leader(&s.a) == self.leader(&s.b) {
            let mut next = base;
            next.phases[i] = Phase::Closed;
            out.push((Event::Skip { a: s.a.clone(), b: s.b.clone() }, next, None));
            return;
        }
        let fresh = la == to && self.leader(&s.a) == la.as_str() && self.leader(&s.b) == lb.as_str();
        if !fresh {
            let mut next = base;
            next.phases[i] = OPEN;
            out.push((Event::Abort { a: s.a.clone(), b: s.b.clone() }, next, None));
            return;
        }
        // Maps b's leader frame into a's leader frame.
        let t = *pos_a + s.offset - *pos_b;
        let winners: Vec<bool> = match rules.rule {
            LeaderRule::SmallestName => alloc::vec![la <= lb],
            LeaderRule::LargerGroup => {
                let (na, nb) = (group_size(&self.board, la), group_size(&self.board, lb));
                alloc::vec![na > nb || (na == nb && la <= lb)]
            }
            LeaderRule::Either => alloc::vec![true, false],
        };
        for a_wins in winners {
            let (winner, loser, translation) = if a_wins { (la, lb, t) } else { (lb, la, -t) };
            let mut next = base.clone();
            next.phases[i] = Phase::Closed;
            next.version += 1;
            let members: Vec<String> =
                next.board.iter().filter(|(_, m)| m.leader == *loser).map(|(n, _)| n.clone()).collect();
            for m in &members {
                let entry = next.board.get_mut(m).unwrap();
                entry.leader = winner.clone();
                entry.offset = entry.offset + translation;
                if rules.drop_notify && m == loser {
                    continue;
                }
                next.channel.insert(Msg::Notify { member: m.clone(), leader: winner.clone(), version: next.version });
            }
            out.push((
                Event::Absorb { winner: winner.clone(), loser: loser.clone() },
                next,
                Some(Absorbed { winner: winner.clone(), loser: loser.clone(), translation, members }),
            ));
        }
    }
}

/// Runs to quiescence always taking the first enabled transition.
pub fn run_canonical(rules: &Rules, start: ProtoState) -> (ProtoState, Vec<Event>, Vec<Absorbed>) {
    let mut state = start;
    let mut trace = Vec::new();
    let mut effects = Vec::new();
    while let Some((ev, next, eff)) = state.first_enabled(rules) {
        debug_assert_eq!(check_board(&next.board), Ok(()));
        trace.push(ev);
        effects.extend(eff);
        state = next;
    }
    (state, trace, effects)
}
