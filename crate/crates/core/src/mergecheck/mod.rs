//! Explicit-state exploration of the merge protocol.
//!
//! The model is built from the same transition rules the blackboard uses
//! ([`crate::mapping::protocol`]). Exploration is a breadth-first walk over
//! every interleaving; the checks below read the finished graph.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mapping::protocol::{self, Board, Event, LeaderRule, Membership, ProtoState, Rules, SightingSpec, EVENT_KINDS};
use crate::torus::RelOffset;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolModel {
    pub agents: Vec<String>,
    /// True start cell of each agent, used only to check frames.
    pub origins: BTreeMap<String, RelOffset>,
    /// Each agent's position in its own frame.
    pub positions: BTreeMap<String, RelOffset>,
    /// Pre-formed groups; the first member listed is ignored in favour of the rule's leader.
    pub groups: Vec<Vec<String>>,
    pub sightings: Vec<(String, String)>,
    pub rule: LeaderRule,
    pub drop_notify: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("models need 2 to 4 agents, got {0}")]
    AgentCount(usize),
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("agent {0} listed in two groups")]
    DuplicateMember(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn agent_name(i: usize) -> String {
    format!("A{}", i + 1)
}

impl ProtocolModel {
    /// Singleton groups with no sightings yet.
    pub fn singletons(n: usize) -> Result<Self, ModelError> {
        if !(2..=4).contains(&n) {
            return Err(ModelError::AgentCount(n));
        }
        let agents: Vec<String> = (0..n).map(agent_name).collect();
        // Distinct, irregular start cells and small walks since the start.
        let origins = agents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), RelOffset::new(3 * i as i32 + 1, (i * i) as i32 % 5 - 2)))
            .collect();
        let positions = agents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), RelOffset::new(i as i32 % 2, -(i as i32))))
            .collect();
        Ok(ProtocolModel {
            groups: agents.iter().map(|a| vec![a.clone()]).collect(),
            agents,
            origins,
            positions,
            sightings: Vec::new(),
            rule: LeaderRule::SmallestName,
            drop_notify: false,
        })
    }

    /// `min(n, k+1)` round-robin groups joined by `k` chained sightings.
    pub fn generated(n: usize, k: usize) -> Result<Self, ModelError> {
        let mut m = Self::singletons(n)?;
        let g = n.min(k + 1).max(1);
        let mut groups: Vec<Vec<String>> = vec![Vec::new(); g];
        for (i, a) in m.agents.iter().enumerate() {
            groups[i % g].push(a.clone());
        }
        m.groups = groups;
        m.sightings = (0..k)
            .map(|j| {
                let from = m.groups[j % g].last().unwrap().clone();
                let to = m.groups[(j + 1) % g][0].clone();
                (from, to)
            })
            .collect();
        Ok(m)
    }

    /// Three singletons, sightings A1-A2 and A2-A3 racing each other.
    pub fn interference() -> Self {
        Self::generated(3, 2).expect("valid")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(2..=4).contains(&self.agents.len()) {
            return Err(ModelError::AgentCount(self.agents.len()));
        }
        let known: BTreeSet<&String> = self.agents.iter().collect();
        let mut seen = BTreeSet::new();
        for g in &self.groups {
            for a in g {
                if !known.contains(a) {
                    return Err(ModelError::UnknownAgent(a.clone()));
                }
                if !seen.insert(a) {
                    return Err(ModelError::DuplicateMember(a.clone()));
                }
            }
        }
        for (a, b) in &self.sightings {
            for x in [a, b] {
                if !known.contains(x) {
                    return Err(ModelError::UnknownAgent(x.clone()));
                }
            }
        }
        Ok(())
    }

    fn leader_of_group(&self, g: &[String]) -> String {
        // Every rule agrees on singletons; pre-formed groups are led by their smallest name.
        g.iter().min().cloned().unwrap_or_default()
    }

    pub fn initial_board(&self) -> Board {
        let mut board = Board::new();
        for g in &self.groups {
            let leader = self.leader_of_group(g);
            for a in g {
                board.insert(a.clone(), Membership { leader: leader.clone(), offset: self.origins[a] - self.origins[&leader] });
            }
        }
        for a in &self.agents {
            board.entry(a.clone()).or_insert_with(|| Membership { leader: a.clone(), offset: RelOffset::ZERO });
        }
        board
    }

    pub fn rules(&self) -> Rules {
        let truth = |a: &String| self.origins[a] + self.positions[a];
        Rules {
            rule: self.rule,
            sightings: self
                .sightings
                .iter()
                .map(|(a, b)| SightingSpec { a: a.clone(), b: b.clone(), offset: truth(b) - truth(a) })
                .collect(),
            positions: self.positions.clone(),
            single_group: self.connects_everyone(),
            drop_notify: self.drop_notify,
        }
    }

    /// Do groups plus sightings form one connected component?
    fn connects_everyone(&self) -> bool {
        let board = self.initial_board();
        let mut parent: BTreeMap<String, String> = board.iter().map(|(a, m)| (a.clone(), m.leader.clone())).collect();
        fn find(p: &BTreeMap<String, String>, mut x: String) -> String {
            while p[&x] != x {
                x = p[&x].clone();
            }
            x
        }
        for (a, b) in &self.sightings {
            let (ra, rb) = (find(&parent, a.clone()), find(&parent, b.clone()));
            parent.insert(ra, rb);
        }
        let roots: BTreeSet<String> = self.agents.iter().map(|a| find(&parent, a.clone())).collect();
        roots.len() == 1
    }

    pub fn initial_state(&self) -> ProtoState {
        ProtoState::new(self.initial_board(), self.sightings.len())
    }

    /// Offsets agree with the true start cells.
    pub fn frames_consistent(&self, board: &Board) -> bool {
        board.iter().all(|(a, m)| m.offset == self.origins[a] - self.origins[&m.leader])
    }
}

#[derive(Clone, Debug)]
pub struct StateGraph {
    pub states: Vec<ProtoState>,
    pub edges: Vec<Vec<(Event, usize)>>,
    parent: Vec<Option<(usize, Event, usize)>>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error("state bound {bound} exceeded; path: {}", path.join(" "))]
    Bound { bound: usize, path: Vec<String> },
    #[error("invariant broken ({msg}); path: {}", path.join(" "))]
    Invariant { msg: String, path: Vec<String> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub const DEFAULT_STATE_BOUND: usize = 200_000;

pub fn explore(model: &ProtocolModel, bound: usize) -> Result<StateGraph, ExploreError> {
    model.validate()?;
    let rules = model.rules();
    let init = model.initial_state();
    let mut graph = StateGraph { states: vec![init.clone()], edges: vec![Vec::new()], parent: vec![None] };
    let mut index: BTreeMap<ProtoState, usize> = BTreeMap::new();
    index.insert(init, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let here = graph.states[i].clone();
        for (k, (ev, next, _)) in here.enabled(&rules).into_iter().enumerate() {
            if let Err(msg) = protocol::check_board(&next.board) {
                let mut path = graph.trace_labels(i);
                path.push(ev.to_string());
                return Err(ExploreError::Invariant { msg, path });
            }
            if !model.frames_consistent(&next.board) {
                let mut path = graph.trace_labels(i);
                path.push(ev.to_string());
                return Err(ExploreError::Invariant { msg: "frame offsets disagree with ground truth".into(), path });
            }
            let j = match index.get(&next) {
                Some(&j) => j,
                None => {
                    if graph.states.len() >= bound {
                        let mut path = graph.trace_labels(i);
                        path.push(ev.to_string());
                        return Err(ExploreError::Bound { bound, path });
                    }
                    let j = graph.states.len();
                    index.insert(next.clone(), j);
                    graph.states.push(next);
                    graph.edges.push(Vec::new());
                    graph.parent.push(Some((i, ev.clone(), k)));
                    queue.push_back(j);
                    j
                }
            };
            graph.edges[i].push((ev, j));
        }
    }
    Ok(graph)
}

impl StateGraph {
    /// Shortest event sequence from the initial state.
    pub fn trace_to(&self, mut i: usize) -> Vec<Event> {
        let mut out = Vec::new();
        while let Some((p, ev, _)) = &self.parent[i] {
            out.push(ev.clone());
            i = *p;
        }
        out.reverse();
        out
    }

    /// Positions in the enabled-transition list along the stored path.
    /// Labels alone can be ambiguous when an agent takes part in two sightings.
    pub fn choices_to(&self, mut i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some((p, _, k)) = &self.parent[i] {
            out.push(*k);
            i = *p;
        }
        out.reverse();
        out
    }

    pub fn trace_labels(&self, i: usize) -> Vec<String> {
        self.trace_to(i).iter().map(|e| e.to_string()).collect()
    }

    pub fn terminals(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.states.len()).filter(|&i| self.edges[i].is_empty())
    }

    pub fn transition_count(&self) -> usize {
        self.edges.iter().map(|e| e.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub counterexamples: Vec<Vec<String>>,
}

impl Verdict {
    fn new(check: &str, counterexamples: Vec<Vec<String>>) -> Self {
        Verdict { check: check.into(), pass: counterexamples.is_empty(), counterexamples }
    }
}

/// Every state that is not done can move.
pub fn check_deadlock_free(g: &StateGraph) -> Verdict {
    let bad: Vec<Vec<String>> = g.terminals().filter(|&i| !g.states[i].done).map(|i| g.trace_labels(i)).take(1).collect();
    Verdict::new("deadlock-free", bad)
}

/// Weak: some done state is reachable. Strong: every maximal path ends done
/// (no stuck state and no cycle).
pub fn check_reaches_done(g: &StateGraph, strong: bool) -> Verdict {
    if !strong {
        let ok = g.states.iter().any(|s| s.done);
        return Verdict::new("reaches-done", if ok { vec![] } else { vec![vec![]] });
    }
    let stuck = check_deadlock_free(g);
    if !stuck.pass {
        return Verdict::new("reaches-done-strong", stuck.counterexamples);
    }
    // Iterative three-colour DFS for a cycle.
    let n = g.states.len();
    let mut colour = vec![0u8; n];
    for root in 0..n {
        if colour[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        colour[root] = 1;
        while let Some(&mut (v, ref mut k)) = stack.last_mut() {
            if *k < g.edges[v].len() {
                let w = g.edges[v][*k].1;
                *k += 1;
                match colour[w] {
                    0 => {
                        colour[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => {
                        let mut path = g.trace_labels(w);
                        path.push("<cycle>".into());
                        return Verdict::new("reaches-done-strong", vec![path]);
                    }
                    _ => {}
                }
            } else {
                colour[v] = 2;
                stack.pop();
            }
        }
    }
    Verdict::new("reaches-done-strong", vec![])
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("event {index} ({label:?}) is not in the model alphabet")]
pub struct UnknownEvent {
    pub index: usize,
    pub label: String,
}

/// Checks that `trace` labels are well formed for the model.
pub fn validate_trace(model: &ProtocolModel, trace: &[String]) -> Result<(), UnknownEvent> {
    for (index, label) in trace.iter().enumerate() {
        let parts: Vec<&str> = label.split('.').collect();
        let ok = match parts.as_slice() {
            ["done"] => true,
            [kind, x, y] => EVENT_KINDS.contains(kind) && *kind != "done" && [x, y].iter().all(|n| model.agents.iter().any(|a| a == **n)),
            _ => false,
        };
        if !ok {
            return Err(UnknownEvent { index, label: label.clone() });
        }
    }
    Ok(())
}

/// The trace can be performed from the initial state (as a prefix of some path).
pub fn check_has_trace(g: &StateGraph, model: &ProtocolModel, trace: &[String]) -> Result<Verdict, UnknownEvent> {
    validate_trace(model, trace)?;
    let mut current: BTreeSet<usize> = BTreeSet::from([0]);
    for (k, label) in trace.iter().enumerate() {
        let next: BTreeSet<usize> = current
            .iter()
            .flat_map(|&i| g.edges[i].iter().filter(|(e, _)| e.to_string() == *label).map(|&(_, j)| j))
            .collect();
        if next.is_empty() {
            let mut refused = trace[..k].to_vec();
            refused.push(format!("{label} <refused>"));
            return Ok(Verdict::new("has-trace", vec![refused]));
        }
        current = next;
    }
    Ok(Verdict::new("has-trace", vec![]))
}

/// All terminal states are done and agree on the leader and every offset.
pub fn check_confluence(g: &StateGraph) -> Verdict {
    let mut first: Option<(usize, &Board)> = None;
    for i in g.terminals() {
        let s = &g.states[i];
        if !s.done {
            return Verdict::new("confluent", vec![g.trace_labels(i)]);
        }
        match first {
            None => first = Some((i, &s.board)),
            Some((j, b)) if b != &s.board => return Verdict::new("confluent", vec![g.trace_labels(j), g.trace_labels(i)]),
            _ => {}
        }
    }
    Verdict::new("confluent", vec![])
}

/// The three graph-wide checks.
pub fn check_all(g: &StateGraph) -> Vec<Verdict> {
    vec![check_deadlock_free(g), check_reaches_done(g, true), check_confluence(g)]
}

/// Parses a scenario file: directives (`agents`, `group`, `sighting`, `rule`,
/// `fault`) followed by one event label per line. `#` starts a comment.
pub fn parse_scenario(text: &str) -> Result<(ProtocolModel, Vec<String>), ModelError> {
    let mut agents: Option<usize> = None;
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut sightings = Vec::new();
    let mut rule = LeaderRule::SmallestName;
    let mut drop_notify = false;
    let mut events = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| ModelError::Parse { line: n + 1, msg: msg.into() };
        let words: Vec<&str> = line.split_whitespace().collect();
        match words[0] {
            "agents" => {
                let k: usize = words.get(1).and_then(|w| w.parse().ok()).ok_or_else(|| err("agents needs a count"))?;
                agents = Some(k);
            }
            "group" => groups.push(words[1..].iter().map(|w| w.to_string()).collect()),
            "sighting" => {
                if words.len() != 3 {
                    return Err(err("sighting needs two agents"));
                }
                sightings.push((words[1].to_string(), words[2].to_string()));
            }
            "rule" => {
                rule = match words.get(1) {
                    Some(&"smallest-name") => LeaderRule::SmallestName,
                    Some(&"larger-group") => LeaderRule::LargerGroup,
                    Some(&"either") => LeaderRule::Either,
                    _ => return Err(err("unknown rule")),
                }
            }
            "fault" => match words.get(1) {
                Some(&"drop-notify") => drop_notify = true,
                _ => return Err(err("unknown fault")),
            },
            _ if words.len() == 1 => events.push(words[0].to_string()),
            _ => return Err(err("unrecognised line")),
        }
    }
    let mut model = ProtocolModel::singletons(agents.unwrap_or(2))?;
    for g in groups {
        model.groups.retain(|s| !(s.len() == 1 && g.contains(&s[0])));
        model.groups.push(g);
    }
    model.sightings = sightings;
    model.rule = rule;
    model.drop_notify = drop_notify;
    model.validate()?;
    Ok((model, events))
}
