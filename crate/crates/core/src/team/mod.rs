//! Roles, group arithmetic and the team controller.

mod bully;
mod controller;

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use bully::{bully_policy, bully_policy_guarded, patrol_ring, BullyDecision, BullyKind, BullyState, RELOCATE_AFTER};
pub use controller::{PlanOutcome, TeamConfig, TeamController, SWAP_WINDOW_MAX};

use crate::mapping::{Axis, AxisSizes};
use crate::plan_cache::Lookup;
use crate::torus::{Direction, RelOffset};
use crate::world::{BlockType, Task};

/// Members of a full group.
pub const GROUP_SIZE: usize = 15;
/// Retrievers in a full group.
pub const RETRIEVERS_PER_GROUP: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Explorer,
    Cartographer,
    Origin,
    Retriever,
    Deliverer,
    BullyBouncer,
    BullyHunter,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Explorer => "explorer",
            Role::Cartographer => "cartographer",
            Role::Origin => "origin",
            Role::Retriever => "retriever",
            Role::Deliverer => "deliverer",
            Role::BullyBouncer => "bully_bouncer",
            Role::BullyHunter => "bully_hunter",
        })
    }
}

impl Role {
    pub fn is_bully(self) -> bool {
        matches!(self, Role::BullyBouncer | Role::BullyHunter)
    }

    /// Edges of the lifecycle graph.
    pub fn may_become(self, next: Role) -> bool {
        use Role::*;
        matches!(
            (self, next),
            (Explorer, Cartographer)
                | (Cartographer, Explorer)
                | (Explorer, Origin)
                | (Explorer, Deliverer)
                | (Explorer, Retriever)
                | (Explorer, BullyBouncer)
                | (Explorer, BullyHunter)
                | (Origin, Retriever)
                | (Retriever, Deliverer)
                | (Deliverer, Origin)
                | (BullyBouncer, BullyHunter)
        )
    }
}

/// Full groups and leftover agents for a round of `round_size` agents.
pub fn form_groups(round_size: usize) -> (usize, usize) {
    (round_size / GROUP_SIZE, round_size % GROUP_SIZE)
}

/// Role of the `k`-th agent (0-based) to join a group, if it has room.
pub fn role_for_join(k: usize) -> Option<Role> {
    match k {
        0 => Some(Role::Origin),
        1 => Some(Role::Deliverer),
        k if k < 2 + RETRIEVERS_PER_GROUP => Some(Role::Retriever),
        k if k < GROUP_SIZE => Some(Role::BullyBouncer),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    Group { group: usize, role: Role },
    Leftover,
}

/// Joins agents to groups in priority order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    pub max_groups: usize,
    pub joined: Vec<usize>,
}

impl Roster {
    pub fn new(round_size: usize) -> Self {
        Roster { max_groups: form_groups(round_size).0, joined: Vec::new() }
    }

    pub fn join(&mut self) -> Placement {
        let open = self.joined.iter().position(|&n| n < GROUP_SIZE);
        let group = match open {
            Some(g) => g,
            None if self.joined.len() < self.max_groups => {
                self.joined.push(0);
                self.joined.len() - 1
            }
            None => return Placement::Leftover,
        };
        let role = role_for_join(self.joined[group]).expect("room");
        self.joined[group] += 1;
        Placement::Group { group, role }
    }
}

/// Highest-reward task whose block types can all be supplied, whose
/// deadline leaves time for assembly and which agrees with the blocks
/// already staged (same offsets and types).
pub fn select_task(
    tasks: &[Task],
    staged: &[(RelOffset, BlockType)],
    retrievable: &BTreeSet<BlockType>,
    now: u64,
    estimate: impl Fn(&Task) -> u64,
) -> Option<Task> {
    tasks
        .iter()
        .filter(|t| {
            staged.iter().all(|s| t.requirements.contains(s))
                && t.requirements.iter().all(|(o, k)| staged.contains(&(*o, *k)) || retrievable.contains(k))
                && t.deadline > now + estimate(t)
        })
        .max_by(|a, b| a.reward.cmp(&b.reward).then_with(|| b.name.cmp(&a.name)))
        .cloned()
}

/// Groups goal cells into 4-connected clusters, each sorted; clusters are
/// ordered by their first cell.
pub fn goal_clusters(goals: &BTreeSet<RelOffset>, sizes: &AxisSizes) -> Vec<Vec<RelOffset>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &g in goals {
        if !seen.insert(g) {
            continue;
        }
        let mut cluster = Vec::new();
        let mut queue = VecDeque::from([g]);
        while let Some(c) = queue.pop_front() {
            cluster.push(c);
            for d in Direction::ALL {
                let n = sizes.norm(c + d.offset());
                if goals.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        cluster.sort();
        out.push(cluster);
    }
    out
}

/// Bottom-most cell (largest y, then smallest x, measured from the first
/// cell so wrapped clusters order correctly) not in `occupied`.
pub fn bottom_most_free(cluster: &[RelOffset], occupied: &BTreeSet<RelOffset>, sizes: &AxisSizes) -> Option<RelOffset> {
    let base = *cluster.first()?;
    cluster
        .iter()
        .filter(|c| !occupied.contains(c))
        .max_by_key(|&&c| {
            let d = sizes.delta(base, c);
            (d.dy, -d.dx)
        })
        .copied()
}

/// Team-side record of what happened in a step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeamEvent {
    Identified { observer: String, subject: String, offset: RelOffset },
    Merged { winner: String, loser: String, members: usize },
    CartographyStarted { axis: Axis, neg: String, pos: String, distance: i32 },
    AxisMeasured { axis: Axis, length: i32 },
    CartographyFault { axis: Axis, value: i32 },
    RoleChanged { agent: String, from: Role, to: Role, group: Option<usize> },
    Census { counts: BTreeMap<Role, u32> },
    TaskSelected { group: usize, task: String },
    SlotFilled { group: usize, slot: usize, by: String },
    SwapDetach { group: usize },
    SwapAttach { group: usize, window: u64 },
    SwapAbort { group: usize },
    Submitted { group: usize, task: String, agent: String },
    Plan { agent: String, key: String, lookup: Option<Lookup>, expansions: Option<u64>, plan: String },
    Stuck { agent: String },
    BullyFire { agent: String },
    Relocated { agent: String, cluster: usize },
}
