//! Teammate identification from mirrored sightings.
//!
//! An agent that sees an unexplained teammate entity at `X` broadcasts a
//! request. Every teammate replies with its full thing list. A responder
//! matches at `X` if it saw a teammate at `-X` and everything it saw that
//! would also fall inside the requester's diamond is seen by the requester
//! too. Exactly one matching responder identifies the entity.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::torus::RelOffset;
use crate::world::{Percept, TeamId, Thing, ThingKind};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IdRequest {
    pub requester: String,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IdReply {
    pub requester: String,
    pub responder: String,
    pub step: u64,
    pub things: Vec<Thing>,
}

/// Does `reply` explain the entity I see at `x`?
pub fn matches_at(my_things: &[Thing], team: TeamId, reply: &IdReply, x: RelOffset) -> bool {
    let me = ThingKind::Entity(team);
    let sees_me = reply.things.iter().any(|t| t.offset == -x && t.kind == me);
    let i_see_it = my_things.iter().any(|t| t.offset == x && t.kind == me);
    if !sees_me || !i_see_it {
        return false;
    }
    reply.things.iter().all(|t| {
        let mapped = t.offset + x;
        if !mapped.in_vision() {
            return true;
        }
        // The responder's view of me lands on my own cell, which I do not see.
        if mapped == RelOffset::ZERO && matches!(t.kind, ThingKind::Entity(_)) {
            return true;
        }
        my_things.iter().any(|m| m.offset == mapped && m.kind == t.kind)
    })
}

/// Every offset at which `reply` would match.
pub fn matching_offsets(my_things: &[Thing], team: TeamId, reply: &IdReply) -> Vec<RelOffset> {
    let mut out: Vec<RelOffset> = my_things
        .iter()
        .filter(|t| t.kind == ThingKind::Entity(team))
        .map(|t| t.offset)
        .filter(|&x| matches_at(my_things, team, reply, x))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Offset of the responder relative to me, if exactly one placement fits.
pub fn match_candidate(my_things: &[Thing], team: TeamId, reply: &IdReply) -> Option<RelOffset> {
    match matching_offsets(my_things, team, reply).as_slice() {
        [x] => Some(*x),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Identified { responder: String, offset: RelOffset },
    Ambiguous,
    NoMatch,
}

/// Candidates for one observed entity, as (responder, offset) pairs.
pub fn resolve(candidates: &[(String, RelOffset)]) -> Resolution {
    let names: BTreeSet<&String> = candidates.iter().map(|(n, _)| n).collect();
    match names.len() {
        0 => Resolution::NoMatch,
        1 => {
            let (responder, offset) = candidates[0].clone();
            Resolution::Identified { responder, offset }
        }
        _ => Resolution::Ambiguous,
    }
}

/// What one agent currently knows about the entities around it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityBook {
    /// Step the `known` sightings refer to.
    pub step: u64,
    pub known: BTreeMap<RelOffset, String>,
    /// Sightings that matched more than one teammate; retried next step.
    pub pending: BTreeSet<RelOffset>,
    /// Every teammate ever identified.
    pub met: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdEvent {
    Identified { observer: String, subject: String, offset: RelOffset },
    Ambiguous { observer: String, offset: RelOffset, candidates: Vec<String> },
    NoMatch { observer: String, offset: RelOffset },
}

/// Per-step request/reply exchange. Delivery order does not matter: replies
/// are keyed by (requester, responder) and stale steps are dropped.
#[derive(Clone, Debug, Default)]
pub struct Mailbox {
    step: u64,
    requests: BTreeSet<IdRequest>,
    replies: BTreeMap<(String, String), IdReply>,
}

impl Mailbox {
    pub fn new(step: u64) -> Self {
        Mailbox { step, ..Default::default() }
    }

    pub fn post_request(&mut self, req: IdRequest) {
        if req.step == self.step {
            self.requests.insert(req);
        }
    }

    pub fn post_reply(&mut self, reply: IdReply) {
        if reply.step == self.step {
            self.replies.insert((reply.requester.clone(), reply.responder.clone()), reply);
        }
    }

    pub fn requests(&self) -> impl Iterator<Item = &IdRequest> {
        self.requests.iter()
    }

    pub fn replies_for<'a>(&'a self, requester: &'a str) -> impl Iterator<Item = &'a IdReply> + 'a {
        self.replies.values().filter(move |r| r.requester == requester)
    }

    pub fn broadcast_count(&self) -> usize {
        self.requests.len()
    }

    pub fn reply_count(&self) -> usize {
        self.replies.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundOutcome {
    pub events: Vec<IdEvent>,
    pub broadcasts: usize,
    pub replies: usize,
}

/// One identification exchange for a team.
///
/// `explained(agent, offset)` says whether a sighting is already accounted
/// for (for instance by the shared group map); those never trigger a request.
pub fn identification_round(
    step: u64,
    percepts: &BTreeMap<String, Percept>,
    books: &mut BTreeMap<String, IdentityBook>,
    explained: impl Fn(&str, RelOffset) -> bool,
) -> RoundOutcome {
    let mut unknown: BTreeMap<&String, Vec<RelOffset>> = BTreeMap::new();
    for (name, p) in percepts {
        let xs: Vec<RelOffset> = p.entities().filter(|&(o, t)| t == p.team && !explained(name, o)).map(|(o, _)| o).collect();
        if !xs.is_empty() {
            unknown.insert(name, xs);
        }
    }

    let mut mail = Mailbox::new(step);
    for name in unknown.keys() {
        mail.post_request(IdRequest { requester: (*name).clone(), step });
    }
    let requests: Vec<IdRequest> = mail.requests().cloned().collect();
    for req in &requests {
        for (name, p) in percepts {
            if *name != req.requester {
                mail.post_reply(IdReply {
                    requester: req.requester.clone(),
                    responder: name.clone(),
                    step,
                    things: p.things.clone(),
                });
            }
        }
    }

    let mut events = Vec::new();
    for (name, xs) in unknown {
        let p = &percepts[name];
        let book = books.entry(name.clone()).or_default();
        if book.step != step {
            book.step = step;
            book.known.clear();
        }
        for x in xs {
            let candidates: Vec<(String, RelOffset)> = mail
                .replies_for(name)
                .filter(|r| matches_at(&p.things, p.team, r, x))
                .map(|r| (r.responder.clone(), x))
                .collect();
            match resolve(&candidates) {
                Resolution::Identified { responder, offset } => {
                    book.pending.remove(&offset);
                    book.known.insert(offset, responder.clone());
                    book.met.insert(responder.clone());
                    events.push(IdEvent::Identified { observer: name.clone(), subject: responder, offset });
                }
                Resolution::Ambiguous => {
                    book.pending.insert(x);
                    events.push(IdEvent::Ambiguous {
                        observer: name.clone(),
                        offset: x,
                        candidates: candidates.into_iter().map(|(n, _)| n).collect(),
                    });
                }
                Resolution::NoMatch => events.push(IdEvent::NoMatch { observer: name.clone(), offset: x }),
            }
        }
    }
    RoundOutcome { events, broadcasts: mail.broadcast_count(), replies: mail.reply_count() }
}
