//! Local movement planning inside the agent's field of view.

mod export;
mod navigate;
mod search;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub use export::to_pddl;
pub use navigate::{NavStep, Navigator, STUCK_AFTER_CYCLES};
pub use search::{solve, solve_with_stats, SearchStats};

use crate::mapping::AxisSizes;
use crate::torus::{diamond_cells, diamond_index, Direction, RelOffset, VISION_RADIUS};
use crate::world::{Action, Percept, Rotation, TerrainKind, ThingKind};

/// Number of cells in the field of view.
pub const VIEW_CELLS: usize = 61;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Empty,
    Obstacle,
    /// A block or an agent; never cleared.
    Blocked,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Problem {
    /// One label per cell of `diamond_cells(VISION_RADIUS)`.
    pub labels: Vec<Label>,
    pub goal: RelOffset,
    pub attached: Option<RelOffset>,
    pub clear_allowed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ProblemError {
    #[error("expected {VIEW_CELLS} labels, got {0}")]
    LabelCount(usize),
    #[error("goal {0:?} is the agent's own cell")]
    GoalIsSelf(RelOffset),
    #[error("goal {0:?} is outside the field of view")]
    GoalOutOfView(RelOffset),
    #[error("goal {0:?} is not free")]
    GoalNotFree(RelOffset),
    #[error("attachment {0:?} is not a cardinal neighbour")]
    BadAttachment(RelOffset),
    #[error("more than one attached block")]
    TooManyAttached,
    #[error("the agent's own cell must be empty")]
    SelfNotEmpty,
}

pub(crate) fn view_index(o: RelOffset) -> Option<usize> {
    diamond_index(o, VISION_RADIUS)
}

impl Problem {
    pub fn new(labels: Vec<Label>, goal: RelOffset, attached: Option<RelOffset>, clear_allowed: bool) -> Result<Self, ProblemError> {
        let p = Problem { labels, goal, attached, clear_allowed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.labels.len() != VIEW_CELLS {
            return Err(ProblemError::LabelCount(self.labels.len()));
        }
        if self.goal == RelOffset::ZERO {
            return Err(ProblemError::GoalIsSelf(self.goal));
        }
        let g = view_index(self.goal).ok_or(ProblemError::GoalOutOfView(self.goal))?;
        if self.labels[g] != Label::Empty {
            return Err(ProblemError::GoalNotFree(self.goal));
        }
        if self.label(RelOffset::ZERO) != Some(Label::Empty) {
            return Err(ProblemError::SelfNotEmpty);
        }
        if let Some(a) = self.attached {
            if a.norm1() != 1 {
                return Err(ProblemError::BadAttachment(a));
            }
            if self.label(a) != Some(Label::Empty) {
                return Err(ProblemError::BadAttachment(a));
            }
        }
        Ok(())
    }

    /// Empty field of view.
    pub fn open(goal: RelOffset, attached: Option<RelOffset>, clear_allowed: bool) -> Result<Self, ProblemError> {
        Self::new(alloc::vec![Label::Empty; VIEW_CELLS], goal, attached, clear_allowed)
    }

    pub fn label(&self, o: RelOffset) -> Option<Label> {
        view_index(o).map(|i| self.labels[i])
    }

    pub fn set(&mut self, o: RelOffset, l: Label) {
        if let Some(i) = view_index(o) {
            self.labels[i] = l;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlanStep {
    Move(Direction),
    Rotate(Rotation),
    /// Target relative to the agent when the step is issued.
    Clear(RelOffset),
}

impl PlanStep {
    pub fn action(self) -> Action {
        match self {
            PlanStep::Move(d) => Action::Move(d),
            PlanStep::Rotate(r) => Action::Rotate(r),
            PlanStep::Clear(o) => Action::Clear(o),
        }
    }
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanStep::Move(d) => write!(f, "move_{}", d.letter().to_ascii_lowercase()),
            PlanStep::Rotate(Rotation::Cw) => f.write_str("rotate_cw"),
            PlanStep::Rotate(Rotation::Ccw) => f.write_str("rotate_ccw"),
            PlanStep::Clear(o) => write!(f, "clear_{}_{}", o.dx, o.dy),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unrecognised plan step {0:?}")]
pub struct BadStep(pub String);

impl FromStr for PlanStep {
    type Err = BadStep;

    fn from_str(s: &str) -> Result<Self, BadStep> {
        let bad = || BadStep(s.into());
        Ok(match s {
            "move_n" => PlanStep::Move(Direction::N),
            "move_s" => PlanStep::Move(Direction::S),
            "move_e" => PlanStep::Move(Direction::E),
            "move_w" => PlanStep::Move(Direction::W),
            "rotate_cw" => PlanStep::Rotate(Rotation::Cw),
            "rotate_ccw" => PlanStep::Rotate(Rotation::Ccw),
            _ => {
                let rest = s.strip_prefix("clear_").ok_or_else(bad)?;
                let (x, y) = rest.split_once('_').ok_or_else(bad)?;
                let dx = x.parse().map_err(|_| bad())?;
                let dy = y.parse().map_err(|_| bad())?;
                PlanStep::Clear(RelOffset::new(dx, dy))
            }
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    /// One step per line, newline terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&alloc::format!("{s}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, BadStep> {
        let steps = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::parse).collect::<Result<_, _>>()?;
        Ok(Plan { steps })
    }
}

/// Outcome of replaying a plan in the problem's static abstraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Replay {
    Reached,
    EndedAt(RelOffset),
    Collision { step: usize },
    BadClear { step: usize },
}

/// Walks `plan` over the problem's labels. Clears take effect after three
/// consecutive clears of the same cell.
pub fn replay(problem: &Problem, plan: &Plan) -> Replay {
    let mut labels = problem.labels.clone();
    let mut pos = RelOffset::ZERO;
    let mut block = problem.attached;
    let mut charge: Option<(RelOffset, u32)> = None;
    let free = |labels: &[Label], o: RelOffset| view_index(o).is_some_and(|i| labels[i] == Label::Empty);
    for (k, step) in plan.steps.iter().enumerate() {
        if !matches!(step, PlanStep::Clear(_)) && charge.is_some() {
            return Replay::BadClear { step: k };
        }
        match *step {
            PlanStep::Move(d) => {
                let np = pos + d.offset();
                let nb = block.map(|b| b + d.offset());
                if !free(&labels, np) || nb.is_some_and(|b| !free(&labels, b)) {
                    return Replay::Collision { step: k };
                }
                pos = np;
                block = nb;
            }
            PlanStep::Rotate(r) => {
                let Some(b) = block else { return Replay::Collision { step: k } };
                let rel = b - pos;
                let rel = if r == Rotation::Cw { rel.rotate_cw() } else { rel.rotate_ccw() };
                if !free(&labels, pos + rel) {
                    return Replay::Collision { step: k };
                }
                block = Some(pos + rel);
            }
            PlanStep::Clear(o) => {
                let target = pos + o;
                if problem.label(target) != Some(Label::Obstacle) || !problem.clear_allowed {
                    return Replay::BadClear { step: k };
                }
                let n = match charge {
                    Some((t, n)) if t == target => n + 1,
                    Some(_) => return Replay::BadClear { step: k },
                    None => 1,
                };
                if n == 3 {
                    labels[view_index(target).unwrap()] = Label::Empty;
                    charge = None;
                } else {
                    charge = Some((target, n));
                }
            }
        }
        if Some(pos) == block {
            return Replay::Collision { step: k };
        }
    }
    if charge.is_some() {
        return Replay::BadClear { step: plan.len() };
    }
    if pos == problem.goal {
        Replay::Reached
    } else {
        Replay::EndedAt(pos)
    }
}

/// Cost of a plan: one per action, so a clear costs three.
pub fn plan_cost(plan: &Plan) -> u32 {
    plan.len() as u32
}

fn cell_blocked(percept: &Percept, o: RelOffset) -> bool {
    percept.things_at(o).any(|k| matches!(k, ThingKind::Block(_) | ThingKind::Entity(_)))
}

fn cell_obstacle(percept: &Percept, o: RelOffset) -> bool {
    percept.terrain_at(o) == Some(TerrainKind::Obstacle)
}

/// The free cell of the field of view closest to `destination`, both in the
/// agent's map frame. Ties go to the earlier cell in view order.
pub fn select_good_cell(percept: &Percept, destination: RelOffset, here: RelOffset, sizes: &AxisSizes) -> Option<RelOffset> {
    let mut best: Option<(i32, RelOffset)> = None;
    for c in diamond_cells(VISION_RADIUS) {
        if c == RelOffset::ZERO || cell_blocked(percept, c) || cell_obstacle(percept, c) {
            continue;
        }
        let d = sizes.distance(here + c, destination);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| c)
}

/// Labels the field of view. Clear is allowed when `energy >= clear_threshold`.
pub fn build_problem(percept: &Percept, goal: RelOffset, energy: u32, clear_threshold: u32) -> Result<Problem, ProblemError> {
    let attached = match percept.attached.as_slice() {
        [] => None,
        [(o, _)] => Some(*o),
        _ => return Err(ProblemError::TooManyAttached),
    };
    let labels = diamond_cells(VISION_RADIUS)
        .into_iter()
        .map(|c| {
            if c == RelOffset::ZERO || Some(c) == attached {
                Label::Empty
            } else if cell_obstacle(percept, c) {
                Label::Obstacle
            } else if cell_blocked(percept, c) {
                Label::Blocked
            } else {
                Label::Empty
            }
        })
        .collect();
    Problem::new(labels, goal, attached, energy >= clear_threshold)
}

/// A single move that brings the agent closer to `destination`, else skip.
pub fn fallback_one_step(percept: &Percept, here: RelOffset, destination: RelOffset, sizes: &AxisSizes) -> Action {
    let now = sizes.distance(here, destination);
    let attached: Vec<RelOffset> = percept.attached.iter().map(|(o, _)| *o).collect();
    for d in Direction::ALL {
        let step = d.offset();
        let free = |o: RelOffset| attached.contains(&o) || o == RelOffset::ZERO || !(cell_blocked(percept, o) || cell_obstacle(percept, o));
        if !free(step) || !attached.iter().all(|&a| free(a + step)) {
            continue;
        }
        if sizes.distance(here + step, destination) < now {
            return Action::Move(d);
        }
    }
    Action::Skip
}

/// Plain text rendering: a header then one row of the view per line
/// (`.` empty, `#` obstacle, `x` blocked, `@` agent, `G` goal, `+` attached).
pub fn export_text(p: &Problem) -> String {
    let mut out = String::new();
    out.push_str(&alloc::format!("view radius {VISION_RADIUS}\n"));
    out.push_str(&alloc::format!("goal {} {}\n", p.goal.dx, p.goal.dy));
    match p.attached {
        Some(a) => out.push_str(&alloc::format!("attached {} {}\n", a.dx, a.dy)),
        None => out.push_str("attached none\n"),
    }
    out.push_str(if p.clear_allowed { "clear on\n" } else { "clear off\n" });
    let mut row = None;
    for (c, l) in diamond_cells(VISION_RADIUS).into_iter().zip(&p.labels) {
        if row.is_some_and(|r| r != c.dy) {
            out.push('\n');
        }
        if row != Some(c.dy) {
            for _ in 0..(c.dy.abs()) {
                out.push(' ');
            }
            row = Some(c.dy);
        }
        out.push(if c == RelOffset::ZERO {
            '@'
        } else if c == p.goal {
            'G'
        } else if Some(c) == p.attached {
            '+'
        } else {
            match l {
                Label::Empty => '.',
                Label::Obstacle => '#',
                Label::Blocked => 'x',
            }
        });
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests;
