//! Optimal search over (agent cell, block side, cleared cells).
//!
//! Clear targets are obstacles next to the agent or next to its block, which
//! is enough for every path through obstacles to be realisable. The goal is
//! therefore reachable exactly when it is reachable with all obstacles
//! removed; that relaxed distance also serves as the heuristic.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::{view_index, Label, Plan, PlanStep, Problem};
use crate::torus::{diamond_cells, Direction, RelOffset, VISION_RADIUS};
use crate::world::Rotation;

const NO_BLOCK: u8 = 4;
const CLEAR_COST: u32 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub expansions: u64,
}

struct Grid {
    cells: Vec<RelOffset>,
    /// Neighbour index per `Direction::ALL`.
    nb: Vec<[Option<u8>; 4]>,
}

impl Grid {
    fn new() -> Self {
        let cells = diamond_cells(VISION_RADIUS);
        let nb = cells
            .iter()
            .map(|&c| Direction::ALL.map(|d| view_index(c + d.offset()).map(|i| i as u8)))
            .collect();
        Grid { cells, nb }
    }

    fn block_cell(&self, pos: u8, side: u8) -> Option<Option<u8>> {
        if side == NO_BLOCK {
            Some(None)
        } else {
            self.nb[pos as usize][side as usize].map(Some)
        }
    }
}

fn dir_index(d: Direction) -> u8 {
    Direction::ALL.iter().position(|&x| x == d).unwrap() as u8
}

fn rotated(side: u8, r: Rotation) -> u8 {
    let o = Direction::ALL[side as usize].offset();
    let o = if r == Rotation::Cw { o.rotate_cw() } else { o.rotate_ccw() };
    dir_index(o.direction().expect("cardinal"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Node {
    pos: u8,
    side: u8,
    cleared: u64,
}

/// A configuration is valid if the agent cell and block cell (if any) exist and pass `free`.
fn valid(grid: &Grid, pos: u8, side: u8, free: &dyn Fn(u8) -> bool) -> bool {
    match grid.block_cell(pos, side) {
        None => false,
        Some(b) => free(pos) && b.is_none_or(free),
    }
}

/// Distance to the goal for every (cell, side) when obstacles are clearable
/// for free. `u32::MAX` marks unreachable configurations.
fn relaxed_distances(p: &Problem, grid: &Grid, goal: u8) -> Vec<u32> {
    let passable = |i: u8| match p.labels[i as usize] {
        Label::Empty => true,
        Label::Obstacle => p.clear_allowed,
        Label::Blocked => false,
    };
    let with_block = p.attached.is_some();
    let sides: &[u8] = if with_block { &[0, 1, 2, 3] } else { &[NO_BLOCK] };
    let n = grid.cells.len();
    let mut dist = vec![u32::MAX; n * 5];
    let key = |pos: u8, side: u8| pos as usize * 5 + side as usize;
    let mut queue = VecDeque::new();
    for &s in sides {
        if valid(grid, goal, s, &passable) {
            dist[key(goal, s)] = 0;
            queue.push_back((goal, s));
        }
    }
    // Moves and rotations are their own inverses up to direction, so the
    // forward neighbours of a configuration are also its predecessors.
    while let Some((pos, side)) = queue.pop_front() {
        let d = dist[key(pos, side)];
        let mut push = |np: u8, ns: u8, queue: &mut VecDeque<(u8, u8)>| {
            if valid(grid, np, ns, &passable) && dist[key(np, ns)] == u32::MAX {
                dist[key(np, ns)] = d + 1;
                queue.push_back((np, ns));
            }
        };
        for k in 0..4 {
            if let Some(np) = grid.nb[pos as usize][k] {
                push(np, side, &mut queue);
            }
        }
        if side != NO_BLOCK {
            push(pos, rotated(side, Rotation::Cw), &mut queue);
            push(pos, rotated(side, Rotation::Ccw), &mut queue);
        }
    }
    dist
}

pub fn solve(problem: &Problem) -> Plan {
    solve_with_stats(problem).0
}

/// Minimum-cost plan and the number of expanded search nodes.
/// An invalid problem yields the empty plan.
pub fn solve_with_stats(problem: &Problem) -> (Plan, SearchStats) {
    let mut stats = SearchStats::default();
    if problem.validate().is_err() {
        return (Plan::default(), stats);
    }
    let grid = Grid::new();
    let goal = view_index(problem.goal).unwrap() as u8;
    let start_pos = view_index(RelOffset::ZERO).unwrap() as u8;
    let start_side = problem.attached.map_or(NO_BLOCK, |a| dir_index(a.direction().unwrap()));
    let h = relaxed_distances(problem, &grid, goal);
    let hk = |n: &Node| h[n.pos as usize * 5 + n.side as usize];
    let start = Node { pos: start_pos, side: start_side, cleared: 0 };
    if hk(&start) == u32::MAX {
        return (Plan::default(), stats);
    }

    let labels = &problem.labels;
    let free_in = |cleared: u64| move |i: u8| labels[i as usize] == Label::Empty || cleared & (1u64 << i) != 0;

    let mut best: BTreeMap<Node, (u32, Option<(Node, PlanStep)>)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    let mut closed = BTreeSet::new();
    let mut seq = 0u64;
    best.insert(start, (0, None));
    heap.push(Reverse((hk(&start), seq, start)));
    while let Some(Reverse((_, _, node))) = heap.pop() {
        if !closed.insert(node) {
            continue;
        }
        let g = best[&node].0;
        if node.pos == goal {
            return (rebuild(&best, node), stats);
        }
        stats.expansions += 1;
        let free = free_in(node.cleared);
        let mut succ: Vec<(Node, PlanStep, u32)> = Vec::with_capacity(10);
        for (k, d) in Direction::ALL.into_iter().enumerate() {
            if let Some(np) = grid.nb[node.pos as usize][k] {
                if valid(&grid, np, node.side, &free) {
                    succ.push((Node { pos: np, ..node }, PlanStep::Move(d), 1));
                }
            }
        }
        if node.side != NO_BLOCK {
            for r in [Rotation::Cw, Rotation::Ccw] {
                let ns = rotated(node.side, r);
                if valid(&grid, node.pos, ns, &free) {
                    succ.push((Node { side: ns, ..node }, PlanStep::Rotate(r), 1));
                }
            }
        }
        if problem.clear_allowed {
            let mut targets: Vec<u8> = grid.nb[node.pos as usize].iter().flatten().copied().collect();
            if let Some(Some(b)) = grid.block_cell(node.pos, node.side) {
                targets.extend(grid.nb[b as usize].iter().flatten().copied());
            }
            for t in targets {
                if labels[t as usize] == Label::Obstacle && node.cleared & (1u64 << t) == 0 {
                    let rel = grid.cells[t as usize] - grid.cells[node.pos as usize];
                    let next = Node { cleared: node.cleared | (1u64 << t), ..node };
                    succ.push((next, PlanStep::Clear(rel), CLEAR_COST));
                }
            }
        }
        for (next, step, cost) in succ {
            let ng = g + cost;
            if hk(&next) == u32::MAX || best.get(&next).is_some_and(|&(og, _)| og <= ng) {
                continue;
            }
            best.insert(next, (ng, Some((node, step))));
            seq += 1;
            heap.push(Reverse((ng + hk(&next), seq, next)));
        }
    }
    (Plan::default(), stats)
}

fn rebuild(best: &BTreeMap<Node, (u32, Option<(Node, PlanStep)>)>, mut node: Node) -> Plan {
    let mut steps = Vec::new();
    while let Some((prev, step)) = best[&node].1 {
        let n = if matches!(step, PlanStep::Clear(_)) { 3 } else { 1 };
        for _ in 0..n {
            steps.push(step);
        }
        node = prev;
    }
    steps.reverse();
    Plan { steps }
}
