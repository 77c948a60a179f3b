use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::torus::Direction::{E, N, S, W};
use crate::world::{ActionResult, BlockType, TeamId, Thing};

fn o(dx: i32, dy: i32) -> RelOffset {
    RelOffset::new(dx, dy)
}

fn percept(things: Vec<Thing>, terrain: Vec<(RelOffset, TerrainKind)>) -> Percept {
    Percept {
        step: 0,
        team: TeamId::A,
        energy: 100,
        disabled: false,
        attached: vec![],
        things,
        terrain,
        taskboards: vec![],
        tasks: vec![],
        accepted: None,
        last_action: Action::Skip,
        last_action_result: ActionResult::Success,
    }
}

/// Uniform-cost search written against plain offsets, with no heuristic and
/// no reachability shortcut. Returns the optimal cost, or None.
fn oracle_cost(p: &Problem) -> Option<u32> {
    type State = (RelOffset, Option<RelOffset>, Vec<RelOffset>);
    let free = |c: RelOffset, cleared: &[RelOffset]| match p.label(c) {
        Some(Label::Empty) => true,
        Some(Label::Obstacle) => cleared.contains(&c),
        _ => false,
    };
    let start: State = (o(0, 0), p.attached, vec![]);
    let mut dist: BTreeMap<State, u32> = BTreeMap::new();
    let mut frontier: BTreeSet<(u32, State)> = BTreeSet::new();
    dist.insert(start.clone(), 0);
    frontier.insert((0, start));
    let units = [o(0, -1), o(0, 1), o(1, 0), o(-1, 0)];
    while let Some((g, (a, b, cl))) = frontier.pop_first() {
        if dist.get(&(a, b, cl.clone())).is_some_and(|&d| d < g) {
            continue;
        }
        if a == p.goal {
            return Some(g);
        }
        let mut next: Vec<(State, u32)> = vec![];
        for u in units {
            let (na, nb) = (a + u, b.map(|b| b + u));
            if free(na, &cl) && nb.is_none_or(|b| free(b, &cl)) {
                next.push(((na, nb, cl.clone()), 1));
            }
        }
        if let Some(b) = b {
            let rel = b - a;
            for r in [rel.rotate_cw(), rel.rotate_ccw()] {
                if free(a + r, &cl) {
                    next.push(((a, Some(a + r), cl.clone()), 1));
                }
            }
        }
        if p.clear_allowed {
            for base in core::iter::once(a).chain(b) {
                for u in units {
                    let t = base + u;
                    if p.label(t) == Some(Label::Obstacle) && !cl.contains(&t) {
                        let mut ncl = cl.clone();
                        ncl.push(t);
                        ncl.sort();
                        next.push(((a, b, ncl), 3));
                    }
                }
            }
        }
        for (s, c) in next {
            let ng = g + c;
            if dist.get(&s).is_none_or(|&d| ng < d) {
                dist.insert(s.clone(), ng);
                frontier.insert((ng, s));
            }
        }
    }
    None
}

fn random_problem(rng: &mut ChaCha8Rng) -> Problem {
    let cells = diamond_cells(VISION_RADIUS);
    let mut labels = vec![Label::Empty; VIEW_CELLS];
    let mut obstacles = 0;
    let ob = rng.next_u32() % 30;
    let bl = rng.next_u32() % 20;
    for (i, c) in cells.iter().enumerate() {
        if *c == RelOffset::ZERO {
            continue;
        }
        let r = rng.next_u32() % 100;
        if r < ob && obstacles < 10 {
            labels[i] = Label::Obstacle;
            obstacles += 1;
        } else if r < ob + bl {
            labels[i] = Label::Blocked;
        }
    }
    let attached = match rng.next_u32() % 3 {
        0 => Some(Direction::ALL[(rng.next_u32() % 4) as usize].offset()),
        _ => None,
    };
    if let Some(a) = attached {
        labels[view_index(a).unwrap()] = Label::Empty;
    }
    let goal = loop {
        let c = cells[(rng.next_u32() as usize) % VIEW_CELLS];
        if c != RelOffset::ZERO && Some(c) != attached {
            break c;
        }
    };
    labels[view_index(goal).unwrap()] = Label::Empty;
    Problem::new(labels, goal, attached, rng.next_u32() % 2 == 0).unwrap()
}

#[test]
fn straight_line() {
    let p = Problem::open(o(0, -3), None, false).unwrap();
    assert_eq!(solve(&p).steps, vec![PlanStep::Move(N); 3]);
}

fn wall(clear: bool) -> Problem {
    let mut p = Problem::open(o(0, -3), None, clear).unwrap();
    for x in -1..=1 {
        p.set(o(x, -1), Label::Obstacle);
    }
    p
}

#[test]
fn wall_detour_and_clear() {
    let detour = solve(&wall(false));
    assert_eq!(detour.len(), 7);
    assert_eq!(oracle_cost(&wall(false)), Some(7));
    assert_eq!(replay(&wall(false), &detour), Replay::Reached);

    let through = solve(&wall(true));
    assert_eq!(through.len(), 6);
    assert_eq!(oracle_cost(&wall(true)), Some(6));
    assert_eq!(&through.steps[..3], &[PlanStep::Clear(o(0, -1)); 3]);
    assert_eq!(replay(&wall(true), &through), Replay::Reached);
}

#[test]
fn blocked_cells_are_never_cleared() {
    let mut p = Problem::open(o(0, -2), None, true).unwrap();
    for c in [o(0, -1), o(1, 0), o(-1, 0), o(0, 1)] {
        p.set(c, Label::Blocked);
    }
    assert!(solve(&p).is_empty());
    assert_eq!(oracle_cost(&p), None);
    p.set(o(0, -1), Label::Obstacle);
    assert_eq!(solve(&p).len(), 5);
}

#[test]
fn attached_block_needs_room() {
    // Block south; corridor one cell wide to the north forces a rotation.
    let mut p = Problem::open(o(0, -2), Some(o(0, 1)), false).unwrap();
    for c in [o(-1, -1), o(1, -1), o(-1, -2), o(1, -2)] {
        p.set(c, Label::Blocked);
    }
    let plan = solve(&p);
    assert_eq!(plan.len() as u32, oracle_cost(&p).unwrap());
    assert_eq!(plan.steps, vec![PlanStep::Move(N), PlanStep::Move(N)]);
    // Block east: it cannot fit through the corridor unless it trails behind.
    p.attached = Some(o(1, 0));
    let plan = solve(&p);
    assert_eq!(plan.len() as u32, oracle_cost(&p).unwrap());
    assert_eq!(replay(&p, &plan), Replay::Reached);
    assert!(plan.steps.iter().any(|s| matches!(s, PlanStep::Rotate(_))));
}

#[test]
fn matches_oracle_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut unreachable = 0;
    for _ in 0..1000 {
        let p = random_problem(&mut rng);
        let plan = solve(&p);
        match oracle_cost(&p) {
            None => {
                unreachable += 1;
                assert!(plan.is_empty(), "{}", export_text(&p));
            }
            Some(c) => {
                assert_eq!(plan_cost(&plan), c, "{}", export_text(&p));
                assert_eq!(replay(&p, &plan), Replay::Reached, "{}", export_text(&p));
            }
        }
    }
    assert!(unreachable > 0);
}

#[test]
fn never_clears_when_forbidden() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let mut p = random_problem(&mut rng);
        p.clear_allowed = false;
        assert!(!solve(&p).steps.iter().any(|s| matches!(s, PlanStep::Clear(_))));
    }
}

#[test]
fn good_cell_selection() {
    let sizes = AxisSizes::default();
    let here = o(0, 0);
    assert_eq!(select_good_cell(&percept(vec![], vec![]), o(20, 0), here, &sizes), Some(o(5, 0)));
    assert_eq!(select_good_cell(&percept(vec![], vec![]), o(2, -1), here, &sizes), Some(o(2, -1)));

    // east boundary filled with blocks: brute-force the minimum
    let east: Vec<Thing> = diamond_cells(5).into_iter().filter(|c| c.dx >= 3).map(|c| Thing::new(c.dx, c.dy, ThingKind::Block(BlockType(0)))).collect();
    let p = percept(east, vec![]);
    let got = select_good_cell(&p, o(20, 0), here, &sizes).unwrap();
    let best = diamond_cells(5)
        .into_iter()
        .filter(|c| *c != here && c.dx < 3)
        .map(|c| (sizes.distance(c, o(20, 0)), c))
        .min_by_key(|&(d, _)| d)
        .unwrap();
    assert_eq!(got, best.1);
    assert_eq!(got, o(2, 0));
}

#[test]
fn problem_labels() {
    let p = percept(
        vec![
            Thing::new(1, 0, ThingKind::Entity(TeamId::B)),
            Thing::new(2, 2, ThingKind::Dispenser(BlockType(0))),
            Thing::new(0, 2, ThingKind::Block(BlockType(1))),
        ],
        vec![(o(-1, 0), TerrainKind::Obstacle), (o(0, -4), TerrainKind::Goal)],
    );
    let pr = build_problem(&p, o(0, -5), 100, 30).unwrap();
    assert_eq!(pr.label(o(1, 0)), Some(Label::Blocked));
    assert_eq!(pr.label(o(2, 2)), Some(Label::Empty));
    assert_eq!(pr.label(o(0, 2)), Some(Label::Blocked));
    assert_eq!(pr.label(o(-1, 0)), Some(Label::Obstacle));
    assert_eq!(pr.label(o(0, -4)), Some(Label::Empty));
    assert!(pr.clear_allowed);
    assert!(!build_problem(&p, o(0, -5), 29, 30).unwrap().clear_allowed);
    assert_eq!(build_problem(&p, o(1, 0), 100, 30), Err(ProblemError::GoalNotFree(o(1, 0))));
    assert_eq!(build_problem(&p, o(0, 0), 100, 30), Err(ProblemError::GoalIsSelf(o(0, 0))));

    let mut q = percept(vec![Thing::new(0, 1, ThingKind::Block(BlockType(0)))], vec![]);
    q.attached = vec![(o(0, 1), BlockType(0))];
    let pr = build_problem(&q, o(0, -2), 0, 30).unwrap();
    assert_eq!(pr.attached, Some(o(0, 1)));
    assert_eq!(pr.label(o(0, 1)), Some(Label::Empty));
    q.attached.push((o(0, 2), BlockType(0)));
    assert_eq!(build_problem(&q, o(0, -2), 0, 30), Err(ProblemError::TooManyAttached));
}

#[test]
fn fallback_choices() {
    let sizes = AxisSizes::default();
    assert_eq!(fallback_one_step(&percept(vec![], vec![]), o(0, 0), o(10, 0), &sizes), Action::Move(E));
    let boxed: Vec<Thing> = Direction::ALL.iter().map(|d| Thing::new(d.offset().dx, d.offset().dy, ThingKind::Entity(TeamId::B))).collect();
    assert_eq!(fallback_one_step(&percept(boxed, vec![]), o(0, 0), o(10, 0), &sizes), Action::Skip);
    // north and east both help; north comes first
    assert_eq!(fallback_one_step(&percept(vec![], vec![]), o(0, 0), o(4, -4), &sizes), Action::Move(N));
    // south and west both help; south comes first
    assert_eq!(fallback_one_step(&percept(vec![], vec![]), o(0, 0), o(-4, 4), &sizes), Action::Move(S));
    let p = percept(vec![], vec![(o(0, 1), TerrainKind::Obstacle)]);
    assert_eq!(fallback_one_step(&p, o(0, 0), o(-4, 4), &sizes), Action::Move(W));
}

#[test]
fn plan_text_round_trip() {
    let plan = Plan { steps: vec![PlanStep::Move(N), PlanStep::Rotate(Rotation::Ccw), PlanStep::Clear(o(-1, 0)), PlanStep::Move(W)] };
    let text = plan.to_text();
    assert_eq!(text, "move_n\nrotate_ccw\nclear_-1_0\nmove_w\n");
    assert_eq!(Plan::parse(&text).unwrap(), plan);
    assert!(Plan::parse("jump\n").is_err());
    assert!(Plan::parse("clear_1\n").is_err());
    assert_eq!(Plan::parse("").unwrap(), Plan::default());
}

#[test]
fn exports_are_stable() {
    let p = wall(true);
    let text = export_text(&p);
    assert!(text.starts_with("view radius 5\ngoal 0 -3\nattached none\nclear on\n"));
    assert_eq!(text.lines().count(), 4 + 11);
    assert!(text.contains("   ..G..\n"));
    assert!(text.contains(".###."));
    let pddl = to_pddl(&p);
    assert!(pddl.contains("(obstacle c_m1_m1)"));
    assert!(pddl.contains("(:goal (agent-at c_p0_m3))"));
    assert!(pddl.contains("(can-clear)"));
    assert_eq!(to_pddl(&p), pddl);
}

proptest! {
    #[test]
    fn plans_are_sound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng);
        let plan = solve(&p);
        if !plan.is_empty() {
            prop_assert_eq!(replay(&p, &plan), Replay::Reached);
        }
        prop_assert_eq!(solve(&p), plan);
    }
}
