//! Memoised plans keyed by a text encoding of the planning problem.
//!
//! Key layout: clear flag (`c` or `n`), the attached block offset as signed
//! decimal dx then dy (`01` south, `0-1` north, `10` east, `-10` west, absent
//! when nothing is attached), then one digit per view cell: 0 empty,
//! 1 obstacle, 2 block or agent, 3 goal.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::planner::{BadStep, Label, Plan, Problem, VIEW_CELLS};
use crate::torus::{diamond_cells, RelOffset, VISION_RADIUS};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlanKey(String);

impl PlanKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Checks the text and wraps it.
    pub fn parse(text: &str) -> Result<Self, KeyError> {
        decode_key(&PlanKey(text.into()))?;
        Ok(PlanKey(text.into()))
    }
}

impl fmt::Display for PlanKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// How blocked cells are written.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyCoding {
    /// Blocks and agents as `2`.
    #[default]
    Published,
    /// Blocks and agents folded into obstacles (`1`). Not decodable.
    MergedBlocks,
}

pub fn encode(problem: &Problem) -> PlanKey {
    encode_with(problem, KeyCoding::Published)
}

pub fn encode_with(problem: &Problem, coding: KeyCoding) -> PlanKey {
    let mut s = String::with_capacity(VIEW_CELLS + 4);
    s.push(if problem.clear_allowed { 'c' } else { 'n' });
    if let Some(a) = problem.attached {
        s.push_str(&alloc::format!("{}{}", a.dx, a.dy));
    }
    for (c, l) in diamond_cells(VISION_RADIUS).into_iter().zip(&problem.labels) {
        s.push(if c == problem.goal {
            '3'
        } else if c == RelOffset::ZERO {
            '0'
        } else {
            match (l, coding) {
                (Label::Empty, _) => '0',
                (Label::Obstacle, _) | (Label::Blocked, KeyCoding::MergedBlocks) => '1',
                (Label::Blocked, KeyCoding::Published) => '2',
            }
        });
    }
    PlanKey(s)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum KeyError {
    #[error("bad character at position {0}")]
    BadChar(usize),
    #[error("key length {0} fits no layout")]
    Length(usize),
    #[error("expected one goal cell, found {0}")]
    GoalCount(usize),
    #[error("invalid problem at position {position}: {detail}")]
    Invalid { position: usize, detail: String },
}

/// Inverse of [`encode`].
pub fn decode_key(key: &PlanKey) -> Result<Problem, KeyError> {
    let bytes = key.0.as_bytes();
    let clear_allowed = match bytes.first() {
        Some(b'c') => true,
        Some(b'n') => false,
        _ => return Err(KeyError::BadChar(0)),
    };
    let prefix_len = bytes.len().checked_sub(1 + VIEW_CELLS).ok_or(KeyError::Length(bytes.len()))?;
    let attached = match &bytes[1..1 + prefix_len] {
        b"" => None,
        b"01" => Some(RelOffset::new(0, 1)),
        b"10" => Some(RelOffset::new(1, 0)),
        b"0-1" => Some(RelOffset::new(0, -1)),
        b"-10" => Some(RelOffset::new(-1, 0)),
        p if p.len() <= 3 => {
            let bad = p.iter().position(|c| !matches!(c, b'0' | b'1' | b'-')).unwrap_or(0);
            return Err(KeyError::BadChar(1 + bad));
        }
        _ => return Err(KeyError::Length(bytes.len())),
    };
    let grid = &bytes[1 + prefix_len..];
    let cells = diamond_cells(VISION_RADIUS);
    let mut labels = Vec::with_capacity(VIEW_CELLS);
    let mut goals = Vec::new();
    for (i, ch) in grid.iter().enumerate() {
        let position = 1 + prefix_len + i;
        labels.push(match ch {
            b'0' => Label::Empty,
            b'1' => Label::Obstacle,
            b'2' => Label::Blocked,
            b'3' => {
                goals.push((position, cells[i]));
                Label::Empty
            }
            _ => return Err(KeyError::BadChar(position)),
        });
    }
    if goals.len() != 1 {
        return Err(KeyError::GoalCount(goals.len()));
    }
    let (position, goal) = goals[0];
    Problem::new(labels, goal, attached, clear_allowed).map_err(|e| KeyError::Invalid { position, detail: alloc::format!("{e}") })
}

/// Where plans live between lookups.
pub trait PlanStore {
    type Error: fmt::Debug + fmt::Display;

    /// `None` when the key is unknown; `Some(Err)` when the stored text is unreadable.
    fn load(&self, key: &PlanKey) -> Option<Result<Plan, BadStep>>;

    fn save(&mut self, key: &PlanKey, plan: &Plan) -> Result<(), Self::Error>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Default)]
pub struct MemoryStore {
    files: BTreeMap<PlanKey, String>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Raw access, e.g. to corrupt an entry in a test.
    pub fn put_text(&mut self, key: PlanKey, text: String) {
        self.files.insert(key, text);
    }

    pub fn text(&self, key: &PlanKey) -> Option<&str> {
        self.files.get(key).map(String::as_str)
    }
}

impl PlanStore for MemoryStore {
    type Error = core::convert::Infallible;

    fn load(&self, key: &PlanKey) -> Option<Result<Plan, BadStep>> {
        self.files.get(key).map(|t| Plan::parse(t))
    }

    fn save(&mut self, key: &PlanKey, plan: &Plan) -> Result<(), Self::Error> {
        self.files.insert(key.clone(), plan.to_text());
        Ok(())
    }

    fn len(&self) -> usize {
        self.files.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lookup {
    Hit,
    Miss,
    /// Stored text was unreadable; the plan was recomputed and rewritten.
    Repaired,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub repaired: u64,
    pub save_errors: u64,
}

impl CacheStats {
    pub fn record(&mut self, l: Lookup) {
        match l {
            Lookup::Hit => self.hits += 1,
            Lookup::Miss => self.misses += 1,
            Lookup::Repaired => self.repaired += 1,
        }
    }

    pub fn lookups(&self) -> u64 {
        self.hits + self.misses + self.repaired
    }
}

/// Returns the stored plan or computes, stores and returns a fresh one.
/// A failed save is reported through the last tuple field; the plan is still returned.
pub fn solve_cached<S: PlanStore>(
    problem: &Problem,
    store: &mut S,
    solver: &mut dyn FnMut(&Problem) -> Plan,
) -> (Plan, Lookup, Option<S::Error>) {
    let key = encode(problem);
    let outcome = match store.load(&key) {
        Some(Ok(plan)) => return (plan, Lookup::Hit, None),
        Some(Err(_)) => Lookup::Repaired,
        None => Lookup::Miss,
    };
    let plan = solver(problem);
    let err = store.save(&key, &plan).err();
    (plan, outcome, err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{solve, solve_with_stats, PlanStep};
    use crate::torus::Direction;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn o(dx: i32, dy: i32) -> RelOffset {
        RelOffset::new(dx, dy)
    }

    /// Unrolling oracle: row lengths 1,3,5,...,11,...,1 laid out top to bottom.
    fn oracle_index(c: RelOffset) -> usize {
        let mut idx = 0;
        for row in -5..c.dy {
            idx += (2 * (5 - i32::abs(row)) + 1) as usize;
        }
        idx + (c.dx + 5 - c.dy.abs()) as usize
    }

    #[test]
    fn empty_view_goal_on_top() {
        let p = Problem::open(o(0, -5), None, false).unwrap();
        let k = encode(&p);
        assert_eq!(k.as_str(), alloc::format!("n3{}", "0".repeat(60)));
    }

    #[test]
    fn attachment_prefixes() {
        for (a, prefix) in [(o(0, 1), "01"), (o(0, -1), "0-1"), (o(1, 0), "10"), (o(-1, 0), "-10")] {
            let p = Problem::open(o(0, -5), Some(a), true).unwrap();
            let k = encode(&p);
            assert!(k.as_str().starts_with(&alloc::format!("c{prefix}")), "{k}");
            assert_eq!(decode_key(&k).unwrap(), p);
        }
    }

    #[test]
    fn obstacle_north_at_index_20() {
        assert_eq!(oracle_index(o(0, -1)), 1 + 3 + 5 + 7 + 4);
        let mut p = Problem::open(o(0, -5), None, false).unwrap();
        p.set(o(0, -1), Label::Obstacle);
        let k = encode(&p);
        assert_eq!(k.as_str().as_bytes()[1 + 20], b'1');
        for c in diamond_cells(5) {
            assert_eq!(crate::torus::diamond_index(c, 5), Some(oracle_index(c)));
        }
    }

    #[test]
    fn malformed_keys() {
        let good = encode(&Problem::open(o(0, -5), None, false).unwrap()).to_string();
        let mut two_goals = good.clone();
        two_goals.replace_range(10..11, "3");
        assert_eq!(decode_key(&PlanKey(two_goals)), Err(KeyError::GoalCount(2)));
        assert_eq!(decode_key(&PlanKey(good[..50].into())), Err(KeyError::Length(50)));
        let mut bad = good.clone();
        bad.replace_range(7..8, "9");
        assert_eq!(decode_key(&PlanKey(bad)), Err(KeyError::BadChar(7)));
        assert_eq!(decode_key(&PlanKey(good.replacen('n', "x", 1))), Err(KeyError::BadChar(0)));
        let mut self_blocked = good.clone();
        self_blocked.replace_range(31..32, "2");
        assert!(matches!(decode_key(&PlanKey(self_blocked)), Err(KeyError::Invalid { .. })));
        assert!(PlanKey::parse(&good).is_ok());
    }

    #[test]
    fn flag_and_goal_separate_keys() {
        let a = Problem::open(o(0, -3), None, false).unwrap();
        let mut b = a.clone();
        b.clear_allowed = true;
        let c = Problem::open(o(0, -4), None, false).unwrap();
        assert_ne!(encode(&a), encode(&b));
        assert_ne!(encode(&a), encode(&c));
        let mut store = MemoryStore::new();
        let mut calls = 0;
        let mut solver = |p: &Problem| {
            calls += 1;
            solve(p)
        };
        assert_eq!(solve_cached(&a, &mut store, &mut solver).1, Lookup::Miss);
        assert_eq!(solve_cached(&c, &mut store, &mut solver).1, Lookup::Miss);
        assert_eq!(solve_cached(&b, &mut store, &mut solver).1, Lookup::Miss);
        assert_eq!(solve_cached(&a, &mut store, &mut solver).1, Lookup::Hit);
        assert_eq!(calls, 3);
    }

    #[test]
    fn warm_lookup_does_no_search() {
        let mut store = MemoryStore::new();
        let expansions = core::cell::Cell::new(0);
        let mut solver = |p: &Problem| {
            let (plan, stats) = solve_with_stats(p);
            expansions.set(expansions.get() + stats.expansions);
            plan
        };
        let mut p = Problem::open(o(2, -3), Some(o(0, 1)), true).unwrap();
        p.set(o(0, -1), Label::Obstacle);
        let (cold, l, _) = solve_cached(&p, &mut store, &mut solver);
        assert_eq!(l, Lookup::Miss);
        let after_cold = expansions.get();
        assert!(after_cold > 0);
        let (warm, l, _) = solve_cached(&p, &mut store, &mut solver);
        assert_eq!((l, expansions.get()), (Lookup::Hit, after_cold));
        assert_eq!(warm, cold);
        assert_eq!(store.text(&encode(&p)).unwrap(), cold.to_text());
    }

    #[test]
    fn corrupt_entry_is_rewritten() {
        let p = Problem::open(o(0, -2), None, false).unwrap();
        let mut store = MemoryStore::new();
        store.put_text(encode(&p), "move_up\n".into());
        let (plan, l, _) = solve_cached(&p, &mut store, &mut solve);
        assert_eq!(l, Lookup::Repaired);
        assert_eq!(plan.steps, vec![PlanStep::Move(Direction::N); 2]);
        assert_eq!(solve_cached(&p, &mut store, &mut solve).1, Lookup::Hit);
    }

    #[test]
    fn merged_coding_folds_blocks() {
        let mut p = Problem::open(o(0, -5), None, false).unwrap();
        p.set(o(1, 1), Label::Blocked);
        let mut q = p.clone();
        q.set(o(1, 1), Label::Obstacle);
        assert_ne!(encode(&p), encode(&q));
        assert_eq!(encode_with(&p, KeyCoding::MergedBlocks), encode_with(&q, KeyCoding::MergedBlocks));
    }

    fn arb_problem() -> impl Strategy<Value = Problem> {
        (
            proptest::collection::vec(prop_oneof![3 => Just(Label::Empty), 1 => Just(Label::Obstacle), 1 => Just(Label::Blocked)], VIEW_CELLS),
            0usize..VIEW_CELLS,
            0usize..5,
            any::<bool>(),
        )
            .prop_filter_map("goal clashes", |(mut labels, g, a, clear)| {
                let cells = diamond_cells(5);
                let goal = cells[g];
                let attached = (a < 4).then(|| Direction::ALL[a].offset());
                if goal == RelOffset::ZERO || Some(goal) == attached {
                    return None;
                }
                labels[30] = Label::Empty;
                labels[g] = Label::Empty;
                if let Some(a) = attached {
                    labels[crate::torus::diamond_index(a, 5).unwrap()] = Label::Empty;
                }
                Problem::new(labels, goal, attached, clear).ok()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn key_round_trip(p in arb_problem()) {
            let k = encode(&p);
            let back = decode_key(&k).unwrap();
            prop_assert_eq!(encode(&back), k);
            prop_assert_eq!(back, p);
        }
    }

    proptest! {
        #[test]
        fn key_is_injective(p in arb_problem(), q in arb_problem()) {
            prop_assert_eq!(encode(&p) == encode(&q), p == q);
        }
    }
}
