//! Coordinate algebra on a wrap-around grid.
//!
//! Axis convention used by every module: `+x` is east, `+y` is south.
//! A block "below" an agent sits at offset `(0, 1)`.

use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Radius of the observable diamond around an agent.
pub const VISION_RADIUS: i32 = 5;

/// Grid dimensions in cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dims {
    w: i32,
    h: i32,
}

impl Dims {
    /// Returns `None` unless both sides are at least one cell.
    pub fn new(w: i32, h: i32) -> Option<Self> {
        (w >= 1 && h >= 1).then_some(Self { w, h })
    }

    pub fn w(&self) -> i32 {
        self.w
    }

    pub fn h(&self) -> i32 {
        self.h
    }

    pub fn area(&self) -> usize {
        self.w as usize * self.h as usize
    }

    /// Row-major index of a normalized coordinate.
    pub fn index(&self, c: TorusCoord) -> usize {
        c.y as usize * self.w as usize + c.x as usize
    }

    pub fn coord_at(&self, index: usize) -> TorusCoord {
        TorusCoord {
            x: (index % self.w as usize) as i32,
            y: (index / self.w as usize) as i32,
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.w, self.h)
    }
}

/// A normalized cell on a torus; `0 <= x < w`, `0 <= y < h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TorusCoord {
    pub x: i32,
    pub y: i32,
}

/// Signed displacement between cells. Not tied to any grid size.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct RelOffset {
    pub dx: i32,
    pub dy: i32,
}

impl RelOffset {
    pub const ZERO: RelOffset = RelOffset { dx: 0, dy: 0 };

    pub const fn new(dx: i32, dy: i32) -> Self {
        Self { dx, dy }
    }

    /// Manhattan length.
    pub fn norm1(&self) -> i32 {
        self.dx.abs() + self.dy.abs()
    }

    pub fn in_vision(&self) -> bool {
        self.norm1() <= VISION_RADIUS
    }

    /// Quarter turn clockwise (north becomes east).
    pub fn rotate_cw(self) -> Self {
        Self::new(-self.dy, self.dx)
    }

    /// Quarter turn counter-clockwise (north becomes west).
    pub fn rotate_ccw(self) -> Self {
        Self::new(self.dy, -self.dx)
    }

    pub fn direction(&self) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.offset() == *self)
    }
}

impl Add for RelOffset {
    type Output = RelOffset;
    fn add(self, o: RelOffset) -> RelOffset {
        RelOffset::new(self.dx + o.dx, self.dy + o.dy)
    }
}

impl Sub for RelOffset {
    type Output = RelOffset;
    fn sub(self, o: RelOffset) -> RelOffset {
        RelOffset::new(self.dx - o.dx, self.dy - o.dy)
    }
}

impl Neg for RelOffset {
    type Output = RelOffset;
    fn neg(self) -> RelOffset {
        RelOffset::new(-self.dx, -self.dy)
    }
}

impl fmt::Display for RelOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.dx, self.dy)
    }
}

/// Cardinal direction. Declaration order (N, S, E, W) is the tie-break order
/// used by the planner and the fallback policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    S,
    E,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::S, Direction::E, Direction::W];

    pub const fn offset(self) -> RelOffset {
        match self {
            Direction::N => RelOffset::new(0, -1),
            Direction::S => RelOffset::new(0, 1),
            Direction::E => RelOffset::new(1, 0),
            Direction::W => RelOffset::new(-1, 0),
        }
    }

    pub const fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::S => Direction::N,
            Direction::E => Direction::W,
            Direction::W => Direction::E,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Direction::N => 'n',
            Direction::S => 's',
            Direction::E => 'e',
            Direction::W => 'w',
        }
    }
}

/// Wraps arbitrary integers onto the torus.
pub fn wrap(x: i64, y: i64, dims: Dims) -> TorusCoord {
    TorusCoord {
        x: x.rem_euclid(dims.w as i64) as i32,
        y: y.rem_euclid(dims.h as i64) as i32,
    }
}

/// `c` displaced by `o`, wrapped.
pub fn shift(c: TorusCoord, o: RelOffset, dims: Dims) -> TorusCoord {
    wrap(c.x as i64 + o.dx as i64, c.y as i64 + o.dy as i64, dims)
}

/// Shortest signed displacement along one axis of length `len`.
/// Exactly half the axis resolves to the positive direction.
pub fn axis_delta(from: i32, to: i32, len: i32) -> i32 {
    let d = (to - from).rem_euclid(len);
    if 2 * d <= len {
        d
    } else {
        d - len
    }
}

/// Per-axis minimal offset `o` with `shift(a, o) == b`.
pub fn delta(a: TorusCoord, b: TorusCoord, dims: Dims) -> RelOffset {
    RelOffset::new(axis_delta(a.x, b.x, dims.w), axis_delta(a.y, b.y, dims.h))
}

pub fn torus_distance(a: TorusCoord, b: TorusCoord, dims: Dims) -> i32 {
    delta(a, b, dims).norm1()
}

/// Cells of the Manhattan ball of `radius`, top row first, each row west to east.
pub fn diamond_cells(radius: i32) -> Vec<RelOffset> {
    let r = radius.max(0);
    let mut out = Vec::with_capacity((2 * r * r + 2 * r + 1) as usize);
    for dy in -r..=r {
        let span = r - dy.abs();
        for dx in -span..=span {
            out.push(RelOffset::new(dx, dy));
        }
    }
    out
}

/// Position of `o` in `diamond_cells(radius)`, if inside.
pub fn diamond_index(o: RelOffset, radius: i32) -> Option<usize> {
    if o.norm1() > radius {
        return None;
    }
    // Rows above `o.dy` contribute 2*(r-|y|)+1 cells each.
    let mut idx = 0;
    for dy in -radius..o.dy {
        idx += 2 * (radius - dy.abs()) + 1;
    }
    let span = radius - o.dy.abs();
    Some((idx + o.dx + span) as usize)
}
