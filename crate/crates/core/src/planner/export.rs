//! PDDL-flavoured rendering of a planning problem, for inspection with
//! external tools. Nothing here parses PDDL.

use alloc::format;
use alloc::string::String;

use super::{Label, Problem};
use crate::torus::{diamond_cells, Direction, RelOffset, VISION_RADIUS};

fn cell_name(o: RelOffset) -> String {
    let sx = if o.dx < 0 { "m" } else { "p" };
    let sy = if o.dy < 0 { "m" } else { "p" };
    format!("c_{sx}{}_{sy}{}", o.dx.abs(), o.dy.abs())
}

pub fn to_pddl(p: &Problem) -> String {
    let cells = diamond_cells(VISION_RADIUS);
    let mut out = String::from("(define (problem local-move)\n  (:domain grid-agent)\n  (:objects");
    for c in &cells {
        out.push(' ');
        out.push_str(&cell_name(*c));
    }
    out.push_str(" - cell)\n  (:init\n    (agent-at c_p0_p0)\n");
    if let Some(a) = p.attached {
        out.push_str(&format!("    (block-at {})\n", cell_name(a)));
    }
    if p.clear_allowed {
        out.push_str("    (can-clear)\n");
    }
    for (c, l) in cells.iter().zip(&p.labels) {
        match l {
            Label::Empty => out.push_str(&format!("    (free {})\n", cell_name(*c))),
            Label::Obstacle => out.push_str(&format!("    (obstacle {})\n", cell_name(*c))),
            Label::Blocked => {}
        }
    }
    for c in &cells {
        for d in Direction::ALL {
            let n = *c + d.offset();
            if n.norm1() <= VISION_RADIUS {
                let rel = match d {
                    Direction::N => "north",
                    Direction::S => "south",
                    Direction::E => "east",
                    Direction::W => "west",
                };
                out.push_str(&format!("    ({rel} {} {})\n", cell_name(*c), cell_name(n)));
            }
        }
    }
    out.push_str(&format!("  )\n  (:goal (agent-at {}))\n  (:metric minimize (total-cost)))\n", cell_name(p.goal)));
    out
}
