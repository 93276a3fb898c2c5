//! Single-stroke capital letters for building line-drawing targets.
//!
//! Glyphs are polylines in canvas-normalized coordinates (`y` up) inside the
//! box `[0.2, 0.8]^2`, which is the central `[-0.6, 0.6]^2` of the scene under
//! the default window. They are rendered with the same stroke profile as the
//! wires.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{Point2, Wire2d};
use crate::raster::{render, Canvas, RasterError, RasterImage};

const LO: f64 = 0.2;
const HI: f64 = 0.8;
const MID: f64 = 0.5;

fn pt(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

/// Strokes of a capital letter, or `None` if the letter is not in the set.
pub fn letter(ch: char) -> Option<Vec<Vec<Point2>>> {
    let strokes = match ch.to_ascii_uppercase() {
        'X' => vec![vec![pt(LO, HI), pt(HI, LO)], vec![pt(LO, LO), pt(HI, HI)]],
        'Y' => vec![
            vec![pt(LO, HI), pt(MID, MID)],
            vec![pt(HI, HI), pt(MID, MID)],
            vec![pt(MID, MID), pt(MID, LO)],
        ],
        'Z' => vec![vec![pt(LO, HI), pt(HI, HI), pt(LO, LO), pt(HI, LO)]],
        'L' => vec![vec![pt(LO, HI), pt(LO, LO), pt(HI, LO)]],
        'T' => vec![vec![pt(LO, HI), pt(HI, HI)], vec![pt(MID, HI), pt(MID, LO)]],
        'I' => vec![vec![pt(MID, HI), pt(MID, LO)]],
        'V' => vec![vec![pt(LO, HI), pt(MID, LO), pt(HI, HI)]],
        'H' => vec![
            vec![pt(LO, HI), pt(LO, LO)],
            vec![pt(HI, HI), pt(HI, LO)],
            vec![pt(LO, MID), pt(HI, MID)],
        ],
        _ => return None,
    };
    Some(strokes)
}

/// Straight cubic segments along a polyline, with control points at thirds.
pub fn polyline_wire(points: &[Point2]) -> Wire2d {
    let mut out = vec![points[0]];
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let d = b - a;
        out.extend_from_slice(&[a + d * (1.0 / 3.0), a + d * (2.0 / 3.0), b]);
    }
    Wire2d { points: out }
}

/// Renders `ch` onto `canvas`. Returns `None` for unknown letters.
pub fn render_letter(ch: char, canvas: &Canvas) -> Option<Result<RasterImage, RasterError>> {
    let wires: Vec<Wire2d> = letter(ch)?
        .iter()
        .map(|stroke| {
            let px: Vec<Point2> = stroke.iter().map(|&p| canvas.to_pixels(p)).collect();
            polyline_wire(&px)
        })
        .collect();
    Some(render(&wires, canvas))
}
