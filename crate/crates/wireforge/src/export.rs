//! Text exports: SVG per view, OBJ polylines, and the trace CSV.

use std::fmt::Write;

use wireforge_core::{Canvas, TraceRecord, Wire2d, WireArt};

pub const TRACE_HEADER: &str = "iter,loss_x,loss_y,loss_z,mst_budget,total,ms";

/// SVG 1.1 document with one path per wire in pixel coordinates (y down).
pub fn svg(wires: &[Wire2d], canvas: &Canvas) -> String {
    let (w, h) = (canvas.width, canvas.height);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>"
    );
    for wire in wires {
        let _ = writeln!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"{}\" stroke-linecap=\"round\" stroke-linejoin=\"round\"/>",
            svg_path(wire),
            canvas.stroke_width
        );
    }
    out.push_str("</svg>\n");
    out
}

/// `M x0 y0 C x1 y1, x2 y2, x3 y3` with one `C` per segment.
pub fn svg_path(wire: &Wire2d) -> String {
    let p = &wire.points;
    let mut d = format!("M {:.6} {:.6}", p[0].x, p[0].y);
    for c in p[1..].chunks(3) {
        let _ = write!(
            d,
            " C {:.6} {:.6}, {:.6} {:.6}, {:.6} {:.6}",
            c[0].x, c[0].y, c[1].x, c[1].y, c[2].x, c[2].y
        );
    }
    d
}

/// Wavefront OBJ with each wire flattened to `samples` points per segment
/// (joints shared) and written as one `l` polyline.
pub fn obj(art: &WireArt, samples: usize) -> String {
    assert!(samples >= 2, "samples per segment must be at least 2");
    let mut out = String::from("# wireforge wire art\n");
    let mut next = 1usize;
    let mut lines = Vec::with_capacity(art.wires.len());
    for wire in &art.wires {
        let mut indices = Vec::new();
        for (k, seg) in wire.segments().enumerate() {
            let first = if k == 0 { 0 } else { 1 };
            for j in first..samples {
                let p = seg.eval(j as f64 / (samples - 1) as f64);
                let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
                indices.push(next);
                next += 1;
            }
        }
        let mut l = String::from("l");
        for i in indices {
            let _ = write!(l, " {i}");
        }
        lines.push(l);
    }
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

/// Trace rows in CSV. Timing goes in the last column so it can be cut off
/// when comparing runs.
pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let [x, y, z] = r.view_losses;
        let _ = writeln!(
            out,
            "{},{x},{y},{z},{},{},{:.3}",
            r.iteration, r.mst_budget, r.total, r.ms
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use wireforge_core::{Point2, Point3, Wire};

    #[test]
    fn straight_segment_path() {
        let w = Wire2d::new(vec![
            Point2::new(1.0, 2.0),
            Point2::new(3.5, 2.0),
            Point2::new(6.0, 2.25),
            Point2::new(8.0, 2.0),
        ])
        .unwrap();
        assert_eq!(
            svg_path(&w),
            "M 1.000000 2.000000 C 3.500000 2.000000, 6.000000 2.250000, 8.000000 2.000000"
        );
    }

    #[test]
    fn empty_svg_has_no_paths() {
        let canvas = Canvas::new(32, 16, 2.0, 1.0).unwrap();
        let s = svg(&[], &canvas);
        assert!(!s.contains("<path"));
        assert!(s.contains("viewBox=\"0 0 32 16\""));
        assert!(s.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn single_segment_obj() {
        let w = Wire::new(0, (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        let s = obj(&WireArt::new(vec![w]), 2);
        let v = s.lines().filter(|l| l.starts_with("v ")).count();
        assert_eq!(v, 2);
        assert!(s.lines().any(|l| l == "l 1 2"));
    }

    #[test]
    fn trace_header() {
        let csv = trace_csv(&[TraceRecord {
            iteration: 3,
            view_losses: [1.0, 0.5, 0.25],
            mst_budget: 2.0,
            total: 101.75,
            ms: 12.3456,
        }]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        assert_eq!(lines.next(), Some("3,1,0.5,0.25,2,101.75,12.346"));
    }
}
