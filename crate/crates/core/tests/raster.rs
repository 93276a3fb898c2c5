mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wireforge_core::raster::{flatten, render, Rasterization};
use wireforge_core::{Canvas, Point2, Segment2, Wire2d};

fn line(a: Point2, b: Point2) -> Wire2d {
    let d = b - a;
    Wire2d::new(vec![a, a + d * (1.0 / 3.0), a + d * (2.0 / 3.0), b]).unwrap()
}

fn canvas(size: usize, stroke: f64) -> Canvas {
    Canvas::new(size, size, stroke, 1.0).unwrap()
}

#[test]
fn empty_render_is_white() {
    let img = render(&[], &canvas(32, 3.0)).unwrap();
    assert!(img.pixels().iter().all(|&v| v == 1.0));
}

#[test]
fn horizontal_stroke_through_center() {
    let c = canvas(64, 4.0);
    let img = render(&[line(Point2::new(-5.0, 32.0), Point2::new(69.0, 32.0))], &c).unwrap();
    // pixel centers at y = 31.5 and 32.5 straddle the stroke axis
    assert_eq!(img.get(32, 32), 0.0);
    assert_eq!(img.get(32, 31), 0.0);
    assert_eq!(img.get(32, 22), 1.0);
    for x in 0..64 {
        for k in 0..32 {
            assert!((img.get(x, 31 - k) - img.get(x, 32 + k)).abs() < 1e-9);
        }
    }
}

#[test]
fn profile_matches_analytic_smoothstep() {
    let c = canvas(64, 4.0);
    let img = render(&[line(Point2::new(-5.0, 20.0), Point2::new(69.0, 20.0))], &c).unwrap();
    for y in 0..64 {
        let d = (y as f64 + 0.5 - 20.0).abs();
        let x = ((d - 1.0) / 2.0).clamp(0.0, 1.0);
        let expected = x * x * (3.0 - 2.0 * x);
        assert!((img.get(30, y) - expected).abs() < 1e-12, "row {y}");
    }
}

#[test]
fn composite_is_pixelwise_min() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = canvas(48, 3.0);
    for _ in 0..20 {
        let wires: Vec<Wire2d> = (0..3).map(|_| common::wire2d(&mut rng, 2, 0.0, 48.0)).collect();
        let all = render(&wires, &c).unwrap();
        let singles: Vec<_> = wires
            .iter()
            .map(|w| render(std::slice::from_ref(w), &c).unwrap())
            .collect();
        for i in 0..c.pixel_count() {
            let m = singles.iter().map(|s| s.pixels()[i]).fold(1.0, f64::min);
            assert_eq!(all.pixels()[i], m);
        }
    }
}

#[test]
fn scatter_render_equals_exhaustive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = canvas(40, 3.0);
    for _ in 0..20 {
        let wires: Vec<Wire2d> = (0..4).map(|_| common::wire2d(&mut rng, 2, -10.0, 50.0)).collect();
        let fast = Rasterization::new(&wires, &c).unwrap();
        let slow = Rasterization::new_exhaustive(&wires, &c).unwrap();
        assert_eq!(fast.image(), slow.image());
        let up: Vec<f64> = (0..c.pixel_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(fast.backward(&up).unwrap(), slow.backward(&up).unwrap());
    }
}

#[test]
fn integer_translation_shifts_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = canvas(64, 3.0);
    for _ in 0..10 {
        let w = common::wire2d(&mut rng, 2, 16.0, 40.0);
        let (dx, dy) = (rng.random_range(-8i64..8), rng.random_range(-8i64..8));
        let moved = Wire2d::new(
            w.points
                .iter()
                .map(|p| Point2::new(p.x + dx as f64, p.y + dy as f64))
                .collect(),
        )
        .unwrap();
        let a = render(&[w], &c).unwrap();
        let b = render(&[moved], &c).unwrap();
        for y in 8..56 {
            for x in 8..56 {
                let (sx, sy) = ((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                assert!((a.get(x, y) - b.get(sx, sy)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn wider_stroke_never_lightens() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let wires: Vec<Wire2d> = (0..3).map(|_| common::wire2d(&mut rng, 2, 0.0, 48.0)).collect();
        let mut prev = render(&wires, &canvas(48, 1.0)).unwrap();
        for stroke in [1.5, 2.0, 3.0, 5.0, 8.0] {
            let next = render(&wires, &canvas(48, stroke)).unwrap();
            assert!(next.pixels().iter().zip(prev.pixels()).all(|(n, p)| n <= p));
            prev = next;
        }
    }
}

#[test]
fn flatten_collinear_and_endpoints() {
    let a = Point2::new(1.0, 2.0);
    let d = Point2::new(3.0, -1.5);
    let seg = Segment2::new(a, a + d * 0.2, a + d * 0.9, a + d);
    for s in [2, 3, 17, 100] {
        let poly = flatten(&seg, s).unwrap();
        assert_eq!(poly.vertices.len(), s);
        for v in &poly.vertices {
            let r = v.position - a;
            assert!((r.x * d.y - r.y * d.x).abs() < 1e-12);
        }
    }
    let two = flatten(&seg, 2).unwrap();
    assert_eq!((two.vertices[0].position, two.vertices[1].position), (seg.p0, seg.p3));
    assert!(flatten(&seg, 1).is_err());
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let s = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

fn polyline_distance(p: Point2, pts: &[Point2]) -> f64 {
    pts.windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn coarse_flattening_is_within_half_pixel_of_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let w = common::wire2d(&mut rng, 1, 0.0, 256.0);
        let seg = w.segment(0);
        let coarse: Vec<Point2> = flatten(&seg, 64).unwrap().vertices.iter().map(|v| v.position).collect();
        let dense: Vec<Point2> = flatten(&seg, 1024)
            .unwrap()
            .vertices
            .iter()
            .map(|v| v.position)
            .collect();
        let h1 = dense.iter().map(|&p| polyline_distance(p, &coarse)).fold(0.0, f64::max);
        let h2 = coarse.iter().map(|&p| polyline_distance(p, &dense)).fold(0.0, f64::max);
        assert!(h1.max(h2) < 0.5, "hausdorff {}", h1.max(h2));
    }
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = canvas(32, 3.0);
    let w = common::wire2d(&mut rng, 3, 0.0, 32.0);
    let g = Rasterization::new(&[w], &c)
        .unwrap()
        .backward(&vec![0.0; c.pixel_count()])
        .unwrap();
    assert!(g.per_wire[0].iter().all(|p| *p == Point2::ZERO));
}

#[test]
fn pixels_outside_band_have_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = canvas(48, 3.0);
    let w = common::wire2d(&mut rng, 2, 10.0, 38.0);
    let r = Rasterization::new(&[w], &c).unwrap();
    let up: Vec<f64> = r
        .image()
        .pixels()
        .iter()
        .map(|&v| if v == 0.0 || v == 1.0 { 1.0 } else { 0.0 })
        .collect();
    let g = r.backward(&up).unwrap();
    assert!(g.per_wire[0].iter().all(|p| *p == Point2::ZERO));
}

#[test]
fn backward_rejects_wrong_size() {
    let c = canvas(16, 3.0);
    let r = Rasterization::new(&[], &c).unwrap();
    assert!(r.backward(&[0.0; 10]).is_err());
}

#[test]
fn single_pixel_gradient_matches_finite_differences() {
    let c = canvas(64, 3.0);
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    while checked < 40 {
        let w = common::wire2d(&mut rng, 2, 12.0, 52.0);
        let r = Rasterization::new(std::slice::from_ref(&w), &c).unwrap();
        let band: Vec<usize> = (0..c.pixel_count())
            .filter(|&i| r.image().pixels()[i] > 0.0 && r.image().pixels()[i] < 1.0)
            .collect();
        let Some(&pixel) = band.get(rng.random_range(0..band.len().max(1))) else {
            continue;
        };
        let mut up = vec![0.0; c.pixel_count()];
        up[pixel] = 1.0;
        let g = r.backward(&up).unwrap().per_wire[0].clone();
        let mut flipped = false;
        let mut fd = vec![Point2::ZERO; w.points.len()];
        for k in 0..w.points.len() {
            for axis in 0..2 {
                let eval = |d: f64| {
                    let mut m = w.clone();
                    if axis == 0 {
                        m.points[k].x += d
                    } else {
                        m.points[k].y += d
                    }
                    Rasterization::new(&[m], &c).unwrap()
                };
                let (p, m) = (eval(h), eval(-h));
                flipped |= p.assignment(pixel) != r.assignment(pixel) || m.assignment(pixel) != r.assignment(pixel);
                let v = (p.image().pixels()[pixel] - m.image().pixels()[pixel]) / (2.0 * h);
                if axis == 0 {
                    fd[k].x = v
                } else {
                    fd[k].y = v
                }
            }
        }
        if flipped {
            continue;
        }
        let num: f64 = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (*a - *b).dot(*a - *b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = g.iter().map(|a| a.dot(*a)).sum::<f64>().sqrt().max(1e-9);
        assert!(num / den <= 1e-3, "relative error {}", num / den);
        checked += 1;
    }
}

proptest! {
    #[test]
    fn pixels_stay_in_unit_range(seed in any::<u64>(), stroke in 0.5..8.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wires: Vec<Wire2d> = (0..2).map(|_| common::wire2d(&mut rng, 2, -8.0, 40.0)).collect();
        let img = render(&wires, &canvas(32, stroke)).unwrap();
        prop_assert!(img.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn far_pixels_are_exactly_white(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = canvas(32, 3.0);
        let w = common::wire2d(&mut rng, 1, 0.0, 32.0);
        let img = render(std::slice::from_ref(&w), &c).unwrap();
        let pts: Vec<Point2> = flatten(&w.segment(0), c.samples_per_segment).unwrap().vertices.iter().map(|v| v.position).collect();
        for y in 0..32 {
            for x in 0..32 {
                if polyline_distance(Point2::new(x as f64 + 0.5, y as f64 + 0.5), &pts) > c.reach() + 1e-9 {
                    prop_assert_eq!(img.get(x, y), 1.0);
                }
            }
        }
    }
}
