//! `wireforge check`: quick invariant checks of the installed build.
//!
//! Each check is small enough to finish in well under a second in release
//! builds. They mirror the property tests, at reduced sample counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wireforge_core::connectivity::{mst_budget, mst_loss_and_grad};
use wireforge_core::geometry::{
    bezier2d_point, bezier_point, project_point, to_plane_coords, ProjectionMap, ViewPlane,
};
use wireforge_core::raster::{render, Rasterization};
use wireforge_core::{
    prim_mst, Adam, AdamConfig, Canvas, CubicSegment, OptimConfig, Point2, Point3, ViewId, Window, Wire, Wire2d,
    WireArt, WireGraph,
};

use crate::artifact::{render_view, RenderSettings, WireArtFile};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn rand_point(rng: &mut ChaCha8Rng, r: f64) -> Point3 {
    Point3::new(
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    )
}

fn unit(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let p = rand_point(rng, 1.0);
        let n = p.norm();
        if n > 0.1 && n <= 1.0 {
            return p * (1.0 / n);
        }
    }
}

/// A random right-handed orthonormal plane.
pub fn random_plane(rng: &mut ChaCha8Rng) -> ViewPlane {
    let n = unit(rng);
    let a = unit(rng);
    let u = a - n * a.dot(n);
    let u = u * (1.0 / u.norm());
    let v = n.cross(u);
    ViewPlane::new(n, rand_point(rng, 1.0), u, v).expect("orthonormal by construction")
}

fn projection_equivalence(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let seg = CubicSegment::new(
            rand_point(rng, 2.0),
            rand_point(rng, 2.0),
            rand_point(rng, 2.0),
            rand_point(rng, 2.0),
        );
        let plane = random_plane(rng);
        let window = Window::new(rng.random_range(0.5..3.0), Point2::new(0.5, 0.5)).expect("positive scale");
        let t: f64 = rng.random_range(0.0..=1.0);
        let on_plane = |p: Point3| to_plane_coords(project_point(p, &plane), &plane, &window).expect("on plane");
        let direct = on_plane(bezier_point(&seg, t).expect("t in range"));
        let [p0, p1, p2, p3] = seg.control_points().map(on_plane);
        let via = bezier2d_point(&wireforge_core::Segment2::new(p0, p1, p2, p3), t).expect("t in range");
        worst = worst.max((direct - via).norm());
    }
    result(
        "projection equivalence",
        worst < 1e-9,
        format!("max deviation {worst:.2e} over 1000 samples"),
    )
}

fn projection_adjoint(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let map = ProjectionMap::new(&random_plane(rng), &Window::scene()).expect("valid window");
        let d = rand_point(rng, 1.0);
        let g = Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let jd = map.apply(d) - map.apply(Point3::ZERO);
        worst = worst.max((g.dot(jd) - map.apply_transpose(g).dot(d)).abs());
    }
    result("projection adjoint", worst < 1e-12, format!("max mismatch {worst:.2e}"))
}

fn raster_gradients(rng: &mut ChaCha8Rng) -> CheckResult {
    let canvas = Canvas::new(48, 48, 3.0, 1.0).expect("valid canvas");
    let h = 1e-4;
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < 30 {
        let pts: Vec<Point2> = (0..4)
            .map(|_| Point2::new(rng.random_range(8.0..40.0), rng.random_range(8.0..40.0)))
            .collect();
        let wire = Wire2d::new(pts).expect("one segment");
        let raster = Rasterization::new(std::slice::from_ref(&wire), &canvas).expect("renders");
        let band: Vec<usize> = (0..canvas.pixel_count())
            .filter(|&i| {
                let v = raster.image().pixels()[i];
                v > 0.0 && v < 1.0
            })
            .collect();
        if band.is_empty() {
            continue;
        }
        let pixel = band[rng.random_range(0..band.len())];
        let mut upstream = vec![0.0; canvas.pixel_count()];
        upstream[pixel] = 1.0;
        let analytic = raster.backward(&upstream).expect("dims match").per_wire[0].clone();
        let k = rng.random_range(0..4);
        let axis = rng.random_range(0..2);
        let shifted = |delta: f64| {
            let mut w = wire.clone();
            if axis == 0 {
                w.points[k].x += delta;
            } else {
                w.points[k].y += delta;
            }
            Rasterization::new(&[w], &canvas).expect("renders")
        };
        let (plus, minus) = (shifted(h), shifted(-h));
        if plus.assignment(pixel) != raster.assignment(pixel) || minus.assignment(pixel) != raster.assignment(pixel) {
            skipped += 1;
            continue;
        }
        let fd = (plus.image().pixels()[pixel] - minus.image().pixels()[pixel]) / (2.0 * h);
        let a = if axis == 0 { analytic[k].x } else { analytic[k].y };
        let err = (a - fd).abs() / fd.abs().max(a.abs()).max(1e-6);
        if fd.abs().max(a.abs()) > 1e-6 {
            worst = worst.max(err);
        }
        checked += 1;
    }
    result(
        "rasterizer gradients",
        worst <= 1e-3,
        format!("max relative error {worst:.2e} over {checked} configurations, {skipped} skipped for assignment flips"),
    )
}

fn brute_force_mst(n: usize, w: &[f64]) -> f64 {
    // every subset of n - 1 edges that connects all vertices
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut best = f64::INFINITY;
    let mut choose = vec![0usize; n - 1];
    fn rec(
        start: usize,
        depth: usize,
        choose: &mut Vec<usize>,
        edges: &[(usize, usize)],
        n: usize,
        w: &[f64],
        best: &mut f64,
    ) {
        if depth == n - 1 {
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(p: &[usize], x: usize) -> usize {
                let mut r = x;
                while p[r] != r {
                    r = p[r];
                }
                r
            }
            let mut total = 0.0;
            for &e in choose.iter() {
                let (a, b) = edges[e];
                let (ra, rb) = (find(&parent, a), find(&parent, b));
                if ra == rb {
                    return;
                }
                parent[ra] = rb;
                total += w[a * n + b];
            }
            *best = best.min(total);
            return;
        }
        for e in start..edges.len() {
            choose[depth] = e;
            rec(e + 1, depth + 1, choose, edges, n, w, best);
        }
    }
    if n == 1 {
        return 0.0;
    }
    rec(0, 0, &mut choose, &edges, n, w, &mut best);
    best
}

fn mst_oracle(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut mismatches = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=6);
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(0..20) as f64;
                w[i * n + j] = v;
                w[j * n + i] = v;
            }
        }
        let graph = WireGraph::from_weights(n, &w);
        if prim_mst(&graph).total_weight != brute_force_mst(n, &w) {
            mismatches += 1;
        }
    }
    result(
        "MST vs exhaustive search",
        mismatches == 0,
        format!("{mismatches} mismatches in 50 graphs"),
    )
}

fn mst_gradient(rng: &mut ChaCha8Rng) -> CheckResult {
    let wires: Vec<Wire> = (0..5)
        .map(|id| Wire::new(id, (0..4).map(|_| rand_point(rng, 1.0)).collect()).expect("4 points"))
        .collect();
    let art = WireArt::new(wires);
    let analytic = mst_loss_and_grad(&art).grad;
    let x0 = art.flat_coords();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..x0.len() {
        let eval = |d: f64| {
            let mut a = art.clone();
            let mut x = x0.clone();
            x[i] += d;
            a.set_flat_coords(&x).expect("same length");
            mst_budget(&a)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs());
    }
    result("MST gradient", worst < 1e-6, format!("max abs error {worst:.2e}"))
}

fn adam_first_step() -> CheckResult {
    let cfg = AdamConfig::default();
    let mut adam = Adam::new(3, cfg);
    let g = [2.0, -0.5, 1e-3];
    let mut p = [0.0; 3];
    adam.update(&mut p, &g, 0.1);
    let worst = p
        .iter()
        .zip(&g)
        .map(|(pi, gi)| (pi + 0.1 * gi / (gi.abs() + cfg.epsilon)).abs())
        .fold(0.0, f64::max);
    result("Adam first step", worst < 1e-15, format!("max deviation {worst:.2e}"))
}

fn raster_background() -> CheckResult {
    let canvas = Canvas::new(32, 32, 3.0, 1.0).expect("valid canvas");
    let blank = render(&[], &canvas).expect("renders");
    let ok = blank.pixels().iter().all(|&v| v == 1.0);
    result("empty render is white", ok, String::new())
}

fn wireart_round_trip(rng: &mut ChaCha8Rng) -> CheckResult {
    let config = OptimConfig {
        n_wires: 4,
        canvas_size: 64,
        seed: rng.random(),
        ..OptimConfig::default()
    };
    let art = wireforge_core::engine::initialize(&config);
    let settings = RenderSettings::from_config(&config).expect("valid config");
    let text = WireArtFile::new(&art, settings, 0).to_json();
    let passed = match WireArtFile::from_json(&text).and_then(|f| f.art().map(|a| (a, f.render))) {
        Ok((back, render_back)) => ViewId::ALL.iter().all(|&v| {
            let a = render_view(&art, &settings, v).expect("renders");
            let b = render_view(&back, &render_back, v).expect("renders");
            a.pixels() == b.pixels()
        }),
        Err(_) => false,
    };
    result("wire art JSON round trip", passed, String::new())
}

pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        projection_equivalence(&mut rng),
        projection_adjoint(&mut rng),
        raster_background(),
        raster_gradients(&mut rng),
        mst_oracle(&mut rng),
        mst_gradient(&mut rng),
        adam_first_step(),
        wireart_round_trip(&mut rng),
    ]
}
