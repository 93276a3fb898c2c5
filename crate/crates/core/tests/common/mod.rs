#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wireforge_core::{Point2, Point3, ViewPlane, Wire, Wire2d};

pub fn point(rng: &mut ChaCha8Rng, r: f64) -> Point3 {
    Point3::new(
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    )
}

pub fn unit(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let p = point(rng, 1.0);
        let n = p.norm();
        if n > 0.1 && n <= 1.0 {
            return p * (1.0 / n);
        }
    }
}

/// Random right-handed orthonormal frame through a random origin.
pub fn plane(rng: &mut ChaCha8Rng) -> ViewPlane {
    let n = unit(rng);
    let a = unit(rng);
    let u = a - n * a.dot(n);
    let u = u * (1.0 / u.norm());
    ViewPlane::new(n, point(rng, 1.0), u, n.cross(u)).unwrap()
}

pub fn wire(rng: &mut ChaCha8Rng, id: usize, segments: usize, r: f64) -> Wire {
    Wire::new(id, (0..3 * segments + 1).map(|_| point(rng, r)).collect()).unwrap()
}

pub fn wire2d(rng: &mut ChaCha8Rng, segments: usize, lo: f64, hi: f64) -> Wire2d {
    Wire2d::new(
        (0..3 * segments + 1)
            .map(|_| Point2::new(rng.random_range(lo..hi), rng.random_range(lo..hi)))
            .collect(),
    )
    .unwrap()
}
