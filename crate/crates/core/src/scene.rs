//! Procedural clean images for desk-scale experiments.
//!
//! Scenes are "dead leaves": a shaded background overpainted by random
//! discs, rectangles and stripes of varying size, so they have piecewise
//! smooth regions separated by sharp edges, the statistics a gradient prior
//! models well.

use rand::Rng as _;

use crate::field::{Image, RealField};
use crate::rng::substream;

const LOW: f64 = 0.05;
const HIGH: f64 = 0.95;

enum Shape {
    Disc { ci: f64, cj: f64, r: f64 },
    Rect { ci: f64, cj: f64, hi: f64, hj: f64, cos: f64, sin: f64 },
}

impl Shape {
    fn contains(&self, i: f64, j: f64) -> bool {
        match *self {
            Shape::Disc { ci, cj, r } => (i - ci).powi(2) + (j - cj).powi(2) <= r * r,
            Shape::Rect { ci, cj, hi, hj, cos, sin } => {
                let (di, dj) = (i - ci, j - cj);
                (cos * di + sin * dj).abs() <= hi && (-sin * di + cos * dj).abs() <= hj
            }
        }
    }
}

/// A `height × width` scene with values in `[0.05, 0.95]`, determined by
/// `seed`.
pub fn generate_scene(seed: u64, height: usize, width: usize) -> Image {
    let mut rng = substream(seed, 0x5C3E);
    let scale = height.min(width) as f64;
    let base = rng.random_range(0.2..0.8);
    let (ti, tj) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let mut img = RealField::from_fn(height, width, |i, j| {
        base + ti * (i as f64 / height as f64 - 0.5) + tj * (j as f64 / width as f64 - 0.5)
    });
    let count = rng.random_range(25..60);
    for _ in 0..count {
        let ci = rng.random_range(0.0..height as f64);
        let cj = rng.random_range(0.0..width as f64);
        // Sizes follow a rough power law: many small leaves, a few large ones.
        let size = scale * 0.03 / rng.random_range(0.08f64..1.0).powf(0.9);
        let shape = if rng.random_bool(0.5) {
            Shape::Disc { ci, cj, r: size }
        } else {
            let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
            Shape::Rect {
                ci,
                cj,
                hi: size * rng.random_range(0.3..1.2),
                hj: size * rng.random_range(0.3..1.2),
                cos: a.cos(),
                sin: a.sin(),
            }
        };
        let value = rng.random_range(0.1..0.9);
        let (si, sj) = (rng.random_range(-0.004..0.004), rng.random_range(-0.004..0.004));
        let stripes = rng.random_bool(0.15).then(|| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
            (a.cos(), a.sin(), rng.random_range(0.3..1.2), rng.random_range(0.03..0.12))
        });
        for i in 0..height {
            for j in 0..width {
                let (fi, fj) = (i as f64 + 0.5, j as f64 + 0.5);
                if shape.contains(fi, fj) {
                    let mut v = value + si * (fi - ci) + sj * (fj - cj);
                    if let Some((c, s, freq, amp)) = stripes {
                        v += amp * (freq * (c * fi + s * fj)).sin();
                    }
                    img[(i, j)] = v;
                }
            }
        }
    }
    img.map(|v| v.clamp(LOW, HIGH))
}
