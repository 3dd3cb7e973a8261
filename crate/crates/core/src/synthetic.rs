//! Seeded photographic-looking test images in the Kodak geometry.
//!
//! The scenes are a sky/ground split with smooth gradients, a handful of
//! shaded shapes, a low-frequency texture and mild sensor-like noise, so
//! they exercise both the coarse and the detail layers of the pyramid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pyramid::Image;

pub const KODAK_WIDTH: usize = 768;
pub const KODAK_HEIGHT: usize = 512;

#[derive(Clone, Copy)]
enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> Option<f64> {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let d = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2);
                (d <= 1.0).then_some(1.0 - d)
            }
            Shape::Rect { x0, y0, x1, y1 } => {
                (x >= x0 && x < x1 && y >= y0 && y < y1).then(|| (y1 - y) / (y1 - y0))
            }
        }
    }
}

fn color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(20.0..235.0),
        rng.random_range(20.0..235.0),
        rng.random_range(20.0..235.0),
    ]
}

/// A `width`×`height` RGB scene determined entirely by `seed`.
pub fn scene(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let horizon = h * rng.random_range(0.35..0.65);
    let sky_top = color(&mut rng);
    let sky_low = color(&mut rng);
    let ground_near = color(&mut rng);
    let ground_far = color(&mut rng);
    let tex_fx = rng.random_range(0.01..0.05);
    let tex_fy = rng.random_range(0.01..0.05);
    let tex_amp = rng.random_range(4.0..14.0);

    let n_shapes = rng.random_range(4..9);
    let shapes: Vec<(Shape, [f64; 3])> = (0..n_shapes)
        .map(|_| {
            let cx = rng.random_range(0.0..w);
            let cy = rng.random_range(0.0..h);
            let sx = rng.random_range(0.04..0.2) * w;
            let sy = rng.random_range(0.04..0.25) * h;
            let shape = if rng.random_bool(0.5) {
                Shape::Ellipse {
                    cx,
                    cy,
                    rx: sx,
                    ry: sy,
                }
            } else {
                Shape::Rect {
                    x0: cx - sx,
                    y0: cy - sy,
                    x1: cx + sx,
                    y1: cy + sy,
                }
            };
            (shape, color(&mut rng))
        })
        .collect();

    let mut samples = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let fy = y as f64;
        for x in 0..width {
            let fx = x as f64;
            let mut px = if fy < horizon {
                let t = fy / horizon;
                lerp(sky_top, sky_low, t)
            } else {
                let t = (fy - horizon) / (h - horizon).max(1.0);
                let tex = tex_amp * ((fx * tex_fx).sin() * (fy * tex_fy).cos());
                lerp(ground_far, ground_near, t).map(|v| v + tex)
            };
            for (shape, c) in &shapes {
                if let Some(shade) = shape.contains(fx, fy) {
                    px = c.map(|v| v * (0.75 + 0.25 * shade));
                }
            }
            for v in px {
                let noise = rng.random_range(-1.5..1.5);
                samples.push((v + noise).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(width, height, 3, samples).expect("geometry matches buffer")
}

/// A 768×512 scene.
pub fn kodak_like(seed: u64) -> Image {
    scene(KODAK_WIDTH, KODAK_HEIGHT, seed)
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}
