//! Synthetic test corpora shared by the integration tests.
#![allow(dead_code)]

use mlrq::codec::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A frontal "face" under directional lighting: an elliptical head with eyes,
/// brows, nose shading and a mouth, over a dark background, with a random
/// light direction casting a soft shadow across one side. Geometry, tone and
/// lighting are jittered per image; sensor noise is added last.
pub fn face_like(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = width as f64;
    let h = height as f64;
    let cx = w * (0.5 + rng.random_range(-0.04..0.04));
    let cy = h * (0.52 + rng.random_range(-0.04..0.04));
    let rx = w * rng.random_range(0.30..0.36);
    let ry = h * rng.random_range(0.38..0.44);
    let skin = rng.random_range(120.0..190.0);
    let background = rng.random_range(10.0..50.0);
    let light_angle: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let light_strength = rng.random_range(0.0..0.8);
    let (lx, ly) = (light_angle.cos(), light_angle.sin());
    let eye_dx = rx * rng.random_range(0.38..0.46);
    let eye_y = cy - ry * rng.random_range(0.18..0.28);
    let eye_r = rx * rng.random_range(0.12..0.17);
    let mouth_y = cy + ry * rng.random_range(0.40..0.50);
    let mouth_w = rx * rng.random_range(0.35..0.5);

    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let ex = (px - cx) / rx;
            let ey = (py - cy) / ry;
            let r2 = ex * ex + ey * ey;
            let mut v = if r2 <= 1.0 {
                // Lambert-like falloff towards the rim plus directional light.
                let rim = (1.0 - r2).sqrt();
                let lit = 1.0 + light_strength * (ex * lx + ey * ly);
                skin * (0.55 + 0.45 * rim) * lit.max(0.15)
            } else {
                background + 8.0 * (py / h)
            };
            for side in [-1.0, 1.0] {
                let dx = (px - (cx + side * eye_dx)) / eye_r;
                let dy = (py - eye_y) / (eye_r * 0.6);
                if dx * dx + dy * dy <= 1.0 {
                    v *= 0.35;
                }
                let bx = (px - (cx + side * eye_dx)) / (eye_r * 1.4);
                let by = (py - (eye_y - eye_r * 1.3)) / (eye_r * 0.25);
                if bx * bx + by * by <= 1.0 {
                    v *= 0.5;
                }
            }
            if r2 <= 1.0 && (px - cx).abs() < rx * 0.08 && py > eye_y && py < mouth_y - ry * 0.15 {
                v *= 0.85;
            }
            let mx = (px - cx) / mouth_w;
            let my = (py - mouth_y) / (ry * 0.06);
            if mx * mx + my * my <= 1.0 {
                v *= 0.45;
            }
            v += rng.random_range(-4.0..4.0);
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(width, height, pixels).unwrap()
}

pub fn face_corpus(count: usize, width: usize, height: usize, seed: u64) -> Vec<GrayImage> {
    (0..count)
        .map(|i| face_like(width, height, seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
        .collect()
}

/// Independent uniform pixels.
pub fn noise_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..width * height).map(|_| rng.random()).collect();
    GrayImage::new(width, height, pixels).unwrap()
}

/// Random synthetic image: smooth gradient, a few rectangles and noise, with
/// random (not necessarily block-aligned) dimensions.
pub fn random_synthetic(seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(9..70);
    let h = rng.random_range(9..70);
    let gx = rng.random_range(-2.0..2.0);
    let gy = rng.random_range(-2.0..2.0);
    let base = rng.random_range(40.0..200.0);
    let rects: Vec<(usize, usize, usize, usize, f64)> = (0..rng.random_range(0..5))
        .map(|_| {
            (
                rng.random_range(0..w),
                rng.random_range(0..h),
                rng.random_range(1..w),
                rng.random_range(1..h),
                rng.random_range(-80.0..80.0),
            )
        })
        .collect();
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut v = base + gx * x as f64 + gy * y as f64;
            for &(rx, ry, rw, rh, dv) in &rects {
                if x >= rx && x < rx + rw && y >= ry && y < ry + rh {
                    v += dv;
                }
            }
            v += rng.random_range(-6.0..6.0);
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(w, h, pixels).unwrap()
}
