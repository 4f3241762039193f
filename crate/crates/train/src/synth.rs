//! Deterministic synthetic corpus: piecewise-smooth scenes (gradient
//! backgrounds, solid shapes with crisp edges, a mild grating) drawn
//! at 2x and box-downsampled. Edge-rich but band-limited enough to be
//! a fair super-resolution target when no photographic data is around.

use std::path::{Path, PathBuf};

use igkit_core::Rng;
use igkit_image::{write_png, ImageBuffer};

use crate::error::{Result, TrainError};

pub fn synth_image(size: usize, rng: &mut Rng) -> ImageBuffer {
    let s2 = size * 2;
    let mut canvas = vec![0.0f64; s2 * s2 * 3];

    // Smooth background: low-frequency plane plus one soft sinusoid.
    let base: [f64; 3] = [rng.uniform(), rng.uniform(), rng.uniform()];
    let tilt: [f64; 2] = [rng.range_f64(-0.3, 0.3), rng.range_f64(-0.3, 0.3)];
    let wave_amp = rng.range_f64(0.02, 0.1);
    let (fx, fy) = (rng.range_f64(0.5, 1.5), rng.range_f64(0.5, 1.5));
    let phase = rng.range_f64(0.0, std::f64::consts::TAU);
    for y in 0..s2 {
        for x in 0..s2 {
            let u = x as f64 / s2 as f64;
            let v = y as f64 / s2 as f64;
            let wave = wave_amp * (std::f64::consts::TAU * (fx * u + fy * v) + phase).sin();
            for c in 0..3 {
                canvas[(y * s2 + x) * 3 + c] =
                    (base[c] + tilt[0] * (u - 0.5) + tilt[1] * (v - 0.5) + wave).clamp(0.0, 1.0);
            }
        }
    }

    // Solid shapes with hard edges: disks, rotated bars, outlines.
    let shapes = 14 + rng.below(10);
    for _ in 0..shapes {
        let color: [f64; 3] = [rng.uniform(), rng.uniform(), rng.uniform()];
        let cx = rng.range_f64(0.0, s2 as f64);
        let cy = rng.range_f64(0.0, s2 as f64);
        match rng.below(3) {
            0 => {
                // disk
                let rad = rng.range_f64(0.02, 0.14) * s2 as f64;
                paint(&mut canvas, s2, |x, y| {
                    let (dx, dy) = (x - cx, y - cy);
                    dx * dx + dy * dy <= rad * rad
                }, &color);
            }
            1 => {
                // rotated bar
                let len = rng.range_f64(0.1, 0.4) * s2 as f64;
                let thick = rng.range_f64(0.01, 0.05) * s2 as f64;
                let ang = rng.range_f64(0.0, std::f64::consts::PI);
                let (ca, sa) = (ang.cos(), ang.sin());
                paint(&mut canvas, s2, |x, y| {
                    let (dx, dy) = (x - cx, y - cy);
                    let along = dx * ca + dy * sa;
                    let across = -dx * sa + dy * ca;
                    along.abs() <= len / 2.0 && across.abs() <= thick / 2.0
                }, &color);
            }
            _ => {
                // ring
                let rad = rng.range_f64(0.05, 0.16) * s2 as f64;
                let thick = rng.range_f64(0.01, 0.04) * s2 as f64;
                paint(&mut canvas, s2, |x, y| {
                    let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                    (d - rad).abs() <= thick
                }, &color);
            }
        }
    }

    // One crisp grating patch for high-frequency content.
    let gx0 = rng.below(s2 / 2) as f64;
    let gy0 = rng.below(s2 / 2) as f64;
    let gw = rng.range_f64(0.15, 0.35) * s2 as f64;
    let freq = rng.range_f64(8.0, 24.0);
    let ang = rng.range_f64(0.0, std::f64::consts::PI);
    let (ca, sa) = (ang.cos(), ang.sin());
    let amp = rng.range_f64(0.15, 0.35);
    for y in 0..s2 {
        for x in 0..s2 {
            let (fxp, fyp) = (x as f64, y as f64);
            if fxp >= gx0 && fxp < gx0 + gw && fyp >= gy0 && fyp < gy0 + gw {
                let t = (fxp * ca + fyp * sa) / s2 as f64;
                let m = amp * (std::f64::consts::TAU * freq * t).sin();
                for c in 0..3 {
                    let v = &mut canvas[(y * s2 + x) * 3 + c];
                    *v = (*v + m).clamp(0.0, 1.0);
                }
            }
        }
    }

    // 2x box filter down to the target size.
    let mut data = vec![0u8; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            for c in 0..3 {
                let mut acc = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        acc += canvas[((2 * y + dy) * s2 + 2 * x + dx) * 3 + c];
                    }
                }
                data[(y * size + x) * 3 + c] = ((acc / 4.0) * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageBuffer::new(size, size, 3, data).expect("synth image shape")
}

fn paint(canvas: &mut [f64], s2: usize, inside: impl Fn(f64, f64) -> bool, color: &[f64; 3]) {
    for y in 0..s2 {
        for x in 0..s2 {
            if inside(x as f64, y as f64) {
                for c in 0..3 {
                    canvas[(y * s2 + x) * 3 + c] = color[c];
                }
            }
        }
    }
}

/// Writes `count` PNGs named `synth_000.png`, ... into `dir`.
pub fn synth_corpus(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| TrainError::Io {
        path: dir.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut master = Rng::new(seed);
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = master.fork(i as u64);
        let img = synth_image(size, &mut rng);
        let path = dir.join(format!("synth_{i:03}.png"));
        write_png(&path, &img)?;
        paths.push(path);
    }
    Ok(paths)
}
