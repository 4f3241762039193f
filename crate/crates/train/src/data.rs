//! Dataset loading and the per-sub-batch task sampler: draw a scale,
//! crop an HR patch of side patch*r, synthesize the LR counterpart by
//! antialiased downscaling, and augment the pair consistently.

use std::path::Path;

use igkit_core::fgrep::{apply_transform, DihedralTransform};
use igkit_core::{Rng, Tensor};
use igkit_image::{bicubic_resize, read_image, ImageBuffer};

use crate::error::{Result, TrainError};

pub struct Dataset {
    pub names: Vec<String>,
    pub images: Vec<ImageBuffer>,
}

impl Dataset {
    /// Loads every .png/.ppm in the directory, sorted by filename so
    /// the sampling stream is reproducible.
    pub fn load_dir(dir: &Path) -> Result<Dataset> {
        let entries = std::fs::read_dir(dir).map_err(|e| TrainError::Io {
            path: dir.display().to_string(),
            detail: e.to_string(),
        })?;
        let mut files: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("png") | Some("PNG") | Some("ppm") | Some("PPM")
                )
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(TrainError::Data(format!(
                "no .png or .ppm images in {}",
                dir.display()
            )));
        }
        let mut names = Vec::with_capacity(files.len());
        let mut images = Vec::with_capacity(files.len());
        for f in files {
            let img = read_image(&f)?;
            if img.channels != 3 {
                return Err(TrainError::Data(format!(
                    "{} is not RGB; the pipeline trains on color images",
                    f.display()
                )));
            }
            names.push(f.file_name().unwrap().to_string_lossy().into_owned());
            images.push(img);
        }
        Ok(Dataset { names, images })
    }

    pub fn from_images(images: Vec<ImageBuffer>) -> Dataset {
        let names = (0..images.len()).map(|i| format!("mem_{i}")).collect();
        Dataset { names, images }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// One training pair at scale `r`: `lr` is [1,3,p,p], `hr` is
/// [1,3,p*r,p*r], both in [0,1].
pub struct Task {
    pub lr: Tensor,
    pub hr: Tensor,
    pub r: usize,
}

const MAX_RETRIES: usize = 32;

/// Draws the scale uniformly from `scales`, then defers to
/// [`sample_task_at`].
pub fn sample_task(
    rng: &mut Rng,
    ds: &Dataset,
    scales: &[usize],
    patch: usize,
    augment: bool,
) -> Result<Task> {
    let r = scales[rng.below(scales.len())];
    sample_task_at(rng, ds, r, patch, augment)
}

/// Samples a pair at a fixed scale. Images too small for the crop are
/// skipped with a bounded number of retries.
pub fn sample_task_at(
    rng: &mut Rng,
    ds: &Dataset,
    r: usize,
    patch: usize,
    augment: bool,
) -> Result<Task> {
    let side = patch * r;
    for _ in 0..MAX_RETRIES {
        let idx = rng.below(ds.len());
        let img = &ds.images[idx];
        if img.width < side || img.height < side {
            continue;
        }
        let x0 = rng.below(img.width - side + 1);
        let y0 = rng.below(img.height - side + 1);
        let crop = img.crop(x0, y0, side, side)?;
        let mut hr = crop.to_tensor();
        if augment {
            let flip = rng.chance(0.5);
            let rot = rng.below(4) as u8;
            let t = DihedralTransform::from_id(rot as usize + if flip { 4 } else { 0 });
            hr = apply_transform(t, &hr);
        }
        let lr = bicubic_resize(&hr, 1.0 / r as f64)?;
        return Ok(Task { lr, hr, r });
    }
    Err(TrainError::Data(format!(
        "no image large enough for a {side}x{side} crop after {MAX_RETRIES} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_image;

    fn tiny_dataset(size: usize, count: usize) -> Dataset {
        let mut rng = Rng::new(42);
        Dataset::from_images((0..count).map(|_| synth_image(size, &mut rng)).collect())
    }

    #[test]
    fn patch_arithmetic_holds() {
        let ds = tiny_dataset(160, 3);
        let mut rng = Rng::new(1);
        let t = sample_task_at(&mut rng, &ds, 3, 48, true).unwrap();
        assert_eq!(t.hr.shape(), &[1, 3, 144, 144]);
        assert_eq!(t.lr.shape(), &[1, 3, 48, 48]);
        assert_eq!(t.r, 3);
    }

    #[test]
    fn sampling_is_deterministic_under_a_seed() {
        let ds = tiny_dataset(128, 4);
        let run = || {
            let mut rng = Rng::new(7);
            let mut sig = Vec::new();
            for _ in 0..5 {
                let t = sample_task(&mut rng, &ds, &[2, 3, 4], 24, true).unwrap();
                sig.push((t.r, t.hr.data()[0].to_bits(), t.lr.data()[100].to_bits()));
            }
            sig
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scale_frequencies_are_uniform_within_3_sigma() {
        let ds = tiny_dataset(100, 2);
        let mut rng = Rng::new(3);
        let scales = [2usize, 3, 4];
        let mut counts = [0usize; 3];
        let draws = 10_000;
        for _ in 0..draws {
            let t = sample_task(&mut rng, &ds, &scales, 8, false).unwrap();
            counts[scales.iter().position(|&s| s == t.r).unwrap()] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - draws as f64 * p).abs();
            assert!(dev < 3.0 * sigma, "scale {} count {c} deviates {dev:.1}", scales[i]);
        }
    }

    #[test]
    fn too_small_images_error_after_retries() {
        let ds = tiny_dataset(32, 2);
        let mut rng = Rng::new(4);
        assert!(sample_task_at(&mut rng, &ds, 4, 48, false).is_err());
    }

    #[test]
    fn lr_is_the_downscaled_hr() {
        let ds = tiny_dataset(96, 1);
        let mut rng = Rng::new(5);
        let t = sample_task_at(&mut rng, &ds, 2, 24, false).unwrap();
        let want = bicubic_resize(&t.hr, 0.5).unwrap();
        assert_eq!(t.lr.to_vec(), want.to_vec());
    }
}
