//! Filter visualization: the first few generated kernels per scale,
//! rendered as per-filter min-max-normalized grayscale tiles, one row
//! of tiles per scale. How smoothly tiles change down a column shows
//! the generator's continuity in the scale variable.

use std::path::Path;

use igkit_core::{CoreError, Result, Tensor};
use igkit_image::{write_png, ImageBuffer};
use igkit_model::HyperNet;

const TILE_UPSCALE: usize = 16;
const GAP: usize = 2;

/// Renders `count` filters for each scale into a PNG grid. Each tile
/// is one output channel's kernel averaged over input channels.
pub fn export_filter_atlas(
    net: &HyperNet,
    scales: &[usize],
    count: usize,
    fgrep: bool,
    path: &Path,
) -> Result<()> {
    let img = render_filter_atlas(net, scales, count, fgrep)?;
    write_png(path, &img)
        .map_err(|e| CoreError::Io { path: path.display().to_string(), detail: e.to_string() })
}

pub fn render_filter_atlas(
    net: &HyperNet,
    scales: &[usize],
    count: usize,
    fgrep: bool,
) -> Result<ImageBuffer> {
    if scales.is_empty() || count == 0 {
        return Err(CoreError::invalid("atlas", "need at least one scale and one filter"));
    }
    let k = net.cfg.k;
    let tile = k * TILE_UPSCALE;
    let width = count * tile + (count + 1) * GAP;
    let height = scales.len() * tile + (scales.len() + 1) * GAP;
    let mut data = vec![32u8; width * height];
    for (row, &r) in scales.iter().enumerate() {
        let kernel = net.filters_tensor(r, None, fgrep)?;
        let avail = kernel.shape()[0];
        for col in 0..count.min(avail) {
            let tile_vals = mean_over_inputs(&kernel, col);
            let (lo, hi) = min_max(&tile_vals);
            let y0 = GAP + row * (tile + GAP);
            let x0 = GAP + col * (tile + GAP);
            for py in 0..tile {
                for px in 0..tile {
                    let v = tile_vals[(py / TILE_UPSCALE) * k + px / TILE_UPSCALE];
                    let norm = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                    data[(y0 + py) * width + x0 + px] = (norm * 255.0).round() as u8;
                }
            }
        }
    }
    ImageBuffer::new(width, height, 1, data)
        .map_err(|e| CoreError::invalid("atlas", e.to_string()))
}

fn mean_over_inputs(kernel: &Tensor, out_ch: usize) -> Vec<f64> {
    let (_, c_in, k, _) = kernel.dim4();
    let mut tile = vec![0.0; k * k];
    for ci in 0..c_in {
        for i in 0..k {
            for j in 0..k {
                tile[i * k + j] += kernel.at4(out_ch, ci, i, j);
            }
        }
    }
    for v in &mut tile {
        *v /= c_in as f64;
    }
    tile
}

fn min_max(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}
