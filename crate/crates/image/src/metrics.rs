//! Evaluation protocol: boundary crop by the scale factor, BT.601 luma,
//! PSNR, and single-scale SSIM (11x11 Gaussian, sigma 1.5, valid
//! positions only). Gray inputs use the raw plane as luma.

use crate::buffer::ImageBuffer;
use crate::error::{ImageError, Result};

/// Studio-swing BT.601 luma from 8-bit RGB, in [16, 235].
pub fn rgb_to_y(img: &ImageBuffer) -> Result<Vec<f64>> {
    if img.channels != 3 {
        return Err(ImageError::Unsupported("rgb_to_y needs a 3-channel image".into()));
    }
    let mut out = Vec::with_capacity(img.width * img.height);
    for px in img.data.chunks_exact(3) {
        let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
        out.push(16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0);
    }
    Ok(out)
}

fn luma_plane(img: &ImageBuffer) -> Result<Vec<f64>> {
    match img.channels {
        3 => rgb_to_y(img),
        _ => Ok(img.data.iter().map(|&v| v as f64).collect()),
    }
}

fn cropped_luma(sr: &ImageBuffer, hr: &ImageBuffer, border: usize) -> Result<(Vec<f64>, usize, usize, Vec<f64>)> {
    if sr.width != hr.width || sr.height != hr.height || sr.channels != hr.channels {
        return Err(ImageError::Dimension(format!(
            "{}x{}x{} vs {}x{}x{}",
            sr.width, sr.height, sr.channels, hr.width, hr.height, hr.channels
        )));
    }
    if sr.width <= 2 * border || sr.height <= 2 * border {
        return Err(ImageError::Dimension(format!(
            "images {}x{} too small for border {border}",
            sr.width, sr.height
        )));
    }
    let w = sr.width - 2 * border;
    let h = sr.height - 2 * border;
    let a = sr.crop(border, border, w, h)?;
    let b = hr.crop(border, border, w, h)?;
    Ok((luma_plane(&a)?, w, h, luma_plane(&b)?))
}

/// PSNR on the luma plane after cropping `r` pixels from each border.
/// Identical images report +infinity.
pub fn psnr_y(sr: &ImageBuffer, hr: &ImageBuffer, r: usize) -> Result<f64> {
    let (ya, _, _, yb) = cropped_luma(sr, hr, r)?;
    let mut mse = 0.0;
    for (a, b) in ya.iter().zip(&yb) {
        let d = a - b;
        mse += d * d;
    }
    mse /= ya.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut total = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            total += v;
        }
    }
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Single-scale SSIM on the cropped luma plane, averaged over window
/// positions fully inside the image.
pub fn ssim_y(sr: &ImageBuffer, hr: &ImageBuffer, r: usize) -> Result<f64> {
    let (ya, w, h, yb) = cropped_luma(sr, hr, r)?;
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(ImageError::Dimension(format!(
            "cropped {w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let win = gaussian_window();
    let (k1, k2, l) = (0.01, 0.03, 255.0);
    let c1 = (k1 * l) * (k1 * l);
    let c2 = (k2 * l) * (k2 * l);
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let (mut mx, mut my) = (0.0, 0.0);
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for wy in 0..SSIM_WINDOW {
                let row = (y0 + wy) * w + x0;
                let wrow = wy * SSIM_WINDOW;
                for wx in 0..SSIM_WINDOW {
                    let g = win[wrow + wx];
                    let a = ya[row + wx];
                    let b = yb[row + wx];
                    mx += g * a;
                    my += g * b;
                    sxx += g * a * a;
                    syy += g * b * b;
                    sxy += g * a * b;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
