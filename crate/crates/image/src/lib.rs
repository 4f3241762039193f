#![forbid(unsafe_code)]

//! Image buffers, file formats, resampling, and SR metrics.

pub mod buffer;
pub mod error;
pub mod metrics;
pub mod resize;

pub use buffer::{read_image, read_png, read_ppm, write_image, write_png, write_ppm, ImageBuffer};
pub use error::{ImageError, Result};
pub use metrics::{psnr_y, rgb_to_y, ssim_y};
pub use resize::{bicubic_resize, bicubic_resize_to, bilinear_upsample, cubic};
