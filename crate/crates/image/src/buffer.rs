//! 8-bit raster buffers and their file formats (PNG and binary PPM).

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use igkit_core::Tensor;

use crate::error::{ImageError, Result};

/// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::Unsupported(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(ImageError::Dimension(format!(
                "{width}x{height}x{channels} wants {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(ImageBuffer { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        ImageBuffer {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Planar [1, C, H, W] tensor in [0, 1].
    pub fn to_tensor(&self) -> Tensor {
        let (w, h, c) = (self.width, self.height, self.channels);
        let mut data = vec![0.0; w * h * c];
        for y in 0..h {
            for x in 0..w {
                for ci in 0..c {
                    data[(ci * h + y) * w + x] =
                        self.data[(y * w + x) * c + ci] as f64 / 255.0;
                }
            }
        }
        Tensor::from_vec(&[1, c, h, w], data).expect("image tensor")
    }

    /// Quantizes a [1, C, H, W] tensor in [0, 1] back to 8 bits:
    /// round half away from zero, then clamp.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 4 || t.shape()[0] != 1 {
            return Err(ImageError::Dimension(format!("expected [1,C,H,W], got {:?}", t.shape())));
        }
        let (_, c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]);
        if c != 1 && c != 3 {
            return Err(ImageError::Unsupported(format!("{c} channels")));
        }
        let mut data = vec![0u8; w * h * c];
        let src = t.data();
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = (src[(ci * h + y) * w + x] * 255.0).round();
                    data[(y * w + x) * c + ci] = v.clamp(0.0, 255.0) as u8;
                }
            }
        }
        Ok(ImageBuffer { width: w, height: h, channels: c, data })
    }

    /// Crops height and width down to multiples of `r` (top-left anchor).
    pub fn modulo_crop(&self, r: usize) -> ImageBuffer {
        let nh = (self.height / r) * r;
        let nw = (self.width / r) * r;
        self.crop(0, 0, nw, nh).expect("modulo crop in range")
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageBuffer> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(ImageError::Dimension(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let row = &self.data[(y * self.width + x0) * c..(y * self.width + x0 + w) * c];
            data.extend_from_slice(row);
        }
        ImageBuffer::new(w, h, c, data)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ImageError {
    ImageError::Io { path: path.display().to_string(), detail: e.to_string() }
}

pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(match img.channels {
        1 => png::ColorType::Grayscale,
        _ => png::ColorType::Rgb,
    });
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| io_err(path, e))?;
    writer.write_image_data(&img.data).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| io_err(path, e))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| io_err(path, e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::Unsupported(format!("{:?} bit depth", info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    match info.color_type {
        png::ColorType::Grayscale => ImageBuffer::new(w, h, 1, buf),
        png::ColorType::Rgb => ImageBuffer::new(w, h, 3, buf),
        png::ColorType::Rgba => {
            // Drop alpha.
            let mut rgb = Vec::with_capacity(w * h * 3);
            for px in buf.chunks_exact(4) {
                rgb.extend_from_slice(&px[..3]);
            }
            ImageBuffer::new(w, h, 3, rgb)
        }
        other => Err(ImageError::Unsupported(format!("{other:?} color type"))),
    }
}

/// Binary PPM (P6) writer; gray images are expanded to RGB.
pub fn write_ppm(path: &Path, img: &ImageBuffer) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    write!(out, "P6\n{} {}\n255\n", img.width, img.height).map_err(|e| io_err(path, e))?;
    if img.channels == 3 {
        out.write_all(&img.data).map_err(|e| io_err(path, e))?;
    } else {
        let mut row = Vec::with_capacity(img.width * 3);
        for y in 0..img.height {
            row.clear();
            for x in 0..img.width {
                let v = img.data[y * img.width + x];
                row.extend_from_slice(&[v, v, v]);
            }
            out.write_all(&row).map_err(|e| io_err(path, e))?;
        }
    }
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<ImageBuffer> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    parse_ppm(&bytes).map_err(ImageError::Decode)
}

fn parse_ppm(bytes: &[u8]) -> std::result::Result<ImageBuffer, String> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> std::result::Result<String, String> {
        // Skip whitespace and '#' comments.
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err("truncated ppm header".to_string());
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if token(&mut pos)? != "P6" {
        return Err("not a binary ppm (P6)".to_string());
    }
    let w: usize = token(&mut pos)?.parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = token(&mut pos)?.parse().map_err(|e| format!("height: {e}"))?;
    let maxval: usize = token(&mut pos)?.parse().map_err(|e| format!("maxval: {e}"))?;
    if maxval != 255 {
        return Err(format!("only maxval 255 supported, got {maxval}"));
    }
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + w * h * 3 {
        return Err("truncated ppm payload".to_string());
    }
    ImageBuffer::new(w, h, 3, bytes[pos..pos + w * h * 3].to_vec()).map_err(|e| e.to_string())
}

/// Reads by extension: .png, .ppm.
pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") | Some("PNG") => read_png(path),
        Some("ppm") | Some("PPM") => read_ppm(path),
        other => Err(ImageError::Unsupported(format!("extension {other:?}"))),
    }
}

pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") | Some("PNG") => write_png(path, img),
        Some("ppm") | Some("PPM") => write_ppm(path, img),
        other => Err(ImageError::Unsupported(format!("extension {other:?}"))),
    }
}
