//! PNG (via the `png` feature) and binary PPM/PGM image files.
//!
//! Format is chosen by magic bytes on load and by extension on save. PNG is
//! written with 16 bits per channel; PPM/PGM with maxval 65535.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(PNG_MAGIC) {
        load_png(path, &bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(&bytes).map_err(|reason| Error::format(path, reason))
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{}: not a PNG or binary PPM/PGM file",
            path.display()
        )))
    }
}

pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => encode_png(img, path)?,
        "ppm" | "pgm" | "pnm" => encode_pnm(img),
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: expected a .png, .ppm or .pgm extension",
                path.display()
            )))
        }
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn quantize(v: f32) -> u16 {
    (f64::from(v.clamp(0.0, 1.0)) * 65535.0).round() as u16
}

/// Interleaves channel-major planes into pixel order as 16-bit samples.
fn interleaved(img: &ImageBuffer) -> Vec<u16> {
    let shape = img.shape();
    let plane = shape.plane();
    let data = img.as_field().data();
    let mut out = Vec::with_capacity(data.len());
    for p in 0..plane {
        for c in 0..shape.channels {
            out.push(quantize(data[c * plane + p]));
        }
    }
    out
}

fn from_interleaved(channels: usize, height: usize, width: usize, samples: &[f32]) -> Result<ImageBuffer> {
    let plane = height * width;
    let mut data = vec![0.0f32; samples.len()];
    for p in 0..plane {
        for c in 0..channels {
            data[c * plane + p] = samples[p * channels + c];
        }
    }
    ImageBuffer::from_vec(channels, height, width, data)
}

fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for s in interleaved(img) {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

fn decode_pnm(bytes: &[u8]) -> std::result::Result<ImageBuffer, String> {
    let channels = if bytes.starts_with(b"P5") { 1 } else { 3 };
    let mut pos = 2;
    let mut header = [0usize; 3];
    for value in &mut header {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *value = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("malformed header")?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("malformed header".into());
    }
    pos += 1;
    let [width, height, maxval] = header;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(format!("invalid header {width}x{height} maxval {maxval}"));
    }
    let wide = maxval > 255;
    let count = width * height * channels;
    let need = count * if wide { 2 } else { 1 };
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(format!("truncated pixel data: {} of {need} bytes", body.len()));
    }
    let scale = 1.0 / maxval as f32;
    let samples: Vec<f32> = if wide {
        body[..need]
            .chunks_exact(2)
            .map(|b| f32::from(u16::from_be_bytes([b[0], b[1]])) * scale)
            .collect()
    } else {
        body[..need].iter().map(|&b| f32::from(b) * scale).collect()
    };
    from_interleaved(channels, height, width, &samples).map_err(|e| e.to_string())
}

#[cfg(feature = "png")]
fn load_png(path: &Path, bytes: &[u8]) -> Result<ImageBuffer> {
    use image::DynamicImage;

    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let grey = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_)
    );
    let samples: Vec<f32> = if grey {
        img.into_luma16().into_raw().into_iter().map(|v| f32::from(v) / 65535.0).collect()
    } else {
        img.into_rgb16().into_raw().into_iter().map(|v| f32::from(v) / 65535.0).collect()
    };
    from_interleaved(if grey { 1 } else { 3 }, height, width, &samples)
}

#[cfg(not(feature = "png"))]
fn load_png(path: &Path, _bytes: &[u8]) -> Result<ImageBuffer> {
    Err(Error::UnsupportedFormat(format!(
        "{}: PNG support is disabled in this build",
        path.display()
    )))
}

#[cfg(feature = "png")]
fn encode_png(img: &ImageBuffer, path: &Path) -> Result<Vec<u8>> {
    use image::{ImageBuffer as Raw, Luma, Rgb};

    let (w, h) = (img.width() as u32, img.height() as u32);
    let samples = interleaved(img);
    let dynamic = if img.channels() == 1 {
        image::DynamicImage::ImageLuma16(Raw::<Luma<u16>, _>::from_raw(w, h, samples).expect("sample count"))
    } else {
        image::DynamicImage::ImageRgb16(Raw::<Rgb<u16>, _>::from_raw(w, h, samples).expect("sample count"))
    };
    let mut out = std::io::Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(out.into_inner())
}

#[cfg(not(feature = "png"))]
fn encode_png(_img: &ImageBuffer, path: &Path) -> Result<Vec<u8>> {
    Err(Error::UnsupportedFormat(format!(
        "{}: PNG support is disabled in this build",
        path.display()
    )))
}
