//! PNG, PFM and JSON files.
//!
//! PNGs are 8-bit sRGB; color channels are decoded to linear light on load
//! and re-encoded on save, while alpha (object coverage) is stored linearly.
//! Float maps use PFM: single-channel `Pf`, little-endian (negative scale),
//! rows stored bottom to top.

use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::sync::OnceLock;

use image::{DynamicImage, ImageFormat};
use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster, RgbImage, RgbaImage, ScalarMap};

pub fn srgb_to_linear(v: f32) -> f32 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f32) -> f32 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn decode_lut() -> &'static [f32; 256] {
    static LUT: OnceLock<[f32; 256]> = OnceLock::new();
    LUT.get_or_init(|| std::array::from_fn(|i| srgb_to_linear(i as f32 / 255.0)))
}

/// Linear value of an 8-bit sRGB code.
#[inline]
pub fn decode_u8(code: u8) -> f32 {
    decode_lut()[code as usize]
}

/// Nearest 8-bit sRGB code of a linear value.
#[inline]
pub fn encode_u8(linear: f32) -> u8 {
    (linear_to_srgb(linear) * 255.0).round() as u8
}

#[inline]
fn unit_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn load_dynamic(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => Ok(img),
        other => Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            depth: format!("{} bits per channel", other.color().bits_per_pixel() / other.color().channel_count() as u16),
        }),
    }
}

/// Reads a PNG as linear RGB. Grayscale is replicated to three channels and
/// any alpha channel is ignored.
pub fn read_png_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = load_dynamic(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| [decode_u8(p[0]), decode_u8(p[1]), decode_u8(p[2])]).collect();
    Raster::from_vec(w as usize, h as usize, data)
}

/// Reads a PNG as linear RGB plus coverage; files without alpha are fully
/// covered.
pub fn read_png_rgba(path: impl AsRef<Path>) -> Result<RgbaImage> {
    let path = path.as_ref();
    let img = load_dynamic(path)?.into_rgba8();
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| [decode_u8(p[0]), decode_u8(p[1]), decode_u8(p[2]), p[3] as f32 / 255.0])
        .collect();
    Raster::from_vec(w as usize, h as usize, data)
}

fn save_png(path: &Path, buf: Vec<u8>, w: usize, h: usize, color: image::ExtendedColorType) -> Result<()> {
    let mut out = Cursor::new(Vec::new());
    image::write_buffer_with_format(&mut out, &buf, w as u32, h as u32, color, ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, out.into_inner()).map_err(|e| Error::io(path, e))
}

pub fn write_png_rgb(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let buf = img.data().iter().flat_map(|p| p.map(encode_u8)).collect();
    save_png(path.as_ref(), buf, img.width(), img.height(), image::ExtendedColorType::Rgb8)
}

pub fn write_png_rgba(path: impl AsRef<Path>, img: &RgbaImage) -> Result<()> {
    let buf = img
        .data()
        .iter()
        .flat_map(|p| [encode_u8(p[0]), encode_u8(p[1]), encode_u8(p[2]), unit_u8(p[3])])
        .collect();
    save_png(path.as_ref(), buf, img.width(), img.height(), image::ExtendedColorType::Rgba8)
}

/// Writes a mask as an 8-bit grayscale PNG (0 or 255).
pub fn write_png_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let buf = mask.data().iter().map(|&on| if on { 255 } else { 0 }).collect();
    save_png(path.as_ref(), buf, mask.width(), mask.height(), image::ExtendedColorType::L8)
}

/// Reads a grayscale (or RGB, first channel) PNG as a mask: codes >= 128
/// are set.
pub fn read_png_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let img = load_dynamic(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Raster::from_vec(w as usize, h as usize, img.pixels().map(|p| p[0] >= 128).collect())
}

/// Serialises a map as a little-endian single-channel PFM.
pub fn encode_pfm(map: &ScalarMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in map.rows().rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a single-channel PFM; `path` only labels errors.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<ScalarMap> {
    let bad = |m: &str| Error::format(path, m.to_string());
    // three whitespace-terminated header lines
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(bad("truncated PFM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII PFM header"))?);
    }
    pos += 1; // single whitespace byte after the scale
    match fields[0] {
        "Pf" => {}
        "PF" => return Err(bad("three-channel PFM where a single-channel map is expected")),
        _ => return Err(bad("missing PFM magic")),
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad PFM width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad PFM height"))?;
    let scale: f32 = fields[3].parse().map_err(|_| bad("bad PFM scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("PFM scale must be finite and non-zero"));
    }
    let little = scale < 0.0;
    let n = w.checked_mul(h).ok_or_else(|| bad("PFM dimensions overflow"))?;
    let payload = &bytes[pos.min(bytes.len())..];
    if payload.len() != n * 4 {
        return Err(bad(&format!("PFM payload has {} bytes, expected {}", payload.len(), n * 4)));
    }
    let mut data = vec![0.0f32; n];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        if v.is_nan() {
            return Err(bad("NaN in PFM payload"));
        }
        let (x, file_row) = (k % w, k / w);
        data[(h - 1 - file_row) * w + x] = v;
    }
    Raster::from_vec(w, h, data).map_err(|e| bad(&e.to_string()))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<ScalarMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn write_pfm(path: impl AsRef<Path>, map: &ScalarMap) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(map)).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
