//! PNG/PGM images and the `CTB1` photon-count format.
//!
//! `CTB1` layout, little-endian: magic `b"CTB1"`, `u32` height, `u32` width,
//! `u32` channels, `u32` dtype tag (1 = `u32` counts), `f64` photon level,
//! then `height·width·channels` `u32` counts in row-major, channel-interleaved
//! order.

use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

type Gray16 = ImageBuffer<Luma<u16>, Vec<u16>>;
type Rgb16 = ImageBuffer<Rgb<u16>, Vec<u16>>;

use crate::error::{Error, Result};
use crate::field::{ColorField, ScalarField};
use crate::noise::PhotonImage;

const MAGIC: &[u8; 4] = b"CTB1";
const DTYPE_U32: u32 = 1;
const HEADER_BYTES: usize = 4 + 4 * 4 + 8;

fn decode_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Decode { path: path.to_path_buf(), message: message.into() }
}

/// Loads an 8- or 16-bit image with intensities scaled to `[0, 1]`.
/// Grayscale gives one channel, color gives three (alpha dropped).
pub fn load_image(path: &Path) -> Result<ColorField> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    let img = image::open(path).map_err(|e| decode_err(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_)
    );
    let values: Vec<f64> = if gray {
        img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
    } else {
        img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
    };
    ColorField::from_vec(h, w, if gray { 1 } else { 3 }, values)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save_dynamic(img: DynamicImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => decode_err(path, other.to_string()),
    })
}

/// Writes a `[0, 1]` field as 8-bit grayscale; format follows the extension (PNG or PGM).
pub fn save_scalar(field: &ScalarField, path: &Path) -> Result<()> {
    let img: GrayImage = ImageBuffer::from_fn(field.width as u32, field.height as u32, |x, y| {
        Luma([to_u8(field.get(y as usize, x as usize))])
    });
    save_dynamic(DynamicImage::ImageLuma8(img), path)
}

/// Writes a binary mask as 0/255 grayscale.
pub fn save_mask(mask: &[bool], height: usize, width: usize, path: &Path) -> Result<()> {
    let f = ScalarField::from_vec(height, width, mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())?;
    save_scalar(&f, path)
}

/// Reads a mask written by [`save_mask`]: pixels at or above half intensity are set.
pub fn load_mask(path: &Path) -> Result<(Vec<bool>, usize, usize)> {
    let f = load_image(path)?;
    let k = f.channels;
    Ok((f.values.chunks(k).map(|px| px[0] >= 0.5).collect(), f.height, f.width))
}

/// Writes a `[0, 1]` color field with one or three channels as 8-bit.
pub fn save_color(field: &ColorField, path: &Path) -> Result<()> {
    match field.channels {
        1 => save_scalar(&ScalarField::from_vec(field.height, field.width, field.values.clone())?, path),
        3 => {
            let img: RgbImage = ImageBuffer::from_fn(field.width as u32, field.height as u32, |x, y| {
                let p = field.pixel(y as usize, x as usize);
                Rgb([to_u8(p[0]), to_u8(p[1]), to_u8(p[2])])
            });
            save_dynamic(DynamicImage::ImageRgb8(img), path)
        }
        k => Err(Error::InvalidInput(format!("cannot write a {k}-channel image"))),
    }
}

fn to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// 16-bit variant of [`save_scalar`]; PNG only.
pub fn save_scalar16(field: &ScalarField, path: &Path) -> Result<()> {
    save_color16(&ColorField::from_vec(field.height, field.width, 1, field.values.clone())?, path)
}

/// 16-bit variant of [`save_color`]; PNG only.
pub fn save_color16(field: &ColorField, path: &Path) -> Result<()> {
    let (w, h) = (field.width as u32, field.height as u32);
    let img = match field.channels {
        1 => DynamicImage::ImageLuma16(Gray16::from_fn(w, h, |x, y| Luma([to_u16(field.pixel(y as usize, x as usize)[0])]))),
        3 => DynamicImage::ImageRgb16(Rgb16::from_fn(w, h, |x, y| {
            let p = field.pixel(y as usize, x as usize);
            Rgb([to_u16(p[0]), to_u16(p[1]), to_u16(p[2])])
        })),
        k => return Err(Error::InvalidInput(format!("cannot write a {k}-channel image"))),
    };
    save_dynamic(img, path)
}

pub fn encode_photon(img: &PhotonImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + img.counts.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [img.height as u32, img.width as u32, img.channels as u32, DTYPE_U32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&img.alpha.to_le_bytes());
    for c in &img.counts {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn decode_photon(bytes: &[u8], path: &Path) -> Result<PhotonImage> {
    if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
        return Err(decode_err(path, "not a CTB1 file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (height, width, channels, dtype) = (word(0), word(1), word(2), word(3) as u32);
    if dtype != DTYPE_U32 {
        return Err(decode_err(path, format!("unsupported dtype tag {dtype}")));
    }
    let alpha = f64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
    let n = height * width * channels;
    if bytes.len() != HEADER_BYTES + 4 * n {
        return Err(decode_err(path, format!("expected {} payload bytes, found {}", 4 * n, bytes.len() - HEADER_BYTES)));
    }
    let counts = bytes[HEADER_BYTES..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok(PhotonImage { height, width, channels, counts, alpha })
}

pub fn save_photon(img: &PhotonImage, path: &Path) -> Result<()> {
    fs::write(path, encode_photon(img)).map_err(|e| Error::io(path, e))
}

pub fn load_photon(path: &Path) -> Result<PhotonImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_photon(&bytes, path)
}
