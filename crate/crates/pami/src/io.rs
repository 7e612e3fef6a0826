//! PNG images and the binary map format.
//!
//! Map files: the magic `PAMI`, then width, height and a reserved word as
//! little-endian `u32`, then `width × height` little-endian `f32` values in
//! row-major order.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use pami_core::{Image, ImportanceMap};

pub const MAP_MAGIC: &[u8; 4] = b"PAMI";
pub const MAP_HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("PNG: {0}")]
    Png(#[from] image::ImageError),
    #[error("malformed map file: {0}")]
    Map(String),
    #[error(transparent)]
    Core(#[from] pami_core::Error),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(file_err(path))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(file_err(path))
}

/// Grayscale PNGs stay single-channel; everything else becomes RGB (alpha dropped).
pub fn decode_png(bytes: &[u8]) -> Result<Image, IoError> {
    let dynimg = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let img = match dynimg {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            Image::from_8bit(w, h, 1, dynimg.to_luma8().as_raw())?
        }
        other => Image::from_8bit(w, h, 3, other.to_rgb8().as_raw())?,
    };
    Ok(img)
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>, IoError> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes = img.to_8bit();
    let dynimg = if img.channels() == 1 {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("buffer sized from image"))
    } else {
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("buffer sized from image"))
    };
    encode_dynamic(&dynimg)
}

pub(crate) fn encode_rgb8(width: usize, height: usize, rgb: Vec<u8>) -> Result<Vec<u8>, IoError> {
    let buf = image::RgbImage::from_raw(width as u32, height as u32, rgb)
        .ok_or_else(|| IoError::Map("RGB buffer does not match its dimensions".into()))?;
    encode_dynamic(&DynamicImage::ImageRgb8(buf))
}

fn encode_dynamic(img: &DynamicImage) -> Result<Vec<u8>, IoError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn load_png(path: &Path) -> Result<Image, IoError> {
    decode_png(&read_file(path)?)
}

pub fn save_png(img: &Image, path: &Path) -> Result<(), IoError> {
    write_file(path, &encode_png(img)?)
}

/// Values are stored as `f32`.
pub fn encode_map(map: &ImportanceMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAP_HEADER_LEN + 4 * map.values().len());
    out.extend_from_slice(MAP_MAGIC);
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in map.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_map(bytes: &[u8]) -> Result<ImportanceMap, IoError> {
    if bytes.len() < MAP_HEADER_LEN {
        return Err(IoError::Map(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAP_MAGIC {
        return Err(IoError::Map("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let n = w
        .checked_mul(h)
        .filter(|&n| n > 0)
        .ok_or_else(|| IoError::Map(format!("bad dimensions {w}x{h}")))?;
    let body = &bytes[MAP_HEADER_LEN..];
    if body.len() != 4 * n {
        return Err(IoError::Map(format!(
            "{w}x{h} map needs {} value bytes, found {}",
            4 * n,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    ImportanceMap::new(w, h, values).map_err(|e| IoError::Map(e.to_string()))
}

pub fn save_map(map: &ImportanceMap, path: &Path) -> Result<(), IoError> {
    write_file(path, &encode_map(map))
}

pub fn load_map(path: &Path) -> Result<ImportanceMap, IoError> {
    decode_map(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_header_layout() {
        let map = ImportanceMap::new(2, 1, vec![0.5, 1.0]).unwrap();
        let bytes = encode_map(&map);
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], b"PAMI");
        assert_eq!(&bytes[4..8], &[2, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[0, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &0.5f32.to_le_bytes());
        assert_eq!(decode_map(&bytes).unwrap(), map);
    }

    #[test]
    fn map_rejects_garbage() {
        assert!(decode_map(b"PAMI").is_err());
        let mut bytes = encode_map(&ImportanceMap::filled(2, 2, 0.1).unwrap());
        bytes[0] = b'X';
        assert!(decode_map(&bytes).is_err());
        let mut bytes = encode_map(&ImportanceMap::filled(2, 2, 0.1).unwrap());
        bytes.pop();
        assert!(decode_map(&bytes).is_err());
        let mut bytes = encode_map(&ImportanceMap::filled(1, 1, 0.1).unwrap());
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_map(&bytes).is_err());
    }

    #[test]
    fn png_round_trip() {
        let bytes: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 7) as u8).collect();
        let img = Image::from_8bit(4, 3, 3, &bytes).unwrap();
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back, img);
        let gray = Image::from_8bit(2, 2, 1, &[0, 51, 102, 255]).unwrap();
        assert_eq!(decode_png(&encode_png(&gray).unwrap()).unwrap(), gray);
    }
}
