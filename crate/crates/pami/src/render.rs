//! Heatmaps, overlays and label images as RGB8 buffers.

use pami_core::{Image, ImportanceMap, Segmentation};

const fn build_colormap() -> [[u8; 3]; 256] {
    let mut t = [[0u8; 3]; 256];
    let mut i = 0;
    while i < 256 {
        t[i] = [i as u8, i as u8, (255 - i) as u8];
        i += 1;
    }
    t
}

/// Blue (low) to yellow (high).
pub static COLORMAP: [[u8; 3]; 256] = build_colormap();

/// Min-max normalized map through [`COLORMAP`]; a constant map uses the lowest entry.
pub fn heatmap(map: &ImportanceMap) -> Vec<u8> {
    let norm = map
        .normalized()
        .unwrap_or_else(|| ImportanceMap::filled(map.width(), map.height(), 0.0).expect("finite"));
    norm.values()
        .iter()
        .flat_map(|&v| COLORMAP[(v * 255.0).round().clamp(0.0, 255.0) as usize])
        .collect()
}

/// The heatmap blended half-and-half over the image.
pub fn overlay(img: &Image, map: &ImportanceMap) -> Result<Vec<u8>, pami_core::Error> {
    if img.width() != map.width() || img.height() != map.height() {
        return Err(pami_core::Error::ShapeMismatch("image and map"));
    }
    let heat = heatmap(map);
    let base = img.to_8bit();
    let c = img.channels();
    Ok(heat
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let p = i / 3;
            let b = base[p * c + if c == 1 { 0 } else { i % 3 }];
            ((u16::from(b) + u16::from(h) + 1) / 2) as u8
        })
        .collect())
}

/// One color per label.
pub fn label_colors(seg: &Segmentation) -> Vec<u8> {
    seg.labels()
        .iter()
        .flat_map(|&l| {
            let h = pami_core::fnv1a64(&l.to_le_bytes());
            [h as u8, (h >> 8) as u8, (h >> 16) as u8]
        })
        .collect()
}
