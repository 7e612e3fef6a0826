//! Compact watershed on the Sobel gradient of the luminance.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{grid_seeds, luminance};
use crate::error::Error;
use crate::image::{Image, Segmentation};
use crate::masking::reflect;
use crate::math;

/// Sobel gradient magnitude of a single-channel buffer, reflect borders.
pub fn sobel_magnitude(values: &[f64], width: usize, height: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| values[reflect(y, height) * width + reflect(x, width)];
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height as isize {
        for x in 0..width as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let (gx, gy) = (gx / 4.0, gy / 4.0);
            out.push(math::sqrt((gx * gx + gy * gy) / 2.0));
        }
    }
    out
}

#[derive(Debug)]
struct Entry {
    priority: f64,
    age: u64,
    pixel: usize,
    seed: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap and we pop lowest priority, oldest first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .priority
            .total_cmp(&self.priority)
            .then_with(|| other.age.cmp(&self.age))
    }
}

/// Floods the gradient image from `markers` grid-placed seeds.
///
/// A pixel is claimed by the first seed to pop it from a priority queue
/// ordered by `gradient(p) + compactness · |p - seed|²` (4-connectivity,
/// ties broken by insertion order). With `compactness = 0` this is the
/// classic priority-flood watershed.
pub fn watershed(img: &Image, markers: usize, compactness: f64) -> Result<Segmentation, Error> {
    if markers == 0 {
        return Err(Error::InvalidParameter {
            name: "markers",
            reason: "must be at least 1".into(),
        });
    }
    if !(compactness.is_finite() && compactness >= 0.0) {
        return Err(Error::OutOfRange {
            what: "watershed compactness",
            value: compactness,
        });
    }
    let (w, h) = (img.width(), img.height());
    let gradient = sobel_magnitude(&luminance(img), w, h);
    let seeds = grid_seeds(w, h, markers);
    flood(w, h, &gradient, &seeds, compactness)
}

pub(crate) fn flood(
    w: usize,
    h: usize,
    gradient: &[f64],
    seeds: &[(usize, usize)],
    compactness: f64,
) -> Result<Segmentation, Error> {
    let mut labels = alloc::vec![u32::MAX; w * h];
    let mut heap = BinaryHeap::new();
    let mut age = 0u64;
    for (i, &(x, y)) in seeds.iter().enumerate() {
        let p = y * w + x;
        heap.push(Entry {
            priority: gradient[p],
            age,
            pixel: p,
            seed: i,
        });
        age += 1;
    }
    while let Some(Entry { pixel, seed, .. }) = heap.pop() {
        if labels[pixel] != u32::MAX {
            continue;
        }
        labels[pixel] = seed as u32;
        let (x, y) = (pixel % w, pixel / w);
        let (sx, sy) = seeds[seed];
        let mut push = |q: usize, heap: &mut BinaryHeap<Entry>| {
            if labels[q] == u32::MAX {
                let (qx, qy) = ((q % w) as f64, (q / w) as f64);
                let (dx, dy) = (qx - sx as f64, qy - sy as f64);
                heap.push(Entry {
                    priority: gradient[q] + compactness * (dx * dx + dy * dy),
                    age,
                    pixel: q,
                    seed,
                });
                age += 1;
            }
        };
        if x > 0 {
            push(pixel - 1, &mut heap);
        }
        if x + 1 < w {
            push(pixel + 1, &mut heap);
        }
        if y > 0 {
            push(pixel - w, &mut heap);
        }
        if y + 1 < h {
            push(pixel + w, &mut heap);
        }
    }
    let raw: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    Segmentation::from_sparse(w, h, &raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn one_marker_one_segment() {
        let mut s = 3u64;
        let data: Vec<f64> = (0..100).map(|_| (crate::hash::splitmix64(&mut s) % 100) as f64 / 99.0).collect();
        let img = Image::new(10, 10, 1, data).unwrap();
        assert_eq!(watershed(&img, 1, 0.0001).unwrap().num_parts(), 1);
    }

    #[test]
    fn uniform_image_gives_voronoi_cells() {
        let img = Image::filled(24, 18, 3, 0.5).unwrap();
        let seg = watershed(&img, 6, 0.01).unwrap();
        let seeds = grid_seeds(24, 18, 6);
        assert_eq!(seg.num_parts(), seeds.len());
        let mut checked = 0;
        for y in 0..18 {
            for x in 0..24 {
                let d: Vec<usize> = seeds
                    .iter()
                    .map(|&(sx, sy)| sx.abs_diff(x).pow(2) + sy.abs_diff(y).pow(2))
                    .collect();
                let min = *d.iter().min().unwrap();
                if d.iter().filter(|&&v| v == min).count() > 1 {
                    continue;
                }
                let nearest = d.iter().position(|&v| v == min).unwrap();
                let (sx, sy) = seeds[nearest];
                assert_eq!(seg.label(x, y), seg.label(sx, sy), "pixel ({x}, {y})");
                checked += 1;
            }
        }
        assert!(checked > 300);
    }

    #[test]
    fn ridge_separates_basins() {
        let mut data = vec![0.0; 256];
        for y in 0..16 {
            for x in 8..16 {
                data[y * 16 + x] = 1.0;
            }
        }
        let img = Image::new(16, 16, 1, data).unwrap();
        let g = sobel_magnitude(&luminance(&img), 16, 16);
        // the gradient ridge sits on columns 7 and 8
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(g[y * 16 + x] > 0.0, x == 7 || x == 8);
            }
        }
        let seg = watershed(&img, 2, 0.0).unwrap();
        assert_eq!(seg.num_parts(), 2);
        let left = seg.label(0, 0);
        for y in 0..16 {
            for x in 0..16 {
                if x <= 6 {
                    assert_eq!(seg.label(x, y), left);
                } else if x >= 9 {
                    assert_ne!(seg.label(x, y), left);
                }
            }
        }
    }
}
