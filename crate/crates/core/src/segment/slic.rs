//! SLIC superpixels: localized k-means in (L, a, b, x, y).

use alloc::vec;
use alloc::vec::Vec;

use super::{grid_layout, label_components};
use crate::error::Error;
use crate::image::{Image, Segmentation};
use crate::math;

const ITERATIONS: usize = 10;

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        math::pow((v + 0.055) / 1.055, 2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    if t > 0.008856 {
        math::cbrt(t)
    } else {
        7.787 * t + 16.0 / 116.0
    }
}

/// CIELAB (D65) of an sRGB triple in `[0, 1]`.
pub(crate) fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = (0.412453 * r + 0.357580 * g + 0.180423 * b) / 0.950456;
    let y = 0.212671 * r + 0.715160 * g + 0.072169 * b;
    let z = (0.019334 * r + 0.119193 * g + 0.950227 * b) / 1.088754;
    let (fx, fy, fz) = (lab_f(x), lab_f(y), lab_f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn to_lab(img: &Image) -> Vec<[f64; 3]> {
    img.data()
        .chunks_exact(img.channels())
        .map(|p| match p.len() {
            1 => rgb_to_lab([p[0], p[0], p[0]]),
            _ => rgb_to_lab([p[0], p[1], p[2]]),
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Center {
    color: [f64; 3],
    x: f64,
    y: f64,
}

/// SLIC with grid-initialized centers at spacing `S = sqrt(W·H / n_segments)`.
///
/// Distances are `sqrt(d_lab² + compactness² · (d_xy / S)²)`, searched in a
/// `2S × 2S` window around each center, for ten iterations. Disconnected
/// fragments of a cluster are then merged into their largest neighboring
/// segment, so the result never has more than `n_segments` parts.
pub fn slic(img: &Image, n_segments: usize, compactness: f64) -> Result<Segmentation, Error> {
    let (w, h) = (img.width(), img.height());
    if n_segments == 0 || n_segments > w * h {
        return Err(Error::InvalidParameter {
            name: "n_segments",
            reason: alloc::format!("must be in 1..={}, got {n_segments}", w * h),
        });
    }
    if !(compactness.is_finite() && compactness >= 0.0) {
        return Err(Error::OutOfRange {
            what: "slic compactness",
            value: compactness,
        });
    }
    let lab = to_lab(img);
    let step = math::sqrt((w * h) as f64 / n_segments as f64);
    let (nx, ny) = grid_layout(w, h, n_segments);

    let mut centers: Vec<Center> = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = ((2 * j + 1) * h) / (2 * ny);
        for i in 0..nx {
            let x = ((2 * i + 1) * w) / (2 * nx);
            centers.push(Center {
                color: lab[y * w + x],
                x: x as f64,
                y: y as f64,
            });
        }
    }

    // start from the grid cells so pixels missed by every search window still have a label
    let mut labels: Vec<usize> = (0..w * h)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            (y * ny / h) * nx + x * nx / w
        })
        .collect();

    let spatial = (compactness / step) * (compactness / step);
    let reach = math::ceil(step) as isize;
    let mut best = vec![f64::INFINITY; w * h];
    for _ in 0..ITERATIONS {
        best.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let cx = math::round(c.x) as isize;
            let cy = math::round(c.y) as isize;
            let y0 = (cy - reach).max(0) as usize;
            let y1 = ((cy + reach) as usize).min(h - 1);
            let x0 = (cx - reach).max(0) as usize;
            let x1 = ((cx + reach) as usize).min(w - 1);
            for y in y0..=y1 {
                let dy = y as f64 - c.y;
                for x in x0..=x1 {
                    let p = y * w + x;
                    let dx = x as f64 - c.x;
                    let col = lab[p];
                    let dl = col[0] - c.color[0];
                    let da = col[1] - c.color[1];
                    let db = col[2] - c.color[2];
                    let d = dl * dl + da * da + db * db + spatial * (dx * dx + dy * dy);
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = k;
                    }
                }
            }
        }

        let mut sums = vec![([0.0f64; 3], 0.0f64, 0.0f64, 0usize); centers.len()];
        for (p, &k) in labels.iter().enumerate() {
            let s = &mut sums[k];
            for ch in 0..3 {
                s.0[ch] += lab[p][ch];
            }
            s.1 += (p % w) as f64;
            s.2 += (p / w) as f64;
            s.3 += 1;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.3 > 0 {
                let n = s.3 as f64;
                c.color = [s.0[0] / n, s.0[1] / n, s.0[2] / n];
                c.x = s.1 / n;
                c.y = s.2 / n;
            }
        }
    }

    enforce_connectivity(w, h, &mut labels);
    Segmentation::from_sparse(w, h, &labels)
}

/// Keeps the largest 4-connected piece of every label and merges the other
/// pieces into the adjacent label with the most pixels, until every label
/// is connected. A piece only joins a label whose kept piece it touches, so
/// every round shrinks the set of stray pixels.
fn enforce_connectivity(w: usize, h: usize, labels: &mut [usize]) {
    loop {
        let (comp, info) = label_components(w, h, labels);
        let max_label = info.iter().map(|(l, _)| *l).max().unwrap_or(0);
        let mut main = vec![usize::MAX; max_label + 1];
        for (id, &(l, size)) in info.iter().enumerate() {
            if main[l] == usize::MAX || size > info[main[l]].1 {
                main[l] = id;
            }
        }
        let orphans: Vec<usize> = (0..info.len()).filter(|&id| main[info[id].0] != id).collect();
        if orphans.is_empty() {
            return;
        }
        let mut label_size = vec![0usize; max_label + 1];
        for &(l, size) in &info {
            label_size[l] += size;
        }
        let mut target = vec![usize::MAX; info.len()];
        for p in 0..labels.len() {
            let id = comp[p];
            if main[info[id].0] == id {
                continue;
            }
            let (x, y) = (p % w, p / w);
            let mut consider = |q: usize| {
                let l = labels[q];
                if main[l] == comp[q] {
                    let t = &mut target[id];
                    if *t == usize::MAX || label_size[l] > label_size[*t] || (label_size[l] == label_size[*t] && l < *t) {
                        *t = l;
                    }
                }
            };
            if x > 0 {
                consider(p - 1);
            }
            if x + 1 < w {
                consider(p + 1);
            }
            if y > 0 {
                consider(p - w);
            }
            if y + 1 < h {
                consider(p + w);
            }
        }
        for p in 0..labels.len() {
            let t = target[comp[p]];
            if t != usize::MAX {
                labels[p] = t;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lab_reference_points() {
        let white = rgb_to_lab([1.0, 1.0, 1.0]);
        assert!((white[0] - 100.0).abs() < 1e-3 && white[1].abs() < 1e-2 && white[2].abs() < 1e-2);
        let black = rgb_to_lab([0.0, 0.0, 0.0]);
        assert!(black.iter().all(|v| v.abs() < 1e-9));
        let red = rgb_to_lab([1.0, 0.0, 0.0]);
        assert!((red[0] - 53.24).abs() < 0.05 && (red[1] - 80.09).abs() < 0.1 && (red[2] - 67.20).abs() < 0.1);
    }

    #[test]
    fn single_segment() {
        let img = Image::filled(9, 7, 3, 0.5).unwrap();
        assert_eq!(slic(&img, 1, 20.0).unwrap().num_parts(), 1);
    }

    #[test]
    fn out_of_range_segments() {
        let img = Image::filled(3, 3, 3, 0.5).unwrap();
        assert!(slic(&img, 0, 20.0).is_err());
        assert!(slic(&img, 10, 20.0).is_err());
        assert!(slic(&img, 9, 20.0).is_ok());
    }

    #[test]
    fn four_color_blocks() {
        let colors = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let mut data = Vec::new();
        for y in 0..8 {
            for x in 0..8 {
                data.extend_from_slice(&colors[(y / 4) * 2 + x / 4]);
            }
        }
        let img = Image::new(8, 8, 3, data).unwrap();
        let seg = slic(&img, 4, 0.01).unwrap();
        assert_eq!(seg.num_parts(), 4);
        // direct pixel-group oracle: same label iff same block
        for p in 0..64 {
            for q in 0..64 {
                let block = |i: usize| ((i / 8) / 4) * 2 + (i % 8) / 4;
                assert_eq!(seg.labels()[p] == seg.labels()[q], block(p) == block(q));
            }
        }
    }

    #[test]
    fn high_compactness_gives_grid_cells() {
        let img = Image::filled(64, 64, 3, 0.4).unwrap();
        let seg = slic(&img, 16, 1e6).unwrap();
        let sizes = seg.part_sizes();
        for part in 0..seg.num_parts() {
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            for y in 0..64 {
                for x in 0..64 {
                    if seg.label(x, y) as usize == part {
                        x0 = x0.min(x);
                        y0 = y0.min(y);
                        x1 = x1.max(x);
                        y1 = y1.max(y);
                    }
                }
            }
            let bbox = (x1 - x0 + 1) * (y1 - y0 + 1);
            assert!(bbox as f64 / sizes[part] as f64 <= 1.5);
        }
    }

    #[test]
    fn connectivity_merges_islands() {
        // label 1 has a stray pixel inside label 0
        let mut labels = vec![0usize; 25];
        for p in 15..25 {
            labels[p] = 1;
        }
        labels[6] = 1;
        enforce_connectivity(5, 5, &mut labels);
        assert_eq!(labels[6], 0);
        let (_, info) = label_components(5, 5, &labels);
        assert_eq!(info.len(), 2);
    }

    #[test]
    fn adjacent_strays_do_not_swap() {
        // strays of labels 0 and 1 touch each other inside label 2
        #[rustfmt::skip]
        let mut labels = vec![
            0, 0, 2, 2, 2, 2,
            2, 2, 2, 0, 1, 2,
            2, 2, 2, 2, 2, 2,
            1, 1, 2, 2, 2, 2,
        ];
        enforce_connectivity(6, 4, &mut labels);
        let (_, info) = label_components(6, 4, &labels);
        let mut seen: Vec<usize> = info.iter().map(|i| i.0).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), info.len());
        assert_eq!((labels[9], labels[10]), (2, 2));
    }

    proptest::proptest! {
        #[test]
        fn connectivity_terminates_connected(w in 1usize..12, h in 1usize..12, seed in proptest::prelude::any::<u64>(), k in 1usize..5) {
            let mut s = seed;
            let mut labels: Vec<usize> = (0..w * h).map(|_| (crate::hash::splitmix64(&mut s) % k as u64) as usize).collect();
            enforce_connectivity(w, h, &mut labels);
            let (_, info) = label_components(w, h, &labels);
            let mut seen: Vec<usize> = info.iter().map(|i| i.0).collect();
            seen.sort_unstable();
            seen.dedup();
            proptest::prop_assert_eq!(seen.len(), info.len());
        }
    }
}
