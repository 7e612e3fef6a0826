//! SEEDS-style superpixels: hill climbing on color histograms, moving
//! boundary blocks between neighboring superpixels from coarse blocks down
//! to single pixels.

use alloc::vec;
use alloc::vec::Vec;

use super::grid_layout;
use crate::error::Error;
use crate::image::{Image, Segmentation};

const BINS_PER_CHANNEL: usize = 5;

fn color_bin(px: &[f64]) -> usize {
    px.iter().fold(0, |acc, &v| {
        let b = ((v * BINS_PER_CHANNEL as f64) as usize).min(BINS_PER_CHANNEL - 1);
        acc * BINS_PER_CHANNEL + b
    })
}

/// Histogram intersection of a block against a superpixel, both normalized.
fn intersection(block: &[(usize, u32)], block_n: u32, hist: &[u32], hist_n: u32) -> f64 {
    if hist_n == 0 {
        return 0.0;
    }
    block
        .iter()
        .map(|&(bin, c)| {
            let a = f64::from(c) / f64::from(block_n);
            let b = f64::from(hist[bin]) / f64::from(hist_n);
            a.min(b)
        })
        .sum()
}

/// Grid-initialized superpixels refined by `n_iter` sweeps; each sweep visits
/// block sizes `2^(num_levels-1)` down to 1 and moves a block to a
/// neighboring superpixel when the block's color histogram matches that
/// superpixel better than what remains of its own. A superpixel is never
/// emptied.
pub fn seeds(img: &Image, num_superpixels: usize, num_levels: usize, n_iter: usize) -> Result<Segmentation, Error> {
    if num_superpixels == 0 || num_levels == 0 {
        return Err(Error::InvalidParameter {
            name: "seeds",
            reason: "num_superpixels and num_levels must be positive".into(),
        });
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let (nx, ny) = grid_layout(w, h, num_superpixels);
    let mut labels: Vec<usize> = (0..w * h)
        .map(|p| ((p / w) * ny / h) * nx + (p % w) * nx / w)
        .collect();
    let bins: Vec<usize> = img.data().chunks_exact(c).map(color_bin).collect();
    let nbins = BINS_PER_CHANNEL.pow(c as u32);
    let k = nx * ny;
    let mut hist = vec![0u32; k * nbins];
    let mut size = vec![0u32; k];
    for (p, &l) in labels.iter().enumerate() {
        hist[l * nbins + bins[p]] += 1;
        size[l] += 1;
    }

    let levels = num_levels.min(usize::BITS as usize - 1);
    let mut block_hist: Vec<(usize, u32)> = Vec::new();
    let mut candidates: Vec<usize> = Vec::new();
    for _ in 0..n_iter {
        let mut moved = false;
        for level in (0..levels).rev() {
            let bs = 1usize << level;
            if bs > w.max(h) {
                continue;
            }
            for by in (0..h).step_by(bs) {
                for bx in (0..w).step_by(bs) {
                    let (x1, y1) = ((bx + bs).min(w), (by + bs).min(h));
                    let own = labels[by * w + bx];
                    let uniform = (by..y1).all(|y| (bx..x1).all(|x| labels[y * w + x] == own));
                    if !uniform {
                        continue;
                    }
                    let n = ((x1 - bx) * (y1 - by)) as u32;
                    if size[own] <= n {
                        continue;
                    }
                    candidates.clear();
                    let mut note = |l: usize| {
                        if l != own && !candidates.contains(&l) {
                            candidates.push(l);
                        }
                    };
                    for x in bx..x1 {
                        if by > 0 {
                            note(labels[(by - 1) * w + x]);
                        }
                        if y1 < h {
                            note(labels[y1 * w + x]);
                        }
                    }
                    for y in by..y1 {
                        if bx > 0 {
                            note(labels[y * w + bx - 1]);
                        }
                        if x1 < w {
                            note(labels[y * w + x1]);
                        }
                    }
                    if candidates.is_empty() {
                        continue;
                    }
                    block_hist.clear();
                    for y in by..y1 {
                        for x in bx..x1 {
                            let b = bins[y * w + x];
                            match block_hist.iter_mut().find(|(bin, _)| *bin == b) {
                                Some(e) => e.1 += 1,
                                None => block_hist.push((b, 1)),
                            }
                        }
                    }
                    // own superpixel without this block
                    let own_h = &hist[own * nbins..(own + 1) * nbins];
                    let own_score = block_hist
                        .iter()
                        .map(|&(bin, cnt)| {
                            let a = f64::from(cnt) / f64::from(n);
                            let b = f64::from(own_h[bin] - cnt) / f64::from(size[own] - n);
                            a.min(b)
                        })
                        .sum::<f64>();
                    let mut best = (own_score, own);
                    for &cand in &candidates {
                        let s = intersection(&block_hist, n, &hist[cand * nbins..(cand + 1) * nbins], size[cand]);
                        if s > best.0 {
                            best = (s, cand);
                        }
                    }
                    if best.1 == own {
                        continue;
                    }
                    let to = best.1;
                    for &(bin, cnt) in &block_hist {
                        hist[own * nbins + bin] -= cnt;
                        hist[to * nbins + bin] += cnt;
                    }
                    size[own] -= n;
                    size[to] += n;
                    for y in by..y1 {
                        for x in bx..x1 {
                            labels[y * w + x] = to;
                        }
                    }
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    Segmentation::from_sparse(w, h, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_image_keeps_grid() {
        let img = Image::filled(32, 32, 3, 0.5).unwrap();
        let seg = seeds(&img, 16, 5, 10).unwrap();
        assert_eq!(seg.num_parts(), 16);
        assert!(seg.part_sizes().iter().all(|&n| n == 64));
    }

    #[test]
    fn boundary_moves_to_matching_color() {
        // two superpixels split at x=8, color edge at x=10
        let mut data = vec![0.0; 16 * 8];
        for y in 0..8 {
            for x in 10..16 {
                data[y * 16 + x] = 1.0;
            }
        }
        let img = Image::new(16, 8, 1, data).unwrap();
        let seg = seeds(&img, 2, 3, 10).unwrap();
        assert_eq!(seg.num_parts(), 2);
        for y in 0..8 {
            for x in 0..16 {
                assert_eq!(seg.label(x, y) == seg.label(0, 0), x < 10, "({x}, {y})");
            }
        }
    }
}
