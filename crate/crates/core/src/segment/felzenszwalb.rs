//! Graph-based segmentation (Felzenszwalb & Huttenlocher, 2004) on the
//! 8-connected pixel grid.

use alloc::vec::Vec;

use crate::error::Error;
use crate::image::{Image, Segmentation};
use crate::masking::{convolve_separable, gaussian_kernel_1d};
use crate::math;

struct Forest {
    parent: Vec<usize>,
    size: Vec<usize>,
    /// Largest edge weight inside the component (valid at roots).
    internal: Vec<f64>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n).collect(),
            size: alloc::vec![1; n],
            internal: alloc::vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize, weight: f64) -> usize {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = weight;
        big
    }
}

/// Segments `img` by greedy merging of sorted grid edges.
///
/// `scale` controls the preference for larger components and is given in
/// 8-bit intensity units (divided by 255 internally since pixels live in
/// `[0, 1]`). The image is first smoothed with a Gaussian of `sigma`, and a
/// final pass merges every component smaller than `min_size` along its
/// lightest edge.
pub fn felzenszwalb(img: &Image, scale: f64, sigma: f64, min_size: usize) -> Result<Segmentation, Error> {
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::OutOfRange {
            what: "felzenszwalb scale",
            value: scale,
        });
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::OutOfRange {
            what: "felzenszwalb sigma",
            value: sigma,
        });
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let smoothed = if sigma > 0.0 {
        let half = math::ceil(4.0 * sigma) as usize;
        convolve_separable(img, &gaussian_kernel_1d(2 * half + 1, sigma)?)
    } else {
        img.clone()
    };
    let px = smoothed.data();
    let dist = |a: usize, b: usize| -> f64 {
        let mut s = 0.0;
        for ch in 0..c {
            let d = px[a * c + ch] - px[b * c + ch];
            s += d * d;
        }
        math::sqrt(s)
    };

    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(4 * w * h);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                edges.push((dist(p, p + 1), p, p + 1));
            }
            if y + 1 < h {
                edges.push((dist(p, p + w), p, p + w));
                if x + 1 < w {
                    edges.push((dist(p, p + w + 1), p, p + w + 1));
                }
                if x > 0 {
                    edges.push((dist(p, p + w - 1), p, p + w - 1));
                }
            }
        }
    }
    // stable: equal weights keep generation order
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let k = scale / 255.0;
    let mut forest = Forest::new(w * h);
    for &(wt, a, b) in &edges {
        let (ra, rb) = (forest.find(a), forest.find(b));
        if ra == rb {
            continue;
        }
        let ta = forest.internal[ra] + k / forest.size[ra] as f64;
        let tb = forest.internal[rb] + k / forest.size[rb] as f64;
        if wt <= ta.min(tb) {
            forest.union(ra, rb, wt);
        }
    }

    for &(wt, a, b) in &edges {
        let (ra, rb) = (forest.find(a), forest.find(b));
        if ra != rb && (forest.size[ra] < min_size || forest.size[rb] < min_size) {
            forest.union(ra, rb, wt);
        }
    }

    let roots: Vec<usize> = (0..w * h).map(|p| forest.find(p)).collect();
    Segmentation::from_sparse(w, h, &roots)
}
