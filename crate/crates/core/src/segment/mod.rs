//! Superpixel pre-segmentation.
//!
//! Four unsupervised segmenters behind one config type. Every segmenter
//! returns a dense [`Segmentation`] and is deterministic for a given input.

mod felzenszwalb;
mod seeds;
mod slic;
mod watershed;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use felzenszwalb::felzenszwalb;
pub use seeds::seeds;
pub use slic::slic;
pub use watershed::{sobel_magnitude, watershed};

use crate::error::Error;
use crate::image::{Image, Segmentation};
use crate::math;

pub type SegmentError = Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Felzenszwalb,
    Slic,
    Watershed,
    Seeds,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Felzenszwalb => "felzenszwalb",
            Algorithm::Slic => "slic",
            Algorithm::Watershed => "watershed",
            Algorithm::Seeds => "seeds",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "felzenszwalb" => Some(Algorithm::Felzenszwalb),
            "slic" => Some(Algorithm::Slic),
            "watershed" => Some(Algorithm::Watershed),
            "seeds" => Some(Algorithm::Seeds),
            _ => None,
        }
    }

    /// Parameter names accepted by [`SegmenterConfig::from_params`].
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Algorithm::Felzenszwalb => &["scale", "sigma", "min_size"],
            Algorithm::Slic => &["n_segments", "compactness"],
            Algorithm::Watershed => &["markers", "compactness"],
            Algorithm::Seeds => &["num_superpixels", "num_levels", "n_iter"],
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One segmenter with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmenterConfig {
    /// `scale` is in 8-bit intensity units, as in the reference implementation.
    Felzenszwalb { scale: f64, sigma: f64, min_size: usize },
    Slic { n_segments: usize, compactness: f64 },
    Watershed { markers: usize, compactness: f64 },
    Seeds { num_superpixels: usize, num_levels: usize, n_iter: usize },
}

impl SegmenterConfig {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            SegmenterConfig::Felzenszwalb { .. } => Algorithm::Felzenszwalb,
            SegmenterConfig::Slic { .. } => Algorithm::Slic,
            SegmenterConfig::Watershed { .. } => Algorithm::Watershed,
            SegmenterConfig::Seeds { .. } => Algorithm::Seeds,
        }
    }

    /// Builds a config from name/value pairs; the keys must be exactly the
    /// algorithm's parameter names and every value must be positive.
    pub fn from_params(algorithm: &str, params: &[(&str, f64)]) -> Result<Self, Error> {
        let algo = Algorithm::from_name(algorithm).ok_or_else(|| Error::InvalidParameter {
            name: "algorithm",
            reason: alloc::format!("unknown segmenter `{algorithm}`"),
        })?;
        let names = algo.param_names();
        for (k, _) in params {
            if !names.contains(k) {
                return Err(Error::InvalidParameter {
                    name: "params",
                    reason: alloc::format!("`{k}` is not a {algo} parameter"),
                });
            }
        }
        let get = |name: &'static str| -> Result<f64, Error> {
            let mut hits = params.iter().filter(|(k, _)| *k == name);
            let (_, v) = hits.next().ok_or_else(|| Error::InvalidParameter {
                name: "params",
                reason: alloc::format!("missing `{name}` for {algo}"),
            })?;
            if hits.next().is_some() {
                return Err(Error::InvalidParameter {
                    name: "params",
                    reason: alloc::format!("duplicate `{name}`"),
                });
            }
            Ok(*v)
        };
        let count = |name: &'static str| -> Result<usize, Error> {
            let v = get(name)?;
            if math::floor(v) != v || v < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "params",
                    reason: alloc::format!("`{name}` must be a whole number, got {v}"),
                });
            }
            Ok(v as usize)
        };
        let cfg = match algo {
            Algorithm::Felzenszwalb => SegmenterConfig::Felzenszwalb {
                scale: get("scale")?,
                sigma: get("sigma")?,
                min_size: count("min_size")?,
            },
            Algorithm::Slic => SegmenterConfig::Slic {
                n_segments: count("n_segments")?,
                compactness: get("compactness")?,
            },
            Algorithm::Watershed => SegmenterConfig::Watershed {
                markers: count("markers")?,
                compactness: get("compactness")?,
            },
            Algorithm::Seeds => SegmenterConfig::Seeds {
                num_superpixels: count("num_superpixels")?,
                num_levels: count("num_levels")?,
                n_iter: count("n_iter")?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            SegmenterConfig::Felzenszwalb {
                scale,
                sigma,
                min_size,
            } => alloc::vec![("scale", scale), ("sigma", sigma), ("min_size", min_size as f64)],
            SegmenterConfig::Slic {
                n_segments,
                compactness,
            } => alloc::vec![("n_segments", n_segments as f64), ("compactness", compactness)],
            SegmenterConfig::Watershed {
                markers,
                compactness,
            } => alloc::vec![("markers", markers as f64), ("compactness", compactness)],
            SegmenterConfig::Seeds {
                num_superpixels,
                num_levels,
                n_iter,
            } => alloc::vec![
                ("num_superpixels", num_superpixels as f64),
                ("num_levels", num_levels as f64),
                ("n_iter", n_iter as f64),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in self.params() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: alloc::format!("must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn segment(&self, img: &Image) -> Result<Segmentation, Error> {
        self.validate()?;
        match *self {
            SegmenterConfig::Felzenszwalb {
                scale,
                sigma,
                min_size,
            } => felzenszwalb(img, scale, sigma, min_size),
            SegmenterConfig::Slic {
                n_segments,
                compactness,
            } => slic(img, n_segments, compactness),
            SegmenterConfig::Watershed {
                markers,
                compactness,
            } => watershed(img, markers, compactness),
            SegmenterConfig::Seeds {
                num_superpixels,
                num_levels,
                n_iter,
            } => seeds(img, num_superpixels, num_levels, n_iter),
        }
    }

    /// Stable one-line description, e.g. `slic(n_segments=10, compactness=20)`.
    pub fn describe(&self) -> String {
        let mut s = String::from(self.algorithm().name());
        s.push('(');
        for (i, (k, v)) in self.params().iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            s.push_str(&alloc::format!("{k}={v}"));
        }
        s.push(')');
        s
    }
}

impl fmt::Display for SegmenterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// The hyperparameter grid used for the pre-segmentation strategy: six
/// Felzenszwalb scales, eight SLIC sizes and three watershed marker counts
/// (17 configs), plus three SEEDS configs when `with_seeds` is set (20).
pub fn sweep_configs(with_seeds: bool) -> Vec<SegmenterConfig> {
    let mut v = Vec::with_capacity(20);
    for scale in [250.0, 200.0, 150.0, 100.0, 70.0, 50.0] {
        v.push(SegmenterConfig::Felzenszwalb {
            scale,
            sigma: 0.8,
            min_size: 784,
        });
    }
    for n_segments in [10, 20, 30, 40, 50, 60, 70, 80] {
        v.push(SegmenterConfig::Slic {
            n_segments,
            compactness: 20.0,
        });
    }
    if with_seeds {
        for num_superpixels in [10, 20, 30] {
            v.push(SegmenterConfig::Seeds {
                num_superpixels,
                num_levels: 5,
                n_iter: 10,
            });
        }
    }
    for markers in [10, 20, 30] {
        v.push(SegmenterConfig::Watershed {
            markers,
            compactness: 0.0001,
        });
    }
    v
}

/// Grid of `nx × ny` cells with `nx · ny <= n`, close to square cells of
/// side `sqrt(W·H/n)`.
pub(crate) fn grid_layout(width: usize, height: usize, n: usize) -> (usize, usize) {
    let n = n.max(1);
    let side = math::sqrt((width * height) as f64 / n as f64);
    let mut nx = (math::round(width as f64 / side) as usize).clamp(1, width);
    let mut ny = (math::round(height as f64 / side) as usize).clamp(1, height);
    // shrink the dimension with the smaller cells until the count fits
    while nx * ny > n {
        if (width as f64 / nx as f64) <= (height as f64 / ny as f64) && nx > 1 {
            nx -= 1;
        } else if ny > 1 {
            ny -= 1;
        } else {
            nx -= 1;
        }
    }
    // then grow the dimension with the larger cells while it still fits
    loop {
        let grow_x = (nx + 1) * ny <= n && nx < width;
        let grow_y = nx * (ny + 1) <= n && ny < height;
        match (grow_x, grow_y) {
            (false, false) => break,
            (true, false) => nx += 1,
            (false, true) => ny += 1,
            (true, true) => {
                if width as f64 / nx as f64 >= height as f64 / ny as f64 {
                    nx += 1;
                } else {
                    ny += 1;
                }
            }
        }
    }
    (nx, ny)
}

/// Cell-center seed positions of [`grid_layout`], row-major.
pub(crate) fn grid_seeds(width: usize, height: usize, n: usize) -> Vec<(usize, usize)> {
    let (nx, ny) = grid_layout(width, height, n);
    let mut seeds = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = ((2 * j + 1) * height) / (2 * ny);
        for i in 0..nx {
            let x = ((2 * i + 1) * width) / (2 * nx);
            seeds.push((x, y));
        }
    }
    seeds
}

/// Rec.601 luma per pixel; single-channel images pass through.
pub(crate) fn luminance(img: &Image) -> Vec<f64> {
    match img.channels() {
        1 => img.data().to_vec(),
        _ => img
            .data()
            .chunks_exact(img.channels())
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect(),
    }
}

/// Connected components (4-connectivity) of equal labels, returned as a
/// component id per pixel plus the label and size of each component.
pub(crate) fn label_components(width: usize, height: usize, labels: &[usize]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut comp = alloc::vec![usize::MAX; labels.len()];
    let mut info = Vec::new();
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = info.len();
        let label = labels[start];
        let mut size = 0;
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && labels[q] == label {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        info.push((label, size));
    }
    (comp, info)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_sizes() {
        let base = sweep_configs(false);
        assert_eq!(base.len(), 17);
        assert_eq!(sweep_configs(true).len(), 20);
        for cfg in sweep_configs(true) {
            cfg.validate().unwrap();
            let params = cfg.params();
            let names: Vec<_> = params.iter().map(|(k, _)| *k).collect();
            assert_eq!(names, cfg.algorithm().param_names());
        }
        let count = |a| base.iter().filter(|c| c.algorithm() == a).count();
        assert_eq!(count(Algorithm::Felzenszwalb), 6);
        assert_eq!(count(Algorithm::Slic), 8);
        assert_eq!(count(Algorithm::Watershed), 3);
    }

    #[test]
    fn params_round_trip() {
        for cfg in sweep_configs(true) {
            let p = cfg.params();
            let back = SegmenterConfig::from_params(cfg.algorithm().name(), &p).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn from_params_rejects_bad_keys() {
        assert!(SegmenterConfig::from_params("slic", &[("n_segments", 10.0)]).is_err());
        assert!(SegmenterConfig::from_params(
            "slic",
            &[("n_segments", 10.0), ("compactness", 20.0), ("sigma", 1.0)]
        )
        .is_err());
        assert!(SegmenterConfig::from_params("slic", &[("n_segments", 10.0), ("compactness", -1.0)]).is_err());
        assert!(SegmenterConfig::from_params("slic", &[("n_segments", 10.5), ("compactness", 1.0)]).is_err());
        assert!(SegmenterConfig::from_params("quickshift", &[]).is_err());
    }

    #[test]
    fn grid_layout_fits_budget() {
        assert_eq!(grid_layout(64, 64, 1), (1, 1));
        assert_eq!(grid_layout(16, 16, 2), (2, 1));
        assert_eq!(grid_layout(8, 8, 4), (2, 2));
        assert_eq!(grid_layout(64, 64, 10), (3, 3));
        for n in 1..200 {
            for (w, h) in [(64, 64), (224, 224), (5, 40), (3, 2)] {
                let (nx, ny) = grid_layout(w, h, n);
                assert!(nx * ny <= n && nx <= w && ny <= h && nx >= 1 && ny >= 1);
            }
        }
    }

    #[test]
    fn grid_seeds_are_distinct_and_inside() {
        let s = grid_seeds(16, 16, 2);
        assert_eq!(s, alloc::vec![(4, 8), (12, 8)]);
        let s = grid_seeds(5, 3, 100);
        assert_eq!(s.len(), 15);
    }
}
