//! Pointing game and insertion metric.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{EngineError, Error, PartContext};
use crate::image::{Image, ImportanceMap, PartMask};
use crate::masking::{make_background, MaskStyle};
use crate::scorer::Scorer;

/// Ground-truth object region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Region {
    /// Inclusive corners.
    BBox { x0: usize, y0: usize, x1: usize, y1: usize },
    Mask(PartMask),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthRegion {
    pub class: usize,
    pub region: Region,
}

impl GroundTruthRegion {
    pub fn bbox(class: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self, Error> {
        if x0 > x1 || y0 > y1 {
            return Err(Error::InvalidParameter {
                name: "bbox",
                reason: alloc::format!("corners ({x0}, {y0}) / ({x1}, {y1}) are not ordered"),
            });
        }
        Ok(GroundTruthRegion {
            class,
            region: Region::BBox { x0, y0, x1, y1 },
        })
    }

    pub fn mask(class: usize, mask: PartMask) -> Self {
        GroundTruthRegion {
            class,
            region: Region::Mask(mask),
        }
    }

    /// Checks the region against an image of `width × height`.
    pub fn validate(&self, width: usize, height: usize) -> Result<(), Error> {
        match &self.region {
            Region::BBox { x1, y1, .. } => {
                if *x1 >= width || *y1 >= height {
                    return Err(Error::InvalidParameter {
                        name: "bbox",
                        reason: alloc::format!("({x1}, {y1}) lies outside {width}x{height}"),
                    });
                }
            }
            Region::Mask(m) => {
                if m.width() != width || m.height() != height {
                    return Err(Error::ShapeMismatch("ground-truth mask and map"));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        match &self.region {
            Region::BBox { x0, y0, x1, y1 } => (*x0..=*x1).contains(&x) && (*y0..=*y1).contains(&y),
            Region::Mask(m) => x < m.width() && y < m.height() && m.get(x, y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pointing {
    Hit,
    Miss,
}

impl Pointing {
    pub fn is_hit(self) -> bool {
        self == Pointing::Hit
    }
}

/// Hit when the map's maximum (first in row-major order on ties) lies in the region.
pub fn pointing_game(map: &ImportanceMap, gt: &GroundTruthRegion) -> Result<Pointing, Error> {
    gt.validate(map.width(), map.height())?;
    let i = map.argmax();
    let (x, y) = (i % map.width(), i / map.width());
    Ok(if gt.contains(x, y) { Pointing::Hit } else { Pointing::Miss })
}

/// Mean over classes of each class's hit fraction.
pub fn hit_rate(results: &[(usize, Pointing)]) -> Result<f64, Error> {
    if results.is_empty() {
        return Err(Error::Empty("pointing results"));
    }
    let mut per_class: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for &(class, p) in results {
        let e = per_class.entry(class).or_insert((0, 0));
        e.0 += u64::from(p.is_hit());
        e.1 += 1;
    }
    let sum: f64 = per_class.values().map(|&(h, n)| h as f64 / n as f64).sum();
    Ok(sum / per_class.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsertionResult {
    pub fractions: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub auc: f64,
}

pub const DEFAULT_INSERTION_STEPS: usize = 100;

/// Trapezoidal area under a curve sampled at ascending `xs`.
pub fn trapezoid_auc(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Pixel indices by descending importance, row-major on ties.
pub fn insertion_order(map: &ImportanceMap) -> Vec<usize> {
    let v = map.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    order
}

/// Insertion curve: starting from the masking background, restore the
/// original pixels in importance order and score at fractions
/// `0, 1/steps, …, 1` (stage `i` restores the top `⌊i·N/steps⌋` pixels).
pub fn insertion(
    img: &Image,
    map: &ImportanceMap,
    scorer: &dyn Scorer,
    class: usize,
    steps: usize,
    style: &MaskStyle,
) -> Result<InsertionResult, EngineError> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "must be at least 1".into(),
        }
        .into());
    }
    if map.width() != img.width() || map.height() != img.height() {
        return Err(Error::ShapeMismatch("importance map and image").into());
    }
    let background = make_background(img, style)?;
    let order = insertion_order(map);
    let n = order.len();
    let c = img.channels();
    let src = img.data();
    let mut current = background.into_data();
    let mut restored = 0usize;

    const CHUNK: usize = 16;
    let mut probabilities = Vec::with_capacity(steps + 1);
    let mut batch = Vec::with_capacity(CHUNK);
    let mut first_stage = 0usize;
    for stage in 0..=steps {
        let target = stage * n / steps;
        for &p in &order[restored..target] {
            current[p * c..(p + 1) * c].copy_from_slice(&src[p * c..(p + 1) * c]);
        }
        restored = target;
        batch.push(Image::from_raw_unchecked(img.width(), img.height(), c, current.clone()));
        if batch.len() == CHUNK || stage == steps {
            let scores = scorer.score_batch(&batch).map_err(|e| EngineError::Score {
                context: PartContext::Stage {
                    index: first_stage + e.index,
                },
                source: e.source,
            })?;
            for v in &scores {
                probabilities.push(v.get(class).ok_or(EngineError::InvalidClass {
                    class,
                    arity: v.len(),
                })?);
            }
            batch.clear();
            first_stage = stage + 1;
        }
    }
    let fractions: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    let auc = trapezoid_auc(&fractions, &probabilities);
    Ok(InsertionResult {
        fractions,
        probabilities,
        auc,
    })
}
