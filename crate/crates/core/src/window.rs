//! Sliding-window partition: overlapping windows on a grid anchored at the
//! origin, and per-pixel averaging of the window scores.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::image::{ImportanceMap, PartMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowShape {
    /// Pixels with `dx² + dy² <= radius²`.
    Circle,
    /// Pixels with `|dx| <= radius` and `|dy| <= radius`.
    Rectangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowConfig {
    pub shape: WindowShape,
    /// Radius for circles, half-extent for rectangles.
    pub radius: usize,
    pub step: usize,
}

impl WindowConfig {
    pub const DEFAULT_RADIUS: usize = 40;
    pub const DEFAULT_STEP: usize = 6;

    pub fn new(shape: WindowShape, radius: usize, step: usize) -> Result<Self, Error> {
        let cfg = WindowConfig {
            shape,
            radius,
            step,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.radius == 0 {
            return Err(Error::OutOfRange {
                what: "window radius",
                value: 0.0,
            });
        }
        if self.step == 0 {
            return Err(Error::OutOfRange {
                what: "window step",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// Whether every pixel of any image lies in some window.
    ///
    /// The grid starts at the origin, so a border pixel can be up to
    /// `step - 1` pixels past the last center along each axis; it must still
    /// fall inside that window.
    pub fn covers_all(&self) -> bool {
        let gap = self.step - 1;
        match self.shape {
            WindowShape::Rectangle => gap <= self.radius,
            WindowShape::Circle => 2 * gap * gap <= self.radius * self.radius,
        }
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            shape: WindowShape::Circle,
            radius: Self::DEFAULT_RADIUS,
            step: Self::DEFAULT_STEP,
        }
    }
}

/// Centers `(i·step, j·step)` inside the image, row-major.
pub fn window_centers(width: usize, height: usize, step: usize) -> Vec<(usize, usize)> {
    if step == 0 {
        return Vec::new();
    }
    (0..height)
        .step_by(step)
        .flat_map(|y| (0..width).step_by(step).map(move |x| (x, y)))
        .collect()
}

/// The window around `center`, clipped at the image border.
pub fn window_mask(center: (usize, usize), cfg: &WindowConfig, width: usize, height: usize) -> Result<PartMask, Error> {
    cfg.validate()?;
    let (cx, cy) = center;
    if cx >= width || cy >= height {
        return Err(Error::InvalidParameter {
            name: "center",
            reason: alloc::format!("({cx}, {cy}) outside {width}x{height} image"),
        });
    }
    let r = cfg.radius;
    let r2 = r * r;
    let mut bits = vec![false; width * height];
    let (x0, x1) = (cx.saturating_sub(r), (cx + r).min(width - 1));
    let (y0, y1) = (cy.saturating_sub(r), (cy + r).min(height - 1));
    for y in y0..=y1 {
        let dy = y.abs_diff(cy);
        for x in x0..=x1 {
            let dx = x.abs_diff(cx);
            let inside = match cfg.shape {
                WindowShape::Circle => dx * dx + dy * dy <= r2,
                WindowShape::Rectangle => true,
            };
            if inside {
                bits[y * width + x] = true;
            }
        }
    }
    PartMask::new(width, height, bits)
}

/// Per-pixel sum and count of the scores of covering parts.
///
/// Accumulators merge associatively, so parts may be added in any order and
/// by any number of workers.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageAccumulator {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl CoverageAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        CoverageAccumulator {
            width,
            height,
            sum: vec![0.0; width * height],
            count: vec![0; width * height],
        }
    }

    pub fn add(&mut self, part: &PartMask, score: f64) -> Result<(), Error> {
        if part.width() != self.width || part.height() != self.height {
            return Err(Error::ShapeMismatch("part mask and accumulator"));
        }
        for (i, _) in part.bits().iter().enumerate().filter(|(_, &b)| b) {
            self.sum[i] += score;
            self.count[i] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CoverageAccumulator) -> Result<(), Error> {
        if other.width != self.width || other.height != self.height {
            return Err(Error::ShapeMismatch("accumulators"));
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            *a += b;
        }
        Ok(())
    }

    /// Mean score per pixel; uncovered pixels get 0 and are counted.
    pub fn finish(self) -> WindowAggregate {
        let uncovered = self.count.iter().filter(|&&c| c == 0).count();
        let values = self
            .sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / f64::from(c) })
            .collect();
        WindowAggregate {
            map: ImportanceMap::new(self.width, self.height, values)
                .expect("means of finite scores are finite"),
            uncovered,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowAggregate {
    pub map: ImportanceMap,
    /// Pixels covered by no part (their value is 0).
    pub uncovered: usize,
}

/// Averages, at every pixel, the scores of the parts covering it.
pub fn aggregate_window(parts: &[PartMask], scores: &[f64]) -> Result<WindowAggregate, Error> {
    if parts.len() != scores.len() {
        return Err(Error::Dimension {
            what: "score count",
            expected: parts.len(),
            found: scores.len(),
        });
    }
    let first = parts.first().ok_or(Error::Empty("part list"))?;
    if let Some(&bad) = scores.iter().find(|s| !(s.is_finite() && (0.0..=1.0).contains(*s))) {
        return Err(Error::OutOfRange {
            what: "window score",
            value: bad,
        });
    }
    let mut acc = CoverageAccumulator::new(first.width(), first.height());
    for (part, &score) in parts.iter().zip(scores) {
        acc.add(part, score)?;
    }
    Ok(acc.finish())
}
