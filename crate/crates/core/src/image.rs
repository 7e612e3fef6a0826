//! Domain value types shared by every module.
//!
//! All types validate on construction and are immutable afterwards, so they
//! can be shared freely between scoring workers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;

/// Dense row-major raster with values in `[0, 1]`.
///
/// Channel values of a pixel are stored together: index
/// `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self, Error> {
        if width == 0 || height == 0 {
            return Err(Error::Empty("image"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter {
                name: "channels",
                reason: alloc::format!("expected 1 or 3, got {channels}"),
            });
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::Dimension {
                what: "image data length",
                expected,
                found: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::OutOfRange {
                what: "pixel value",
                value: bad,
            });
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image with every value set to `value` (clamped to `[0, 1]`).
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self, Error> {
        let v = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
        Image::new(width, height, channels, vec![v; width * height * channels])
    }

    /// Maps 8-bit samples to floats: `v -> v / 255`.
    pub fn from_8bit(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self, Error> {
        let expected = width * height * channels;
        if bytes.len() != expected {
            return Err(Error::Dimension {
                what: "8-bit buffer length",
                expected,
                found: bytes.len(),
            });
        }
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Image::new(width, height, channels, data)
    }

    /// Quantizes to 8-bit samples with round-half-away-from-zero.
    pub fn to_8bit(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| math::round(v * 255.0).clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Replicates a single-channel map to three channels, values clamped to `[0, 1]`.
    pub fn from_map_rgb(map: &ImportanceMap) -> Self {
        let mut data = Vec::with_capacity(map.values.len() * 3);
        for &v in &map.values {
            let v = v.clamp(0.0, 1.0);
            data.extend_from_slice(&[v, v, v]);
        }
        Image {
            width: map.width,
            height: map.height,
            channels: 3,
            data,
        }
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Channel values of pixel `(x, y)`.
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

/// Whether the scores of a [`ScoreVector`] form a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    /// Mutually exclusive classes; scores sum to one.
    Softmax,
    /// Independent per-class probabilities (multi-label heads).
    Independent,
}

/// Tolerance on the softmax sum.
pub const SOFTMAX_SUM_TOLERANCE: f64 = 1e-3;

/// Per-class model outputs; the only thing ever read from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
    kind: ScoreKind,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>, kind: ScoreKind) -> Result<Self, Error> {
        if let Some(&bad) = scores.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::OutOfRange {
                what: "score",
                value: bad,
            });
        }
        if kind == ScoreKind::Softmax {
            let sum: f64 = scores.iter().sum();
            if (sum - 1.0).abs() > SOFTMAX_SUM_TOLERANCE {
                return Err(Error::OutOfRange {
                    what: "softmax score sum",
                    value: sum,
                });
            }
        }
        Ok(ScoreVector { scores, kind })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, class: usize) -> Option<f64> {
        self.scores.get(class).copied()
    }
}

/// Index of the largest score; ties go to the smallest index.
pub fn argmax_class(s: &ScoreVector) -> Result<usize, Error> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in s.scores.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Empty("score vector"))
}

/// Per-pixel membership of one preserved part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl PartMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, Error> {
        if bits.len() != width * height {
            return Err(Error::Dimension {
                what: "mask length",
                expected: width * height,
                found: bits.len(),
            });
        }
        if !bits.iter().any(|&b| b) {
            return Err(Error::Empty("part mask"));
        }
        Ok(PartMask {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Result<Self, Error> {
        PartMask::new(width, height, vec![true; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// The pixels not in this part, or `None` when the part covers everything.
    pub fn complement(&self) -> Option<PartMask> {
        PartMask::new(self.width, self.height, self.bits.iter().map(|b| !b).collect()).ok()
    }
}

/// Dense label map partitioning an image into non-empty, non-overlapping parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    num_parts: usize,
}

impl Segmentation {
    /// Validates that labels are exactly `0..num_parts` with every label used.
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self, Error> {
        if width == 0 || height == 0 {
            return Err(Error::Empty("segmentation"));
        }
        if labels.len() != width * height {
            return Err(Error::Dimension {
                what: "label map length",
                expected: width * height,
                found: labels.len(),
            });
        }
        let num_parts = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut seen = vec![false; num_parts];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter {
                name: "labels",
                reason: alloc::format!("label {missing} of {num_parts} has no pixels"),
            });
        }
        Ok(Segmentation {
            width,
            height,
            labels,
            num_parts,
        })
    }

    /// Relabels arbitrary integer labels to dense ids in row-major first-appearance order.
    pub fn from_sparse(width: usize, height: usize, raw: &[usize]) -> Result<Self, Error> {
        if raw.len() != width * height {
            return Err(Error::Dimension {
                what: "label map length",
                expected: width * height,
                found: raw.len(),
            });
        }
        let mut map = alloc::collections::BTreeMap::new();
        let labels = raw
            .iter()
            .map(|&r| {
                let next = map.len() as u32;
                *map.entry(r).or_insert(next)
            })
            .collect();
        Segmentation::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_parts(&self) -> usize {
        self.num_parts
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_parts];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    pub fn part_mask(&self, part: usize) -> Result<PartMask, Error> {
        if part >= self.num_parts {
            return Err(Error::OutOfRange {
                what: "part index",
                value: part as f64,
            });
        }
        PartMask::new(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l as usize == part).collect(),
        )
    }
}

/// Per-pixel contribution estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImportanceMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != width * height {
            return Err(Error::Dimension {
                what: "map length",
                expected: width * height,
                found: values.len(),
            });
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::OutOfRange {
                what: "map value",
                value: bad,
            });
        }
        Ok(ImportanceMap {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, Error> {
        ImportanceMap::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// `(min, max)` over all values.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Row-major index of the first maximal value.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Min-max rescale to `[0, 1]`; `None` when the map is constant.
    pub fn normalized(&self) -> Option<ImportanceMap> {
        let (lo, hi) = self.range();
        let span = hi - lo;
        if !(span > 0.0) {
            return None;
        }
        let values = self.values.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect();
        Some(ImportanceMap {
            width: self.width,
            height: self.height,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_endpoints() {
        let img = Image::from_8bit(3, 1, 1, &[0, 255, 51]).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 0.2]);
    }

    #[test]
    fn eight_bit_rejects_bad_length() {
        assert!(matches!(
            Image::from_8bit(2, 2, 3, &[0; 11]),
            Err(Error::Dimension { expected: 12, found: 11, .. })
        ));
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn argmax_examples() {
        let s = ScoreVector::new(vec![0.1, 0.7, 0.2], ScoreKind::Softmax).unwrap();
        assert_eq!(argmax_class(&s), Ok(1));
        let s = ScoreVector::new(vec![0.5, 0.5], ScoreKind::Softmax).unwrap();
        assert_eq!(argmax_class(&s), Ok(0));
        let s = ScoreVector::new(vec![], ScoreKind::Independent).unwrap();
        assert_eq!(argmax_class(&s), Err(Error::Empty("score vector")));
    }

    #[test]
    fn softmax_sum_checked() {
        assert!(ScoreVector::new(vec![0.5, 0.4], ScoreKind::Softmax).is_err());
        assert!(ScoreVector::new(vec![0.5, 0.4999], ScoreKind::Softmax).is_ok());
        assert!(ScoreVector::new(vec![0.5, 0.4], ScoreKind::Independent).is_ok());
    }

    #[test]
    fn empty_mask_rejected() {
        assert_eq!(PartMask::new(2, 1, vec![false, false]), Err(Error::Empty("part mask")));
        assert!(PartMask::full(2, 2).unwrap().complement().is_none());
    }

    #[test]
    fn segmentation_requires_dense_labels() {
        assert!(Segmentation::new(2, 1, vec![0, 2]).is_err());
        let s = Segmentation::from_sparse(3, 1, &[7, 3, 7]).unwrap();
        assert_eq!(s.labels(), &[0, 1, 0]);
        assert_eq!(s.part_sizes(), vec![2, 1]);
    }

    #[test]
    fn constant_map_does_not_normalize() {
        let m = ImportanceMap::filled(3, 3, 0.4).unwrap();
        assert!(m.normalized().is_none());
        let m = ImportanceMap::new(2, 1, vec![0.2, 0.6]).unwrap();
        assert_eq!(m.normalized().unwrap().values(), &[0.0, 1.0]);
    }
}
