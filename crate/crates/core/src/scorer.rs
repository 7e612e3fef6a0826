//! The black-box boundary.
//!
//! Everything the engine learns about a model arrives through [`Scorer`]
//! (images) or [`TextScorer`] (token sequences). Implementations must be
//! deterministic: scoring the same input twice returns the same vector.
//!
//! The built-in scorers are synthetic models whose evidence region is known
//! exactly, which makes explanations checkable without a real network.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, ScoreError};
use crate::hash::{splitmix64, Fnv};
use crate::image::{Image, ScoreKind, ScoreVector};

/// A failed item of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchError {
    pub index: usize,
    pub source: ScoreError,
}

impl fmt::Display for BatchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "batch item {}: {}", self.index, self.source)
    }
}

impl core::error::Error for BatchError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub trait Scorer {
    fn score(&self, img: &Image) -> Result<ScoreVector, ScoreError>;

    /// Scores positionally aligned with `imgs`; the first failure aborts.
    fn score_batch(&self, imgs: &[Image]) -> Result<Vec<ScoreVector>, BatchError> {
        imgs.iter()
            .enumerate()
            .map(|(index, img)| self.score(img).map_err(|source| BatchError { index, source }))
            .collect()
    }
}

pub trait TextScorer {
    fn score_text(&self, text: &str) -> Result<ScoreVector, ScoreError>;

    fn score_text_batch(&self, texts: &[String]) -> Result<Vec<ScoreVector>, BatchError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| self.score_text(t).map_err(|source| BatchError { index, source }))
            .collect()
    }
}

macro_rules! forward {
    ($($ptr:ty),*) => {$(
        impl<S: Scorer + ?Sized> Scorer for $ptr {
            fn score(&self, img: &Image) -> Result<ScoreVector, ScoreError> {
                (**self).score(img)
            }
            fn score_batch(&self, imgs: &[Image]) -> Result<Vec<ScoreVector>, BatchError> {
                (**self).score_batch(imgs)
            }
        }
        impl<S: TextScorer + ?Sized> TextScorer for $ptr {
            fn score_text(&self, text: &str) -> Result<ScoreVector, ScoreError> {
                (**self).score_text(text)
            }
            fn score_text_batch(&self, texts: &[String]) -> Result<Vec<ScoreVector>, BatchError> {
                (**self).score_text_batch(texts)
            }
        }
    )*};
}

forward!(&S, Box<S>, Arc<S>);

fn vector(scores: Vec<f64>, kind: ScoreKind) -> Result<ScoreVector, ScoreError> {
    ScoreVector::new(scores, kind).map_err(|e| ScoreError::new(alloc::format!("{e}")))
}

/// Every class scores `value`, whatever the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantScorer {
    value: f64,
    classes: usize,
}

impl ConstantScorer {
    pub fn new(value: f64, classes: usize) -> Result<Self, Error> {
        if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
            return Err(Error::OutOfRange {
                what: "constant score",
                value,
            });
        }
        if classes == 0 {
            return Err(Error::Empty("class list"));
        }
        Ok(ConstantScorer { value, classes })
    }

    fn vector(&self) -> Result<ScoreVector, ScoreError> {
        vector(alloc::vec![self.value; self.classes], ScoreKind::Independent)
    }
}

impl Scorer for ConstantScorer {
    fn score(&self, _img: &Image) -> Result<ScoreVector, ScoreError> {
        self.vector()
    }
}

impl TextScorer for ConstantScorer {
    fn score_text(&self, _text: &str) -> Result<ScoreVector, ScoreError> {
        self.vector()
    }
}

/// Single-class scorer whose evidence is a solid color.
///
/// A pixel is visible evidence when every channel is within `tolerance` of
/// the target color (single-channel images compare against the target's
/// luma). The class-0 score is the visible count divided by a reference
/// count: the number of matching pixels of a calibration image, or the
/// total pixel count when uncalibrated. Blurring a region hides it.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobScorer {
    target: [f64; 3],
    tolerance: f64,
    reference: Option<usize>,
}

impl BlobScorer {
    pub const DEFAULT_TOLERANCE: f64 = 0.1;

    pub fn new(target: [f64; 3], tolerance: f64) -> Result<Self, Error> {
        if let Some(&bad) = target.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::OutOfRange {
                what: "blob target color",
                value: bad,
            });
        }
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            return Err(Error::OutOfRange {
                what: "blob tolerance",
                value: tolerance,
            });
        }
        Ok(BlobScorer {
            target,
            tolerance,
            reference: None,
        })
    }

    /// Normalizes scores by the matching pixels of `original`, so the full
    /// original scores 1.
    pub fn calibrated(mut self, original: &Image) -> Self {
        self.reference = Some(self.count_matches(original).max(1));
        self
    }

    pub fn target(&self) -> [f64; 3] {
        self.target
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn matches(&self, px: &[f64]) -> bool {
        match px.len() {
            1 => {
                let luma = 0.299 * self.target[0] + 0.587 * self.target[1] + 0.114 * self.target[2];
                (px[0] - luma).abs() <= self.tolerance
            }
            _ => px.iter().zip(&self.target).all(|(v, t)| (v - t).abs() <= self.tolerance),
        }
    }

    pub fn count_matches(&self, img: &Image) -> usize {
        img.data()
            .chunks_exact(img.channels())
            .filter(|p| self.matches(p))
            .count()
    }
}

impl Scorer for BlobScorer {
    fn score(&self, img: &Image) -> Result<ScoreVector, ScoreError> {
        let denom = self.reference.unwrap_or(img.len_pixels());
        let frac = (self.count_matches(img) as f64 / denom as f64).min(1.0);
        vector(alloc::vec![frac], ScoreKind::Independent)
    }
}

/// Single-class scorer `clamp(<weights, x> / <weights, 1>, 0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    weights: Vec<f64>,
    norm: f64,
}

impl LinearScorer {
    /// `weights` has one entry per image sample (`width · height · channels`).
    pub fn new(weights: Vec<f64>) -> Result<Self, Error> {
        if let Some(&bad) = weights.iter().find(|v| !v.is_finite()) {
            return Err(Error::OutOfRange {
                what: "linear weight",
                value: bad,
            });
        }
        let norm: f64 = weights.iter().sum();
        if norm == 0.0 {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "weights must not sum to zero".into(),
            });
        }
        Ok(LinearScorer { weights, norm })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Scorer for LinearScorer {
    fn score(&self, img: &Image) -> Result<ScoreVector, ScoreError> {
        if img.data().len() != self.weights.len() {
            return Err(ScoreError::new(alloc::format!(
                "linear scorer expects {} samples, got {}",
                self.weights.len(),
                img.data().len()
            )));
        }
        let dot: f64 = self.weights.iter().zip(img.data()).map(|(w, x)| w * x).sum();
        vector(alloc::vec![(dot / self.norm).clamp(0.0, 1.0)], ScoreKind::Independent)
    }
}

/// Softmax vector derived from a checksum of the input.
///
/// Images are hashed through their 8-bit quantization, so the same scores
/// come out whether an image is scored in-process or shipped as a PNG to
/// an external echo process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChecksumScorer {
    classes: usize,
}

impl ChecksumScorer {
    pub fn new(classes: usize) -> Result<Self, Error> {
        if classes == 0 {
            return Err(Error::Empty("class list"));
        }
        Ok(ChecksumScorer { classes })
    }

    pub fn image_digest(img: &Image) -> u64 {
        let mut h = Fnv::new();
        h.write(&(img.width() as u32).to_le_bytes());
        h.write(&(img.height() as u32).to_le_bytes());
        h.write(&(img.channels() as u32).to_le_bytes());
        h.write(&img.to_8bit());
        h.finish()
    }

    pub fn text_digest(text: &str) -> u64 {
        let mut h = Fnv::new();
        h.write(text.as_bytes());
        h.finish()
    }

    /// Normalized pseudo-random vector for a digest.
    pub fn scores_for(&self, digest: u64) -> Vec<f64> {
        let mut state = digest;
        let raw: Vec<f64> = (0..self.classes)
            .map(|_| ((splitmix64(&mut state) >> 11) as f64 + 1.0) / (1u64 << 53) as f64)
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|v| v / sum).collect()
    }
}

impl Scorer for ChecksumScorer {
    fn score(&self, img: &Image) -> Result<ScoreVector, ScoreError> {
        vector(self.scores_for(Self::image_digest(img)), ScoreKind::Softmax)
    }
}

impl TextScorer for ChecksumScorer {
    fn score_text(&self, text: &str) -> Result<ScoreVector, ScoreError> {
        vector(self.scores_for(Self::text_digest(text)), ScoreKind::Softmax)
    }
}

/// Single-class text scorer: `present` if some whitespace-separated word
/// equals the keyword, `absent` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordScorer {
    keyword: String,
    present: f64,
    absent: f64,
}

impl KeywordScorer {
    pub fn new(keyword: impl Into<String>, present: f64, absent: f64) -> Result<Self, Error> {
        for v in [present, absent] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::OutOfRange {
                    what: "keyword score",
                    value: v,
                });
            }
        }
        let keyword = keyword.into();
        if keyword.trim().is_empty() {
            return Err(Error::Empty("keyword"));
        }
        Ok(KeywordScorer {
            keyword,
            present,
            absent,
        })
    }
}

impl TextScorer for KeywordScorer {
    fn score_text(&self, text: &str) -> Result<ScoreVector, ScoreError> {
        let hit = text.split_whitespace().any(|w| w == self.keyword);
        vector(alloc::vec![if hit { self.present } else { self.absent }], ScoreKind::Independent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RED: [f64; 3] = [1.0, 0.0, 0.0];

    fn quarter_red(w: usize, h: usize) -> Image {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if x < w / 2 && y < h / 2 {
                    data.extend_from_slice(&RED);
                } else {
                    data.extend_from_slice(&[0.3, 0.5, 0.6]);
                }
            }
        }
        Image::new(w, h, 3, data).unwrap()
    }

    #[test]
    fn constant_scores() {
        let s = ConstantScorer::new(0.7, 4).unwrap();
        let v = s.score(&Image::filled(2, 2, 3, 0.1).unwrap()).unwrap();
        assert_eq!(v.scores(), &[0.7; 4]);
        assert_eq!(v.kind(), ScoreKind::Independent);
        assert!(ConstantScorer::new(1.2, 1).is_err());
    }

    #[test]
    fn blob_full_and_quarter() {
        let s = BlobScorer::new(RED, 0.1).unwrap();
        let all_red = Image::new(2, 1, 3, [RED, RED].concat()).unwrap();
        assert_eq!(s.score(&all_red).unwrap().scores(), &[1.0]);
        let q = quarter_red(8, 8);
        assert_eq!(s.score(&q).unwrap().scores(), &[0.25]);
        let cal = s.clone().calibrated(&q);
        assert_eq!(cal.score(&q).unwrap().scores(), &[1.0]);
    }

    #[test]
    fn blob_tolerance_is_inclusive_per_channel() {
        let s = BlobScorer::new(RED, 0.1).unwrap();
        assert!(s.matches(&[0.95, 0.05, 0.1]));
        assert!(!s.matches(&[0.95, 0.05, 0.11]));
        assert!(BlobScorer::new([1.1, 0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn linear_matches_dot_product_oracle() {
        let mut s = 5u64;
        let weights: Vec<f64> = (0..48).map(|_| (splitmix64(&mut s) % 100) as f64 / 10.0).collect();
        let scorer = LinearScorer::new(weights.clone()).unwrap();
        for _ in 0..10 {
            let data: Vec<f64> = (0..48).map(|_| (splitmix64(&mut s) % 256) as f64 / 255.0).collect();
            let img = Image::new(4, 4, 3, data.clone()).unwrap();
            let mut dot = 0.0;
            let mut norm = 0.0;
            for i in 0..48 {
                dot += weights[i] * data[i];
                norm += weights[i];
            }
            let want = (dot / norm).clamp(0.0, 1.0);
            assert!((scorer.score(&img).unwrap().scores()[0] - want).abs() < 1e-12);
        }
        assert!(scorer.score(&Image::filled(2, 2, 3, 0.0).unwrap()).is_err());
    }

    #[test]
    fn checksum_is_softmax_and_stable() {
        let s = ChecksumScorer::new(10).unwrap();
        let img = quarter_red(5, 5);
        let a = s.score(&img).unwrap();
        assert_eq!(a.kind(), ScoreKind::Softmax);
        assert_eq!(a, s.score(&img.clone()).unwrap());
        let other = s.score(&Image::filled(5, 5, 3, 0.5).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn keyword_visibility() {
        let k = KeywordScorer::new("love", 0.9, 0.1).unwrap();
        assert_eq!(k.score_text("I love it!").unwrap().scores(), &[0.9]);
        assert_eq!(k.score_text("I lovely it").unwrap().scores(), &[0.1]);
    }

    #[test]
    fn batch_matches_sequential() {
        let s = BlobScorer::new(RED, 0.1).unwrap();
        let imgs: Vec<Image> = (1..=6).map(|n| quarter_red(2 * n, 2 * n)).collect();
        let batch = s.score_batch(&imgs).unwrap();
        let seq: Vec<_> = imgs.iter().map(|i| s.score(i).unwrap()).collect();
        assert_eq!(batch, seq);
    }

    proptest! {
        #[test]
        fn blob_monotone_in_revealed_pixels(seed in any::<u64>(), reveal in 0usize..64) {
            // hide all but the first `reveal` red pixels, then one more
            let s = BlobScorer::new(RED, 0.1).unwrap();
            let mut st = seed;
            let mut mk = |n: usize| {
                let mut data = Vec::new();
                for p in 0..64 {
                    if p < n { data.extend_from_slice(&RED) } else {
                        let g = 0.2 + (splitmix64(&mut st) % 50) as f64 / 100.0;
                        data.extend_from_slice(&[g, g, g]);
                    }
                }
                Image::new(8, 8, 3, data).unwrap()
            };
            let a = s.score(&mk(reveal)).unwrap().scores()[0];
            let b = s.score(&mk(reveal + 1)).unwrap().scores()[0];
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn pointer_forwarding() {
        let s = ConstantScorer::new(0.5, 1).unwrap();
        let boxed: Box<dyn Scorer> = Box::new(s);
        let img = Image::filled(1, 1, 1, 0.0).unwrap();
        assert_eq!(boxed.score(&img).unwrap().scores(), &[0.5]);
        let arc: Arc<dyn TextScorer> = Arc::new(s);
        assert_eq!(arc.score_text("x").unwrap().scores(), &[0.5]);
    }
}
