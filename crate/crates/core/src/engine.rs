//! Orchestration of both partition strategies.
//!
//! For every part: composite the preserved part over the masking background,
//! score the majority-masked input, keep the explained class's score, and
//! aggregate. Masked inputs are handed to the scorer in batches of
//! `batch_size` so a concurrent [`Scorer`] can keep several requests in
//! flight; aggregation uses order-free accumulators.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{EngineError, Error, PartContext};
use crate::hash::Fnv;
use crate::image::{argmax_class, Image, ImportanceMap, PartMask, ScoreVector, Segmentation};
use crate::masking::{compose_bits, make_background, MaskStyle};
use crate::scorer::Scorer;
use crate::segment::{sweep_configs, SegmenterConfig};
use crate::window::{window_centers, window_mask, CoverageAccumulator, WindowConfig};

/// Runs a list of segmenter configs on one image; results stay in config order.
pub trait SweepRunner {
    fn segment_all(&self, img: &Image, cfgs: &[SegmenterConfig]) -> Vec<Result<Segmentation, Error>>;
}

/// Runs the configs one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl SweepRunner for Sequential {
    fn segment_all(&self, img: &Image, cfgs: &[SegmenterConfig]) -> Vec<Result<Segmentation, Error>> {
        cfgs.iter().map(|c| c.segment(img)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOptions {
    pub configs: Vec<SegmenterConfig>,
    /// 1, or 2 to re-segment the run-1 map.
    pub runs: u8,
}

impl Default for SegmentOptions {
    /// The 17-config sweep with a second run.
    fn default() -> Self {
        SegmentOptions {
            configs: sweep_configs(false),
            runs: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Window(WindowConfig),
    Segment(SegmentOptions),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Window(_) => "window",
            Strategy::Segment(_) => "segment",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOptions {
    pub strategy: Strategy,
    /// Explained class; the argmax of the unmasked input's scores when `None`.
    pub class: Option<usize>,
    pub mask: MaskStyle,
}

impl ExplainOptions {
    pub fn window() -> Self {
        ExplainOptions {
            strategy: Strategy::Window(WindowConfig::default()),
            class: None,
            mask: MaskStyle::default(),
        }
    }

    pub fn segment() -> Self {
        ExplainOptions {
            strategy: Strategy::Segment(SegmentOptions::default()),
            class: None,
            mask: MaskStyle::default(),
        }
    }

    /// Stable digest of strategy, parameters, class and masking.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv::new();
        h.write(describe_options(self).as_bytes());
        h.finish()
    }
}

fn describe_options(o: &ExplainOptions) -> String {
    let mut s = match &o.strategy {
        Strategy::Window(w) => format!("window shape={:?} radius={} step={}", w.shape, w.radius, w.step),
        Strategy::Segment(seg) => {
            let mut s = format!("segment runs={}", seg.runs);
            for c in &seg.configs {
                s.push(' ');
                s.push_str(&c.describe());
            }
            s
        }
    };
    s.push_str(&format!(
        " class={:?} mask={:?}/{}/{}",
        o.class, o.mask.variant, o.mask.kernel_size, o.mask.sigma
    ));
    s
}

/// Per-run bookkeeping of the segment strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run: u8,
    /// Parts produced by each config, `None` where the segmenter failed.
    pub segment_counts: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub map: ImportanceMap,
    pub class: usize,
    /// Masked inputs evaluated (one per window or per segment per run).
    pub scorer_calls: u64,
    /// Extra calls on the unmasked input (0, or 1 when the class was inferred).
    pub reference_calls: u64,
    /// Masked inputs answered from the deduplication cache.
    pub cache_hits: u64,
    pub uncovered_pixels: usize,
    pub runs: Vec<RunReport>,
    pub warnings: Vec<String>,
}

impl Explanation {
    fn new(map: ImportanceMap, class: usize) -> Self {
        Explanation {
            map,
            class,
            scorer_calls: 0,
            reference_calls: 0,
            cache_hits: 0,
            uncovered_pixels: 0,
            runs: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

struct Tally {
    calls: u64,
    hits: u64,
    cache: Option<BTreeMap<u64, f64>>,
}

impl Tally {
    fn new(dedup: bool) -> Self {
        Tally {
            calls: 0,
            hits: 0,
            cache: dedup.then(BTreeMap::new),
        }
    }
}

fn image_key(img: &Image) -> u64 {
    let mut h = Fnv::new();
    h.write(&(img.width() as u64).to_le_bytes());
    h.write(&(img.channels() as u64).to_le_bytes());
    h.write_f64s(img.data());
    h.finish()
}

pub struct Engine<'a> {
    scorer: &'a dyn Scorer,
    sweep: &'a dyn SweepRunner,
    batch_size: usize,
    dedup: bool,
}

impl<'a> Engine<'a> {
    pub const DEFAULT_BATCH_SIZE: usize = 64;

    pub fn new(scorer: &'a dyn Scorer) -> Self {
        Engine {
            scorer,
            sweep: &Sequential,
            batch_size: Self::DEFAULT_BATCH_SIZE,
            dedup: false,
        }
    }

    pub fn with_sweep_runner(mut self, sweep: &'a dyn SweepRunner) -> Self {
        self.sweep = sweep;
        self
    }

    /// Masked inputs per scorer batch (at least 1).
    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    /// Reuse scores of bit-identical masked inputs instead of re-scoring them.
    pub fn with_dedup(mut self, on: bool) -> Self {
        self.dedup = on;
        self
    }

    fn class_score(v: &ScoreVector, class: usize) -> Result<f64, EngineError> {
        v.get(class).ok_or(EngineError::InvalidClass {
            class,
            arity: v.len(),
        })
    }

    /// Scores `inputs` and returns the class-`class` scores in input order.
    fn score_inputs(
        &self,
        inputs: Vec<(PartContext, Image)>,
        class: usize,
        tally: &mut Tally,
    ) -> Result<Vec<f64>, EngineError> {
        tally.calls += inputs.len() as u64;
        let mut out = vec![f64::NAN; inputs.len()];
        let mut pending: Vec<usize> = Vec::with_capacity(inputs.len());
        let mut keys = vec![0u64; inputs.len()];
        match &tally.cache {
            Some(cache) => {
                let mut first_seen: BTreeMap<u64, usize> = BTreeMap::new();
                for (i, (_, img)) in inputs.iter().enumerate() {
                    let k = image_key(img);
                    keys[i] = k;
                    if let Some(&v) = cache.get(&k) {
                        out[i] = v;
                        tally.hits += 1;
                    } else if first_seen.contains_key(&k) {
                        tally.hits += 1;
                    } else {
                        first_seen.insert(k, i);
                        pending.push(i);
                    }
                }
            }
            None => pending.extend(0..inputs.len()),
        }

        let mut batch: Vec<Image> = Vec::with_capacity(self.batch_size);
        for chunk in pending.chunks(self.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| inputs[i].1.clone()));
            let scores = self.scorer.score_batch(&batch).map_err(|e| EngineError::Score {
                context: inputs[chunk[e.index.min(chunk.len() - 1)]].0,
                source: e.source,
            })?;
            if scores.len() != chunk.len() {
                return Err(EngineError::Score {
                    context: inputs[chunk[0]].0,
                    source: crate::error::ScoreError::new(format!(
                        "scorer returned {} results for {} inputs",
                        scores.len(),
                        chunk.len()
                    )),
                });
            }
            for (&i, v) in chunk.iter().zip(&scores) {
                out[i] = Self::class_score(v, class)?;
            }
        }

        if let Some(cache) = &mut tally.cache {
            for &i in &pending {
                cache.insert(keys[i], out[i]);
            }
            for i in 0..out.len() {
                if out[i].is_nan() {
                    out[i] = cache[&keys[i]];
                }
            }
        }
        Ok(out)
    }

    fn reference_class(&self, img: &Image) -> Result<usize, EngineError> {
        let v = self.scorer.score(img).map_err(|source| EngineError::Score {
            context: PartContext::Reference,
            source,
        })?;
        Ok(argmax_class(&v)?)
    }

    /// Sliding-window importance map for class `class`.
    pub fn explain_window(
        &self,
        img: &Image,
        class: usize,
        cfg: &WindowConfig,
        style: &MaskStyle,
    ) -> Result<Explanation, EngineError> {
        cfg.validate()?;
        style.validate()?;
        let background = make_background(img, style)?;
        let (w, h) = (img.width(), img.height());
        let centers = window_centers(w, h, cfg.step);
        let mut tally = Tally::new(self.dedup);
        let mut acc = CoverageAccumulator::new(w, h);
        for chunk in centers.chunks(self.batch_size) {
            let masks: Vec<PartMask> = chunk
                .iter()
                .map(|&c| window_mask(c, cfg, w, h))
                .collect::<Result<_, _>>()?;
            let inputs = chunk
                .iter()
                .zip(&masks)
                .map(|(&(x, y), m)| (PartContext::Window { x, y }, compose_bits(img, &background, m.bits())))
                .collect();
            let scores = self.score_inputs(inputs, class, &mut tally)?;
            for (m, s) in masks.iter().zip(scores) {
                acc.add(m, s)?;
            }
        }
        let agg = acc.finish();
        let mut out = Explanation::new(agg.map, class);
        out.scorer_calls = tally.calls;
        out.cache_hits = tally.hits;
        out.uncovered_pixels = agg.uncovered;
        if agg.uncovered > 0 {
            out.warnings.push(format!(
                "{} pixels are covered by no window (radius {}, step {}); they score 0",
                agg.uncovered, cfg.radius, cfg.step
            ));
        }
        Ok(out)
    }

    /// One pass of the segment strategy: segment `input` with every config,
    /// mask `source`, and average the per-config maps.
    pub fn explain_segment_once(
        &self,
        input: &Image,
        source: &Image,
        class: usize,
        cfgs: &[SegmenterConfig],
        style: &MaskStyle,
    ) -> Result<Explanation, EngineError> {
        style.validate()?;
        let background = make_background(source, style)?;
        let mut tally = Tally::new(self.dedup);
        let out = self.segment_pass(input, source, &background, class, cfgs, 1, &mut tally)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn segment_pass(
        &self,
        input: &Image,
        source: &Image,
        background: &Image,
        class: usize,
        cfgs: &[SegmenterConfig],
        run: u8,
        tally: &mut Tally,
    ) -> Result<Explanation, EngineError> {
        if input.width() != source.width() || input.height() != source.height() {
            return Err(Error::ShapeMismatch("segmentation input and masking source").into());
        }
        if cfgs.is_empty() {
            return Err(Error::Empty("segmenter config list").into());
        }
        let (w, h) = (source.width(), source.height());
        let calls_before = tally.calls;
        let hits_before = tally.hits;
        let segs = self.sweep.segment_all(input, cfgs);
        let mut sum = vec![0.0f64; w * h];
        let mut used = 0usize;
        let mut warnings = Vec::new();
        let mut failures = Vec::new();
        let mut counts = Vec::with_capacity(cfgs.len());

        for (ci, (cfg, seg)) in cfgs.iter().zip(segs).enumerate() {
            let seg = match seg {
                Ok(s) if s.width() == w && s.height() == h => s,
                Ok(_) => {
                    let msg = format!("{cfg}: segmentation has the wrong size");
                    warnings.push(format!("skipping config {ci}: {msg}"));
                    failures.push(msg);
                    counts.push(None);
                    continue;
                }
                Err(e) => {
                    let msg = format!("{cfg}: {e}");
                    warnings.push(format!("skipping config {ci}: {msg}"));
                    failures.push(msg);
                    counts.push(None);
                    continue;
                }
            };
            counts.push(Some(seg.num_parts()));
            let labels = seg.labels();
            let mut part_scores = Vec::with_capacity(seg.num_parts());
            let parts: Vec<usize> = (0..seg.num_parts()).collect();
            for chunk in parts.chunks(self.batch_size) {
                let inputs = chunk
                    .iter()
                    .map(|&j| {
                        let keep: Vec<bool> = labels.iter().map(|&l| l as usize == j).collect();
                        (
                            PartContext::Segment { run, config: ci, part: j },
                            compose_bits(source, background, &keep),
                        )
                    })
                    .collect();
                part_scores.extend(self.score_inputs(inputs, class, tally)?);
            }
            for (acc, &l) in sum.iter_mut().zip(labels) {
                *acc += part_scores[l as usize];
            }
            used += 1;
        }

        if used == 0 {
            return Err(EngineError::AllSegmentersFailed(failures));
        }
        let n = used as f64;
        let map = ImportanceMap::new(w, h, sum.into_iter().map(|s| s / n).collect())?;
        let mut out = Explanation::new(map, class);
        out.scorer_calls = tally.calls - calls_before;
        out.cache_hits = tally.hits - hits_before;
        out.runs.push(RunReport {
            run,
            segment_counts: counts,
        });
        out.warnings = warnings;
        Ok(out)
    }

    /// Segment strategy with `runs` passes (1 or 2).
    ///
    /// The second pass segments the min-max normalized run-1 map (replicated
    /// to three channels) while still masking the original image. A constant
    /// run-1 map cannot be segmented meaningfully, so it is returned as is.
    pub fn explain_segment(
        &self,
        img: &Image,
        class: usize,
        cfgs: &[SegmenterConfig],
        style: &MaskStyle,
        runs: u8,
    ) -> Result<Explanation, EngineError> {
        if !(1..=2).contains(&runs) {
            return Err(Error::InvalidParameter {
                name: "runs",
                reason: format!("must be 1 or 2, got {runs}"),
            }
            .into());
        }
        style.validate()?;
        let background = make_background(img, style)?;
        let mut tally = Tally::new(self.dedup);
        let first = self.segment_pass(img, img, &background, class, cfgs, 1, &mut tally)?;
        if runs == 1 {
            return Ok(first);
        }
        let normalized = match first.map.normalized() {
            Some(m) => m,
            None => {
                let mut out = first;
                out.warnings
                    .push("run-1 map is constant; skipping the second run".into());
                return Ok(out);
            }
        };
        let seg_input = Image::from_map_rgb(&normalized);
        let second = self.segment_pass(&seg_input, img, &background, class, cfgs, 2, &mut tally)?;
        let mut out = second;
        out.scorer_calls += first.scorer_calls;
        out.cache_hits += first.cache_hits;
        let mut runs = first.runs;
        runs.append(&mut out.runs);
        out.runs = runs;
        let mut warnings = first.warnings;
        warnings.append(&mut out.warnings);
        out.warnings = warnings;
        Ok(out)
    }

    /// Dispatches to the chosen strategy, inferring the class when needed.
    pub fn explain(&self, img: &Image, opts: &ExplainOptions) -> Result<Explanation, EngineError> {
        let (class, reference_calls) = match opts.class {
            Some(c) => (c, 0),
            None => (self.reference_class(img)?, 1),
        };
        let mut out = match &opts.strategy {
            Strategy::Window(cfg) => self.explain_window(img, class, cfg, &opts.mask)?,
            Strategy::Segment(seg) => self.explain_segment(img, class, &seg.configs, &opts.mask, seg.runs)?,
        };
        out.reference_calls = reference_calls;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{BlobScorer, ChecksumScorer, ConstantScorer};
    use crate::window::WindowShape;
    use core::cell::Cell;

    const RED: [f64; 3] = [1.0, 0.0, 0.0];

    struct Counting<S> {
        inner: S,
        calls: Cell<u64>,
    }

    impl<S: Scorer> Scorer for Counting<S> {
        fn score(&self, img: &Image) -> Result<ScoreVector, crate::ScoreError> {
            self.calls.set(self.calls.get() + 1);
            self.inner.score(img)
        }
    }

    struct FixedSegs(Vec<Segmentation>);

    impl SweepRunner for FixedSegs {
        fn segment_all(&self, _img: &Image, cfgs: &[SegmenterConfig]) -> Vec<Result<Segmentation, Error>> {
            cfgs.iter().enumerate().map(|(i, _)| Ok(self.0[i % self.0.len()].clone())).collect()
        }
    }

    fn gray_with_blob(w: usize, h: usize, bx: usize, by: usize, size: usize) -> Image {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if (bx..bx + size).contains(&x) && (by..by + size).contains(&y) {
                    data.extend_from_slice(&RED);
                } else {
                    data.extend_from_slice(&[0.4, 0.5, 0.45]);
                }
            }
        }
        Image::new(w, h, 3, data).unwrap()
    }

    #[test]
    fn constant_scorer_window_map() {
        let s = ConstantScorer::new(0.5, 2).unwrap();
        let img = Image::filled(12, 10, 3, 0.3).unwrap();
        let cfg = WindowConfig::new(WindowShape::Circle, 3, 2).unwrap();
        let out = Engine::new(&s).explain_window(&img, 1, &cfg, &MaskStyle::default()).unwrap();
        assert!(out.map.values().iter().all(|&v| v == 0.5));
        assert_eq!(out.scorer_calls, window_centers(12, 10, 2).len() as u64);
    }

    #[test]
    fn blob_inside_one_of_two_windows() {
        // 8x4 image, two non-overlapping 4x4 rectangles; blob only in the left one
        let img = gray_with_blob(8, 4, 1, 1, 2);
        let s = BlobScorer::new(RED, 0.1).unwrap().calibrated(&img);
        let cfg = WindowConfig::new(WindowShape::Rectangle, 1, 3).unwrap();
        // centers at x in {0,3,6}, y in {0,3}; use black masking so hidden pixels never match
        let out = Engine::new(&s).explain_window(&img, 0, &cfg, &MaskStyle::black()).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                let v = out.map.get(x, y);
                // the only windows reaching the blob at (1..3, 1..3) are centered at x in {0,3}
                if x >= 5 {
                    assert_eq!(v, 0.0, "({x}, {y})");
                }
            }
        }
        assert!(out.map.get(1, 1) > 0.0);
    }

    #[test]
    fn invalid_class_reported() {
        let s = ConstantScorer::new(0.5, 2).unwrap();
        let img = Image::filled(4, 4, 3, 0.3).unwrap();
        let err = Engine::new(&s)
            .explain_window(&img, 5, &WindowConfig::new(WindowShape::Circle, 2, 2).unwrap(), &MaskStyle::default())
            .unwrap_err();
        assert_eq!(err, EngineError::InvalidClass { class: 5, arity: 2 });
    }

    #[test]
    fn single_segment_scores_original() {
        let img = gray_with_blob(10, 10, 2, 2, 3);
        let s = ChecksumScorer::new(3).unwrap();
        let whole = Segmentation::new(10, 10, vec![0; 100]).unwrap();
        let runner = FixedSegs(vec![whole]);
        let cfgs = [SegmenterConfig::Slic { n_segments: 1, compactness: 20.0 }];
        let out = Engine::new(&s)
            .with_sweep_runner(&runner)
            .explain_segment_once(&img, &img, 2, &cfgs, &MaskStyle::default())
            .unwrap();
        let want = s.score(&img).unwrap().scores()[2];
        assert!(out.map.values().iter().all(|&v| v == want));
        assert_eq!(out.scorer_calls, 1);
    }

    #[test]
    fn identical_segmentations_average_to_either() {
        let img = gray_with_blob(10, 10, 2, 2, 3);
        let s = BlobScorer::new(RED, 0.1).unwrap().calibrated(&img);
        let labels: Vec<u32> = (0..100).map(|p| ((p % 10) / 5 + 2 * ((p / 10) / 5)) as u32).collect();
        let seg = Segmentation::new(10, 10, labels).unwrap();
        let cfg = SegmenterConfig::Slic { n_segments: 4, compactness: 20.0 };
        let one = Engine::new(&s)
            .with_sweep_runner(&FixedSegs(vec![seg.clone()]))
            .explain_segment_once(&img, &img, 0, &[cfg], &MaskStyle::default())
            .unwrap();
        let two = Engine::new(&s)
            .with_sweep_runner(&FixedSegs(vec![seg]))
            .explain_segment_once(&img, &img, 0, &[cfg, cfg], &MaskStyle::default())
            .unwrap();
        assert_eq!(one.map, two.map);
        assert_eq!(two.scorer_calls, 8);
    }

    #[test]
    fn aligned_segmentation_isolates_blob() {
        let img = gray_with_blob(12, 12, 4, 4, 4);
        let s = BlobScorer::new(RED, 0.1).unwrap().calibrated(&img);
        let labels: Vec<u32> = (0..144)
            .map(|p| {
                let (x, y) = (p % 12, p / 12);
                if (4..8).contains(&x) && (4..8).contains(&y) { 1 } else { 0 }
            })
            .collect();
        let seg = Segmentation::new(12, 12, labels).unwrap();
        let out = Engine::new(&s)
            .with_sweep_runner(&FixedSegs(vec![seg]))
            .explain_segment_once(&img, &img, 0, &[SegmenterConfig::Slic { n_segments: 2, compactness: 1.0 }], &MaskStyle::default())
            .unwrap();
        for y in 0..12 {
            for x in 0..12 {
                let inside = (4..8).contains(&x) && (4..8).contains(&y);
                let v = out.map.get(x, y);
                assert!(if inside { (v - 1.0).abs() < 1e-12 } else { v.abs() < 1e-12 });
            }
        }
    }

    #[test]
    fn segment_failures_skip_then_error() {
        struct Failing;
        impl SweepRunner for Failing {
            fn segment_all(&self, _img: &Image, cfgs: &[SegmenterConfig]) -> Vec<Result<Segmentation, Error>> {
                cfgs.iter().map(|_| Err(Error::Empty("test"))).collect()
            }
        }
        let img = Image::filled(6, 6, 3, 0.5).unwrap();
        let s = ConstantScorer::new(0.5, 1).unwrap();
        let cfgs = [SegmenterConfig::Slic { n_segments: 4, compactness: 1.0 }];
        let err = Engine::new(&s)
            .with_sweep_runner(&Failing)
            .explain_segment_once(&img, &img, 0, &cfgs, &MaskStyle::default())
            .unwrap_err();
        assert!(matches!(err, EngineError::AllSegmentersFailed(ref m) if m.len() == 1));

        // an out-of-range config fails alone
        let cfgs = [
            SegmenterConfig::Slic { n_segments: 1000, compactness: 1.0 },
            SegmenterConfig::Slic { n_segments: 4, compactness: 1.0 },
        ];
        let out = Engine::new(&s).explain_segment_once(&img, &img, 0, &cfgs, &MaskStyle::default()).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.runs[0].segment_counts[0], None);
    }

    #[test]
    fn one_run_equals_single_pass() {
        let img = gray_with_blob(16, 16, 3, 5, 4);
        let s = BlobScorer::new(RED, 0.1).unwrap().calibrated(&img);
        let cfgs = &sweep_configs(false)[..3];
        let e = Engine::new(&s);
        let a = e.explain_segment(&img, 0, cfgs, &MaskStyle::default(), 1).unwrap();
        let b = e.explain_segment_once(&img, &img, 0, cfgs, &MaskStyle::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_first_run_short_circuits() {
        let s = ConstantScorer::new(0.3, 1).unwrap();
        let img = gray_with_blob(16, 16, 3, 5, 4);
        let cfgs = [SegmenterConfig::Watershed { markers: 4, compactness: 0.0001 }];
        let counting = Counting { inner: s, calls: Cell::new(0) };
        let out = Engine::new(&counting).explain_segment(&img, 0, &cfgs, &MaskStyle::default(), 2).unwrap();
        assert_eq!(out.runs.len(), 1);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.map.values().iter().all(|&v| v == 0.3));
        assert_eq!(counting.calls.get(), 4);
        assert!(Engine::new(&s).explain_segment(&img, 0, &cfgs, &MaskStyle::default(), 3).is_err());
    }

    #[test]
    fn call_accounting_matches_segment_counts() {
        let img = gray_with_blob(24, 24, 5, 7, 6);
        let s = BlobScorer::new(RED, 0.1).unwrap().calibrated(&img);
        let counting = Counting { inner: s, calls: Cell::new(0) };
        let cfgs = [
            SegmenterConfig::Slic { n_segments: 9, compactness: 20.0 },
            SegmenterConfig::Watershed { markers: 5, compactness: 0.0001 },
        ];
        let out = Engine::new(&counting)
            .with_batch_size(3)
            .explain_segment(&img, 0, &cfgs, &MaskStyle::default(), 2)
            .unwrap();
        let total: usize = out.runs.iter().flat_map(|r| r.segment_counts.iter()).map(|c| c.unwrap()).sum();
        assert_eq!(out.runs.len(), 2);
        assert_eq!(out.scorer_calls, total as u64);
        assert_eq!(counting.calls.get(), total as u64);
    }

    #[test]
    fn dedup_reuses_identical_inputs() {
        let img = gray_with_blob(10, 10, 2, 2, 3);
        let s = ChecksumScorer::new(2).unwrap();
        let whole = Segmentation::new(10, 10, vec![0; 100]).unwrap();
        let counting = Counting { inner: s, calls: Cell::new(0) };
        let cfgs = [SegmenterConfig::Slic { n_segments: 1, compactness: 20.0 }; 3];
        let runner = FixedSegs(vec![whole]);
        let out = Engine::new(&counting)
            .with_sweep_runner(&runner)
            .with_dedup(true)
            .explain_segment_once(&img, &img, 0, &cfgs, &MaskStyle::default())
            .unwrap();
        assert_eq!(out.scorer_calls, 3);
        assert_eq!(out.cache_hits, 2);
        assert_eq!(counting.calls.get(), 1);
        let plain = Engine::new(&s).with_sweep_runner(&runner).explain_segment_once(&img, &img, 0, &cfgs, &MaskStyle::default()).unwrap();
        assert_eq!(plain.map, out.map);
    }

    #[test]
    fn explain_defaults_and_class_inference() {
        struct TwoClass;
        impl Scorer for TwoClass {
            fn score(&self, _img: &Image) -> Result<ScoreVector, crate::ScoreError> {
                Ok(ScoreVector::new(vec![0.2, 0.8], crate::ScoreKind::Softmax).unwrap())
            }
        }
        let img = Image::filled(8, 8, 3, 0.5).unwrap();
        let mut opts = ExplainOptions::window();
        assert_eq!(opts.strategy, Strategy::Window(WindowConfig { shape: WindowShape::Circle, radius: 40, step: 6 }));
        match &ExplainOptions::segment().strategy {
            Strategy::Segment(s) => {
                assert_eq!(s.configs.len(), 17);
                assert_eq!(s.runs, 2);
            }
            _ => unreachable!(),
        }
        assert_eq!(ExplainOptions::segment().mask, MaskStyle::default());
        opts.strategy = Strategy::Window(WindowConfig::new(WindowShape::Circle, 3, 3).unwrap());
        let out = Engine::new(&TwoClass).explain(&img, &opts).unwrap();
        assert_eq!(out.class, 1);
        assert_eq!(out.reference_calls, 1);
        opts.class = Some(0);
        let out = Engine::new(&TwoClass).explain(&img, &opts).unwrap();
        assert_eq!(out.class, 0);
        assert_eq!(out.reference_calls, 0);
        assert_ne!(opts.digest(), ExplainOptions::window().digest());
    }

    #[test]
    fn scoring_error_carries_window_center() {
        struct FailOnSecond(Cell<u32>);
        impl Scorer for FailOnSecond {
            fn score(&self, _img: &Image) -> Result<ScoreVector, crate::ScoreError> {
                self.0.set(self.0.get() + 1);
                if self.0.get() == 2 {
                    return Err(crate::ScoreError::new("boom"));
                }
                Ok(ScoreVector::new(vec![0.5], crate::ScoreKind::Independent).unwrap())
            }
        }
        let img = Image::filled(8, 8, 3, 0.5).unwrap();
        let cfg = WindowConfig::new(WindowShape::Circle, 4, 4).unwrap();
        let err = Engine::new(&FailOnSecond(Cell::new(0)))
            .explain_window(&img, 0, &cfg, &MaskStyle::default())
            .unwrap_err();
        match err {
            EngineError::Score { context, .. } => assert_eq!(context, PartContext::Window { x: 4, y: 0 }),
            e => panic!("unexpected {e:?}"),
        }
    }
}
