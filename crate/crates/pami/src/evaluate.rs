//! Pointing game and insertion AUC over a manifest of labelled images.
//!
//! A manifest is a JSON list; paths are relative to the manifest file.
//!
//! ```json
//! [
//!   {"image": "a.png", "class": 0, "gt": {"bbox": [10, 12, 21, 23]}},
//!   {"id": "b", "image": "b.png", "class": 3, "gt": {"mask": "b_mask.png"}}
//! ]
//! ```
//!
//! Bounding boxes are `[x0, y0, x1, y1]` with inclusive corners; mask PNGs
//! mark the object with nonzero pixels.

use std::path::{Path, PathBuf};

use pami_core::eval::{hit_rate, insertion, pointing_game, GroundTruthRegion, Pointing};
use pami_core::{Engine, ExplainOptions, PartMask, SweepRunner};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::io::load_png;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    #[serde(default)]
    pub id: Option<String>,
    pub image: PathBuf,
    pub class: usize,
    pub gt: GtSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GtSpec {
    Bbox([usize; 4]),
    Mask(PathBuf),
}

impl ManifestEntry {
    pub fn image_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.image.display().to_string())
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, String> {
    serde_json::from_str(text).map_err(|e| format!("manifest: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub fractions: Vec<f64>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub image_id: String,
    pub class: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<Curve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub images: usize,
    pub evaluated: usize,
    pub failed: usize,
    /// Some entries failed, so the rates cover a subset of the manifest.
    pub partial: bool,
    pub hit_rate: Option<f64>,
    pub mean_auc: Option<f64>,
}

/// Why one entry failed, with the exit-code category it maps to.
#[derive(Debug, Clone, PartialEq)]
pub enum EntryError {
    Io(String),
    Scorer(String),
    Invalid(String),
}

impl std::fmt::Display for EntryError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EntryError::Io(m) | EntryError::Scorer(m) | EntryError::Invalid(m) => f.write_str(m),
        }
    }
}

pub struct EvalContext<'a> {
    pub backend: &'a Backend,
    pub options: &'a ExplainOptions,
    pub sweep: &'a (dyn SweepRunner + Sync),
    pub steps: usize,
    pub batch_size: usize,
    pub dedup: bool,
    pub base_dir: &'a Path,
}

fn engine_error(e: pami_core::EngineError) -> EntryError {
    match e {
        pami_core::EngineError::Score { .. } => EntryError::Scorer(e.to_string()),
        other => EntryError::Invalid(other.to_string()),
    }
}

fn load_gt(entry: &ManifestEntry, base: &Path) -> Result<GroundTruthRegion, EntryError> {
    match &entry.gt {
        GtSpec::Bbox([x0, y0, x1, y1]) => {
            GroundTruthRegion::bbox(entry.class, *x0, *y0, *x1, *y1).map_err(|e| EntryError::Invalid(e.to_string()))
        }
        GtSpec::Mask(p) => {
            let m = load_png(&base.join(p)).map_err(|e| EntryError::Io(e.to_string()))?;
            let c = m.channels();
            let bits = m.data().chunks(c).map(|px| px.iter().any(|&v| v > 0.0)).collect();
            PartMask::new(m.width(), m.height(), bits)
                .map(|mask| GroundTruthRegion::mask(entry.class, mask))
                .map_err(|e| EntryError::Invalid(format!("ground-truth mask {}: {e}", p.display())))
        }
    }
}

pub fn evaluate_entry(entry: &ManifestEntry, ctx: &EvalContext<'_>) -> Result<Record, EntryError> {
    let img = load_png(&ctx.base_dir.join(&entry.image)).map_err(|e| EntryError::Io(e.to_string()))?;
    let gt = load_gt(entry, ctx.base_dir)?;
    let scorer = ctx.backend.image_scorer(&img).map_err(|e| EntryError::Invalid(e.to_string()))?;
    let engine = Engine::new(&*scorer)
        .with_sweep_runner(ctx.sweep)
        .with_batch_size(ctx.batch_size)
        .with_dedup(ctx.dedup);
    let mut opts = ctx.options.clone();
    opts.class = Some(entry.class);
    let ex = engine.explain(&img, &opts).map_err(engine_error)?;
    let hit = pointing_game(&ex.map, &gt).map_err(|e| EntryError::Invalid(e.to_string()))?;
    let ins = insertion(&img, &ex.map, &*scorer, entry.class, ctx.steps, &opts.mask).map_err(engine_error)?;
    Ok(Record {
        image_id: entry.image_id(),
        class: entry.class,
        hit: Some(hit.is_hit()),
        auc: Some(ins.auc),
        curve: Some(Curve {
            fractions: ins.fractions,
            probabilities: ins.probabilities,
        }),
        error: None,
    })
}

/// Evaluates entries on `workers` threads; results keep manifest order.
pub fn evaluate(entries: &[ManifestEntry], ctx: &EvalContext<'_>, workers: usize) -> Vec<Result<Record, EntryError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let r = evaluate_entry(e, ctx);
                if let Err(err) = &r {
                    log::warn!("{}: {err}", e.image_id());
                }
                r
            })
            .collect()
    })
}

pub fn summarize(entries: &[ManifestEntry], results: &[Result<Record, EntryError>]) -> Summary {
    let ok: Vec<&Record> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let pointing: Vec<(usize, Pointing)> = ok
        .iter()
        .map(|r| (r.class, if r.hit == Some(true) { Pointing::Hit } else { Pointing::Miss }))
        .collect();
    let aucs: Vec<f64> = ok.iter().filter_map(|r| r.auc).collect();
    Summary {
        images: entries.len(),
        evaluated: ok.len(),
        failed: entries.len() - ok.len(),
        partial: ok.len() < entries.len(),
        hit_rate: hit_rate(&pointing).ok(),
        mean_auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
    }
}

pub fn failure_record(entry: &ManifestEntry, e: &EntryError) -> Record {
    Record {
        image_id: entry.image_id(),
        class: entry.class,
        hit: None,
        auc: None,
        curve: None,
        error: Some(e.to_string()),
    }
}
