//! The `pami` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 scorer error, 3 I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pami_core::engine::{Engine, ExplainOptions, SegmentOptions, Strategy};
use pami_core::masking::MaskStyle;
use pami_core::segment::{sweep_configs, SegmenterConfig};
use pami_core::text::{explain_tokens, partition_tokens};
use pami_core::window::{WindowConfig, WindowShape};
use pami_core::{argmax_class, EngineError, Image};
use serde_json::json;

use crate::backend::{Backend, BackendError, Connection, ScorerSpec};
use crate::client::{DEFAULT_MAX_IN_FLIGHT, DEFAULT_TIMEOUT};
use crate::config::FileConfig;
use crate::evaluate::{self, EntryError, EvalContext};
use crate::io::{self, IoError};
use crate::parallel::RayonSweep;
use crate::protocol::Response;
use crate::render;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Scorer(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Scorer(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Invalid(m) => CliError::Usage(m),
            BackendError::Unavailable(m) => CliError::Scorer(m),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Score { .. } => CliError::Scorer(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<EntryError> for CliError {
    fn from(e: EntryError) -> Self {
        match e {
            EntryError::Io(m) => CliError::Io(m),
            EntryError::Scorer(m) => CliError::Scorer(m),
            EntryError::Invalid(m) => CliError::Usage(m),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "pami", version, about = "Black-box importance maps by input partitioning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one image or sentence.
    Explain(ExplainArgs),
    /// Pointing game and insertion AUC over a manifest.
    Eval(EvalArgs),
    /// Color a map file, optionally over its image.
    Render(RenderArgs),
    /// Segment an image and write a label-colored PNG.
    Segments(SegmentsArgs),
    /// Score one input and print the scorer's reply.
    #[command(alias = "ping")]
    Score(ScoreArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Window,
    Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskArg {
    Blurred,
    Black,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Circle,
    Rectangle,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// stdio:"<cmd>", http://host:port or builtin:<name>[:args].
    #[arg(long)]
    pub scorer: Option<String>,
    /// JSON config file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Class to explain; defaults to the top class of the unmasked input.
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long, value_enum)]
    pub shape: Option<ShapeArg>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
    #[arg(long, value_enum)]
    pub mask: Option<MaskArg>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub runs: Option<u8>,
    /// Insertion curve steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Add the SEEDS configs to the default sweep.
    #[arg(long)]
    pub seeds: bool,
    /// Reuse scores of identical masked inputs.
    #[arg(long)]
    pub dedup: bool,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["image", "text"])))]
pub struct ExplainArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// Blend the heatmap over this image.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentsArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// felzenszwalb, slic, watershed or seeds.
    #[arg(long)]
    pub algorithm: String,
    /// Segmenter parameter as name=value; every parameter of the algorithm is required.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["image", "text"])))]
pub struct ScoreArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long)]
    pub scorer: String,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = v.parse().map_err(|_| format!("bad number in {s:?}"))?;
    Ok((k.to_owned(), v))
}

/// Options after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub scorer: ScorerSpec,
    pub options: ExplainOptions,
    pub steps: usize,
    pub max_in_flight: usize,
    pub batch_size: usize,
    pub dedup: bool,
    pub timeout: Duration,
    pub notes: Vec<String>,
}

impl Settings {
    pub fn resolve(c: &Common) -> Result<Self, CliError> {
        let file = match &c.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(io_err(p))?;
                FileConfig::parse(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let mut notes = Vec::new();
        let scorer_str = c
            .scorer
            .clone()
            .or(file.scorer.clone())
            .ok_or_else(|| usage("no scorer given (--scorer or \"scorer\" in the config)"))?;
        let scorer: ScorerSpec = scorer_str.parse().map_err(usage)?;

        let kernel_size = c.kernel_size.or(file.kernel_size).unwrap_or(MaskStyle::DEFAULT_KERNEL_SIZE);
        let sigma = c.sigma.or(file.sigma).unwrap_or(MaskStyle::DEFAULT_SIGMA);
        let mask_name = match c.mask {
            Some(MaskArg::Blurred) => "blurred".to_owned(),
            Some(MaskArg::Black) => "black".to_owned(),
            Some(MaskArg::White) => "white".to_owned(),
            None => file.mask.clone().unwrap_or_else(|| "blurred".into()),
        };
        let mask = match mask_name.as_str() {
            "blurred" => MaskStyle::blurred(kernel_size, sigma).map_err(usage)?,
            "black" => MaskStyle::black(),
            "white" => MaskStyle::white(),
            other => return Err(usage(format!("unknown mask {other:?}"))),
        };

        let strategy_name = match c.strategy {
            Some(StrategyArg::Window) => "window".to_owned(),
            Some(StrategyArg::Segment) => "segment".to_owned(),
            None => file.strategy.clone().unwrap_or_else(|| "segment".into()),
        };
        let strategy = match strategy_name.as_str() {
            "window" => {
                let shape = match c.shape {
                    Some(ShapeArg::Circle) => WindowShape::Circle,
                    Some(ShapeArg::Rectangle) => WindowShape::Rectangle,
                    None => match file.shape.as_deref() {
                        None | Some("circle") => WindowShape::Circle,
                        Some("rectangle") => WindowShape::Rectangle,
                        Some(other) => return Err(usage(format!("unknown window shape {other:?}"))),
                    },
                };
                let cfg = WindowConfig::new(
                    shape,
                    c.radius.or(file.radius).unwrap_or(WindowConfig::DEFAULT_RADIUS),
                    c.step.or(file.step).unwrap_or(WindowConfig::DEFAULT_STEP),
                )
                .map_err(usage)?;
                if !cfg.covers_all() {
                    notes.push(format!(
                        "radius {} with step {} can leave border pixels uncovered",
                        cfg.radius, cfg.step
                    ));
                }
                Strategy::Window(cfg)
            }
            "segment" => {
                let seeds = c.seeds || file.seeds.unwrap_or(false);
                let configs: Vec<SegmenterConfig> = match file.segmenter_configs().map_err(usage)? {
                    Some(list) => {
                        if seeds {
                            notes.push("explicit segmenter list given; --seeds ignored".into());
                        }
                        list
                    }
                    None => sweep_configs(seeds),
                };
                let runs = c.runs.or(file.runs).unwrap_or(2);
                if !(1..=2).contains(&runs) {
                    return Err(usage(format!("runs must be 1 or 2, got {runs}")));
                }
                Strategy::Segment(SegmentOptions { configs, runs })
            }
            other => return Err(usage(format!("unknown strategy {other:?}"))),
        };
        let steps = c.steps.or(file.steps).unwrap_or(pami_core::eval::DEFAULT_INSERTION_STEPS);
        if steps == 0 {
            return Err(usage("steps must be at least 1"));
        }
        let max_in_flight = c.max_in_flight.or(file.max_in_flight).unwrap_or(DEFAULT_MAX_IN_FLIGHT);
        if max_in_flight == 0 {
            return Err(usage("max-in-flight must be at least 1"));
        }
        let timeout = match c.timeout_secs.or(file.timeout_secs) {
            None => DEFAULT_TIMEOUT,
            Some(t) if t.is_finite() && t > 0.0 => Duration::from_secs_f64(t),
            Some(t) => return Err(usage(format!("bad timeout {t}"))),
        };
        Ok(Settings {
            scorer,
            options: ExplainOptions {
                strategy,
                class: c.class.or(file.class),
                mask,
            },
            steps,
            max_in_flight,
            batch_size: c.batch_size.or(file.batch_size).unwrap_or(Engine::DEFAULT_BATCH_SIZE).max(max_in_flight),
            dedup: c.dedup || file.dedup.unwrap_or(false),
            timeout,
            notes,
        })
    }

    fn connect(&self) -> Result<Backend, CliError> {
        Ok(Backend::connect(
            self.scorer.clone(),
            Connection {
                max_in_flight: self.max_in_flight,
                timeout: self.timeout,
                class_hint: self.options.class,
            },
        )?)
    }
}

/// Files written so far; removed again unless the command succeeds.
struct Artifacts {
    paths: Vec<PathBuf>,
    keep: bool,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts {
            paths: Vec::new(),
            keep: false,
        }
    }

    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<(), CliError> {
        self.paths.push(path.clone());
        fs::write(&path, bytes).map_err(io_err(&path))
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.paths {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn to_json(v: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("JSON values serialize");
    s.push(b'\n');
    s
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

fn explain(args: &ExplainArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common)?;
    for n in &settings.notes {
        log::warn!("{n}");
    }
    let out_dir = &args.common.out_dir;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    match (&args.image, &args.text) {
        (Some(path), None) => explain_image(path, out_dir, &settings),
        (None, Some(text)) => explain_text(text, out_dir, &settings),
        _ => Err(usage("give exactly one of --image and --text")),
    }
}

fn options_json(o: &ExplainOptions) -> serde_json::Value {
    let mask = json!({
        "variant": format!("{:?}", o.mask.variant).to_lowercase(),
        "kernel_size": o.mask.kernel_size,
        "sigma": o.mask.sigma,
    });
    match &o.strategy {
        Strategy::Window(w) => json!({
            "shape": format!("{:?}", w.shape).to_lowercase(),
            "radius": w.radius,
            "step": w.step,
            "mask": mask,
        }),
        Strategy::Segment(s) => json!({
            "runs": s.runs,
            "segmenters": s.configs.iter().map(|c| c.describe()).collect::<Vec<_>>(),
            "mask": mask,
        }),
    }
}

fn explain_image(path: &Path, out_dir: &Path, settings: &Settings) -> Result<(), CliError> {
    let img = io::load_png(path)?;
    let backend = settings.connect()?;
    let scorer = backend.image_scorer(&img)?;
    let engine = Engine::new(&*scorer)
        .with_sweep_runner(&RayonSweep)
        .with_batch_size(settings.batch_size)
        .with_dedup(settings.dedup);
    let started = Instant::now();
    let ex = engine.explain(&img, &settings.options)?;
    let wall = started.elapsed();
    for w in &ex.warnings {
        log::warn!("{w}");
    }

    let name = stem(path);
    let map_path = out_dir.join(format!("{name}.pami"));
    let heat_path = out_dir.join(format!("{name}.heatmap.png"));
    let meta_path = out_dir.join(format!("{name}.json"));
    let mut artifacts = Artifacts::new();
    artifacts.write(map_path.clone(), &io::encode_map(&ex.map))?;
    let rgb = render::overlay(&img, &ex.map).map_err(usage)?;
    artifacts.write(heat_path.clone(), &io::encode_rgb8(img.width(), img.height(), rgb)?)?;
    let meta = json!({
        "input": path.display().to_string(),
        "width": img.width(),
        "height": img.height(),
        "class": ex.class,
        "strategy": settings.options.strategy.name(),
        "options": options_json(&settings.options),
        "scorer_calls": ex.scorer_calls,
        "reference_calls": ex.reference_calls,
        "cache_hits": ex.cache_hits,
        "uncovered_pixels": ex.uncovered_pixels,
        "runs": ex.runs.iter().map(|r| json!({"run": r.run, "segment_counts": r.segment_counts})).collect::<Vec<_>>(),
        "wall_time_ms": wall.as_secs_f64() * 1e3,
        "config_digest": format!("{:016x}", settings.options.digest()),
        "warnings": ex.warnings,
        "artifacts": {
            "map": map_path.display().to_string(),
            "heatmap": heat_path.display().to_string(),
        },
    });
    artifacts.write(meta_path, &to_json(&meta))?;
    artifacts.keep = true;
    Ok(())
}

fn explain_text(text: &str, out_dir: &Path, settings: &Settings) -> Result<(), CliError> {
    let seq = partition_tokens(text).map_err(usage)?;
    let backend = settings.connect()?;
    let scorer = backend.text_scorer()?;
    let started = Instant::now();
    let (class, reference_calls) = match settings.options.class {
        Some(c) => (c, 0),
        None => {
            let full = scorer.score_text(text).map_err(|e| CliError::Scorer(e.to_string()))?;
            (argmax_class(&full).map_err(|e| CliError::Scorer(e.to_string()))?, 1)
        }
    };
    let importance = explain_tokens(&seq, &*scorer, class)?;
    let wall = started.elapsed();

    let meta_path = out_dir.join("text.json");
    let meta = json!({
        "input": text,
        "class": class,
        "strategy": "tokens",
        "mask_token": seq.mask_token(),
        "tokens": seq.tokens(),
        "importance": importance,
        "scorer_calls": seq.len(),
        "reference_calls": reference_calls,
        "wall_time_ms": wall.as_secs_f64() * 1e3,
    });
    let mut artifacts = Artifacts::new();
    artifacts.write(meta_path, &to_json(&meta))?;
    artifacts.keep = true;
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common)?;
    let text = fs::read_to_string(&args.manifest).map_err(io_err(&args.manifest))?;
    let entries = evaluate::parse_manifest(&text).map_err(usage)?;
    if entries.is_empty() {
        return Err(usage("the manifest lists no images"));
    }
    let out_dir = &args.common.out_dir;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let backend = settings.connect()?;
    let base_dir = args.manifest.parent().unwrap_or(Path::new("."));
    let ctx = EvalContext {
        backend: &backend,
        options: &settings.options,
        sweep: &RayonSweep,
        steps: settings.steps,
        batch_size: settings.batch_size,
        dedup: settings.dedup,
        base_dir,
    };
    let results = evaluate::evaluate(&entries, &ctx, settings.max_in_flight);
    let summary = evaluate::summarize(&entries, &results);
    if summary.evaluated == 0 {
        let first = results.into_iter().find_map(Result::err).expect("every entry failed");
        return Err(first.into());
    }
    let mut lines = Vec::new();
    for (entry, r) in entries.iter().zip(&results) {
        let rec = match r {
            Ok(rec) => rec.clone(),
            Err(e) => evaluate::failure_record(entry, e),
        };
        serde_json::to_writer(&mut lines, &rec).expect("records serialize");
        lines.push(b'\n');
    }
    let mut artifacts = Artifacts::new();
    artifacts.write(out_dir.join("eval.jsonl"), &lines)?;
    artifacts.write(out_dir.join("summary.json"), &to_json(&summary))?;
    artifacts.keep = true;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

fn render_cmd(args: &RenderArgs) -> Result<(), CliError> {
    let map = io::load_map(&args.map)?;
    let rgb = match &args.image {
        Some(p) => render::overlay(&io::load_png(p)?, &map).map_err(usage)?,
        None => render::heatmap(&map),
    };
    let png = io::encode_rgb8(map.width(), map.height(), rgb)?;
    let mut artifacts = Artifacts::new();
    artifacts.write(args.out.clone(), &png)?;
    artifacts.keep = true;
    Ok(())
}

fn segments_cmd(args: &SegmentsArgs) -> Result<(), CliError> {
    let params: Vec<(&str, f64)> = args.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let cfg = SegmenterConfig::from_params(&args.algorithm, &params).map_err(usage)?;
    let img = io::load_png(&args.image)?;
    let seg = cfg.segment(&img).map_err(usage)?;
    let png = io::encode_rgb8(seg.width(), seg.height(), render::label_colors(&seg))?;
    let mut counts = format!("{}\nparts {}\n", cfg.describe(), seg.num_parts());
    for (label, size) in seg.part_sizes().iter().enumerate() {
        counts.push_str(&format!("{label} {size}\n"));
    }
    let mut artifacts = Artifacts::new();
    artifacts.write(args.out.clone(), &png)?;
    artifacts.write(args.out.with_extension("txt"), counts.as_bytes())?;
    artifacts.keep = true;
    Ok(())
}

fn score_cmd(args: &ScoreArgs) -> Result<(), CliError> {
    let spec: ScorerSpec = args.scorer.parse().map_err(usage)?;
    let timeout = args.timeout_secs.map_or(DEFAULT_TIMEOUT, Duration::from_secs_f64);
    let backend = Backend::connect(
        spec,
        Connection {
            max_in_flight: 1,
            timeout,
            class_hint: None,
        },
    )?;
    let v = match (&args.image, &args.text) {
        (Some(p), None) => {
            let img: Image = io::load_png(p)?;
            backend.image_scorer(&img)?.score(&img)
        }
        (None, Some(t)) => backend.text_scorer()?.score_text(t),
        _ => return Err(usage("give exactly one of --image and --text")),
    }
    .map_err(|e| CliError::Scorer(e.to_string()))?;
    let resp = Response::from_result(0, Ok(v));
    println!("{}", serde_json::to_string(&resp).expect("responses serialize"));
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Explain(a) => explain(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render_cmd(a),
        Command::Segments(a) => segments_cmd(a),
        Command::Score(a) => score_cmd(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
