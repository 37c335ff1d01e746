use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use voxflow::heatmap::{self, HeatmapError};
use voxflow::inflate::{inflate_map, InflateError, InflateRule, InflationMode};
use voxflow::io::{self as vio, IoError};
use voxflow::metrics::{self, Confusion, MetricsError};
use voxflow::pipeline::{preset_heavy_augs, preset_mirror3, Pipeline, PipelineError, SchemaError};
use voxflow::reliability::{self, ReliabilityError, Spread};
use voxflow::roi::{self, ColorRule, RoiError};
use voxflow::sampler::{self, SamplerConfig, SamplerError};
use voxflow::transforms::TransformError;
use voxflow::{Cuboid, RandomStream, Volume};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  usage error (bad or missing flags)
  2  I/O error (missing, unreadable or malformed input file)
  3  schema or parameter error (pipeline JSON, CSV schema, rules, even center depth)
  4  shape error (incompatible array shapes, non-kernel tensor matched by a rule)
  5  infeasible request (one class only, split/batch cannot be formed, no ROI contour)";

#[derive(Parser)]
#[command(name = "voxflow", version, about = "Volumetric augmentation, kernel inflation and evaluation tools", after_help = EXIT_CODES)]
struct Cli {
    /// Base random seed [default: 0; for --pipeline files, the file's seed]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch processing [default: all cores]
    #[arg(long, global = true, env = "VOXFLOW_THREADS")]
    threads: Option<usize>,
    /// Suppress progress messages on stderr
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply an augmentation pipeline to a volume, PNG stack or directory of VOX1 files
    Augment(AugmentArgs),
    /// Inflate 2D convolution kernels in a TMAP file to 3D
    Inflate(InflateArgs),
    /// Score predictions: confusion, MCC, TPR, FPR and ROC AUC
    Eval(EvalArgs),
    /// Isotonic calibration on a random half split with reliability bins
    Calibrate(CalibrateArgs),
    /// Spread statistics of repeated stochastic predictions
    Uncertainty(UncertaintyArgs),
    /// Find the annotation contour and crop its bounding cuboid
    Roi(RoiArgs),
    /// Summarise ROI cuboid sizes
    RoiStats(RoiStatsArgs),
    /// Build a feature heatmap and overlay it on the input
    Heatmap(HeatmapArgs),
    /// Emit class-balanced index batches, one per line
    Sample(SampleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Heavy,
    Mirror3,
}

#[derive(Args)]
struct AugmentArgs {
    /// Pipeline JSON file
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pipeline: Option<PathBuf>,
    /// Built-in pipeline
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Output extent F,H,W for presets
    #[arg(long, value_delimiter = ',', default_values_t = [96usize, 128, 128], conflicts_with = "pipeline")]
    target: Vec<usize>,
    /// VOX1 file, PNG frame directory, or directory of .vox1 files (batch mode)
    #[arg(long = "in")]
    input: PathBuf,
    /// Output VOX1 file (a directory in batch mode)
    #[arg(long)]
    out: PathBuf,
    /// Sample index for single inputs (batch mode uses each file's sorted rank)
    #[arg(long, default_value_t = 0)]
    index: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Center,
    Average,
}

impl From<ModeArg> for InflationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Center => InflationMode::CenterPlane,
            ModeArg::Average => InflationMode::Averaged,
        }
    }
}

#[derive(Args)]
struct InflateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON array of {"pattern": regex, "depth"?: k, "mode"?: "center"|"average"}
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Tensor-name regex to inflate with --mode/--depth (repeatable)
    #[arg(long)]
    pattern: Vec<String>,
    /// Default mode for rules
    #[arg(long, value_enum, default_value = "center")]
    mode: ModeArg,
    /// Default depth for rules
    #[arg(long, default_value_t = 3)]
    depth: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction CSV; repeat to average several models per sample
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Also report each fold and pool confusion counts across folds
    #[arg(long)]
    folds: bool,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Reliability CSV of the calibrated half
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reliability CSV of the same half before calibration
    #[arg(long)]
    before: Option<PathBuf>,
    /// Calibrated predictions CSV
    #[arg(long)]
    calibrated: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpreadArg {
    Std,
    Range,
}

#[derive(Args)]
struct UncertaintyArgs {
    #[arg(long)]
    probmat: PathBuf,
    /// Per-sample spread measure
    #[arg(long, value_enum, default_value = "std")]
    spread: SpreadArg,
    /// Per-sample statistics CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RuleArgs {
    #[arg(long, default_value_t = 10.0)]
    hue_lo: f64,
    #[arg(long, default_value_t = 45.0)]
    hue_hi: f64,
    #[arg(long, default_value_t = 0.45)]
    s_min: f64,
    #[arg(long, default_value_t = 0.30)]
    v_min: f64,
}

#[derive(Args)]
struct RoiArgs {
    /// PNG frame directory or RGB VOX1 file
    #[arg(long)]
    frames: PathBuf,
    /// Cropped VOX1 output
    #[arg(long)]
    out: PathBuf,
    /// Also write the cuboid JSON here
    #[arg(long)]
    cuboid: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pad: usize,
    #[command(flatten)]
    rule: RuleArgs,
}

#[derive(Args)]
struct RoiStatsArgs {
    /// Cuboid JSON files (as written by `roi --cuboid`) or CSVs with header f0,f1,r0,r1,c0,c1
    #[arg(long, required = true, num_args = 1..)]
    cuboids: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    bin_width: usize,
    /// Summary CSV
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram CSV
    #[arg(long)]
    hist: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Float32 VOX1 feature volume (F, H, W, C)
    #[arg(long)]
    features: PathBuf,
    /// Input VOX1 file or PNG frame directory
    #[arg(long = "input")]
    input: PathBuf,
    /// Overlay output: VOX1 file, or a directory with --png
    #[arg(long)]
    out: PathBuf,
    /// Write the overlay as a PNG frame stack
    #[arg(long)]
    png: bool,
    /// Also write the small RGB heatmap as VOX1
    #[arg(long)]
    heatmap_out: Option<PathBuf>,
    #[arg(long, default_value_t = heatmap::DEFAULT_FACTOR)]
    factor: usize,
    #[arg(long, default_value_t = heatmap::DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Args)]
struct SampleArgs {
    /// CSV with a `label` column; row order gives the sample index
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.25)]
    pos_frac: f64,
    /// Number of batches
    #[arg(long)]
    n: usize,
    /// Write batches here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }

    fn usage(message: impl std::fmt::Display) -> Self {
        Self::new(1, message)
    }

    fn schema(message: impl std::fmt::Display) -> Self {
        Self::new(3, message)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Schema { .. } | IoError::Range { .. } => 3,
            IoError::NotImage => 4,
            _ => 2,
        };
        CliError::new(code, e)
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::schema(e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let PipelineError::Step { source, .. } = &e;
        let code = match source {
            TransformError::AxisTooShort(_) => 4,
            _ => 3,
        };
        CliError::new(code, e)
    }
}

impl From<InflateError> for CliError {
    fn from(e: InflateError) -> Self {
        let code = match e {
            InflateError::EvenDepthCenter(_) | InflateError::ZeroDepth | InflateError::BadPattern { .. } => 3,
            _ => 4,
        };
        CliError::new(code, e)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let code = match e {
            MetricsError::OneClassOnly { .. } | MetricsError::EmptySet => 5,
            _ => 3,
        };
        CliError::new(code, e)
    }
}

impl From<ReliabilityError> for CliError {
    fn from(e: ReliabilityError) -> Self {
        let code = match e {
            ReliabilityError::TooFewBins(_) | ReliabilityError::BadMatrix(_) => 3,
            ReliabilityError::Metrics(m) => return m.into(),
            _ => 5,
        };
        CliError::new(code, e)
    }
}

impl From<RoiError> for CliError {
    fn from(e: RoiError) -> Self {
        let code = match e {
            RoiError::NoContourFound { .. } | RoiError::Empty => 5,
            RoiError::NotRgb { .. } => 4,
            _ => 3,
        };
        CliError::new(code, e)
    }
}

impl From<HeatmapError> for CliError {
    fn from(e: HeatmapError) -> Self {
        let code = match e {
            HeatmapError::BadAlpha(_) | HeatmapError::ZeroFactor => 3,
            _ => 4,
        };
        CliError::new(code, e)
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        let code = match e {
            SamplerError::InfeasibleBatch { .. } => 5,
            SamplerError::InvalidConfig(_) => 3,
        };
        CliError::new(code, e)
    }
}

struct Ctx {
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn note(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::from(IoError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn print_json(v: &Value) -> CliResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, v).map_err(|e| CliError::new(2, e))?;
    writeln!(out).map_err(|e| io_err(Path::new("<stdout>"), e))
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn is_png_stack(dir: &Path) -> bool {
    dir.join(vio::frame_name(0)).is_file()
}

/// Reads a VOX1 file or a PNG frame directory.
fn read_volume(path: &Path) -> CliResult<Volume> {
    if path.is_dir() {
        Ok(vio::read_png_stack(path)?)
    } else {
        Ok(vio::read_vox1(path)?)
    }
}

fn load_pipeline(args: &AugmentArgs, ctx: &Ctx) -> CliResult<Pipeline> {
    let pipeline = match (&args.pipeline, args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let p = Pipeline::from_json(&text)?;
            match ctx.seed {
                Some(s) => p.with_seed(s),
                None => p,
            }
        }
        (None, Some(preset)) => {
            let target: [usize; 3] = args.target.clone().try_into().map_err(|_| CliError::usage("--target needs F,H,W"))?;
            if target.contains(&0) {
                return Err(CliError::schema("--target extents must be >= 1"));
            }
            let p = match preset {
                Preset::Heavy => preset_heavy_augs(target),
                Preset::Mirror3 => preset_mirror3(target),
            };
            p.with_seed(ctx.seed())
        }
        (None, None) => return Err(CliError::usage("one of --pipeline or --preset is required")),
    };
    Ok(pipeline)
}

fn augment(args: AugmentArgs, ctx: &Ctx) -> CliResult {
    let pipeline = load_pipeline(&args, ctx)?;
    if args.input.is_dir() && !is_png_stack(&args.input) {
        return augment_batch(&pipeline, &args, ctx);
    }
    let v = read_volume(&args.input)?;
    let (out, fired) = pipeline.apply_traced(&v, args.index)?;
    vio::write_vox1(&args.out, &out)?;
    ctx.note(format!("{} -> {} {}", args.input.display(), args.out.display(), out.shape()));
    print_json(&json!({"index": args.index, "fired": fired, "shape": out.shape().spatial()}))
}

fn augment_batch(pipeline: &Pipeline, args: &AugmentArgs, ctx: &Ctx) -> CliResult {
    let mut files: Vec<PathBuf> = fs::read_dir(&args.input)
        .map_err(|e| io_err(&args.input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "vox1"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::new(2, format!("{}: no .vox1 files", args.input.display())));
    }
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let results: Vec<CliResult<Value>> = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let v = vio::read_vox1(path)?;
            let (out, fired) = pipeline.apply_traced(&v, i as u64)?;
            let name = path.file_name().unwrap();
            vio::write_vox1(&args.out.join(name), &out)?;
            Ok(json!({"file": name.to_string_lossy(), "index": i, "fired": fired, "shape": out.shape().spatial()}))
        })
        .collect();
    let mut report = Vec::with_capacity(results.len());
    for r in results {
        report.push(r?);
    }
    ctx.note(format!("augmented {} file(s) into {}", report.len(), args.out.display()));
    print_json(&Value::Array(report))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    pattern: String,
    depth: Option<usize>,
    mode: Option<String>,
}

fn inflate_rules(args: &InflateArgs) -> CliResult<Vec<InflateRule>> {
    let mut rules = Vec::new();
    if let Some(path) = &args.rules {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let specs: Vec<RuleSpec> =
            serde_json::from_str(&text).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
        for s in specs {
            let mode = match s.mode.as_deref() {
                None => args.mode.into(),
                Some(m) => InflationMode::parse(m).ok_or_else(|| CliError::schema(format!("unknown mode `{m}`")))?,
            };
            rules.push(InflateRule::new(&s.pattern, s.depth.unwrap_or(args.depth), mode)?);
        }
    }
    for p in &args.pattern {
        rules.push(InflateRule::new(p, args.depth, args.mode.into())?);
    }
    Ok(rules)
}

fn inflate(args: InflateArgs, ctx: &Ctx) -> CliResult {
    // Validate defaults before touching any file.
    InflateRule::new(".*", args.depth, args.mode.into())?;
    let rules = inflate_rules(&args)?;
    let bytes = fs::read(&args.input).map_err(|e| io_err(&args.input, e))?;
    let map = vio::decode_tmap(&bytes)?;
    let out = inflate_map(&map, &rules)?;
    if out == map {
        fs::write(&args.out, &bytes).map_err(|e| io_err(&args.out, e))?;
    } else {
        vio::write_tmap(&args.out, &out)?;
    }
    let mut stdout = io::stdout().lock();
    let w = |e| io_err(Path::new("<stdout>"), e);
    writeln!(stdout, "tensor\told_shape\tnew_shape").map_err(w)?;
    for (name, t) in map.iter() {
        let new = out.get(name).unwrap();
        writeln!(stdout, "{name}\t{:?}\t{:?}", t.shape(), new.shape()).map_err(w)?;
    }
    ctx.note(format!("wrote {}", args.out.display()));
    Ok(())
}

fn confusion_json(c: &Confusion) -> Value {
    json!({"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn_})
}

fn eval(args: EvalArgs, _ctx: &Ctx) -> CliResult {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::schema(format!("threshold {} outside [0, 1]", args.threshold)));
    }
    let sets = args
        .pred
        .iter()
        .map(|p| vio::read_predictions(p))
        .collect::<Result<Vec<_>, _>>()?;
    let p = if sets.len() == 1 {
        sets.into_iter().next().unwrap()
    } else {
        metrics::fold_mean(&sets)?
    };
    let c = metrics::confusion(&p, args.threshold)?;
    let mut out = json!({
        "n": p.len(),
        "threshold": args.threshold,
        "mcc": metrics::mcc(&c),
        "auc": metrics::roc_auc(&p)?,
        "tpr": metrics::tpr(&c),
        "fpr": metrics::fpr(&c),
        "confusion": confusion_json(&c),
    });
    if args.folds {
        let folds = p.split_folds();
        let pooled = metrics::pooled_cv(&folds, args.threshold)?;
        let per: Vec<Value> = folds
            .iter()
            .map(|f| -> CliResult<Value> {
                let c = metrics::confusion(f, args.threshold)?;
                Ok(json!({
                    "fold": f.records()[0].fold,
                    "n": f.len(),
                    "mcc": metrics::mcc(&c),
                    "auc": metrics::roc_auc(f).ok(),
                    "tpr": metrics::tpr(&c),
                    "fpr": metrics::fpr(&c),
                    "confusion": confusion_json(&c),
                }))
            })
            .collect::<CliResult<_>>()?;
        out["pooled"] = json!({"mcc": pooled.mcc, "auc": pooled.auc, "confusion": confusion_json(&pooled.confusion)});
        out["folds"] = Value::Array(per);
    }
    print_json(&out)
}

fn calibrate(args: CalibrateArgs, ctx: &Ctx) -> CliResult {
    if args.bins < 2 {
        return Err(CliError::schema("--bins must be >= 2"));
    }
    let p = vio::read_predictions(&args.pred)?;
    let mut rng = RandomStream::new(ctx.seed());
    let (cal, model) = reliability::calibrate_split(&p, &mut rng)?;
    let before_scores: Vec<f64> = cal
        .records()
        .iter()
        .map(|r| {
            p.records()
                .iter()
                .find(|q| q.id == r.id && q.fold == r.fold)
                .map(|q| q.score)
                .unwrap()
        })
        .collect();
    let before = cal.with_scores(&before_scores)?;
    let bins_after = reliability::reliability_bins(&cal, args.bins)?;
    let bins_before = reliability::reliability_bins(&before, args.bins)?;
    if let Some(path) = &args.out {
        vio::write_reliability(create(path)?, &bins_after)?;
    }
    if let Some(path) = &args.before {
        vio::write_reliability(create(path)?, &bins_before)?;
    }
    if let Some(path) = &args.calibrated {
        vio::write_predictions(create(path)?, &cal)?;
    }
    print_json(&json!({
        "n_fit": p.len() - cal.len(),
        "n_calibrated": cal.len(),
        "bins": args.bins,
        "ece_before": reliability::expected_calibration_error(&before, args.bins)?,
        "ece_after": reliability::expected_calibration_error(&cal, args.bins)?,
        "breakpoints": model.breakpoints().len(),
    }))
}

fn uncertainty(args: UncertaintyArgs, _ctx: &Ctx) -> CliResult {
    let m = vio::read_probmatrix(&args.probmat)?;
    let spread = match args.spread {
        SpreadArg::Std => Spread::Std,
        SpreadArg::Range => Spread::Range,
    };
    let stats = reliability::mc_dropout_stats(&m, spread);
    if let Some(path) = &args.out {
        vio::write_sample_stats(create(path)?, &stats.samples)?;
    }
    print_json(&json!({
        "spread": stats.spread,
        "rows": m.rows(),
        "columns": m.columns(),
        "class_0": stats.classes[0],
        "class_1": stats.classes[1],
    }))
}

fn roi_cmd(args: RoiArgs, ctx: &Ctx) -> CliResult {
    let r = &args.rule;
    let rule = ColorRule::new(r.hue_lo, r.hue_hi, r.s_min, r.v_min)?;
    let v = read_volume(&args.frames)?;
    let (cuboid, crop) = roi::roi_crop(&v, &rule, args.pad)?;
    vio::write_vox1(&args.out, &crop)?;
    let cj = serde_json::to_value(cuboid).unwrap();
    if let Some(path) = &args.cuboid {
        fs::write(path, format!("{cj}\n")).map_err(|e| io_err(path, e))?;
    }
    ctx.note(format!("roi {cuboid} -> {}", args.out.display()));
    print_json(&cj)
}

fn read_cuboid_file(path: &Path) -> CliResult<Vec<Cuboid>> {
    if path.extension().is_some_and(|e| e == "csv") {
        return Ok(vio::read_cuboids(path)?);
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    let parse = |v: Value| -> CliResult<Cuboid> {
        let c: Cuboid = serde_json::from_value(v).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
        if c.f1 < c.f0 || c.r1 < c.r0 || c.c1 < c.c0 {
            return Err(CliError::schema(format!("{}: inverted cuboid bounds", path.display())));
        }
        Ok(c)
    };
    match v {
        Value::Array(items) => items.into_iter().map(parse).collect(),
        other => Ok(vec![parse(other)?]),
    }
}

fn roi_stats_cmd(args: RoiStatsArgs, _ctx: &Ctx) -> CliResult {
    if args.bin_width == 0 {
        return Err(CliError::schema("--bin-width must be >= 1"));
    }
    let mut cuboids = Vec::new();
    for path in &args.cuboids {
        cuboids.extend(read_cuboid_file(path)?);
    }
    let stats = roi::roi_stats(&cuboids, args.bin_width)?;
    if let Some(path) = &args.out {
        vio::write_roi_summary(create(path)?, &stats)?;
    }
    if let Some(path) = &args.hist {
        vio::write_roi_histogram(create(path)?, &stats)?;
    }
    print_json(&serde_json::to_value(&stats).unwrap())
}

fn heatmap_cmd(args: HeatmapArgs, ctx: &Ctx) -> CliResult {
    if args.factor == 0 {
        return Err(HeatmapError::ZeroFactor.into());
    }
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(HeatmapError::BadAlpha(args.alpha).into());
    }
    let fv = vio::read_vox1_raw(&args.features)?.into_features()?;
    let input = read_volume(&args.input)?;
    let (hm, overlay) = heatmap::compile(&fv, &input, args.factor, args.alpha)?;
    if let Some(path) = &args.heatmap_out {
        vio::write_vox1(path, &hm)?;
    }
    if args.png {
        vio::write_png_stack(&args.out, &overlay)?;
    } else {
        vio::write_vox1(&args.out, &overlay)?;
    }
    ctx.note(format!("overlay {} -> {}", overlay.shape(), args.out.display()));
    print_json(&json!({
        "features": fv.shape(),
        "heatmap": [hm.shape().frames, hm.shape().height, hm.shape().width, 3],
        "overlay": [overlay.shape().frames, overlay.shape().height, overlay.shape().width, 3],
    }))
}

fn sample_cmd(args: SampleArgs, ctx: &Ctx) -> CliResult {
    if args.n == 0 {
        return Err(CliError::schema("--n must be >= 1"));
    }
    let labels = vio::read_labels(&args.labels)?;
    let cfg = SamplerConfig::new(labels, args.batch_size, args.pos_frac, ctx.seed());
    let batches = sampler::batches(&cfg, args.n)?;
    match &args.out {
        Some(path) => vio::write_batches(create(path)?, &batches)?,
        None => vio::write_batches(io::stdout().lock(), &batches)?,
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e))?;
    }
    match cli.command {
        Command::Augment(a) => augment(a, &ctx),
        Command::Inflate(a) => inflate(a, &ctx),
        Command::Eval(a) => eval(a, &ctx),
        Command::Calibrate(a) => calibrate(a, &ctx),
        Command::Uncertainty(a) => uncertainty(a, &ctx),
        Command::Roi(a) => roi_cmd(a, &ctx),
        Command::RoiStats(a) => roi_stats_cmd(a, &ctx),
        Command::Heatmap(a) => heatmap_cmd(a, &ctx),
        Command::Sample(a) => sample_cmd(a, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
