use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use thiserror::Error;

use cascade_stereo::adapt::area_labels;
use cascade_stereo::{
    adapt_params, compute_metrics, filter_by_pixel_uncertainty, generate_stereogram, read_image,
    read_kitti_png, read_pfm, roc_curve, run_cascade, write_image, write_kitti_png, write_pfm,
    AdaptReport, AugmentConfig, DisparityModel, DisparityRaster, PipelineConfig, RasterImage,
    SearchGrid, StereoPair, StereogramSpec, TunableParams,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] cascade_stereo::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub const INTERNAL: u8 = 2;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => Self::INTERNAL,
            _ => 1,
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(
    name = "cstereo",
    version,
    about = "Uncertainty-driven cascade stereo matching"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Match a rectified pair; writes disparity and √U rasters.
    Match(MatchArgs),
    /// Uncertainty-filtered pseudo-labels for a pair.
    Pseudolabel(PseudolabelArgs),
    /// EPE / D1 / bad-N of a disparity map against ground truth.
    Eval(EvalArgs),
    /// Sparsification curve of an uncertainty map.
    Roc(RocArgs),
    /// Self-tune pipeline parameters on unlabelled pairs.
    Adapt(AdaptArgs),
    /// Render a random-dot stereogram with ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// `key = value` pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Disparity output, `.pfm` or `.png` (KITTI 16-bit).
    #[arg(long)]
    out_disp: PathBuf,
    /// √U output, `.pfm` or `.png`.
    #[arg(long)]
    out_unc: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PseudolabelArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    t_pixel: Option<f64>,
    #[arg(long)]
    t_area: Option<f64>,
    /// Label output; missing labels are NaN (`.pfm`) or 0 (`.png`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    disp: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RocArgs {
    #[arg(long)]
    disp: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Uncertainty raster; larger means less trusted, NaN means least.
    #[arg(long)]
    unc: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AdaptArgs {
    /// Text file with one `left right` image pair per line, relative to
    /// the file's directory.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = 2)]
    iters: usize,
    /// Starting configuration; also supplies every untuned setting.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_config: PathBuf,
    /// Per-iteration CSV report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// `constant:D`, `slanted:A,B,C` or `two-layer:FG,BG,X,Y,W,H`.
    #[arg(long, value_parser = parse_model)]
    model: DisparityModel,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Added to the right image.
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256.0)]
    d_max: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Match(a) => cmd_match(a),
        Command::Pseudolabel(a) => cmd_pseudolabel(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Roc(a) => cmd_roc(a),
        Command::Adapt(a) => cmd_adapt(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            cascade_stereo::Error::Config { .. } => {
                CliError::Usage(format!("{}: {e}", p.display()))
            }
            other => other.into(),
        }),
        None => Ok(PipelineConfig::default()),
    }
}

fn load_pair(args: &PairArgs) -> Result<(RasterImage, RasterImage, PipelineConfig)> {
    let cfg = load_config(args.config.as_deref())?;
    Ok((read_image(&args.left)?, read_image(&args.right)?, cfg))
}

#[derive(Debug)]
enum RasterFormat {
    Pfm,
    KittiPng,
}

fn raster_format(path: &Path) -> Result<RasterFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("pfm") => Ok(RasterFormat::Pfm),
        Some("png") => Ok(RasterFormat::KittiPng),
        _ => Err(CliError::Usage(format!(
            "{}: expected a .pfm or .png extension",
            path.display()
        ))),
    }
}

fn read_raster(path: &Path) -> Result<DisparityRaster> {
    Ok(match raster_format(path)? {
        RasterFormat::Pfm => read_pfm(path)?,
        RasterFormat::KittiPng => read_kitti_png(path)?,
    })
}

fn write_raster(raster: &DisparityRaster, path: &Path) -> Result<()> {
    match raster_format(path)? {
        RasterFormat::Pfm => write_pfm(raster, path)?,
        RasterFormat::KittiPng => write_kitti_png(raster, path)?,
    }
    Ok(())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_match(args: MatchArgs) -> Result<()> {
    // resolve output formats before doing any work
    raster_format(&args.out_disp)?;
    if let Some(p) = &args.out_unc {
        raster_format(p)?;
    }
    let (left, right, cfg) = load_pair(&args.pair)?;
    let trace = run_cascade(&left, &right, &cfg.features, &cfg.cascade)?;

    let limit = cfg.cascade.d_max as f64;
    if let Some(d) = trace
        .disparity
        .values
        .iter()
        .find(|d| !(d.is_finite() && (0.0..=limit).contains(*d)))
    {
        return Err(CliError::Invariant(format!(
            "disparity {d} outside [0, {limit}]"
        )));
    }
    write_raster(&trace.disparity.to_raster(), &args.out_disp)?;
    if let Some(p) = &args.out_unc {
        let std = DisparityRaster::new(
            trace.uncertainty.width,
            trace.uncertainty.height,
            trace.uncertainty.std_dev(),
        )?;
        write_raster(&std, p)?;
    }
    Ok(())
}

fn cmd_pseudolabel(args: PseudolabelArgs) -> Result<()> {
    raster_format(&args.out)?;
    let (left, right, mut cfg) = load_pair(&args.pair)?;
    if let Some(t) = args.t_pixel {
        cfg.t_pixel = t;
    }
    if let Some(t) = args.t_area {
        cfg.t_area = t;
    }
    cfg.validate()?;
    let trace = run_cascade(&left, &right, &cfg.features, &cfg.cascade)?;
    let pixel = filter_by_pixel_uncertainty(&trace.disparity, &trace.uncertainty, cfg.t_pixel)?;
    let area = area_labels(&trace.disparity, &trace.uncertainty, &left, &cfg)?;
    let labels = pixel.intersect(&area)?;
    if labels.valid_count() > pixel.valid_count().min(area.valid_count()) {
        return Err(CliError::Invariant(
            "intersection larger than its inputs".into(),
        ));
    }
    if labels.valid_count() == 0 {
        warn!(
            "no pixel passed both filters (t_pixel {}, t_area {}); writing an empty label map",
            cfg.t_pixel, cfg.t_area
        );
    } else {
        info!(
            "label density {:.4} (pixel {:.4}, area {:.4})",
            labels.density(),
            pixel.density(),
            area.density()
        );
    }
    write_raster(&labels.to_raster(), &args.out)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let disp = read_raster(&args.disp)?;
    let gt = read_raster(&args.gt)?;
    let report = compute_metrics(&disp, &gt)?;
    write_text(args.out_csv.as_deref(), &report.to_csv())
}

fn cmd_roc(args: RocArgs) -> Result<()> {
    let disp = read_raster(&args.disp)?;
    let gt = read_raster(&args.gt)?;
    let unc = read_raster(&args.unc)?;
    if unc.width() != disp.width() || unc.height() != disp.height() {
        return Err(cascade_stereo::Error::ShapeMismatch("uncertainty vs disparity".into()).into());
    }
    let curve = roc_curve(&disp, &gt, unc.data(), args.step)?;
    write_text(args.out_csv.as_deref(), &curve.to_csv())
}

fn read_pairs(list: &Path) -> Result<Vec<StereoPair>> {
    let text = fs::read_to_string(list).map_err(|source| CliError::Io {
        path: list.to_path_buf(),
        source,
    })?;
    let dir = list.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [l, r] = fields[..] else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected `left right`",
                list.display(),
                n + 1
            )));
        };
        pairs.push(StereoPair::new(
            read_image(dir.join(l))?,
            read_image(dir.join(r))?,
        )?);
    }
    if pairs.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no pairs listed",
            list.display()
        )));
    }
    Ok(pairs)
}

fn cmd_adapt(args: AdaptArgs) -> Result<()> {
    let base = load_config(args.config.as_deref())?;
    let pairs = read_pairs(&args.pairs)?;
    let init = TunableParams::from_config(&base);
    let (params, report) = adapt_params(
        &pairs,
        &base,
        init,
        args.iters,
        &SearchGrid::default(),
        &AugmentConfig::default(),
    )?;
    check_report(&report)?;
    params.apply(&base).save(&args.out_config)?;
    if let Some(p) = &args.report {
        write_text(Some(p), &report.to_csv())?;
    }
    Ok(())
}

fn check_report(report: &AdaptReport) -> Result<()> {
    for it in &report.iterations {
        if it.objective > it.initial_objective {
            return Err(CliError::Invariant(format!(
                "iteration {} raised the objective",
                it.iteration
            )));
        }
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = StereogramSpec::new(args.width, args.height, args.model)
        .with_density(args.density)
        .with_noise(args.noise)
        .with_offset(args.offset)
        .with_seed(args.seed)
        .with_d_max(args.d_max);
    let st = generate_stereogram(&spec)?;
    fs::create_dir_all(&args.out_dir).map_err(|source| CliError::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let out = |name: &str| args.out_dir.join(name);
    write_image(&st.left, out("left.png"))?;
    write_image(&st.right, out("right.png"))?;
    write_pfm(&st.gt, out("gt_full.pfm"))?;
    write_pfm(&st.gt_nonoccluded(), out("gt.pfm"))?;
    Ok(())
}

fn parse_model(s: &str) -> Result<DisparityModel, String> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("expected KIND:VALUES, got {s:?}"))?;
    let nums = rest
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<Vec<f64>, String>>()?;
    let index = |v: f64| -> Result<usize, String> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(format!("{v} is not a pixel index"))
        }
    };
    match (kind, nums.as_slice()) {
        ("constant", &[d]) => Ok(DisparityModel::Constant(d)),
        ("slanted", &[a, b, c]) => Ok(DisparityModel::SlantedPlane { a, b, c }),
        ("two-layer", &[fg, bg, x, y, w, h]) => Ok(DisparityModel::TwoLayer {
            foreground: fg,
            background: bg,
            x: index(x)?,
            y: index(y)?,
            width: index(w)?,
            height: index(h)?,
        }),
        _ => Err(format!("unrecognised model {s:?}")),
    }
}
