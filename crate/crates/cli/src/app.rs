use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rigidstyle::align::{DEFAULT_EPS, DEFAULT_TAU};
use rigidstyle::codec::DEFAULT_SEED;
use rigidstyle::metrics::{self, content_loss, style_loss};
use rigidstyle::pipeline::{self, transform_features};
use rigidstyle::{
    AlignOptions, AxisConfig, Codec, DeepestOp, FeatureMap, ImageBuffer, PipelineConfig, ScaleVariant,
    StyleEntry, StyleSpec,
};

use crate::error::CliError;
use crate::ft1::{self, TensorFile};
use crate::imageio::{horizontal_strip, read_image, read_mask, write_png};

const AFTER_HELP: &str = "\
Images are PNG (8-bit RGB, alpha dropped) or binary PPM (P6); outputs are PNG.
Before encoding, images are padded by reflection to a multiple of 2^L (16 for
the default deepest level 4) and cropped back after decoding. Style images are
resized bilinearly to the content size.

The codec tables are generated from a seed: --seed, else RIGIDSTYLE_SEED, else
0x5EED2019 (1592598553).

Exit codes: 0 success, 1 malformed arguments, 2 I/O or format error,
3 numerical degeneracy.";

#[derive(Debug, Parser)]
#[command(name = "rigidstyle", version, about = "Style transfer by moment matching and rigid alignment of deep features", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stylize an image, or transform FT1 content features with FT1 style features.
    Stylize(StylizeArgs),
    /// Stylize a sequence of frames independently.
    Video(VideoArgs),
    /// Render the content/style trade-off over an alpha grid.
    SweepAlpha(SweepAlphaArgs),
    /// Render the interpolation between two styles over a beta grid.
    Interpolate(InterpolateArgs),
    /// Apply one style per masked region.
    Mask(MaskArgs),
    /// Print content and style losses for features or images.
    Metrics(MetricsArgs),
    /// Time the alignment paths, the single-level transform and the cascade.
    Bench(BenchArgs),
    /// Print the header and payload summary of an FT1 file.
    FtDump(FtDumpArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OpArg {
    /// Moment matching, then rigid alignment
    MmRa,
    /// Rigid alignment only
    Ra,
    /// Moment matching only
    Mm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Centered,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    /// C points in R^(H*W)
    Chw,
    /// H*W points in R^C
    Hwc,
}

#[derive(Debug, Clone, Args)]
struct TransformArgs {
    /// Content weight in [0, 1]; 0 is full stylization.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Codec levels, strictly descending.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 3, 2, 1])]
    levels: Vec<usize>,
    /// Levels running the deepest operation [default: deepest level only].
    #[arg(long = "ra-levels", value_delimiter = ',')]
    ra_levels: Option<Vec<usize>>,
    #[arg(long = "deepest-op", value_enum, default_value_t = OpArg::MmRa)]
    deepest_op: OpArg,
    #[arg(long = "scale-variant", value_enum, default_value_t = VariantArg::Centered)]
    scale_variant: VariantArg,
    /// Point-cloud layout for alignment.
    #[arg(long, value_enum, default_value_t = AxisArg::Chw)]
    axis: AxisArg,
    /// Floor on the content channel standard deviation.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Relative rank tolerance of the alignment.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Codec seed.
    #[arg(long, env = "RIGIDSTYLE_SEED")]
    seed: Option<u64>,
}

impl TransformArgs {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        let ra_levels = self.ra_levels.clone().unwrap_or_else(|| self.levels.first().copied().into_iter().collect());
        let cfg = PipelineConfig {
            levels: self.levels.clone(),
            deepest_op: match self.deepest_op {
                OpArg::MmRa => DeepestOp::MmThenRa,
                OpArg::Ra => DeepestOp::RaOnly,
                OpArg::Mm => DeepestOp::MmOnly,
            },
            ra_levels,
            alpha: self.alpha,
            align: AlignOptions {
                variant: match self.scale_variant {
                    VariantArg::Centered => ScaleVariant::Centered,
                    VariantArg::Literal => ScaleVariant::Literal,
                },
                axis: match self.axis {
                    AxisArg::Chw => AxisConfig::ChannelsAsPoints,
                    AxisArg::Hwc => AxisConfig::PixelsAsPoints,
                },
                tau: self.tau,
            },
            eps: self.eps,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    fn codec(&self) -> Codec {
        Codec::new(self.seed.unwrap_or(DEFAULT_SEED))
    }
}

#[derive(Debug, Args)]
struct StylizeArgs {
    /// Content image, or FT1 content features.
    #[arg(long)]
    content: PathBuf,
    /// Style image (repeatable), or FT1 style features.
    #[arg(long, required = true)]
    style: Vec<PathBuf>,
    /// Weight of the first of exactly two styles.
    #[arg(long)]
    beta: Option<f64>,
    /// Binary mask image per style (repeatable, same order as --style).
    #[arg(long)]
    mask: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
}

#[derive(Debug, Args)]
struct VideoArgs {
    /// Frame images in playback order.
    #[arg(long, num_args = 1.., required = true)]
    frames: Vec<PathBuf>,
    #[arg(long, required = true)]
    style: Vec<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mask: Vec<PathBuf>,
    /// Directory receiving frame_00000.png, frame_00001.png, ...
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
}

#[derive(Debug, Args)]
struct SweepAlphaArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    style: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Grid points from alpha = 0 to alpha = 1.
    #[arg(long, default_value_t = 11)]
    steps: usize,
    #[command(flatten)]
    transform: TransformArgs,
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    #[arg(long)]
    content: PathBuf,
    /// Exactly two styles (give --style twice); beta weights the first.
    #[arg(long, required = true)]
    style: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 11)]
    steps: usize,
    #[command(flatten)]
    transform: TransformArgs,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long, required = true)]
    style: Vec<PathBuf>,
    #[arg(long, required = true)]
    mask: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Content features (FT1) or image.
    #[arg(long)]
    content: PathBuf,
    /// Style features (FT1) or image.
    #[arg(long)]
    style: PathBuf,
    /// Stylized features or image; computed with the single-level transform when omitted.
    /// Style features are resampled to the content grid.
    #[arg(long)]
    styled: Option<PathBuf>,
    /// Codec level used to encode image inputs.
    #[arg(long, default_value_t = 4)]
    level: usize,
    #[command(flatten)]
    transform: TransformArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Kv,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Points in the thin-vs-dense comparison.
    #[arg(long, default_value_t = 64)]
    channels: usize,
    /// Point dimension in the thin-vs-dense comparison.
    #[arg(long, default_value_t = 1024)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Channels of the single-level transform benchmark.
    #[arg(long, default_value_t = 512)]
    transform_channels: usize,
    /// Spatial side of the single-level transform benchmark (D = side^2).
    #[arg(long, default_value_t = 64)]
    transform_size: usize,
    /// Side of the square images for the cascade benchmark.
    #[arg(long, default_value_t = 256)]
    image_size: usize,
    /// Skip the dense reference path.
    #[arg(long)]
    skip_dense: bool,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    #[command(flatten)]
    transform: TransformArgs,
}

#[derive(Debug, Args)]
struct FtDumpArgs {
    file: PathBuf,
    /// Re-serialise the parsed tensor to this path.
    #[arg(long)]
    copy_to: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    0
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Stylize(a) => stylize(a, out, err),
        Command::Video(a) => video(a, out, err),
        Command::SweepAlpha(a) => sweep_alpha(a, out, err),
        Command::Interpolate(a) => interpolate(a, out, err),
        Command::Mask(a) => mask(a, out, err),
        Command::Metrics(a) => metrics_cmd(a, out),
        Command::Bench(a) => bench(a, out),
        Command::FtDump(a) => ft_dump(a, out),
    }
}

fn style_spec(styles: &[PathBuf], beta: Option<f64>, masks: &[PathBuf]) -> Result<StyleSpec, CliError> {
    let images = styles.iter().map(|p| read_image(p)).collect::<Result<Vec<_>, _>>()?;
    if !masks.is_empty() {
        if masks.len() != images.len() {
            return Err(CliError::Usage(format!(
                "{} masks given for {} styles",
                masks.len(),
                images.len()
            )));
        }
        if beta.is_some() {
            return Err(CliError::Usage("--beta cannot be combined with --mask".into()));
        }
        let masks = masks.iter().map(|p| read_mask(p)).collect::<Result<Vec<_>, _>>()?;
        return Ok(StyleSpec::masked(images.into_iter().zip(masks).collect())?);
    }
    match (beta, images.len()) {
        (Some(b), 2) => {
            let mut it = images.into_iter();
            Ok(StyleSpec::pair(it.next().unwrap(), it.next().unwrap(), b)?)
        }
        (Some(_), n) => Err(CliError::Usage(format!("--beta needs exactly two styles, got {n}"))),
        (None, 1) => Ok(StyleSpec::single(images.into_iter().next().unwrap())),
        (None, _) => Ok(StyleSpec::new(
            images.into_iter().map(|image| StyleEntry { image, weight: 1.0, mask: None }).collect(),
        )?),
    }
}

fn report_warnings(err: &mut dyn Write, warnings: &[String]) {
    for w in warnings {
        let _ = writeln!(err, "warning: {w}");
    }
}

fn stylize(a: StylizeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = a.transform.config()?;
    if ft1::is_ft1(&a.content)? {
        if a.style.len() != 1 || !a.mask.is_empty() || a.beta.is_some() {
            return Err(CliError::Usage("feature mode takes exactly one FT1 style and no masks or beta".into()));
        }
        let zc = TensorFile::read(&a.content)?.to_feature_map()?;
        let zs = TensorFile::read(&a.style[0])?.to_feature_map()?;
        let z = transform_features(&zc, &zs, &cfg)?;
        let styled = if cfg.alpha > 0.0 { rigidstyle::align::blend(&zc, &z, cfg.alpha)? } else { z };
        TensorFile::from_feature_map(&styled).write(&a.output)?;
        writeln!(out, "wrote {}", a.output.display())?;
        return Ok(());
    }
    let content = read_image(&a.content)?;
    let spec = style_spec(&a.style, a.beta, &a.mask)?;
    let result = pipeline::stylize(&a.transform.codec(), &content, &spec, &cfg)?;
    report_warnings(err, &result.warnings);
    write_png(&a.output, &result.image)?;
    writeln!(out, "wrote {}", a.output.display())?;
    Ok(())
}

fn mask(a: MaskArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    stylize(
        StylizeArgs {
            content: a.content,
            style: a.style,
            beta: None,
            mask: a.mask,
            output: a.output,
            transform: a.transform,
        },
        out,
        err,
    )
}

fn video(a: VideoArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = a.transform.config()?;
    let frames = a.frames.iter().map(|p| read_image(p)).collect::<Result<Vec<_>, _>>()?;
    let spec = style_spec(&a.style, a.beta, &a.mask)?;
    let results = pipeline::stylize_video(&a.transform.codec(), &frames, &spec, &cfg)?;
    std::fs::create_dir_all(&a.out_dir)?;
    for (i, r) in results.iter().enumerate() {
        report_warnings(err, &r.warnings);
        let path = a.out_dir.join(format!("frame_{i:05}.png"));
        write_png(&path, &r.image)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    let outputs: Vec<_> = results.into_iter().map(|r| r.image).collect();
    for (i, amp) in pipeline::frame_amplification(&frames, &outputs)?.iter().enumerate() {
        writeln!(out, "amplification frame={}->{} factor={amp:.6}", i, i + 1)?;
    }
    Ok(())
}

fn grid(steps: usize) -> Result<Vec<f64>, CliError> {
    if steps < 2 {
        return Err(CliError::Usage("--steps must be at least 2".into()));
    }
    Ok((0..steps).map(|i| i as f64 / (steps - 1) as f64).collect())
}

fn emit_strip(
    dir: &Path,
    prefix: &str,
    values: &[f64],
    images: Vec<ImageBuffer>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (v, img) in values.iter().zip(&images) {
        let path = dir.join(format!("{prefix}_{v:.2}.png"));
        write_png(&path, img)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    let strip = dir.join("strip.png");
    write_png(&strip, &horizontal_strip(&images)?)?;
    writeln!(out, "wrote {}", strip.display())?;
    Ok(())
}

fn sweep_alpha(a: SweepAlphaArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let base = a.transform.config()?;
    let alphas = grid(a.steps)?;
    let codec = a.transform.codec();
    let content = read_image(&a.content)?;
    let spec = StyleSpec::single(read_image(&a.style)?);
    let mut images = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let r = pipeline::stylize(&codec, &content, &spec, &PipelineConfig { alpha, ..base.clone() })?;
        report_warnings(err, &r.warnings);
        images.push(r.image);
    }
    emit_strip(&a.out_dir, "alpha", &alphas, images, out)
}

fn interpolate(a: InterpolateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = a.transform.config()?;
    if a.style.len() != 2 {
        return Err(CliError::Usage(format!("interpolate needs exactly two styles, got {}", a.style.len())));
    }
    let betas = grid(a.steps)?;
    let codec = a.transform.codec();
    let content = read_image(&a.content)?;
    let (s1, s2) = (read_image(&a.style[0])?, read_image(&a.style[1])?);
    let mut images = Vec::with_capacity(betas.len());
    for &beta in &betas {
        let spec = StyleSpec::pair(s1.clone(), s2.clone(), beta)?;
        let r = pipeline::stylize(&codec, &content, &spec, &cfg)?;
        report_warnings(err, &r.warnings);
        images.push(r.image);
    }
    emit_strip(&a.out_dir, "beta", &betas, images, out)
}

fn load_features(path: &Path, codec: &Codec, level: usize, like: Option<&ImageBuffer>) -> Result<FeatureMap, CliError> {
    if ft1::is_ft1(path)? {
        return Ok(TensorFile::read(path)?.to_feature_map()?);
    }
    let mut img = read_image(path)?;
    if let Some(c) = like {
        img = img.resample_bilinear(c.height(), c.width())?;
    }
    let step = 1 << level;
    let (h, w) = (rigidstyle::image::round_up(img.height(), step), rigidstyle::image::round_up(img.width(), step));
    let padded = rigidstyle::image::pad_reflect(&img.to_feature_map(), h, w)?;
    Ok(codec.encode(&padded, level)?)
}

fn metrics_cmd(a: MetricsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = a.transform.config()?;
    if !(1..=rigidstyle::codec::MAX_LEVEL).contains(&a.level) {
        return Err(CliError::Usage(format!("--level must be in 1..=4, got {}", a.level)));
    }
    let codec = a.transform.codec();
    let content_img = if ft1::is_ft1(&a.content)? { None } else { Some(read_image(&a.content)?) };
    let zc = load_features(&a.content, &codec, a.level, None)?;
    let zs = load_features(&a.style, &codec, a.level, content_img.as_ref())?;
    // FT1 style features may come on another grid
    let zs = if zs.channels() == zc.channels() { zs.resample_bilinear(zc.height(), zc.width())? } else { zs };
    let z = match &a.styled {
        Some(p) => load_features(p, &codec, a.level, content_img.as_ref())?,
        None => transform_features(&zc, &zs, &cfg)?,
    };
    let lc = content_loss(&zc, &z)?;
    let ls = style_loss(&zs, &z)?;
    writeln!(out, "shape={}x{}x{}", z.channels(), z.height(), z.width())?;
    writeln!(out, "content_loss={lc:.9e} log_content_loss={:.6}", lc.ln())?;
    writeln!(out, "style_loss={ls:.9e} log_style_loss={:.6}", ls.ln())?;
    if zs.shape() == zc.shape() {
        writeln!(out, "baseline_content_loss={:.9e}", content_loss(&zc, &zs)?)?;
        writeln!(out, "baseline_style_loss={:.9e}", style_loss(&zs, &zc)?)?;
    }
    Ok(())
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = a.transform.config()?;
    let codec = a.transform.codec();
    let mut reports = Vec::new();
    let mut speedup = None;
    if a.skip_dense {
        let rng_seed = a.transform.seed.unwrap_or(DEFAULT_SEED);
        let mut cfg_thin = cfg.clone();
        cfg_thin.deepest_op = DeepestOp::RaOnly;
        reports.push(metrics::bench_transform(a.channels, 1, a.dim, a.reps, rng_seed, &cfg_thin)?);
    } else {
        let cmp = metrics::bench_alignment_paths(a.channels, a.dim, a.reps, a.transform.seed.unwrap_or(DEFAULT_SEED))?;
        speedup = Some(cmp.speedup);
        reports.push(cmp.thin);
        reports.push(cmp.dense);
    }
    reports.push(metrics::bench_transform(
        a.transform_channels,
        a.transform_size,
        a.transform_size,
        a.reps,
        1,
        &cfg,
    )?);
    reports.push(metrics::bench_stylize(&codec, a.image_size, a.image_size, a.reps, 1, &cfg)?);
    for r in &reports {
        match a.format {
            ReportFormat::Text => writeln!(out, "{}", r.to_text())?,
            ReportFormat::Kv => writeln!(out, "{}", r.to_key_values())?,
        }
    }
    if let Some(s) = speedup {
        match a.format {
            ReportFormat::Text => writeln!(out, "thin path speedup over dense: {s:.1}x")?,
            ReportFormat::Kv => writeln!(out, "label=speedup_thin_vs_dense value={s:.6}")?,
        }
    }
    Ok(())
}

fn ft_dump(a: FtDumpArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let t = TensorFile::read(&a.file)?;
    let dims: Vec<_> = t.dims.iter().map(|d| d.to_string()).collect();
    let n = t.data.len();
    writeln!(out, "file={}", a.file.display())?;
    writeln!(out, "version={} dtype=f32 ndim={}", ft1::VERSION, t.dims.len())?;
    writeln!(out, "dims={}", dims.join("x"))?;
    writeln!(out, "elements={n} payload_bytes={}", 4 * n)?;
    if n > 0 {
        let min = t.data.iter().copied().fold(f32::INFINITY, f32::min);
        let max = t.data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mean = t.data.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        writeln!(out, "min={min:e} max={max:e} mean={mean:e}")?;
    }
    writeln!(out, "checksum=fnv1a64:{:016x}", t.payload_checksum())?;
    if let Some(dst) = a.copy_to {
        t.write(&dst)?;
        writeln!(out, "wrote {}", dst.display())?;
    }
    Ok(())
}

