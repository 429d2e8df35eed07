use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lowlight::codec::{encode_image, Format};
use lowlight::decomp::decompose;
use lowlight::eval::{eval_dataset, load_image, threads_from_env};
use lowlight::image::Image;
use lowlight::pcm::{fit_affine_color_matrix, fit_color_matrix, DEFAULT_RIDGE};
use lowlight::{enhance, Error, PipelineConfig, Stage};

/// Retinex-based low-light image enhancement.
#[derive(Parser)]
#[command(name = "lowlight", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance one image.
    Enhance(EnhanceArgs),
    /// Write the reflectance (RGB) and illumination (gray) of an image.
    Decompose(DecomposeArgs),
    /// Evaluate a paired low/high dataset.
    Eval(EvalArgs),
    /// Fit a color matrix mapping one image onto another.
    FitColor(FitColorArgs),
}

/// Pipeline settings; each flag overrides the config file.
#[derive(Args)]
struct PipelineArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fixed illumination gamma.
    #[arg(long, conflicts_with = "auto_gamma")]
    gamma: Option<f64>,
    /// Match the reference illumination's mean brightness.
    #[arg(long)]
    auto_gamma: bool,
    /// `identity`, `fit`, or a matrix file written by `fit-color`.
    #[arg(long)]
    color_matrix: Option<String>,
    /// Detail gain in dark regions.
    #[arg(long)]
    alpha: Option<f64>,
    /// Maximum sampling offset, in pixels.
    #[arg(long)]
    rho: Option<f64>,
    /// Pyramid levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Denoiser: grid, bilateral, or off.
    #[arg(long)]
    denoise: Option<String>,
    /// Grid size as depth,rows,cols.
    #[arg(long)]
    grid: Option<String>,
    /// Spatial sigma of the bilateral denoiser.
    #[arg(long)]
    sigma_s: Option<f64>,
    /// Range sigma of the bilateral denoiser.
    #[arg(long)]
    sigma_r: Option<f64>,
    /// Block size of the coarse color pass.
    #[arg(long)]
    pool: Option<usize>,
    /// Ridge penalty for fitted color matrices.
    #[arg(long)]
    ridge: Option<f64>,
    /// Arbitrary `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    settings: Vec<String>,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        let mut overrides: Vec<(&str, String)> = Vec::new();
        if let Some(g) = self.gamma {
            overrides.push(("gamma", g.to_string()));
        }
        if self.auto_gamma {
            overrides.push(("gamma", "auto".into()));
        }
        let numeric = [
            ("alpha", self.alpha),
            ("rho", self.rho),
            ("sigma_s", self.sigma_s),
            ("sigma_r", self.sigma_r),
            ("ridge", self.ridge),
        ];
        for (key, value) in numeric {
            if let Some(v) = value {
                overrides.push((key, v.to_string()));
            }
        }
        for (key, value) in [("levels", self.levels), ("pool", self.pool)] {
            if let Some(v) = value {
                overrides.push((key, v.to_string()));
            }
        }
        for (key, value) in [
            ("color_matrix", &self.color_matrix),
            ("denoise", &self.denoise),
            ("grid", &self.grid),
        ] {
            if let Some(v) = value {
                overrides.push((key, v.clone()));
            }
        }
        for (key, value) in overrides {
            cfg.set(key, &value, None)?;
        }
        for setting in &self.settings {
            let (key, value) = setting
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {setting:?}"))?;
            cfg.set(key, value, None)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Well-exposed reference, used by --auto-gamma and `--color-matrix fit`.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Also write the denoised reflectance here.
    #[arg(long)]
    out_r: Option<PathBuf>,
    /// Also write the illumination here.
    #[arg(long)]
    out_i: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long)]
    out_r: PathBuf,
    #[arg(long)]
    out_i: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Smoothness weight of the illumination refinement.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    low: PathBuf,
    #[arg(long)]
    high: PathBuf,
    /// Per-pair CSV report.
    #[arg(long)]
    report: PathBuf,
    /// JSON summary; defaults to the report path with a `.json` extension.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct FitColorArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long = "ref", value_name = "PATH")]
    reference: PathBuf,
    /// Matrix file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    /// Restrict the fit to an affine map.
    #[arg(long)]
    affine: bool,
}

fn read(path: &Path) -> Result<Image> {
    Ok(load_image(path)?)
}

fn write(path: &Path, img: &Image) -> Result<()> {
    let bytes = encode_image(img, Format::from_path(path))?;
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn staged(stage: Stage) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage {
        stage,
        source: Box::new(e),
    }
}

fn run_enhance(args: EnhanceArgs) -> Result<()> {
    let cfg = args.pipeline.config()?;
    let low = read(&args.input)?;
    let reference = args.reference.as_deref().map(read).transpose()?;
    let result = enhance(&low, &cfg, reference.as_ref())?;
    write(&args.out, &result.output)?;
    if let Some(path) = &args.out_r {
        write(path, &result.decomposition.reflectance)?;
    }
    if let Some(path) = &args.out_i {
        write(path, &result.decomposition.illumination)?;
    }
    Ok(())
}

fn run_decompose(args: DecomposeArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(lambda) = args.lambda {
        cfg.lambda = lambda;
    }
    if let Some(iterations) = args.iterations {
        cfg.iterations = iterations;
    }
    cfg.validate()?;
    let img = read(&args.input)?;
    let d = decompose(&img, &cfg.decompose_params()).map_err(staged(Stage::Decompose))?;
    write(&args.out_r, &d.reflectance)?;
    let bytes = encode_image(&d.illumination, Format::Ppm)?;
    std::fs::write(&args.out_i, bytes).with_context(|| format!("writing {}", args.out_i.display()))
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let cfg = args.pipeline.config()?;
    let report = eval_dataset(&args.low, &args.high, &cfg, threads_from_env())?;
    let summary = args
        .summary
        .unwrap_or_else(|| args.report.with_extension("json"));
    report.write(&args.report, &summary)?;
    let s = &report.summary;
    let mean = |v: &Option<lowlight::eval::Stat>| v.as_ref().map_or(f64::NAN, |s| s.mean);
    eprintln!(
        "{} pairs, {} failed; mean PSNR {:.3} -> {:.3} dB, mean SSIM {:.4} -> {:.4}",
        s.pairs,
        s.failures,
        mean(&s.psnr_before),
        mean(&s.psnr_after),
        mean(&s.ssim_before),
        mean(&s.ssim_after),
    );
    Ok(())
}

fn run_fit_color(args: FitColorArgs) -> Result<()> {
    let src = read(&args.src)?;
    let reference = read(&args.reference)?;
    let fit = if args.affine {
        fit_affine_color_matrix
    } else {
        fit_color_matrix
    };
    let m = fit(&src, &reference, args.ridge).map_err(staged(Stage::Correct))?;
    match &args.out {
        Some(path) => std::fs::write(path, m.to_string())
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{m}"),
    }
    Ok(())
}

/// Joins the cause chain, skipping causes the message already ends with.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let cause = cause.to_string();
        if !msg.ends_with(&cause) {
            msg = format!("{msg}: {cause}");
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Enhance(args) => run_enhance(args),
        Command::Decompose(args) => run_decompose(args),
        Command::Eval(args) => run_eval(args),
        Command::FitColor(args) => run_fit_color(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
