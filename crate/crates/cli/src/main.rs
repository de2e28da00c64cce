//! Command-line front end: generation, schedule/plan dumps, and the
//! pixel-vs-latent upsampling study. A thin shell over the library; every
//! CSV the commands emit comes from the same functions a library caller
//! would use.
//!
//! Exit codes: 0 success, 2 configuration failure, 1 runtime failure.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_eta2, parse_shape, AppConfig, ConfigError};
use hires_diffuse::models::{AnalyticGaussianDenoiser, OrthogonalPatchAutoencoder};
use hires_diffuse::pilot::{pilot_csv, run_pilot_study, synthetic_corpus};
use hires_diffuse::rng::RngSeed;
use hires_diffuse::{generate, io, GuidanceSchedule, StagePlan, TensorF32};

#[derive(Parser)]
#[command(
    name = "hires-diffuse",
    version,
    about = "Two-stage high-resolution diffusion sampling with analytic desk-scale models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an image; writes output.png and output.tf32 (and trace.csv with --trace)
    Generate(GenerateArgs),
    /// Print the per-step attentive-guidance scales as CSV (t,gamma_t)
    ScheduleDump(CommonArgs),
    /// Print the progressive stage plan as CSV (stage,height,width,steps)
    PlanDump(CommonArgs),
    /// Pixel-vs-latent upsampling study; writes report.csv
    Pilot(PilotArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Path to a `key = value` config file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file and HIRES_DIFFUSE_SEED)
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Target image shape, e.g. 2048x2048
    #[arg(long, value_name = "HxW")]
    target: Option<String>,
    /// Attentive-guidance base scale
    #[arg(long, value_name = "F")]
    gamma: Option<f64>,
    /// Guidance delay rate in [0,1)
    #[arg(long, value_name = "F")]
    eta1: Option<f64>,
    /// Comma-separated refinement step fractions, e.g. 0.1,0.2
    #[arg(long, value_name = "F[,F...]")]
    eta2: Option<String>,
    /// Stage-0 denoising steps
    #[arg(long, value_name = "N")]
    t0: Option<usize>,
    /// Guidance decay factor
    #[arg(long, value_name = "F")]
    beta: Option<f64>,
    /// Classifier-free guidance scale
    #[arg(long, value_name = "F")]
    cfg: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also write the per-step trace CSV
    #[arg(long)]
    trace: bool,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PilotArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory of PNG images to use as the corpus
    #[arg(long, value_name = "DIR")]
    corpus: Option<PathBuf>,
    /// Generate a seeded synthetic corpus instead: image count and seed
    #[arg(long, num_args = 2, value_names = ["N", "SEED"])]
    synthetic: Option<Vec<u64>>,
    /// Down/upsampling factor of the study
    #[arg(long, default_value_t = 2, value_name = "N")]
    r: usize,
    /// Worker threads for per-image scoring
    #[arg(long, default_value_t = 1, value_name = "N")]
    jobs: usize,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn load_config(common: &CommonArgs) -> Result<(AppConfig, u64)> {
    let mut cfg = AppConfig::load(common.config.as_deref())?;
    if let Some(t) = &common.target {
        cfg.target = parse_shape("target", t)?;
    }
    if let Some(g) = common.gamma {
        cfg.gamma = g;
    }
    if let Some(e) = common.eta1 {
        cfg.eta1 = e;
    }
    if let Some(e) = &common.eta2 {
        cfg.eta2 = parse_eta2("eta2", e)?;
    }
    if let Some(t) = common.t0 {
        cfg.t0 = t;
    }
    if let Some(b) = common.beta {
        cfg.beta = b;
    }
    if let Some(c) = common.cfg {
        cfg.cfg_scale = c;
    }
    let seed = cfg.resolve_seed(common.seed)?;
    Ok((cfg, seed))
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn out_dir(flag: Option<PathBuf>, cfg: &AppConfig) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let (cfg, seed) = load_config(&args.common)?;
    let pipeline_cfg = cfg.pipeline(seed);
    pipeline_cfg.validate_full(cfg.f).map_err(config_err)?;
    let schedule = pipeline_cfg.noise_schedule::<f32>().map_err(config_err)?;
    let denoiser = AnalyticGaussianDenoiser::isotropic(
        cfg.prior_mean as f32,
        cfg.prior_sigma2 as f32,
        schedule,
    )
    .map_err(config_err)?;
    let autoencoder = OrthogonalPatchAutoencoder::<f32>::new(cfg.f, cfg.latent_channels, RngSeed(seed))
        .map_err(config_err)?;

    let out = generate(&pipeline_cfg, &denoiser, &autoencoder).map_err(runtime_err)?;

    let dir = out_dir(args.out, &cfg);
    std::fs::create_dir_all(&dir).map_err(runtime_err)?;
    let png = dir.join("output.png");
    let tf32 = dir.join("output.tf32");
    io::write_png(&png, &out.image).map_err(runtime_err)?;
    io::write_tf32(&tf32, &out.image).map_err(runtime_err)?;
    println!("wrote {}", png.display());
    println!("wrote {}", tf32.display());
    if args.trace {
        let trace = dir.join("trace.csv");
        std::fs::write(&trace, out.trace.to_csv()).map_err(runtime_err)?;
        println!("wrote {}", trace.display());
    }
    Ok(())
}

fn cmd_schedule_dump(common: CommonArgs) -> Result<()> {
    let (cfg, _) = load_config(&common)?;
    let schedule =
        GuidanceSchedule::<f64>::build(cfg.gamma, cfg.eta1, cfg.beta, cfg.t0).map_err(config_err)?;
    print!("{}", schedule.to_csv());
    Ok(())
}

fn cmd_plan_dump(common: CommonArgs) -> Result<()> {
    let (cfg, _) = load_config(&common)?;
    let plan =
        StagePlan::build(cfg.train, cfg.target, cfg.t0, &cfg.eta2, cfg.f).map_err(config_err)?;
    print!("{}", plan.to_csv());
    Ok(())
}

fn load_corpus(dir: &std::path::Path) -> Result<Vec<(String, TensorF32)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read corpus dir {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    let mut corpus = Vec::with_capacity(paths.len());
    for path in paths {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let image = io::read_png(&path).map_err(runtime_err)?;
        corpus.push((id, image));
    }
    Ok(corpus)
}

fn cmd_pilot(args: PilotArgs) -> Result<()> {
    let (cfg, seed) = load_config(&args.common)?;
    if args.r == 0 {
        return Err(CliError::Config("`r`: must be >= 1".into()));
    }
    let corpus = match (&args.synthetic, &args.corpus, &cfg.corpus_dir) {
        (Some(spec), _, _) => {
            let (count, corpus_seed) = (spec[0] as usize, spec[1]);
            synthetic_corpus::<f32>(count, 128, 128, RngSeed(corpus_seed))
        }
        (None, Some(dir), _) | (None, None, Some(dir)) => load_corpus(dir)?,
        (None, None, None) => {
            return Err(CliError::Config(
                "`corpus`: pass --corpus DIR, --synthetic N SEED, or set corpus_dir".into(),
            ))
        }
    };
    if corpus.is_empty() {
        return Err(CliError::Config("`corpus`: no PNG images found".into()));
    }
    let autoencoder = OrthogonalPatchAutoencoder::<f32>::new(cfg.f, cfg.latent_channels, RngSeed(seed))
        .map_err(config_err)?;
    // image sizes must split evenly through downsampling and encoding
    for (id, image) in &corpus {
        if image.height() % (args.r * cfg.f) != 0 || image.width() % (args.r * cfg.f) != 0 {
            return Err(CliError::Config(format!(
                "`corpus`: image `{id}` is {}x{}, not divisible by r*f = {}",
                image.height(),
                image.width(),
                args.r * cfg.f
            )));
        }
    }

    let (pix, lat) = run_pilot_study(&corpus, &autoencoder, args.r, args.jobs).map_err(runtime_err)?;

    let dir = out_dir(args.out, &cfg);
    std::fs::create_dir_all(&dir).map_err(runtime_err)?;
    let report = dir.join("report.csv");
    std::fs::write(&report, pilot_csv(&pix, &lat)).map_err(runtime_err)?;
    println!("wrote {} ({} images, r={})", report.display(), corpus.len(), args.r);
    println!(
        "pix: mean psnr {} dB, mean ssim {}",
        pix.mean_psnr_db(),
        pix.mean_ssim()
    );
    println!(
        "lat: mean psnr {} dB, mean ssim {}",
        lat.mean_psnr_db(),
        lat.mean_ssim()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::ScheduleDump(common) => cmd_schedule_dump(common),
        Command::PlanDump(common) => cmd_plan_dump(common),
        Command::Pilot(args) => cmd_pilot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
