//! `nvcav`: command-line pipelines for emitter-cavity coupling models.

mod pipelines;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nvcav::io::config::NV_DEVICE_CONFIG;
use nvcav::io::{parse_config, parse_config_str, OutputFormat, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "nvcav",
    version,
    about = "Emitter-cavity coupling pipelines for broadband color centers"
)]
struct Cli {
    /// Run configuration (TOML). Defaults to the built-in device parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format for result tables.
    #[arg(long, global = true, default_value = "csv", value_parser = parse_format)]
    format: OutputFormat,
    /// Seed for synthetic noise.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a sum of Lorentzians to an emission spectrum.
    FitSpectrum(DataArgs),
    /// Fit the three-level g² model to a correlation measurement.
    FitG2(DataArgs),
    /// Rate-model efficiencies and lifetime for the configured system.
    Rate,
    /// Master-equation emission for the configured system, checked against the rate model.
    Lindblad,
    /// Tuning spectrum over longitudinal modes and wavelengths.
    Tuning,
    /// Lifetime and efficiency against pure dephasing, plus wavelength scans.
    SweepDephasing,
    /// Saturated count rates at the configured and reference operating points.
    PredictRate,
    /// Projected source performance for a smaller, higher-finesse cavity.
    Project,
}

#[derive(Debug, Args, Default, Clone)]
pub struct DataArgs {
    /// Measured data CSV; synthetic data is generated when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Relative noise of the synthetic data.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: nvcav::Error| e.to_string())
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub seed: u64,
}

fn load(cli: &Cli) -> nvcav::Result<Context> {
    let cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => parse_config_str(
            NV_DEVICE_CONFIG,
            "nv-paper.cfg (built in)",
            &std::env::current_dir().unwrap_or_default(),
        )?,
    };
    let out = cli.out.clone().unwrap_or_else(|| cfg.resolve(&cfg.output_dir));
    Ok(Context {
        cfg,
        out,
        format: cli.format,
        seed: cli.seed,
    })
}

fn run(cli: Cli) -> nvcav::Result<()> {
    let ctx = load(&cli)?;
    match cli.command {
        Some(cmd) => dispatch(&ctx, cmd),
        None => {
            if ctx.cfg.pipelines.is_empty() {
                return Err(nvcav::Error::Invalid(
                    "no subcommand given and the config lists no pipelines".into(),
                ));
            }
            for name in &ctx.cfg.pipelines {
                log::info!("running {name}");
                dispatch(&ctx, by_name(name)?)?;
            }
            Ok(())
        }
    }
}

fn by_name(name: &str) -> nvcav::Result<Command> {
    Ok(match name {
        "fit-spectrum" => Command::FitSpectrum(DataArgs {
            noise: 0.02,
            ..Default::default()
        }),
        "fit-g2" => Command::FitG2(DataArgs {
            noise: 0.02,
            ..Default::default()
        }),
        "rate" => Command::Rate,
        "lindblad" => Command::Lindblad,
        "tuning" => Command::Tuning,
        "sweep-dephasing" => Command::SweepDephasing,
        "predict-rate" => Command::PredictRate,
        "project" => Command::Project,
        other => return Err(nvcav::Error::Invalid(format!("unknown pipeline {other:?}"))),
    })
}

fn dispatch(ctx: &Context, cmd: Command) -> nvcav::Result<()> {
    match cmd {
        Command::FitSpectrum(a) => pipelines::fit_spectrum(ctx, &a),
        Command::FitG2(a) => pipelines::fit_g2(ctx, &a),
        Command::Rate => pipelines::rate(ctx),
        Command::Lindblad => pipelines::lindblad(ctx),
        Command::Tuning => pipelines::tuning(ctx),
        Command::SweepDephasing => pipelines::sweep_dephasing(ctx),
        Command::PredictRate => pipelines::predict_rate(ctx),
        Command::Project => pipelines::project(ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
