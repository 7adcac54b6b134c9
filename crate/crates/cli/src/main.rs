use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fusion_core::app::{self, ClassifyOptions, EvaluateOptions, FuseOptions, OutputOptions};
use fusion_core::config::RunConfig;
use fusion_core::fusion::StructureKind;
use fusion_core::{ErrorKind, FusionError};

/// Fuse high- and low-resolution satellite image sequences with a Kalman filter and smoother.
#[derive(Parser)]
#[command(name = "fusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the filter (and optionally the smoother) and write fused rasters.
    Fuse {
        #[command(flatten)]
        run: RunArgs,
        /// Covariance structure: diag, pixel, coarse or dense.
        #[arg(long)]
        structure: Option<StructureKind>,
        /// Also run the backward smoothing pass.
        #[arg(long)]
        smoother: bool,
    },
    /// Score fused rasters against a truth manifest.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Truth manifest; defaults to the config's data.truth.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Generate a synthetic scene with known ground truth.
    Synth {
        /// Scene spec (TOML); the built-in default scene if omitted.
        #[arg(long = "config")]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Dump the calibrated process-noise diagonal for every instant.
    CalibrateQ {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Classify fused rasters into water and land.
    Classify {
        #[command(flatten)]
        run: RunArgs,
        /// Manifest of rasters to classify; defaults to the fused manifest.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's data.output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace existing outputs.
    #[arg(long)]
    force: bool,
}

fn exit_code(e: &FusionError) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn run(cli: Cli) -> Result<(), FusionError> {
    match cli.command {
        Command::Fuse { run, structure, smoother } => {
            let cfg = RunConfig::load(&run.config)?;
            let s = app::cmd_fuse(&cfg, &FuseOptions { out: run.out, structure, smoother, force: run.force })?;
            println!(
                "fused {} instants into {} (smoothed: {}, dropped observations: {}, s_max: {})",
                s.instants,
                s.out.display(),
                s.smoothed,
                s.dropped,
                s.s_max
            );
        }
        Command::Evaluate { run, truth } => {
            let cfg = RunConfig::load(&run.config)?;
            let report = app::cmd_evaluate(&cfg, &EvaluateOptions { out: run.out, truth, force: run.force })?;
            for v in report.variants() {
                let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |x| format!("{x:.4}"));
                println!("{v}: mean held-out SAM {} deg, misclassified {} %", fmt(report.mean_held_out_sam(&v)), fmt(report.mean_held_out_miscls(&v)));
            }
        }
        Command::Synth { spec, out, seed, force } => {
            let mut scene = app::load_scene_spec(spec.as_deref())?;
            if let Some(s) = seed {
                scene.seed = s;
            }
            let s = app::cmd_synth(&scene, &out, force)?;
            println!("wrote {} acquisitions (seed {}); run config {}", s.acquisitions, s.spec.seed, s.config_path.display());
        }
        Command::CalibrateQ { run } => {
            let cfg = RunConfig::load(&run.config)?;
            let records = app::cmd_calibrate_q(&cfg, &OutputOptions { out: run.out, force: run.force })?;
            for r in &records {
                log::info!("k={} {} matched {} span {} d: q in [{:e}, {:e}]", r.instant, r.date, r.matched_date, r.window_span_days, r.min, r.max);
            }
            println!("wrote process noise for {} instants", records.len());
        }
        Command::Classify { run, input } => {
            let cfg = RunConfig::load(&run.config)?;
            let series = app::cmd_classify(&cfg, &ClassifyOptions { out: run.out, input, force: run.force })?;
            for (variant, date, f) in &series {
                println!("{variant} {date} {f:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
