//! Command-line driver for the reduced-basis cavity workbench.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rbflow::config::ExperimentConfig;
use rbflow::Error;
use rbflow::experiment::{self, RunSummary};
use rbflow::reduction::ReducedModel;
use rbflow::{diag, io};

#[derive(Parser)]
#[command(name = "rbflow", about = "Reduced-basis workbench for the parametrized lid-driven cavity", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the reduced model and write the archive.
    Offline { config: PathBuf },
    /// Run the online error sweep against an existing archive.
    Online { archive: PathBuf, config: PathBuf },
    /// Full pipeline: offline training plus the online error sweep.
    Errors { config: PathBuf },
    /// Inf-sup diagnostics at the online parameters.
    Infsup { config: PathBuf },
    /// Online sweep over the configured time-step list.
    DtSweep { config: PathBuf },
}

fn load_or_train(cfg: &ExperimentConfig) -> Result<ReducedModel, Error> {
    let archive = cfg.output_dir.join("archive");
    if archive.join("manifest.json").exists() {
        io::read_model(&archive)
    } else {
        Ok(experiment::offline_to_disk(cfg)?.model)
    }
}

fn finish(cfg: &ExperimentConfig, summary: &RunSummary) -> Result<bool, Error> {
    experiment::write_manifest(cfg, summary)?;
    for r in &summary.records {
        if r.status != "ok" {
            eprintln!(
                "failed: stage={} strategy={} N={} dt={} mu=({},{}): {}",
                r.stage, r.strategy, r.n, r.dt, r.mu1, r.mu2, r.status
            );
        }
    }
    println!(
        "{} rows written to {}; {} of {} combinations succeeded",
        summary.rows,
        cfg.output_dir.display(),
        summary.records.iter().filter(|r| r.status == "ok").count(),
        summary.records.len()
    );
    Ok(summary.all_ok())
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Offline { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let off = experiment::offline_to_disk(&cfg)?;
            println!(
                "archive written to {}: N_u={} N_s={} N_p={}",
                cfg.output_dir.join("archive").display(),
                off.model.n_u,
                off.model.n_s,
                off.model.n_p
            );
            Ok(true)
        }
        Command::Online { archive, config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let model = io::read_model(&archive)?;
            let mut summary = RunSummary::default();
            experiment::run_errors(&cfg, &model, &mut summary)?;
            finish(&cfg, &summary)
        }
        Command::Errors { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = experiment::run_experiment(&cfg)?;
            finish(&cfg, &summary)
        }
        Command::Infsup { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let model = load_or_train(&cfg)?;
            let mut summary = RunSummary::default();
            experiment::run_infsup(&cfg, &model, &mut summary)?;
            finish(&cfg, &summary)
        }
        Command::DtSweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let h = experiment::build_problem(&cfg, cfg.dt)?.mesh.h;
            for &dt in &cfg.dt_list {
                let r = diag::dt_stability_flag(cfg.delta.max(f64::MIN_POSITIVE), h, dt);
                println!(
                    "dt={dt}: sufficient condition dt > delta*h^2 = {:.3e}: {}; \
                     conditional ratio dt/(delta*h^2) = {:.3e} (>= 1/delta: {})",
                    r.threshold,
                    if r.ok { "ok" } else { "WARN" },
                    r.ratio,
                    if r.secondary_ok { "ok" } else { "flagged" },
                );
            }
            let model = load_or_train(&cfg)?;
            let mut summary = RunSummary::default();
            experiment::run_errors(&cfg, &model, &mut summary)?;
            finish(&cfg, &summary)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some combinations failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
