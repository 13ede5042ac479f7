use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::workflow::{self, Mode};

#[derive(Debug, Parser)]
#[command(
    name = "geo-orbit",
    version,
    about = "Lane geometry from vehicle trajectories"
)]
pub struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `paths.output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write scene specs, tracks and reference lanes for the benchmark.
    Generate {
        /// Only this scene id.
        #[arg(long)]
        scene: Option<String>,
    },
    /// Detect lanes in one scene.
    Detect {
        /// Tracks file (.jsonl), scene spec (.json) or built-in scene id.
        #[arg(long)]
        scene: String,
        /// Fixed detection parameters (JSON).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Predictor checkpoint; parameters are predicted from the scene.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a detected lane model against a reference.
    Eval {
        #[arg(long)]
        detected: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Train one model variant on the configured scenes.
    Train {
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Compare every trained variant found in the output directory.
    Report,
}

pub fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Runs the command and returns what should go to stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    let cfg = load_config(cli)?;
    let out = workflow::output_dir(&cfg, cli.out.as_deref());
    let mut msg = String::new();
    match &cli.command {
        Command::Generate { scene } => {
            for id in workflow::cmd_generate(&cfg, scene.as_deref(), &out)? {
                let _ = writeln!(msg, "wrote {id}");
            }
        }
        Command::Detect {
            scene,
            params,
            checkpoint,
        } => {
            let loaded = workflow::load_scene(&cfg, scene)?;
            let source = workflow::param_source(&cfg, params.as_deref(), checkpoint.as_deref())?;
            let d = workflow::cmd_detect(&cfg, &loaded, &source, &out)?;
            let _ = writeln!(
                msg,
                "{}: {} lanes in {} direction groups",
                d.model.scene_id(),
                d.model.lane_count(),
                d.model.lane_count_per_group().len()
            );
            let _ = writeln!(msg, "wrote {}", d.lanes_path.display());
            let _ = writeln!(msg, "wrote {}", d.geojson_path.display());
        }
        Command::Eval {
            detected,
            reference,
        } => {
            msg = workflow::cmd_eval(&cfg, detected, reference, &out)?;
        }
        Command::Train { mode } => {
            let s = workflow::cmd_train(&cfg, *mode, &out)?;
            let _ = writeln!(
                msg,
                "{}: {} clients, final param loss {:.4} (std {:.4}), {} bytes sent",
                mode.as_str(),
                s.clients.len(),
                s.final_mean_param_loss,
                s.final_std_param_loss,
                s.comm.total_bytes
            );
        }
        Command::Report => {
            msg = workflow::cmd_report(&cfg, &out)?.1;
        }
    }
    Ok(msg)
}
