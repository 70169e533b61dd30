//! `snn-unwrap`: generate scenes, train and run the spiking unwrapper, and
//! report accuracy and energy. Every command writes into
//! `<out>/<command>-<config hash>` and prints that directory.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{Engine, Mode, Profile, RunConfig, Shape};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<snn_unwrap::Error> for CliError {
    fn from(e: snn_unwrap::Error) -> Self {
        use snn_unwrap::Error as E;
        match e {
            E::InvalidParams(_) | E::InvalidSpec(_) => CliError::Config(e.to_string()),
            E::Io(_) | E::Format(_) => CliError::Io(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "snn-unwrap", version, about = "Spiking-neural-network phase unwrapping")]
struct Cli {
    /// TOML config; every key is optional and unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for scenes, network initialisation and training order [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Unwrapping engine [default: snn].
    #[arg(long, global = true, value_enum)]
    engine: Option<Engine>,
    /// Inference mode of the snn engine [default: one_shot].
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    shape: Option<Shape>,
    /// Square grid size; overridden per axis by --width/--height.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    slope: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    slope_max: Option<f64>,
    /// Coherence level γ in [0, 1].
    #[arg(long)]
    coherence: Option<f64>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Number of scenes.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesise scenes: absolute, wrapped, coherence and true wrap-count rasters plus a manifest.
    Gen(GenArgs),
    /// Spike-encode a scene and dump the trains as CSV.
    Encode {
        /// Scene directory written by `gen`.
        #[arg(long)]
        scene: PathBuf,
    },
    /// Train the feedforward weights on a `gen` dataset.
    Train {
        /// `manifest.json` of a `gen` run, or the run directory.
        #[arg(long)]
        dataset: PathBuf,
        /// Total epochs [default: learn.epochs].
        #[arg(long)]
        epochs: Option<u32>,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Unwrap one scene.
    Unwrap {
        #[arg(long)]
        scene: PathBuf,
        /// Trained checkpoint; an untrained network is built from the seed otherwise.
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Score a predicted wrap-count raster against a scene's truth.
    Eval {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Merge the metrics and energy artifacts of an `unwrap` run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let help = format!("Config defaults (TOML):\n\n{}", RunConfig::default_toml());
    let matches = Cli::command().after_long_help(help).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(e) = cli.engine {
        cfg.engine = e;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    cfg.learn.rng_seed = cfg.seed;
    let ctx = commands::Context { out: cli.out };
    match cli.command {
        Command::Gen(args) => {
            apply_gen_args(&mut cfg, &args);
            cfg.validate()?;
            commands::gen(&ctx, &cfg)
        }
        Command::Encode { scene } => {
            cfg.validate()?;
            commands::encode(&ctx, &cfg, &scene)
        }
        Command::Train { dataset, epochs, resume } => {
            if let Some(e) = epochs {
                cfg.learn.epochs = e;
            }
            cfg.validate()?;
            commands::train(&ctx, &cfg, &dataset, resume.as_deref())
        }
        Command::Unwrap { scene, network } => {
            cfg.validate()?;
            commands::unwrap(&ctx, &cfg, &scene, network.as_deref())
        }
        Command::Eval { scene, pred } => {
            cfg.validate()?;
            commands::eval(&ctx, &cfg, &scene, &pred)
        }
        Command::Report { run } => {
            cfg.validate()?;
            commands::report(&ctx, &cfg, &run)
        }
    }
}

fn apply_gen_args(cfg: &mut RunConfig, a: &GenArgs) {
    let s = &mut cfg.scene;
    if let Some(v) = a.shape {
        s.shape = v;
    }
    if let Some(n) = a.size {
        s.width = n;
        s.height = n;
    }
    if let Some(v) = a.width {
        s.width = v;
    }
    if let Some(v) = a.height {
        s.height = v;
    }
    if let Some(v) = a.amplitude {
        s.amplitude = v;
    }
    if let Some(v) = a.slope {
        s.ramp_slope = v;
    }
    if a.slope_max.is_some() {
        s.slope_max = a.slope_max;
    }
    if let Some(v) = a.coherence {
        s.coherence_level = v;
    }
    if let Some(v) = a.profile {
        s.coherence_profile = v;
    }
    if let Some(v) = a.count {
        s.count = v;
    }
}
