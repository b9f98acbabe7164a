use crate::api::{handle_predict, PredictRequest};
use crate::server::{load_weights, serve, AppState, DEFAULT_WORKERS};
use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use framecast::eval::{evaluate_iterative, evaluate_single, report};
use framecast::infer::write_trace;
use framecast::model::{train, ModelConfig};
use framecast::synth::{build_dataset, Dataset, SynthConfig};
use serde::Deserialize;
use std::ffi::OsString;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "framecast", version, about = "Column layout prediction for floor plans")]
pub struct Cli {
    /// Overrides the dataset seed (gen) or the run seed (train).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with optional [synth] and [model] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Single,
    Iterative,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// CSV of per-epoch losses.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, env = "FRAMECAST_WEIGHTS")]
        weights: Option<PathBuf>,
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        /// Directory for summary.json, CSV series and plots.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the columns of one plan.
    Predict {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "FRAMECAST_WEIGHTS")]
        weights: Option<PathBuf>,
        /// Directory for per-iteration rasters and quad listing.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Serve the HTTP prediction API.
    Serve {
        #[arg(long, env = "FRAMECAST_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "FRAMECAST_WEIGHTS")]
        weights: Option<PathBuf>,
        /// Allowed CORS origin; any origin when omitted.
        #[arg(long, env = "FRAMECAST_CORS_ORIGIN")]
        cors_origin: Option<String>,
        #[arg(long, default_value_t = DEFAULT_WORKERS)]
        workers: usize,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    synth: SynthConfig,
    #[serde(default)]
    model: ModelConfig,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn require_weights(weights: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    weights.context("no weights given (use --weights or FRAMECAST_WEIGHTS)")
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Gen { out } => {
            if let Some(s) = cli.seed {
                cfg.synth.seed = s;
            }
            let ds = build_dataset(&cfg.synth)?;
            ds.write(&out)?;
            println!("wrote {} train / {} test records to {}", ds.train.len(), ds.test.len(), out.display());
        }
        Command::Train {
            data,
            out,
            epochs,
            history,
        } => {
            if let Some(s) = cli.seed {
                cfg.model.run_seed = s;
            }
            if let Some(e) = epochs {
                cfg.model.epochs = e;
            }
            let ds = Dataset::load(&data)?;
            if ds.config.quad_size != cfg.model.quad_size {
                bail!(
                    "dataset quad_size {} differs from model quad_size {}",
                    ds.config.quad_size,
                    cfg.model.quad_size
                );
            }
            let mut rows = String::from("epoch,train_loss,train_coord,train_types,val_loss\n");
            let outcome = train(&cfg.model, &ds.train, |s, _| {
                let val = s.val.map_or(String::new(), |v| v.total.to_string());
                rows.push_str(&format!("{},{},{},{},{}\n", s.epoch, s.train.total, s.train.coord, s.train.types, val));
                ControlFlow::Continue(())
            })?;
            outcome.model.save(&out)?;
            if let Some(h) = history {
                std::fs::write(&h, rows).with_context(|| format!("writing {}", h.display()))?;
            }
            println!("best epoch {}; weights written to {}", outcome.best_epoch, out.display());
        }
        Command::Eval {
            data,
            weights,
            protocol,
            out,
        } => {
            let (model, _) = load_weights(&require_weights(weights)?)?;
            let ds = Dataset::load(&data)?;
            let r = match protocol {
                ProtocolArg::Single => evaluate_single(&model, &ds.test)?,
                ProtocolArg::Iterative => evaluate_iterative(&model, &ds.test)?,
            };
            if let Some(dir) = out {
                report(&r, &dir)?;
            }
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &r)?;
            writeln!(stdout)?;
        }
        Command::Predict {
            input,
            out,
            weights,
            trace,
        } => {
            let (model, version) = load_weights(&require_weights(weights)?)?;
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let req: PredictRequest = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
            let (resp, result) = handle_predict(&model, &version, &req)?;
            write_json(&out, &resp)?;
            if let Some(dir) = trace {
                let building = crate::api::parse_building(&req)?;
                write_trace(&building, &result, &dir)?;
            }
        }
        Command::Serve {
            port,
            weights,
            cors_origin,
            workers,
        } => {
            let state = AppState::from_weights(&require_weights(weights)?, workers)?;
            log::info!("model version {}", state.model_version());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(state, port, cors_origin.as_deref()))?;
        }
    }
    Ok(())
}

/// Parses arguments and runs; returns the process exit code (0 success,
/// 2 usage error, 1 runtime error).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
