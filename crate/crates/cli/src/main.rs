use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod bench;
mod commands;
mod config;

/// A user-facing validation failure (exit code 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(name = "greenrec", version, about = "Greenness-aware recommender benchmark toolkit")]
pub struct Cli {
    /// Cap on worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Seed used wherever a command needs one and none is given.
    #[arg(long, global = true, env = "GREENREC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a ratings CSV and write it back in the canonical layout.
    Ingest(IngestArgs),
    /// Apply the item/user pre-filter to an interaction CSV.
    Prefilter(PrefilterArgs),
    /// Write train/validation/test split manifests.
    Split(SplitArgs),
    /// Generate a synthetic interaction and greenness dataset.
    Synth(SynthArgs),
    /// Grid-search one algorithm on a split and save the best model.
    Train(TrainArgs),
    /// Score a saved model on a split's test interactions.
    Evaluate(EvalArgs),
    /// Rerank a saved model's test lists over a range of α.
    Sweep(SweepArgs),
    /// Run the whole pipeline from a config file.
    Bench(BenchArgs),
    /// CO₂-eq and greenness utilities.
    #[command(subcommand)]
    Footprint(FootprintCommand),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "user_id")]
    pub user_col: String,
    #[arg(long, default_value = "item_id")]
    pub item_col: String,
    #[arg(long, default_value = "rating")]
    pub rating_col: String,
    /// Empty string disables the date column.
    #[arg(long, default_value = "date")]
    pub date_col: String,
    #[arg(long)]
    pub skip_bad_rows: bool,
}

#[derive(Debug, Args)]
pub struct PrefilterArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub min_item_ratings: usize,
    #[arg(long, default_value_t = 20.0)]
    pub min_user_mean: f64,
    /// Keep only items listed in this greenness CSV.
    #[arg(long)]
    pub greenness: Option<PathBuf>,
    /// Where to write the per-step removal report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// train,validation,test
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub ratios: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "recipe-like")]
    pub preset: String,
    /// JSON file of generator parameters; overrides the preset.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitInput {
    /// Interaction CSV the split was made from.
    #[arg(long)]
    pub data: PathBuf,
    /// Split manifest CSV; its sidecar is the same path with a .json extension.
    #[arg(long)]
    pub split: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: SplitInput,
    #[arg(long)]
    pub algo: String,
    /// Grid preset name (default, quick) or a JSON/TOML grid file.
    #[arg(long, default_value = "default")]
    pub grid: String,
    #[arg(long, default_value_t = 10)]
    pub metric_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GreennessInput {
    /// `item_id,co2_kg[,greenness]` CSV.
    #[arg(long)]
    pub greenness: PathBuf,
    /// Recompute greenness from CO₂-eq even when a greenness column exists.
    #[arg(long)]
    pub recompute: bool,
    #[arg(long)]
    pub fixed_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: SplitInput,
    #[command(flatten)]
    pub greenness: GreennessInput,
    #[arg(long, default_value = "10,20,50")]
    pub ks: String,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: SplitInput,
    #[command(flatten)]
    pub greenness: GreennessInput,
    /// `start:stop:step` or a comma list.
    #[arg(long, default_value = "0:1:0.1")]
    pub alphas: String,
    #[arg(long, default_value = "10,20,50")]
    pub ks: String,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Comma-separated algorithm tags.
    #[arg(long)]
    pub algorithms: Option<String>,
    #[arg(long)]
    pub n_splits: Option<usize>,
    /// Grid preset name.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub alphas: Option<String>,
    #[arg(long)]
    pub ks: Option<String>,
    /// Synthetic preset; replaces the configured data source.
    #[arg(long)]
    pub synth: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum FootprintCommand {
    /// Print the volume-to-gram conversion table.
    Table,
    /// Convert an ingredient quantity to grams.
    Convert {
        #[arg(long)]
        category: String,
        #[arg(long)]
        unit: String,
        #[arg(long)]
        amount: f64,
    },
    /// Greenness of CO₂-eq values (kg), calibrated over the values given.
    Greenness {
        #[arg(required = true)]
        co2_kg: Vec<f64>,
        /// Use a fixed scale instead of calibrating.
        #[arg(long)]
        fixed_scale: Option<f64>,
    },
    /// CO₂-eq of a recipe from an ingredient list and emission factors.
    Recipe {
        /// `ingredient,kg_co2_per_kg` CSV.
        #[arg(long)]
        factors: PathBuf,
        /// `ingredient,amount,unit,category` CSV.
        #[arg(long)]
        ingredients: PathBuf,
        #[arg(long, default_value_t = greenrec::footprint::DEFAULT_THRESHOLD_G)]
        threshold_g: f64,
    },
}

/// 1 for bad input or configuration, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<greenrec::Error>() {
            if matches!(
                e,
                greenrec::Error::InvalidParameter(_) | greenrec::Error::Domain(_) | greenrec::Error::Conversion { .. }
            ) {
                return 1;
            }
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
