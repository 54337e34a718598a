//! Thin command-line front end; all logic lives in the library.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use aee::cli::{self, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "aee", about = "Abstractive event extraction pipelines", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Bypass event detection and use gold event types.
    #[arg(long)]
    gold_type: bool,
    /// Skip cache reads and always call the backends.
    #[arg(long)]
    no_cache: bool,
    /// Abort corpus loading on the first invalid record.
    #[arg(long)]
    strict: bool,
    /// Chat model name.
    #[arg(long)]
    model: Option<String>,
    /// Embedder spec: "hash:<dim>" or "http".
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    /// Scripted chat transcript file (deterministic mock backend).
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Directory with prompt template overrides.
    #[arg(long)]
    prompts_dir: Option<PathBuf>,
    /// Nominatim-compatible geocoding endpoint; omit for cache-only mode.
    #[arg(long)]
    geocoder_url: Option<String>,
    /// User-agent string sent to the geocoding service.
    #[arg(long)]
    geocoder_user_agent: Option<String>,
    /// Persistent geocoding cache file.
    #[arg(long)]
    geonorm_cache: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => cli::RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    config.$field = v;
                }
            };
            (opt $field:ident) => {
                if self.$field.is_some() {
                    config.$field = self.$field;
                }
            };
        }
        set!(codebook);
        set!(opt corpus);
        set!(opt entities);
        set!(opt index);
        set!(out);
        set!(opt cache_dir);
        set!(workers);
        set!(model);
        set!(embedder);
        set!(embed_model);
        set!(opt transcripts);
        set!(opt prompts_dir);
        set!(opt geocoder_url);
        set!(geocoder_user_agent);
        set!(opt geonorm_cache);
        if self.gold_type {
            config.gold_type = true;
        }
        if self.no_cache {
            config.no_cache = true;
        }
        if self.strict {
            config.strict = true;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the entity retrieval index.
    Index(ConfigArgs),
    /// Run event detection over the corpus.
    Detect(ConfigArgs),
    /// Run argument extraction under gold event types.
    Args(ConfigArgs),
    /// Run entity linking under gold event types.
    Link(ConfigArgs),
    /// Run the full pipeline: detection, then arguments and linking.
    E2e(ConfigArgs),
    /// Score a predictions file against the corpus gold annotations.
    Score {
        #[command(flatten)]
        config: ConfigArgs,
        /// Task to score: ed, aeae, ael, or e2e.
        #[arg(long)]
        task: String,
        /// Predictions JSONL file.
        #[arg(long)]
        pred: PathBuf,
    },
    /// Corpus statistics: counts, Hill numbers, majority classes.
    Stats(ConfigArgs),
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Index(args) => {
            let rt = cli::build_runtime(args.resolve()?)?;
            cli::cmd_index(&rt)?;
        }
        Command::Detect(args) => {
            let rt = cli::build_runtime(args.resolve()?)?;
            cli::cmd_run(&rt, Stage::Detect)?;
        }
        Command::Args(args) => {
            let rt = cli::build_runtime(args.resolve()?)?;
            cli::cmd_run(&rt, Stage::Args)?;
        }
        Command::Link(args) => {
            let rt = cli::build_runtime(args.resolve()?)?;
            cli::cmd_run(&rt, Stage::Link)?;
        }
        Command::E2e(args) => {
            let rt = cli::build_runtime(args.resolve()?)?;
            cli::cmd_run(&rt, Stage::E2e)?;
        }
        Command::Score { config, task, pred } => {
            let rt = cli::build_runtime(config.resolve()?)?;
            let report = cli::cmd_score(&rt, &task, &pred)?;
            println!("{}", serde_json::to_string_pretty(&report.to_json())?);
        }
        Command::Stats(args) => {
            let rt = cli::build_runtime(args.resolve()?)?;
            let stats = cli::cmd_stats(&rt)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
    }
    Ok(())
}
