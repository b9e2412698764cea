//! Command-line front end.
//!
//! All behavior lives in [`crate::pipeline`]; this module only parses
//! arguments, loads the config file, applies the handful of flag
//! overrides, and maps errors to exit codes. Exit codes follow the error
//! categories: 2 for configuration problems, 3 for unreadable or malformed
//! data, 4 for backend failures, 5 for statistically degenerate inputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::pipeline::{
    cmd_agreement, cmd_associate, cmd_consolidate, cmd_discover, cmd_evaluate, cmd_score,
    cmd_stability, cmd_synth, PipelineConfig,
};
use crate::Result;

#[derive(Parser)]
#[command(
    name = "rubric",
    version,
    about = "Discover, apply, and validate an interpretable scoring rubric over a text corpus"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Pipeline configuration file (TOML); defaults apply when omitted
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the response cache directory
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Override the output directory
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Override the number of concurrent backend requests
    #[arg(long, global = true, value_name = "N")]
    parallelism: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus with known planted structure
    Synth {
        /// Generator parameters (JSON); defaults apply when omitted
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        /// Generator seed
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Brainstorm candidate criteria with independent high-temperature agents
    Discover {
        /// Corpus file (.jsonl or .csv)
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
    },
    /// Cluster candidate criteria by score correlation and consolidate each
    /// cluster into one rubric dimension
    Consolidate {
        /// Agent runs from `discover`
        #[arg(long, value_name = "FILE")]
        discovery: PathBuf,
        /// Corpus file (.jsonl or .csv)
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Reuse a candidate score matrix instead of scoring again
        #[arg(long, value_name = "FILE")]
        candidate_scores: Option<PathBuf>,
        /// Smallest cluster count to consider
        #[arg(long, value_name = "K")]
        k_min: Option<usize>,
        /// Largest cluster count to consider
        #[arg(long, value_name = "K")]
        k_max: Option<usize>,
    },
    /// Score a corpus against a rubric with the deterministic judge
    Score {
        /// Rubric from `consolidate`
        #[arg(long, value_name = "FILE")]
        rubric: PathBuf,
        /// Corpus file (.jsonl or .csv)
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Name for this scoring replicate (cache entries and files)
        #[arg(long, default_value = "run1", value_name = "TAG")]
        replicate_tag: String,
    },
    /// Cross-validate how well rubric scores predict the outcomes
    Evaluate {
        /// Score matrix from `score`
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
        /// Corpus file with outcome labels
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
    },
    /// Chance-corrected agreement between score runs and human raters
    Agreement {
        /// First score matrix
        #[arg(long, value_name = "FILE")]
        run1: PathBuf,
        /// Second score matrix (an independent replicate)
        #[arg(long, value_name = "FILE")]
        run2: PathBuf,
        /// Human ratings CSV: instance_id,rater_id,then one column per dimension
        #[arg(long, value_name = "FILE")]
        human: Option<PathBuf>,
    },
    /// Estimate outcome rate ratios per dimension with a mixed model
    Associate {
        /// Score matrix from `score`
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
        /// Corpus file with outcome labels
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Outcome to model
        #[arg(long, value_name = "NAME")]
        outcome: String,
        /// Standardize scores so ratios are per standard deviation
        #[arg(long)]
        standardize: bool,
    },
    /// Check rubric stability: cross-seed drift and vocabulary coverage
    Stability {
        /// Rubric file; repeat the flag to compare rubrics across seeds
        #[arg(long, required = true, value_name = "FILE")]
        rubric: Vec<PathBuf>,
        /// Agent runs to measure coverage against (defaults to the file
        /// recorded in the first rubric's manifest)
        #[arg(long, value_name = "FILE")]
        discovery: Option<PathBuf>,
        /// Report coverage at thresholds 0.1 through 1.0
        #[arg(long)]
        sweep: bool,
    },
}

fn load_config(global: &GlobalArgs) -> Result<PipelineConfig> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &global.cache_dir {
        config.run.cache_dir = dir.clone();
    }
    if let Some(dir) = &global.output_dir {
        config.run.output_dir = dir.clone();
    }
    if let Some(n) = global.parallelism {
        config.run.parallelism = n;
    }
    config.validate()?;
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut config = load_config(&cli.global)?;
    let paths = match cli.command {
        Command::Synth { spec, seed } => {
            cmd_synth(&config, spec.as_deref(), seed)?.paths().into_iter().map(Into::into).collect()
        }
        Command::Discover { corpus } => {
            cmd_discover(&config, &corpus)?.paths().into_iter().map(Into::into).collect()
        }
        Command::Consolidate { discovery, corpus, candidate_scores, k_min, k_max } => {
            if k_min.is_some() {
                config.consolidation.k_min = k_min;
            }
            if k_max.is_some() {
                config.consolidation.k_max = k_max;
            }
            config.validate()?;
            cmd_consolidate(&config, &discovery, &corpus, candidate_scores.as_deref())?
                .paths()
                .into_iter()
                .map(Into::into)
                .collect()
        }
        Command::Score { rubric, corpus, replicate_tag } => {
            cmd_score(&config, &rubric, &corpus, &replicate_tag)?
                .paths()
                .into_iter()
                .map(Into::into)
                .collect()
        }
        Command::Evaluate { scores, corpus } => {
            cmd_evaluate(&config, &scores, &corpus)?.paths().into_iter().map(Into::into).collect()
        }
        Command::Agreement { run1, run2, human } => {
            cmd_agreement(&config, &run1, &run2, human.as_deref())?
                .paths()
                .into_iter()
                .map(Into::into)
                .collect()
        }
        Command::Associate { scores, corpus, outcome, standardize } => {
            cmd_associate(&config, &scores, &corpus, &outcome, standardize)?
                .paths()
                .into_iter()
                .map(Into::into)
                .collect()
        }
        Command::Stability { rubric, discovery, sweep } => {
            cmd_stability(&config, &rubric, discovery.as_deref(), sweep)?
                .paths()
                .into_iter()
                .map(Into::into)
                .collect()
        }
    };
    Ok(paths)
}

/// Parses arguments, runs the chosen command, and returns the process exit
/// code. Kept as a library function so the binary stays a one-line shim.
pub fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and are not errors.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(paths) => {
            for path in paths {
                println!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("rubric: {e}");
            e.category().exit_code()
        }
    }
}
