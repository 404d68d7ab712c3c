use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gsboost::model::Precision;
use gsboost::run::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "gsboost", version, about = "Search for Goethals-Seidel Hadamard matrices")]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "GSBOOST_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the generation loop.
    Run(RunArgs),
    /// Check arrays for the Hadamard property.
    Verify {
        /// Array file, or `-` for stdin.
        file: PathBuf,
    },
    /// Reduce arrays to canonical forms and count duplicates.
    Canon {
        file: PathBuf,
        /// Write canonical arrays here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write `index,count` rows here.
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Count Hadamard arrays of small orders exhaustively.
    Enumerate {
        /// Orders to enumerate (repeatable).
        #[arg(long = "n", required = true, num_args = 1..)]
        n: Vec<usize>,
        /// Also write the CSV report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write every Hadamard array found (canonical forms, one file per order
        /// as `<prefix>-<n>.txt`).
        #[arg(long)]
        arrays: Option<PathBuf>,
    },
    /// Split a run's statistics into per-series CSV files.
    Stats {
        dir: PathBuf,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_sums(s: &str) -> Result<[u32; 4], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected four comma-separated values, got {s:?}"));
    }
    let mut out = [0u32; 4];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("{p:?} is not a non-negative integer"))?;
    }
    Ok(out)
}

/// Every flag overrides the config file; unset flags fall back to the
/// `GSBOOST_*` environment variable, then the file, then the default.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// TOML file with any RunConfig fields.
    #[arg(long, env = "GSBOOST_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "GSBOOST_OUT", default_value = "gsboost-run")]
    pub out: PathBuf,
    /// Continue from a checkpoint; only --generations may change the run.
    #[arg(long, env = "GSBOOST_RESUME")]
    pub resume: Option<PathBuf>,

    #[arg(long, env = "GSBOOST_N")]
    pub n: Option<usize>,
    #[arg(long, env = "GSBOOST_SAMPLE_SIZE")]
    pub sample_size: Option<usize>,
    #[arg(long, env = "GSBOOST_TRAINING_SIZE")]
    pub training_size: Option<usize>,
    #[arg(long, env = "GSBOOST_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "GSBOOST_TRAINING_STEPS")]
    pub training_steps: Option<usize>,
    #[arg(long, env = "GSBOOST_TEMPERATURE")]
    pub temperature: Option<f64>,
    #[arg(long, env = "GSBOOST_NUM_IMPROVE")]
    pub num_improve: Option<usize>,
    /// Fixed absolute segment sums, e.g. 1,5,5,11.
    #[arg(long, env = "GSBOOST_SEGMENT_SUMS", value_parser = parse_sums)]
    pub segment_sums: Option<[u32; 4]>,
    #[arg(long, env = "GSBOOST_STACKING")]
    pub stacking: Option<u32>,
    #[arg(long, env = "GSBOOST_N_LAYER")]
    pub n_layer: Option<usize>,
    #[arg(long, env = "GSBOOST_N_EMBD")]
    pub n_embd: Option<usize>,
    #[arg(long, env = "GSBOOST_N_HEAD")]
    pub n_head: Option<usize>,
    #[arg(long, env = "GSBOOST_TRANSFORMER_USES_SCORE", num_args = 0..=1, default_missing_value = "true")]
    pub transformer_uses_score: Option<bool>,
    #[arg(long, env = "GSBOOST_GENERATIONS")]
    pub generations: Option<usize>,
    #[arg(long, env = "GSBOOST_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "GSBOOST_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "GSBOOST_PRECISION")]
    pub precision: Option<Precision>,
    /// Record elapsed seconds in the statistics (false gives reproducible files).
    #[arg(long, env = "GSBOOST_WALL_CLOCK", num_args = 0..=1, default_missing_value = "true")]
    pub wall_clock: Option<bool>,
}

impl RunArgs {
    /// Applies the flags that were given on top of `base`.
    pub fn overlay(&self, base: RunConfig) -> RunConfig {
        let mut c = base;
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { c.$field = v; })* };
        }
        set!(n, sample_size, training_size, learning_rate, training_steps, temperature, num_improve, stacking, n_layer, n_embd, n_head, transformer_uses_score, generations, seed, batch_size, precision, wall_clock);
        if self.segment_sums.is_some() {
            c.segment_sums = self.segment_sums;
        }
        c
    }
}
