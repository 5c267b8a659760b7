//! Run configuration: defaults, then a JSON config file, then environment
//! variables and flags (clap resolves those two, flags first).

use std::path::{Path, PathBuf};

use clap::Args;
use hawkes_cftp::ModelParams;
use serde::Deserialize;

use crate::Failure;

pub const DEFAULT_REPLICATES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_BUDGET: u64 = 1_000_000;
pub const DEFAULT_MAX_EXHAUSTED: f64 = 0.01;
pub const DEFAULT_OUT: &str = "out";

/// Flags shared by every workflow.
#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// JSON file with any of the run settings; flags and env vars win over it.
    #[arg(long, env = "HAWKES_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "HAWKES_BETA_MIN")]
    pub beta_min: Option<f64>,
    #[arg(long, env = "HAWKES_BETA_MAX")]
    pub beta_max: Option<f64>,
    /// Interaction weight.
    #[arg(long = "w", env = "HAWKES_W")]
    pub w: Option<f64>,
    /// Decay exponent of the interaction kernel.
    #[arg(long, env = "HAWKES_LAMBDA")]
    pub lambda: Option<f64>,
    /// Interaction range on the lattice.
    #[arg(long, env = "HAWKES_RANGE")]
    pub range: Option<u32>,
    /// Master seed; replicate k always uses stream k of it.
    #[arg(long, env = "HAWKES_SEED")]
    pub seed: Option<u64>,
    /// Size of the worker pool (default: one per core).
    #[arg(long, env = "HAWKES_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, env = "HAWKES_OUT")]
    pub out: Option<PathBuf>,
}

/// Contents of `--config`. Every field is optional.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    #[serde(rename = "W")]
    pub w: Option<f64>,
    pub lambda: Option<f64>,
    pub range: Option<u32>,
    pub replicates: Option<u64>,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub max_exhausted_fraction: Option<f64>,
    pub grid: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("config: cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("config: {}: {e}", path.display())))
    }
}

/// Settings every workflow needs after merging all sources.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: ModelParams,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

pub fn resolve(args: &CommonArgs, file: &FileConfig) -> Result<Resolved, Failure> {
    let base = ModelParams::default();
    let params = ModelParams {
        beta_min: args.beta_min.or(file.beta_min).unwrap_or(base.beta_min),
        beta_max: args.beta_max.or(file.beta_max).unwrap_or(base.beta_max),
        w: args.w.or(file.w).unwrap_or(base.w),
        lambda: args.lambda.or(file.lambda).unwrap_or(base.lambda),
        range: args.range.or(file.range).unwrap_or(base.range),
    };
    // Fail on the model before anything is simulated or written.
    params.build().map_err(Failure::from)?;

    let workers = args.workers.or(file.workers);
    if workers == Some(0) {
        return Err(Failure::field("workers", "must be at least 1"));
    }
    Ok(Resolved {
        params,
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        workers,
        out: args
            .out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    })
}

pub fn positive_count(field: &str, value: u64) -> Result<u64, Failure> {
    if value == 0 {
        return Err(Failure::field(field, "must be at least 1"));
    }
    Ok(value)
}

/// Parses a comma-separated list of deltas.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Failure::field("grid", format!("`{s}` is not a number")))
        })
        .collect()
}
