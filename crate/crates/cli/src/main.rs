mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hawkes_cftp::backward::write_trace_csv;
use hawkes_cftp::forward::write_resolution_csv;
use hawkes_cftp::phase::write_clan_csv;
use hawkes_cftp::stats::write_summaries_csv;
use hawkes_cftp::{
    clan_termination_scan, delta_of, delta_scan, run_replicates, simulate_replicate, BackwardOptions, BranchingConfig,
    ModelParams, SimulatedSetRule, StatsReport,
};
use serde::Serialize;

use config::{positive_count, CommonArgs, FileConfig};

#[derive(Parser, Debug)]
#[command(
    name = "hawkes-cftp",
    version,
    about = "Perfect sampling of the stationary potential in an inhibitory Hawkes network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the stationary potential of neuron 0 and write summaries.csv,
    /// histograms.csv and report.json.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Extinction probability of the birth–death comparison process over a
    /// grid of deltas, written to phase.csv.
    #[command(allow_negative_numbers = true)]
    PhaseScan(PhaseArgs),
    /// Run a single replicate and dump its backward trace and forward
    /// resolutions.
    #[command(allow_negative_numbers = true)]
    Trace(TraceArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, env = "HAWKES_REPLICATES")]
    replicates: Option<u64>,
    /// Maximum number of backward steps per replicate.
    #[arg(long, env = "HAWKES_BUDGET")]
    budget: Option<u64>,
    /// Exit with status 3 when more replicates than this exhaust their budget.
    #[arg(long, env = "HAWKES_MAX_EXHAUSTED_FRACTION")]
    max_exhausted_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct PhaseArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated deltas, e.g. "0.25,0.5,1,2".
    #[arg(long, env = "HAWKES_GRID", allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, env = "HAWKES_REPLICATES")]
    replicates: Option<u64>,
    /// Time after which a surviving run is censored.
    #[arg(long, env = "HAWKES_HORIZON")]
    horizon: Option<f64>,
    /// Population at which a run is censored.
    #[arg(long, env = "HAWKES_CAP")]
    cap: Option<u64>,
    /// Also run this many backward passes per delta (beta_max, W, lambda and
    /// range taken from the model flags) and write clan_phase.csv.
    #[arg(long, env = "HAWKES_CLAN_RUNS", default_value_t = 0)]
    clan_runs: u64,
    /// Step budget of each backward pass in the clan scan.
    #[arg(long, env = "HAWKES_CLAN_BUDGET", default_value_t = 10_000)]
    clan_budget: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SetRule {
    Exact,
    KeepLeaver,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Replicate index, i.e. the stream of the master seed to use.
    #[arg(long, env = "HAWKES_REPLICATE", default_value_t = 0)]
    replicate: u64,
    #[arg(long, env = "HAWKES_BUDGET")]
    budget: Option<u64>,
    /// Bookkeeping of the simulated set in the backward pass.
    #[arg(long, value_enum, default_value_t = SetRule::Exact)]
    simulated_set: SetRule,
}

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Exhausted(String),
    Output(String),
    Internal(String),
}

impl Failure {
    pub fn field(field: &str, reason: impl std::fmt::Display) -> Self {
        Failure::Validation(format!("invalid value for `{field}`: {reason}"))
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Exhausted(_) => 3,
            Failure::Output(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Exhausted(m) | Failure::Output(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<hawkes_cftp::Error> for Failure {
    fn from(e: hawkes_cftp::Error) -> Self {
        match e {
            hawkes_cftp::Error::InvalidField { .. } | hawkes_cftp::Error::Domain(_) => {
                Failure::Validation(e.to_string())
            }
            other => Failure::Internal(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::PhaseScan(args) => phase_scan(args),
        Command::Trace(args) => trace(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::Internal(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Output(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut dyn Write) -> hawkes_cftp::Result<()>) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    let unwritable = |e: &dyn std::fmt::Display| Failure::Output(format!("cannot write {}: {e}", path.display()));
    let file = File::create(&path).map_err(|e| unwritable(&e))?;
    let mut out = BufWriter::new(file);
    body(&mut out).map_err(|e| unwritable(&e))?;
    out.flush().map_err(|e| unwritable(&e))?;
    Ok(path)
}

#[derive(Serialize)]
struct RunReport<'a> {
    params: &'a ModelParams,
    delta: f64,
    master_seed: u64,
    budget: u64,
    #[serde(flatten)]
    stats: &'a StatsReport,
    exhausted_fraction: f64,
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let run = config::resolve(&args.common, &file)?;
    let n = positive_count("replicates", args.replicates.or(file.replicates).unwrap_or(config::DEFAULT_REPLICATES))?;
    let budget = positive_count("budget", args.budget.or(file.budget).unwrap_or(config::DEFAULT_BUDGET))?;
    let threshold = args
        .max_exhausted_fraction
        .or(file.max_exhausted_fraction)
        .unwrap_or(config::DEFAULT_MAX_EXHAUSTED);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Failure::field("max_exhausted_fraction", format!("must lie in [0, 1], got {threshold}")));
    }
    let network = run.params.build()?;
    prepare_out(&run.out)?;

    let summaries = with_pool(run.workers, || run_replicates(&network, n, run.seed, budget))??;

    write_file(&run.out, "summaries.csv", |w| write_summaries_csv(&summaries, w))?;
    let terminated = summaries.iter().filter(|s| s.terminated()).count();
    if terminated == 0 {
        return Err(Failure::Exhausted(format!("all {n} replicates exhausted the budget of {budget} steps")));
    }
    let stats = StatsReport::from_summaries(&summaries, &network)?;
    write_file(&run.out, "histograms.csv", |w| stats.write_histograms_csv(w))?;
    let report = RunReport {
        params: &run.params,
        delta: delta_of(run.params.beta_min, run.params.beta_max)?,
        master_seed: run.seed,
        budget,
        stats: &stats,
        exhausted_fraction: stats.exhausted_fraction(),
    };
    write_file(&run.out, "report.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        Ok(writeln!(w)?)
    })?;

    println!(
        "{n} replicates, {} terminated; P(potential = 0) = {:.5} ± {:.5}; outputs in {}",
        stats.terminated,
        stats.zero_probability.estimate,
        stats.zero_probability.stderr,
        run.out.display()
    );
    if stats.exhausted_fraction() > threshold {
        return Err(Failure::Exhausted(format!(
            "{} of {n} replicates exhausted the budget (fraction {} > {threshold})",
            stats.budget_exhausted,
            stats.exhausted_fraction()
        )));
    }
    Ok(())
}

fn phase_scan(args: PhaseArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let run = config::resolve(&args.common, &file)?;
    let grid = match (&args.grid, &file.grid) {
        (Some(text), _) => config::parse_grid(text)?,
        (None, Some(g)) => g.clone(),
        (None, None) => return Err(Failure::field("grid", "is required")),
    };
    let mut template = BranchingConfig::new(1.0);
    template.replicates = positive_count(
        "replicates",
        args.replicates.or(file.replicates).unwrap_or(config::DEFAULT_REPLICATES),
    )?;
    if let Some(h) = args.horizon {
        template.horizon = h;
    }
    if let Some(c) = args.cap {
        template.cap = c;
    }
    // Validate everything, including the grid, before the output directory
    // is touched.
    if grid.is_empty() {
        return Err(Failure::field("grid", "must contain at least one delta"));
    }
    if let Some(bad) = grid.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Failure::field("grid", format!("deltas must be positive and finite, got {bad}")));
    }
    for &delta in &grid {
        BranchingConfig { delta, ..template }.validate()?;
    }
    if args.clan_runs > 0 {
        positive_count("clan_budget", args.clan_budget)?;
        for &delta in &grid {
            ModelParams {
                beta_min: delta * run.params.beta_max / (1.0 + delta),
                ..run.params.clone()
            }
            .build()?;
        }
    }
    prepare_out(&run.out)?;

    let (report, clan) = with_pool(run.workers, || -> hawkes_cftp::Result<_> {
        let report = delta_scan(&grid, &template, run.seed)?;
        let clan = if args.clan_runs > 0 {
            Some(clan_termination_scan(&grid, &run.params, args.clan_runs, run.seed, args.clan_budget)?)
        } else {
            None
        };
        Ok((report, clan))
    })??;

    write_file(&run.out, "phase.csv", |w| report.write_csv(w))?;
    println!("birth–death comparison process (not the clan itself): extinction probability by delta");
    for r in &report.rows {
        println!("  delta {:<8} {:.4} ± {:.4}", r.delta, r.estimate, r.standard_error);
    }
    if let Some(rows) = clan {
        write_file(&run.out, "clan_phase.csv", |w| write_clan_csv(&rows, w))?;
        println!("backward pass (clan of ancestors): fraction terminated within {} steps", args.clan_budget);
        for r in &rows {
            println!("  delta {:<8} {:.4} ± {:.4}", r.delta, r.terminated_fraction, r.standard_error);
        }
    }
    Ok(())
}

fn trace(args: TraceArgs) -> Result<(), Failure> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let run = config::resolve(&args.common, &file)?;
    let budget = positive_count("budget", args.budget.or(file.budget).unwrap_or(config::DEFAULT_BUDGET))?;
    let network = run.params.build()?;
    let opts = BackwardOptions {
        budget,
        rule: match args.simulated_set {
            SetRule::Exact => SimulatedSetRule::Exact,
            SetRule::KeepLeaver => SimulatedSetRule::KeepLeaver,
        },
        trace: true,
        ..BackwardOptions::default()
    };
    prepare_out(&run.out)?;

    let replicate = simulate_replicate(&network, run.seed, args.replicate, &opts)?;

    write_file(&run.out, "backward_trace.csv", |w| write_trace_csv(&replicate.backward.trace, w))?;
    let Some(forward) = &replicate.forward else {
        return Err(Failure::Exhausted(format!(
            "replicate {} exhausted the budget of {budget} steps; backward trace written, no forward pass",
            args.replicate
        )));
    };
    write_file(&run.out, "forward_resolution.csv", |w| write_resolution_csv(&forward.resolved, w))?;
    println!(
        "replicate {}: {} backward steps, potential {} from {} presynaptic spikes; outputs in {}",
        args.replicate,
        replicate.backward.jumps.len(),
        forward.final_potential,
        forward.presyn_count,
        run.out.display()
    );
    Ok(())
}
