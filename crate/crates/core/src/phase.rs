//! Linear birth–death comparison process for the clan size.
//!
//! From population `n > 0` the chain jumps to `n + 1` at rate `n` and to
//! `n - 1` at rate `n * delta`. It dominates the clan-size walk of the
//! backward pass, so its extinction behaviour brackets the termination of the
//! perfect sampler. All outputs describe this comparison process, not the
//! clan process itself.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::backward::backward_run;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::replicate_rng;

/// `beta_min / (beta_max - beta_min)`.
pub fn delta_of(beta_min: f64, beta_max: f64) -> Result<f64> {
    if !(beta_min > 0.0) || !(beta_min < beta_max) || !beta_max.is_finite() {
        return Err(Error::domain(format!(
            "delta needs 0 < beta_min < beta_max < inf, got ({beta_min}, {beta_max})"
        )));
    }
    Ok(beta_min / (beta_max - beta_min))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchingConfig {
    pub delta: f64,
    /// Runs still alive at this time count as survivors.
    pub horizon: f64,
    /// Runs reaching this population count as survivors.
    pub cap: u64,
    pub replicates: u64,
    pub initial: u64,
}

impl BranchingConfig {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            horizon: 1e3,
            cap: 1_000_000,
            replicates: 100_000,
            initial: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::field("delta", format!("must be positive and finite, got {}", self.delta)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::field("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if self.cap == 0 {
            return Err(Error::field("cap", "must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(Error::field("replicates", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchingOutcome {
    pub extinct: bool,
    /// Extinction time, or the time the run was stopped.
    pub time: f64,
    pub max_population: u64,
    pub cap_hit: bool,
    pub events: u64,
}

/// One transition from population `n > 0`: returns the holding time and the
/// next population.
pub fn branching_event<R: Rng + ?Sized>(n: u64, delta: f64, rng: &mut R) -> (f64, u64) {
    debug_assert!(n > 0);
    let wait = rng.sample::<f64, _>(Exp1) / (n as f64 * (1.0 + delta));
    let up = rng.random::<f64>() * (1.0 + delta) < 1.0;
    (wait, if up { n + 1 } else { n - 1 })
}

pub fn branching_simulate<R: Rng + ?Sized>(config: &BranchingConfig, rng: &mut R) -> BranchingOutcome {
    let mut n = config.initial;
    let mut t = 0.0;
    let mut max_population = n;
    let mut events = 0;
    while n > 0 {
        if n >= config.cap {
            return BranchingOutcome {
                extinct: false,
                time: t,
                max_population,
                cap_hit: true,
                events,
            };
        }
        let (wait, next) = branching_event(n, config.delta, rng);
        if t + wait > config.horizon {
            return BranchingOutcome {
                extinct: false,
                time: config.horizon,
                max_population,
                cap_hit: false,
                events,
            };
        }
        t += wait;
        n = next;
        events += 1;
        max_population = max_population.max(n);
    }
    BranchingOutcome {
        extinct: true,
        time: t,
        max_population,
        cap_hit: false,
        events,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtinctionEstimate {
    pub delta: f64,
    pub replicates: u64,
    pub estimate: f64,
    pub standard_error: f64,
    /// Mean extinction time over extinct runs; `None` if no run died out.
    pub mean_extinction_time: Option<f64>,
    /// Fraction of runs stopped by the horizon or the population cap.
    pub censored_fraction: f64,
}

/// Monte Carlo extinction probability. Replicate `k` uses stream `k` of
/// `seed`, so the estimate does not depend on the thread count.
pub fn extinction_probability(config: &BranchingConfig, seed: u64) -> Result<ExtinctionEstimate> {
    config.validate()?;
    let outcomes: Vec<BranchingOutcome> = (0..config.replicates)
        .into_par_iter()
        .map(|k| branching_simulate(config, &mut replicate_rng(seed, k)))
        .collect();

    let n = outcomes.len() as f64;
    let extinct: Vec<f64> = outcomes.iter().filter(|o| o.extinct).map(|o| o.time).collect();
    let p = extinct.len() as f64 / n;
    Ok(ExtinctionEstimate {
        delta: config.delta,
        replicates: config.replicates,
        estimate: p,
        standard_error: (p * (1.0 - p) / n).sqrt(),
        mean_extinction_time: (!extinct.is_empty()).then(|| extinct.iter().sum::<f64>() / extinct.len() as f64),
        censored_fraction: 1.0 - p,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseScanReport {
    /// One row per grid point, sorted by delta.
    pub rows: Vec<ExtinctionEstimate>,
}

/// Extinction estimates over a grid of deltas. Every grid point reuses the
/// same streams, which keeps neighbouring estimates positively correlated.
pub fn delta_scan(grid: &[f64], template: &BranchingConfig, seed: u64) -> Result<PhaseScanReport> {
    if grid.is_empty() {
        return Err(Error::field("grid", "must contain at least one delta"));
    }
    if let Some(bad) = grid.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::field("grid", format!("deltas must be positive, got {bad}")));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rows = sorted
        .into_iter()
        .map(|delta| extinction_probability(&BranchingConfig { delta, ..*template }, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseScanReport { rows })
}

impl PhaseScanReport {
    /// CSV with header
    /// `delta,extinction_estimate,stderr,mean_extinction_time,censored_fraction`.
    /// An empty `mean_extinction_time` means no run died out.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::csv_writer(out);
        w.write_record(["delta", "extinction_estimate", "stderr", "mean_extinction_time", "censored_fraction"])?;
        for r in &self.rows {
            w.write_record([
                r.delta.to_string(),
                r.estimate.to_string(),
                r.standard_error.to_string(),
                r.mean_extinction_time.map(|t| t.to_string()).unwrap_or_default(),
                r.censored_fraction.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Termination statistics of the actual backward pass at a given delta.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClanTermination {
    pub delta: f64,
    pub runs: u64,
    pub terminated_fraction: f64,
    pub standard_error: f64,
    /// Mean number of backward steps over terminated runs.
    pub mean_steps: Option<f64>,
}

/// Runs the backward pass for every delta of `grid`, keeping `beta_max` and
/// the rest of `base` fixed and setting `beta_min = delta * beta_max / (1 + delta)`.
pub fn clan_termination_scan(
    grid: &[f64],
    base: &ModelParams,
    runs: u64,
    seed: u64,
    budget: u64,
) -> Result<Vec<ClanTermination>> {
    if runs == 0 {
        return Err(Error::field("clan_runs", "must be at least 1"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .into_iter()
        .map(|delta| {
            let params = ModelParams {
                beta_min: delta * base.beta_max / (1.0 + delta),
                ..base.clone()
            };
            let config = params.build()?;
            let steps: Vec<Option<u64>> = (0..runs)
                .into_par_iter()
                .map(|k| backward_run(&config, 0, seed.wrapping_add(k), budget).map(|r| r.n_stop))
                .collect::<Result<_>>()?;
            let done: Vec<f64> = steps.iter().flatten().map(|&n| n as f64).collect();
            let p = done.len() as f64 / runs as f64;
            Ok(ClanTermination {
                delta,
                runs,
                terminated_fraction: p,
                standard_error: (p * (1.0 - p) / runs as f64).sqrt(),
                mean_steps: (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64),
            })
        })
        .collect()
}

/// CSV with header `delta,terminated_fraction,stderr,mean_steps`.
pub fn write_clan_csv<W: Write>(rows: &[ClanTermination], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record(["delta", "terminated_fraction", "stderr", "mean_steps"])?;
    for r in rows {
        w.write_record([
            r.delta.to_string(),
            r.terminated_fraction.to_string(),
            r.standard_error.to_string(),
            r.mean_steps.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
