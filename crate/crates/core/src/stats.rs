//! Replicate harness and estimators for the stationary potential.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::backward::{backward_run_with, BackwardOptions, BackwardResult, BackwardStatus};
use crate::error::{Error, Result};
use crate::forward::{forward_run, ForwardResult};
use crate::model::NetworkConfig;
use crate::rng::replicate_rng;

pub const POTENTIAL_BIN_WIDTH: f64 = 0.1;
pub const RATE_BIN_WIDTH: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateSummary {
    pub seed_index: u64,
    pub backward_status: BackwardStatus,
    pub n_steps_backward: u64,
    /// `None` when the backward pass ran out of budget.
    pub final_potential: Option<f64>,
    pub presyn_count: Option<usize>,
    pub firing_rate: Option<f64>,
}

impl ReplicateSummary {
    pub fn terminated(&self) -> bool {
        self.backward_status == BackwardStatus::Terminated
    }
}

/// Full output of one replicate, including both passes.
#[derive(Clone, Debug)]
pub struct ReplicateRun {
    pub backward: BackwardResult,
    pub forward: Option<ForwardResult>,
    pub summary: ReplicateSummary,
}

/// Runs replicate `index` of `master_seed` end to end on target neuron 0.
pub fn simulate_replicate(
    config: &NetworkConfig,
    master_seed: u64,
    index: u64,
    opts: &BackwardOptions,
) -> Result<ReplicateRun> {
    let mut rng = replicate_rng(master_seed, index);
    let backward = backward_run_with(config, opts, &mut rng)?;
    let forward = if backward.terminated() {
        Some(forward_run(&backward.chronological(), config, opts.target)?)
    } else {
        None
    };
    let summary = ReplicateSummary {
        seed_index: index,
        backward_status: backward.status,
        n_steps_backward: backward.jumps.len() as u64,
        final_potential: forward.as_ref().map(|f| f.final_potential),
        presyn_count: forward.as_ref().map(|f| f.presyn_count),
        firing_rate: forward.as_ref().map(|f| config.rate.value(f.final_potential)),
    };
    Ok(ReplicateRun {
        backward,
        forward,
        summary,
    })
}

/// Replicates `indices` in parallel on the current rayon pool; the output is
/// ordered by index.
pub fn run_replicate_range(
    config: &NetworkConfig,
    indices: Range<u64>,
    master_seed: u64,
    budget: u64,
) -> Result<Vec<ReplicateSummary>> {
    let opts = BackwardOptions {
        budget,
        ..BackwardOptions::default()
    };
    indices
        .into_par_iter()
        .map(|k| simulate_replicate(config, master_seed, k, &opts).map(|r| r.summary))
        .collect()
}

pub fn run_replicates(config: &NetworkConfig, n: u64, master_seed: u64, budget: u64) -> Result<Vec<ReplicateSummary>> {
    if n == 0 {
        return Err(Error::field("replicates", "must be at least 1"));
    }
    run_replicate_range(config, 0..n, master_seed, budget)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

fn terminated_potentials(summaries: &[ReplicateSummary]) -> impl Iterator<Item = f64> + '_ {
    summaries.iter().filter_map(|s| s.final_potential)
}

/// Binomial estimate of `P(potential = 0)` over terminated replicates.
pub fn zero_probability(summaries: &[ReplicateSummary]) -> Result<Estimate> {
    let (mut n, mut zeros) = (0usize, 0usize);
    for x in terminated_potentials(summaries) {
        n += 1;
        zeros += usize::from(x == 0.0);
    }
    if n == 0 {
        return Err(Error::domain("zero probability of an empty sample"));
    }
    let p = zeros as f64 / n as f64;
    Ok(Estimate {
        estimate: p,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
    })
}

/// Empirical mass function of the presynaptic count; entry `k` is the
/// frequency of count `k`.
pub fn presyn_pmf(summaries: &[ReplicateSummary]) -> Result<Vec<f64>> {
    let counts: Vec<usize> = summaries.iter().filter_map(|s| s.presyn_count).collect();
    if counts.is_empty() {
        return Err(Error::domain("presynaptic pmf of an empty sample"));
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut pmf = vec![0u64; max + 1];
    for c in &counts {
        pmf[*c] += 1;
    }
    let n = counts.len() as f64;
    Ok(pmf.into_iter().map(|c| c as f64 / n).collect())
}

/// Fixed-width histogram with left-closed bins `[left, left + width)` and one
/// overflow bin collecting everything at or above the last right edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub min: f64,
    pub width: f64,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

pub struct HistogramRow {
    pub left: f64,
    pub right: f64,
    pub count: u64,
    /// `None` for the overflow bin.
    pub density: Option<f64>,
}

pub fn histogram(values: &[f64], width: f64, min: f64, max: f64) -> Result<Histogram> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::domain(format!("bin width must be positive, got {width}")));
    }
    if !(max > min) {
        return Err(Error::domain(format!("histogram range [{min}, {max}] is empty")));
    }
    let nbins = ((max - min) / width).ceil() as usize;
    let mut counts = vec![0u64; nbins];
    let mut overflow = 0;
    for &v in values {
        if !(v >= min) {
            return Err(Error::domain(format!("value {v} below histogram minimum {min}")));
        }
        let bin = ((v - min) / width).floor();
        if bin < nbins as f64 {
            counts[bin as usize] += 1;
        } else {
            overflow += 1;
        }
    }
    Ok(Histogram {
        min,
        width,
        counts,
        overflow,
    })
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    pub fn rows(&self) -> Vec<HistogramRow> {
        let total = self.total().max(1) as f64;
        let mut rows: Vec<HistogramRow> = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &count)| HistogramRow {
                left: self.min + i as f64 * self.width,
                right: self.min + (i + 1) as f64 * self.width,
                count,
                density: Some(count as f64 / (total * self.width)),
            })
            .collect();
        rows.push(HistogramRow {
            left: self.min + self.counts.len() as f64 * self.width,
            right: f64::INFINITY,
            count: self.overflow,
            density: None,
        });
        rows
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub max: f64,
}

/// Aggregate estimates over a list of replicate summaries.
#[derive(Clone, Debug, Serialize)]
pub struct StatsReport {
    pub replicates: u64,
    pub terminated: u64,
    pub budget_exhausted: u64,
    pub zero_probability: Estimate,
    pub presyn_pmf: Vec<f64>,
    pub presyn_max: usize,
    pub potential: Moments,
    pub firing_rate: Moments,
    pub mean_backward_steps: f64,
    #[serde(skip)]
    pub potential_histogram: Histogram,
    #[serde(skip)]
    pub rate_histogram: Histogram,
    #[serde(skip)]
    pub presyn_histogram: Histogram,
}

fn moments(values: &[f64]) -> Moments {
    Moments {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

impl StatsReport {
    /// Budget-exhausted replicates are counted but carry no potential, so they
    /// are left out of every distributional estimate.
    pub fn from_summaries(summaries: &[ReplicateSummary], config: &NetworkConfig) -> Result<Self> {
        let potentials: Vec<f64> = terminated_potentials(summaries).collect();
        let rates: Vec<f64> = summaries.iter().filter_map(|s| s.firing_rate).collect();
        let counts: Vec<f64> = summaries.iter().filter_map(|s| s.presyn_count).map(|c| c as f64).collect();
        let zero_probability = zero_probability(summaries)?;
        let presyn_pmf = presyn_pmf(summaries)?;
        let potential = moments(&potentials);
        let firing_rate = moments(&rates);
        let presyn_max = presyn_pmf.len() - 1;

        let pw = POTENTIAL_BIN_WIDTH;
        let potential_histogram = histogram(&potentials, pw, 0.0, ((potential.max / pw).floor() + 1.0) * pw)?;
        let rate_histogram = histogram(
            &rates,
            RATE_BIN_WIDTH,
            config.rate.beta_min(),
            config.rate.beta_max() + RATE_BIN_WIDTH,
        )?;
        let presyn_histogram = histogram(&counts, 1.0, 0.0, presyn_max as f64 + 1.0)?;

        let terminated = potentials.len() as u64;
        Ok(Self {
            replicates: summaries.len() as u64,
            terminated,
            budget_exhausted: summaries.len() as u64 - terminated,
            zero_probability,
            presyn_pmf,
            presyn_max,
            potential,
            firing_rate,
            mean_backward_steps: summaries.iter().map(|s| s.n_steps_backward as f64).sum::<f64>()
                / summaries.len() as f64,
            potential_histogram,
            rate_histogram,
            presyn_histogram,
        })
    }

    pub fn exhausted_fraction(&self) -> f64 {
        self.budget_exhausted as f64 / self.replicates as f64
    }

    /// CSV with header `bin_left,bin_right,count,density,series`; series are
    /// `potential`, `firing_rate` and `presyn_count`.
    pub fn write_histograms_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::csv_writer(out);
        w.write_record(["bin_left", "bin_right", "count", "density", "series"])?;
        for (name, h) in [
            ("potential", &self.potential_histogram),
            ("firing_rate", &self.rate_histogram),
            ("presyn_count", &self.presyn_histogram),
        ] {
            for r in h.rows() {
                w.write_record([
                    r.left.to_string(),
                    r.right.to_string(),
                    r.count.to_string(),
                    r.density.map(|d| d.to_string()).unwrap_or_default(),
                    name.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// CSV with header
/// `seed_index,final_potential,presyn_count,n_steps_backward,backward_status,firing_rate`.
/// Budget-exhausted rows leave the potential columns empty.
pub fn write_summaries_csv<W: Write>(summaries: &[ReplicateSummary], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record([
        "seed_index",
        "final_potential",
        "presyn_count",
        "n_steps_backward",
        "backward_status",
        "firing_rate",
    ])?;
    for s in summaries {
        w.write_record([
            s.seed_index.to_string(),
            s.final_potential.map(|x| x.to_string()).unwrap_or_default(),
            s.presyn_count.map(|x| x.to_string()).unwrap_or_default(),
            s.n_steps_backward.to_string(),
            s.backward_status.as_str().to_string(),
            s.firing_rate.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(index: u64, x: Option<f64>, count: Option<usize>) -> ReplicateSummary {
        ReplicateSummary {
            seed_index: index,
            backward_status: if x.is_some() {
                BackwardStatus::Terminated
            } else {
                BackwardStatus::BudgetExhausted
            },
            n_steps_backward: 3,
            final_potential: x,
            presyn_count: count,
            firing_rate: x.map(|x| (3.0 + 2.0 * x) / (1.0 + x)),
        }
    }

    #[test]
    fn zero_probability_cases() {
        let all_zero: Vec<_> = (0..10).map(|k| summary(k, Some(0.0), Some(0))).collect();
        let e = zero_probability(&all_zero).unwrap();
        assert_eq!((e.estimate, e.stderr), (1.0, 0.0));
        assert!(matches!(zero_probability(&[]), Err(Error::Domain(_))));
        assert!(zero_probability(&[summary(0, None, None)]).is_err());
        let mixed = [summary(0, Some(0.0), Some(0)), summary(1, Some(0.3), Some(1)), summary(2, None, None)];
        assert_eq!(zero_probability(&mixed).unwrap().estimate, 0.5);
    }

    #[test]
    fn pmf_matches_zero_probability() {
        let s = [
            summary(0, Some(0.0), Some(0)),
            summary(1, Some(0.3), Some(1)),
            summary(2, Some(0.6), Some(3)),
            summary(3, Some(0.0), Some(0)),
        ];
        let pmf = presyn_pmf(&s).unwrap();
        assert_eq!(pmf, vec![0.5, 0.25, 0.0, 0.25]);
        assert_eq!(pmf[0], zero_probability(&s).unwrap().estimate);
        assert!(presyn_pmf(&[]).is_err());
    }

    #[test]
    fn histogram_cases() {
        let h = histogram(&[0.0, 0.0, 0.0], 1.0, 0.0, 10.0).unwrap();
        assert_eq!(h.counts[0], 3);
        assert_eq!(h.counts.len(), 10);
        assert_eq!(h.total(), 3);
        let h = histogram(&[0.5, 1.5], 1.0, 0.0, 2.0).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        assert_eq!(h.overflow, 0);
        let h = histogram(&[2.0, 7.5], 1.0, 0.0, 2.0).unwrap();
        assert_eq!(h.overflow, 2);
        assert!(histogram(&[1.0], 1.0, 2.0, 2.0).is_err());
        assert!(histogram(&[1.0], 0.0, 0.0, 2.0).is_err());
        assert!(histogram(&[-1.0], 1.0, 0.0, 2.0).is_err());
        let rows = histogram(&[0.5, 1.5], 1.0, 0.0, 2.0).unwrap().rows();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].density, Some(0.5));
        assert!(rows[2].right.is_infinite() && rows[2].density.is_none());
    }

    #[test]
    fn report_excludes_exhausted() {
        let c = NetworkConfig::reference();
        let s = [
            summary(0, Some(0.0), Some(0)),
            summary(1, Some(0.25), Some(1)),
            summary(2, None, None),
        ];
        let r = StatsReport::from_summaries(&s, &c).unwrap();
        assert_eq!(r.replicates, 3);
        assert_eq!(r.budget_exhausted, 1);
        assert_eq!(r.potential_histogram.total(), 2);
        assert_eq!(r.rate_histogram.total(), 2);
        assert_eq!(r.rate_histogram.overflow, 0);
        assert_eq!(r.potential_histogram.overflow, 0);
        assert_eq!(r.presyn_max, 1);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"zero_probability\":{\"estimate\":0.5"));
    }

    #[test]
    fn summaries_csv_layout() {
        let mut buf = Vec::new();
        write_summaries_csv(&[summary(0, Some(0.0), Some(0)), summary(1, None, None)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "seed_index,final_potential,presyn_count,n_steps_backward,backward_status,firing_rate\n\
             0,0,0,3,terminated,3\n\
             1,,,3,budget_exhausted,\n"
        );
    }

    #[test]
    fn zero_replicates_rejected() {
        let c = NetworkConfig::reference();
        assert!(run_replicates(&c, 0, 1, 10).is_err());
    }
}
