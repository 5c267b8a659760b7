//! Forward resolution of the atoms produced by the backward pass.
//!
//! Atoms are swept in chronological order. Each neuron keeps the list of
//! presynaptic spikes received since its last spike. A candidate atom of
//! neuron `i` at time `t` with mark `U` is an actual spike iff
//! `rate(x_i(t)) / beta_max >= U`, which reuses the mark drawn in the
//! backward pass and therefore realises the thinning of the dominating
//! process exactly. Spikes reset their neuron and are appended to the
//! presynaptic lists of its neighbours.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{accumulate, JumpRecord, NetworkConfig, RateFunction, Resolution};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolvedJump {
    pub index: u64,
    pub neuron: i64,
    pub time: f64,
    /// Potential of `neuron` just before `time`.
    pub potential: f64,
    pub resolution: Resolution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardResult {
    /// Potential of the target neuron at time 0.
    pub final_potential: f64,
    pub presyn_count: usize,
    /// Times of the presynaptic spikes the target received since its last
    /// spike.
    pub presyn_times: Vec<f64>,
    /// One entry per input atom, in chronological order.
    pub resolved: Vec<ResolvedJump>,
}

impl ForwardResult {
    pub fn resolutions(&self) -> Vec<(u64, Resolution)> {
        self.resolved.iter().map(|r| (r.index, r.resolution)).collect()
    }
}

/// Probability that a candidate atom at potential `x` is an actual spike:
/// `(rate(x) - beta_min) / (beta_max - beta_min)`.
pub fn acceptance_probability(x: f64, rate: &RateFunction) -> Result<f64> {
    let r = rate.eval(x)?;
    Ok((r - rate.beta_min()) / (rate.beta_max() - rate.beta_min()))
}

/// Thinning decision for a candidate atom with mark `mark` at potential `x`.
#[inline]
pub fn thinning_accepts(rate: &RateFunction, x: f64, mark: f64) -> bool {
    rate.value(x) / rate.beta_max() >= mark
}

fn check_chronological(jumps: &[JumpRecord]) -> Result<()> {
    for j in jumps {
        if !(0.0..=1.0).contains(&j.mark) {
            return Err(Error::contract(format!("jump {} has mark {} outside [0, 1]", j.index, j.mark)));
        }
    }
    for w in jumps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        // Equal times are ordered by generation index, later generated first.
        let ordered = b.time > a.time || (b.time == a.time && b.index < a.index);
        if !ordered {
            return Err(Error::contract(format!(
                "jumps not in chronological order: {} at {} followed by {} at {}",
                a.index, a.time, b.index, b.time
            )));
        }
    }
    Ok(())
}

/// Resolves every atom of `jumps` (sorted by increasing time) and returns the
/// state of `target` at time 0.
pub fn forward_run(jumps: &[JumpRecord], config: &NetworkConfig, target: i64) -> Result<ForwardResult> {
    check_chronological(jumps)?;
    let rate = &config.rate;
    let mut presyn: HashMap<i64, Vec<f64>> = HashMap::new();
    let mut resolved = Vec::with_capacity(jumps.len());

    for j in jumps {
        let own = presyn.entry(j.neuron).or_default();
        let x = accumulate(own, j.time, &config.kernel);
        let resolution = match j.resolution {
            Resolution::Sure => Resolution::Sure,
            _ if thinning_accepts(rate, x, j.mark) => Resolution::CandidateAccepted,
            _ => Resolution::CandidateRejected,
        };
        if resolution.is_spike() {
            own.clear();
            for n in config.neighbors(j.neuron) {
                presyn.entry(n).or_default().push(j.time);
            }
        }
        resolved.push(ResolvedJump {
            index: j.index,
            neuron: j.neuron,
            time: j.time,
            potential: x,
            resolution,
        });
    }

    let presyn_times = presyn.remove(&target).unwrap_or_default();
    Ok(ForwardResult {
        final_potential: accumulate(&presyn_times, 0.0, &config.kernel),
        presyn_count: presyn_times.len(),
        presyn_times,
        resolved,
    })
}

/// Alternative resolution kept for comparison with the chronological sweep.
///
/// Candidates are resolved with fresh Bernoulli draws of parameter
/// `acceptance_probability(A)`, where `A` only sums neighbour atoms that were
/// sure a priori and fall after the neuron's last a-priori sure atom.
/// Accepted candidates neither reset their neuron nor feed neighbours while
/// candidates are being resolved. The target's final state is reset at its
/// last a-priori sure atom and sums every neighbour spike after it.
pub fn forward_run_presorted_sure<R: Rng + ?Sized>(
    jumps: &[JumpRecord],
    config: &NetworkConfig,
    target: i64,
    rng: &mut R,
) -> Result<ForwardResult> {
    check_chronological(jumps)?;
    let rate = &config.rate;
    let mut sure_presyn: HashMap<i64, Vec<f64>> = HashMap::new();
    let mut resolved = Vec::with_capacity(jumps.len());

    for j in jumps {
        let own = sure_presyn.entry(j.neuron).or_default();
        let a = accumulate(own, j.time, &config.kernel);
        let resolution = if j.resolution == Resolution::Sure {
            own.clear();
            for n in config.neighbors(j.neuron) {
                sure_presyn.entry(n).or_default().push(j.time);
            }
            Resolution::Sure
        } else if rng.random_bool(acceptance_probability(a, rate)?.clamp(0.0, 1.0)) {
            Resolution::CandidateAccepted
        } else {
            Resolution::CandidateRejected
        };
        resolved.push(ResolvedJump {
            index: j.index,
            neuron: j.neuron,
            time: j.time,
            potential: a,
            resolution,
        });
    }

    let last_reset = resolved
        .iter()
        .rev()
        .find(|r| r.neuron == target && r.resolution == Resolution::Sure)
        .map(|r| r.time);
    let presyn_times: Vec<f64> = resolved
        .iter()
        .filter(|r| r.resolution.is_spike() && config.is_neighbor(r.neuron, target))
        .filter(|r| last_reset.is_none_or(|t0| r.time > t0))
        .map(|r| r.time)
        .collect();
    Ok(ForwardResult {
        final_potential: accumulate(&presyn_times, 0.0, &config.kernel),
        presyn_count: presyn_times.len(),
        presyn_times,
        resolved,
    })
}

/// Writes resolutions as CSV with header
/// `index,neuron,time,potential,resolution`.
pub fn write_resolution_csv<W: Write>(rows: &[ResolvedJump], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record(["index", "neuron", "time", "potential", "resolution"])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.neuron.to_string(),
            r.time.to_string(),
            r.potential.to_string(),
            r.resolution.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
