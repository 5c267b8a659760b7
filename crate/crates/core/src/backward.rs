//! Backward construction of the clan of ancestors of a target neuron.
//!
//! Starting at time 0 and walking into the past, atoms of the dominating
//! process are generated on the simulated set `S = C ∪ neighbours(C)`. Each atom
//! is marked with a uniform `U`. Atoms with `U < beta_min / beta_max` are sure
//! spikes and remove their neuron from the clan `C`. The others are candidates
//! whose fate depends on the neuron's potential, so their neuron joins the
//! clan. The pass stops as soon as the clan is empty; every atom that can
//! influence the target at time 0 has then been generated.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{JumpRecord, NetworkConfig, Resolution};
use crate::rng::replicate_rng;

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// How the simulated set is updated when a clan member leaves the clan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SimulatedSetRule {
    /// Keep `S` equal to `C ∪ neighbours(C)` after every step.
    #[default]
    Exact,
    /// Drop the leaving neuron's neighbours that no longer touch the clan but
    /// keep the leaving neuron itself in `S`. `S` may then hold neurons outside
    /// the closure of the clan; kept for comparison with the exact rule.
    KeepLeaver,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClanState {
    clan: Vec<i64>,
    simulated: Vec<i64>,
    clock: f64,
    jump_count: u64,
}

impl ClanState {
    pub fn new(config: &NetworkConfig, target: i64) -> Self {
        let mut simulated = config.neighbors(target);
        insert_sorted(&mut simulated, target);
        Self {
            clan: vec![target],
            simulated,
            clock: 0.0,
            jump_count: 0,
        }
    }

    /// Clan members, sorted.
    pub fn clan(&self) -> &[i64] {
        &self.clan
    }

    /// Simulated neurons, sorted.
    pub fn simulated(&self) -> &[i64] {
        &self.simulated
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn jump_count(&self) -> u64 {
        self.jump_count
    }

    pub fn is_extinct(&self) -> bool {
        self.clan.is_empty()
    }

    /// Applies one atom with pre-drawn randomness: the atom belongs to
    /// `neuron`, lies `gap` time units before the current clock, and carries
    /// the mark `mark`.
    pub fn apply(
        &mut self,
        config: &NetworkConfig,
        rule: SimulatedSetRule,
        neuron: i64,
        gap: f64,
        mark: f64,
    ) -> Result<JumpRecord> {
        if self.clan.is_empty() {
            return Err(Error::contract("backward step on an empty clan"));
        }
        if self.simulated.binary_search(&neuron).is_err() {
            return Err(Error::contract(format!("neuron {neuron} is not simulated")));
        }
        if !(gap >= 0.0) {
            return Err(Error::contract(format!("negative inter-jump gap {gap}")));
        }
        if !(0.0..=1.0).contains(&mark) {
            return Err(Error::contract(format!("mark {mark} outside [0, 1]")));
        }

        self.jump_count += 1;
        self.clock -= gap;
        let sure = mark < config.rate.sure_probability();
        if sure {
            if let Ok(pos) = self.clan.binary_search(&neuron) {
                self.clan.remove(pos);
                self.shrink_simulated(config, rule, neuron);
            }
        } else if let Err(pos) = self.clan.binary_search(&neuron) {
            self.clan.insert(pos, neuron);
            insert_sorted(&mut self.simulated, neuron);
            for n in config.neighbors(neuron) {
                insert_sorted(&mut self.simulated, n);
            }
        }

        Ok(JumpRecord {
            index: self.jump_count,
            neuron,
            time: self.clock,
            mark,
            resolution: if sure {
                Resolution::Sure
            } else {
                Resolution::CandidateUnresolved
            },
        })
    }

    fn shrink_simulated(&mut self, config: &NetworkConfig, rule: SimulatedSetRule, leaver: i64) {
        // Only the leaver and its neighbours can fall out of C ∪ neighbours(C).
        let clan = &self.clan;
        let touches_clan =
            |n: i64| clan.binary_search(&n).is_ok() || config.neighbors(n).iter().any(|m| clan.binary_search(m).is_ok());
        let mut drop: Vec<i64> = config
            .neighbors(leaver)
            .into_iter()
            .filter(|&n| !touches_clan(n))
            .collect();
        if rule == SimulatedSetRule::Exact && !touches_clan(leaver) {
            drop.push(leaver);
        }
        for n in drop {
            if let Ok(pos) = self.simulated.binary_search(&n) {
                self.simulated.remove(pos);
            }
        }
    }
}

/// `clan ∪ neighbours(clan)`, sorted.
pub fn closure(config: &NetworkConfig, clan: &[i64]) -> Vec<i64> {
    let mut out: Vec<i64> = clan
        .iter()
        .flat_map(|&c| std::iter::once(c).chain(config.neighbors(c)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn insert_sorted(v: &mut Vec<i64>, x: i64) {
    if let Err(pos) = v.binary_search(&x) {
        v.insert(pos, x);
    }
}

/// Draws one atom on the simulated set and applies it.
pub fn backward_step<R: Rng + ?Sized>(
    state: &mut ClanState,
    config: &NetworkConfig,
    rule: SimulatedSetRule,
    rng: &mut R,
) -> Result<JumpRecord> {
    if state.clan.is_empty() {
        return Err(Error::contract("backward step on an empty clan"));
    }
    let n = state.simulated.len();
    let neuron = state.simulated[rng.random_range(0..n)];
    let total_rate = n as f64 * config.rate.beta_max();
    let gap: f64 = rng.sample::<f64, _>(Exp1) / total_rate;
    let mark: f64 = rng.random();
    state.apply(config, rule, neuron, gap, mark)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardStatus {
    Terminated,
    BudgetExhausted,
}

impl BackwardStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            BackwardStatus::Terminated => "terminated",
            BackwardStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

/// One row of the backward trace dump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub index: u64,
    pub neuron: i64,
    pub time: f64,
    pub mark: f64,
    pub sure: bool,
    pub clan_size: usize,
    pub simulated_size: usize,
}

#[derive(Clone, Debug)]
pub struct BackwardResult {
    /// Atoms in generation order, i.e. with strictly decreasing times.
    pub jumps: Vec<JumpRecord>,
    pub status: BackwardStatus,
    /// Number of steps until the clan emptied, when it did.
    pub n_stop: Option<u64>,
    /// Time of the last generated atom (0 when none was generated).
    pub t_stop: f64,
    /// Every neuron that was ever simulated, sorted.
    pub touched: Vec<i64>,
    /// Per-step trace, filled only when requested.
    pub trace: Vec<TraceRow>,
}

impl BackwardResult {
    pub fn terminated(&self) -> bool {
        self.status == BackwardStatus::Terminated
    }

    /// Atoms sorted by increasing time, as consumed by the forward pass.
    pub fn chronological(&self) -> Vec<JumpRecord> {
        self.jumps.iter().rev().copied().collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BackwardOptions {
    pub target: i64,
    pub budget: u64,
    pub rule: SimulatedSetRule,
    pub trace: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        Self {
            target: 0,
            budget: DEFAULT_BUDGET,
            rule: SimulatedSetRule::Exact,
            trace: false,
        }
    }
}

/// Runs the backward pass with the stream derived from `seed`.
pub fn backward_run(config: &NetworkConfig, target: i64, seed: u64, budget: u64) -> Result<BackwardResult> {
    let mut rng = replicate_rng(seed, 0);
    let opts = BackwardOptions {
        target,
        budget,
        ..BackwardOptions::default()
    };
    backward_run_with(config, &opts, &mut rng)
}

pub fn backward_run_with<R: Rng + ?Sized>(
    config: &NetworkConfig,
    opts: &BackwardOptions,
    rng: &mut R,
) -> Result<BackwardResult> {
    if opts.budget == 0 {
        return Err(Error::contract("backward budget must be at least 1"));
    }
    let mut state = ClanState::new(config, opts.target);
    let mut touched: BTreeSet<i64> = state.simulated.iter().copied().collect();
    let mut jumps = Vec::new();
    let mut trace = Vec::new();

    while !state.is_extinct() && state.jump_count < opts.budget {
        let jump = backward_step(&mut state, config, opts.rule, rng)?;
        if jump.resolution == Resolution::CandidateUnresolved {
            touched.extend(config.neighbors(jump.neuron));
        }
        if opts.trace {
            trace.push(TraceRow {
                index: jump.index,
                neuron: jump.neuron,
                time: jump.time,
                mark: jump.mark,
                sure: jump.resolution == Resolution::Sure,
                clan_size: state.clan.len(),
                simulated_size: state.simulated.len(),
            });
        }
        jumps.push(jump);
    }

    let status = if state.is_extinct() {
        BackwardStatus::Terminated
    } else {
        BackwardStatus::BudgetExhausted
    };
    Ok(BackwardResult {
        n_stop: (status == BackwardStatus::Terminated).then_some(state.jump_count),
        t_stop: state.clock,
        status,
        jumps,
        touched: touched.into_iter().collect(),
        trace,
    })
}

/// Writes the trace as CSV with header
/// `index,neuron,time,mark,sure,clan_size,simulated_size`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = crate::csv_writer(out);
    w.write_record(["index", "neuron", "time", "mark", "sure", "clan_size", "simulated_size"])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.neuron.to_string(),
            r.time.to_string(),
            r.mark.to_string(),
            u8::from(r.sure).to_string(),
            r.clan_size.to_string(),
            r.simulated_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn cfg(range: u32) -> NetworkConfig {
        ModelParams {
            range,
            ..ModelParams::default()
        }
        .build()
        .unwrap()
    }

    #[test]
    fn init_windows() {
        let s = ClanState::new(&cfg(1), 0);
        assert_eq!(s.clan(), &[0]);
        assert_eq!(s.simulated(), &[-1, 0, 1]);
        assert_eq!(s.clock(), 0.0);
        assert_eq!(s.jump_count(), 0);
        assert_eq!(ClanState::new(&cfg(1), 7).simulated(), &[6, 7, 8]);
        assert_eq!(ClanState::new(&cfg(2), 0).simulated(), &[-2, -1, 0, 1, 2]);
    }

    #[test]
    fn sure_jump_of_target_empties_clan() {
        let c = cfg(1);
        let mut s = ClanState::new(&c, 0);
        let j = s.apply(&c, SimulatedSetRule::Exact, 0, 0.1, 0.5).unwrap();
        assert_eq!(j.resolution, Resolution::Sure);
        assert_eq!(j.index, 1);
        assert!(s.is_extinct());
        assert!(s.simulated().is_empty());
        assert!(s.apply(&c, SimulatedSetRule::Exact, 0, 0.1, 0.5).is_err());
    }

    #[test]
    fn candidate_of_boundary_neuron_joins_clan() {
        let c = cfg(1);
        let mut s = ClanState::new(&c, 0);
        let j = s.apply(&c, SimulatedSetRule::Exact, 1, 0.1, 0.9).unwrap();
        assert_eq!(j.resolution, Resolution::CandidateUnresolved);
        assert_eq!(s.clan(), &[0, 1]);
        assert_eq!(s.simulated(), &[-1, 0, 1, 2]);
    }

    #[test]
    fn sure_jump_of_boundary_neuron_changes_nothing() {
        let c = cfg(1);
        let mut s = ClanState::new(&c, 0);
        let j = s.apply(&c, SimulatedSetRule::Exact, 1, 0.1, 0.5).unwrap();
        assert_eq!(j.resolution, Resolution::Sure);
        assert_eq!(s.clan(), &[0]);
        assert_eq!(s.simulated(), &[-1, 0, 1]);
        assert_eq!(s.jump_count(), 1);
    }

    #[test]
    fn keep_leaver_rule_differs_from_exact() {
        let c = cfg(1);
        let mut exact = ClanState::new(&c, 0);
        let mut loose = exact.clone();
        for s in [&mut exact, &mut loose] {
            s.apply(&c, SimulatedSetRule::Exact, 1, 0.1, 0.9).unwrap();
            s.apply(&c, SimulatedSetRule::Exact, 2, 0.1, 0.9).unwrap();
        }
        exact.apply(&c, SimulatedSetRule::Exact, 1, 0.1, 0.1).unwrap();
        loose.apply(&c, SimulatedSetRule::KeepLeaver, 1, 0.1, 0.1).unwrap();
        assert_eq!(exact.clan(), &[0, 2]);
        assert_eq!(exact.simulated(), &[-1, 0, 1, 2, 3]);
        assert_eq!(loose.simulated(), exact.simulated());
        exact.apply(&c, SimulatedSetRule::Exact, 2, 0.1, 0.1).unwrap();
        loose.apply(&c, SimulatedSetRule::KeepLeaver, 2, 0.1, 0.1).unwrap();
        assert_eq!(exact.simulated(), &[-1, 0, 1]);
        // 2 left the clan and touches no member, yet stays simulated.
        assert_eq!(loose.simulated(), &[-1, 0, 1, 2]);
    }

    #[test]
    fn apply_rejects_bad_inputs() {
        let c = cfg(1);
        let mut s = ClanState::new(&c, 0);
        assert!(s.apply(&c, SimulatedSetRule::Exact, 5, 0.1, 0.5).is_err());
        assert!(s.apply(&c, SimulatedSetRule::Exact, 0, -0.1, 0.5).is_err());
        assert!(s.apply(&c, SimulatedSetRule::Exact, 0, 0.1, 1.5).is_err());
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(backward_run(&cfg(1), 0, 1, 0).is_err());
    }

    #[test]
    fn budget_one_stops_after_one_step() {
        for seed in 0..50 {
            let r = backward_run(&cfg(1), 0, seed, 1).unwrap();
            assert_eq!(r.jumps.len(), 1);
            if r.terminated() {
                assert_eq!(r.n_stop, Some(1));
                assert_eq!(r.jumps[0].neuron, 0);
                assert_eq!(r.jumps[0].resolution, Resolution::Sure);
            } else {
                assert_eq!(r.n_stop, None);
            }
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let c = cfg(1);
        let mut rng = replicate_rng(3, 0);
        let opts = BackwardOptions {
            trace: true,
            ..BackwardOptions::default()
        };
        let r = backward_run_with(&c, &opts, &mut rng).unwrap();
        assert_eq!(r.trace.len(), r.jumps.len());
        let mut buf = Vec::new();
        write_trace_csv(&r.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,neuron,time,mark,sure,clan_size,simulated_size"));
        assert_eq!(lines.count(), r.jumps.len());
        assert!(!text.contains('\r'));
        assert_eq!(r.trace.last().unwrap().clan_size, 0);
    }
}
