//! Perfect sampling of the stationary membrane potential of a tagged neuron in
//! an inhibitory Hawkes network with variable-length memory.
//!
//! A replicate runs [`backward`] to build the clan of ancestors of the target
//! neuron, then [`forward`] to resolve every candidate atom by thinning and
//! read off the target's potential at time 0. [`stats`] drives many
//! replicates in parallel on counter-based random streams, and [`phase`]
//! simulates the birth–death process that bounds the clan size.

pub mod backward;
pub mod error;
pub mod forward;
pub mod gof;
pub mod model;
pub mod phase;
pub mod rng;
pub mod stats;

pub use backward::{
    backward_run, backward_run_with, backward_step, BackwardOptions, BackwardResult, BackwardStatus, ClanState,
    SimulatedSetRule,
};
pub use error::{Error, Result};
pub use forward::{acceptance_probability, forward_run, ForwardResult, ResolvedJump};
pub use model::{
    potential_at, InteractionKernel, JumpRecord, ModelParams, NetworkConfig, RateFamily, RateFunction, Resolution,
};
pub use phase::{
    branching_simulate, clan_termination_scan, delta_of, delta_scan, extinction_probability, BranchingConfig,
    ClanTermination, PhaseScanReport,
};
pub use rng::replicate_rng;
pub use stats::{
    histogram, presyn_pmf, run_replicates, simulate_replicate, zero_probability, ReplicateRun, ReplicateSummary,
    StatsReport,
};

pub(crate) fn csv_writer<W: std::io::Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}
