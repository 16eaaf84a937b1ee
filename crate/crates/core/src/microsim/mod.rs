//! Monte Carlo engine of the microscopic trader model.

mod engine;
mod runner;
mod state;

pub use engine::{
    match_and_settle, step_continuous, step_poisson, PoissonClock, StepOutput, TransactionEvent,
};
pub use runner::{
    run_replicas, run_simulation, LayeredProbe, Probes, SimError, SimOutput, SnapshotProbe, Variant,
};
pub use state::{decompose_cm, drift, init_state, SimRng, SimState, TraderState};
