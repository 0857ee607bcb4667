//! Cross-layer network-coded scheduling for cache-enabled device-to-device
//! content delivery.
//!
//! Devices in a cell each cache part of a frame of files and want the rest.
//! Every slot, a central scheduler picks transmitters, the XOR combination
//! each one sends, a common rate and the transmit powers. The crate models
//! the radio channel ([`channel`]), side information and delay accounting
//! ([`state`]), the conflict graph whose independent sets are feasible
//! transmissions ([`graph`], [`mwis`]), power control ([`power`]), the
//! per-slot schedulers ([`scheduler`]) and a seeded Monte Carlo driver
//! ([`harness`]).

pub mod channel;
pub mod example;
pub mod graph;
pub mod harness;
pub mod mwis;
pub mod power;
pub mod scheduler;
pub mod state;

/// Index of a device, `0..N`.
pub type DeviceId = usize;
/// Index of a file in the frame, `0..F`.
pub type FileId = usize;

pub use channel::{ChannelError, ChannelRealization, GainMatrix, RadioParams};
pub use graph::{ConflictGraph, GraphError, RateMode};
pub use harness::{HarnessError, ScenarioConfig};
pub use mwis::{exact_mwis, greedy_mwis, IndependenceGraph, IndependentSet};
pub use power::{allocate_power, PowerConfig, ScheduleContext};
pub use scheduler::{run_schedule, NetworkState, RunResult, ScheduleError, SchedulerConfig, SchedulerKind, SlotDecision};
pub use state::{FileSet, Frame, SideInformation, StateError};

/// Any error the crate can produce.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Power(#[from] power::PowerError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}
