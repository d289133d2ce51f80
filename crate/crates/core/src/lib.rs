//! Detection and performance analysis for molecular-communication sensor
//! networks with a fusion center.

pub mod analysis;
pub mod asymptotics;
pub mod channel;
pub mod cli;
pub mod detectors;
pub mod error;
pub mod math;
pub mod montecarlo;
pub mod sensing;

pub use channel::{ChannelParams, DiffusionGeometry};
pub use detectors::{DetectorKind, DetectorSpec, ObservationBatch, Scheme, Threshold};
pub use error::{Error, Result};
pub use montecarlo::{ChannelMode, SimConfig, SimResult};
pub use sensing::{HardSensingModel, Hypothesis, SensingModel, SensingSpec, SumSensingPmf};
