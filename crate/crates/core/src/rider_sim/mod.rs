//! Simulated cyclist used to close the loop without a human rider.
//!
//! None of the physiological constants here are measured values; they are
//! configuration with conventional defaults.

mod dynamics;
mod physics;
mod policy;
mod synth;

pub use dynamics::{hr_step, Rider, RiderModel};
pub use physics::{mps_to_kmh, power_to_speed, BikePhysics};
pub use policy::{policy_step, PolicyKind, RiderAgent, RiderPolicy};
pub use synth::{synth_ecg, EcgSynth, EcgTemplate, SynthNoise, SynthTrace, Wave};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid rider model: {0}")]
    InvalidModel(String),
    #[error("heart-rate schedule value {bpm} bpm at t = {t} s outside 25..=230")]
    ScheduleOutOfRange { t: f64, bpm: f64 },
    #[error("invalid synthesis parameters: {0}")]
    InvalidSynth(String),
}
