//! Closed-loop heart-rate-adaptive training engine.
//!
//! The crate is organised as a set of stages that can be used on their own or
//! wired together by [`session::Session`]:
//!
//! - [`ecg_dsp`]: band-pass filtering, QRS detection and heart-rate estimation
//!   over a streaming ECG signal.
//! - [`hr_zones`]: age-derived maximal heart rate and the five-zone partition.
//! - [`adaptation`]: the per-tick pacing controller for the three feedback
//!   conditions (adaptive NPC, random NPC, bike-computer baseline).
//! - [`rider_sim`]: a simulated cyclist (heart-rate dynamics, power to speed,
//!   behaviour policies) and a synthetic ECG generator.
//! - [`session`]: the fixed-tick state machine and its JSON Lines log.
//! - [`metrics`]: Optimal HR Ratio and normalized heart rate from a log.
//! - [`sweep`]: batch execution of independent simulated sessions.

pub mod adaptation;
pub mod ecg_dsp;
pub mod hr_zones;
pub mod metrics;
pub mod rider_sim;
pub mod session;
pub mod sweep;

pub use adaptation::{AdaptationConfig, Condition, NpcState};
pub use ecg_dsp::{EcgSample, HrEstimate, RPeak};
pub use hr_zones::{AthleteProfile, HrMaxFormula, ZoneId, ZoneModel};
pub use metrics::SessionMetrics;
pub use session::{LoopState, Session, SessionConfig, SessionLog};
