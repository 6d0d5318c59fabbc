use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::adaptation::{AdaptationConfig, Condition};
use crate::ecg_dsp::DspConfig;
use crate::hr_zones::{HrMaxFormula, ZoneId};
use crate::rider_sim::BikePhysics;

pub const MIN_TICK_HZ: u32 = 10;
pub const MAX_TICK_HZ: u32 = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub adaptation: u64,
    pub rider: u64,
    pub ecg: u64,
}

impl Seeds {
    /// Derive the three stream seeds from one base seed.
    pub fn from_base(base: u64) -> Self {
        Self {
            adaptation: base,
            rider: base ^ 0x5249_4445_5249_4445,
            ecg: base ^ 0x4543_4745_4347_4543,
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_base(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub participant_id: String,
    pub age: u32,
    pub hr_max_formula: HrMaxFormula,
    pub condition: Condition,
    /// Target zone and its duration in seconds, in order.
    pub zone_schedule: Vec<(ZoneId, f64)>,
    pub tick_hz: u32,
    pub hr_window_s: f64,
    /// Familiarisation phase before the scored run.
    pub training_s: f64,
    pub seeds: Seeds,
    pub adaptation: AdaptationConfig,
    pub dsp: DspConfig,
    pub physics: BikePhysics,
    /// Additive noise on simulated ECG.
    pub ecg_noise_sd_mv: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let zone = |z| ZoneId::new(z).expect("static zone id");
        Self {
            participant_id: "P00".to_string(),
            age: 30,
            hr_max_formula: HrMaxFormula::Tanaka,
            condition: Condition::AdaptiveNpc,
            zone_schedule: vec![(zone(1), 120.0), (zone(2), 120.0), (zone(3), 120.0)],
            tick_hz: 50,
            hr_window_s: 10.0,
            training_s: 120.0,
            seeds: Seeds::default(),
            adaptation: AdaptationConfig::default(),
            dsp: DspConfig::default(),
            physics: BikePhysics::default(),
            ecg_noise_sd_mv: 0.02,
        }
    }
}

impl SessionConfig {
    pub fn with_seed(mut self, base: u64) -> Self {
        self.seeds = Seeds::from_base(base);
        self
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |msg: String| Err(SessionError::Config(msg));
        if !(MIN_TICK_HZ..=MAX_TICK_HZ).contains(&self.tick_hz) {
            return bad(format!("tick_hz {} outside {MIN_TICK_HZ}..={MAX_TICK_HZ}", self.tick_hz));
        }
        if self.zone_schedule.is_empty() {
            return bad("zone schedule is empty".into());
        }
        for (zone, dur) in &self.zone_schedule {
            if !zone.is_training_zone() {
                return bad(format!("schedule zone {zone} is not a training zone"));
            }
            if !(dur.is_finite() && *dur > 0.0) || self.ticks_for(*dur) == 0 {
                return bad(format!("schedule duration {dur} s must be positive"));
            }
        }
        if !(self.training_s.is_finite() && self.training_s >= 0.0) {
            return bad(format!("training_s {} must be non-negative", self.training_s));
        }
        if !(self.hr_window_s.is_finite() && self.hr_window_s > 0.0) {
            return bad(format!("hr_window_s {} must be positive", self.hr_window_s));
        }
        if !(self.ecg_noise_sd_mv.is_finite() && self.ecg_noise_sd_mv >= 0.0) {
            return bad(format!("ecg_noise_sd_mv {} must be non-negative", self.ecg_noise_sd_mv));
        }
        Ok(())
    }

    pub fn ticks_for(&self, seconds: f64) -> u64 {
        (seconds * self.tick_hz as f64).round() as u64
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_hz as f64
    }

    /// DSP settings with the session's HR window applied.
    pub fn effective_dsp(&self) -> DspConfig {
        DspConfig {
            hr_window_s: self.hr_window_s,
            ..self.dsp.clone()
        }
    }

    /// Adaptation settings with the session's adaptation seed applied.
    pub fn effective_adaptation(&self) -> AdaptationConfig {
        AdaptationConfig {
            rng_seed: self.seeds.adaptation,
            ..self.adaptation.clone()
        }
    }
}
