use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;

/// First-order heart-rate response to power with asymmetric time constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiderModel {
    pub hr_rest_bpm: f64,
    pub hr_gain_bpm_per_w: f64,
    pub tau_up_s: f64,
    pub tau_down_s: f64,
    pub p_max_w: f64,
    pub noise_bpm_sd: f64,
}

impl Default for RiderModel {
    fn default() -> Self {
        Self {
            hr_rest_bpm: 60.0,
            hr_gain_bpm_per_w: 0.30,
            tau_up_s: 30.0,
            tau_down_s: 45.0,
            p_max_w: 400.0,
            noise_bpm_sd: 1.0,
        }
    }
}

impl RiderModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            self.hr_rest_bpm,
            self.hr_gain_bpm_per_w,
            self.tau_up_s,
            self.tau_down_s,
            self.p_max_w,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if positive && self.noise_bpm_sd >= 0.0 && self.tau_down_s >= self.tau_up_s {
            Ok(())
        } else {
            Err(SimError::InvalidModel(format!("{self:?}")))
        }
    }

    pub fn steady_state(&self, power_w: f64) -> f64 {
        self.hr_rest_bpm + self.hr_gain_bpm_per_w * power_w
    }

    pub fn clamp_power(&self, power_w: f64) -> f64 {
        power_w.clamp(0.0, self.p_max_w)
    }
}

/// One Euler step of the heart-rate model plus `noise_bpm_sd * sqrt(dt)` noise.
pub fn hr_step<R: Rng + ?Sized>(hr_bpm: f64, power_w: f64, dt: f64, model: &RiderModel, rng: &mut R) -> f64 {
    let target = model.steady_state(model.clamp_power(power_w));
    let tau = if target > hr_bpm { model.tau_up_s } else { model.tau_down_s };
    let alpha = (dt / tau).min(1.0);
    let mut next = hr_bpm + alpha * (target - hr_bpm);
    if model.noise_bpm_sd > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        next += z * model.noise_bpm_sd * dt.sqrt();
    }
    next
}

/// Heart-rate state of one simulated rider with its own noise stream.
#[derive(Debug, Clone)]
pub struct Rider {
    model: RiderModel,
    hr_bpm: f64,
    rng: ChaCha8Rng,
}

impl Rider {
    pub fn new(model: RiderModel, seed: u64) -> Result<Self, SimError> {
        model.validate()?;
        Ok(Self {
            hr_bpm: model.hr_rest_bpm,
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn model(&self) -> &RiderModel {
        &self.model
    }

    pub fn hr_bpm(&self) -> f64 {
        self.hr_bpm
    }

    pub fn step(&mut self, power_w: f64, dt: f64) -> f64 {
        self.hr_bpm = hr_step(self.hr_bpm, power_w, dt, &self.model, &mut self.rng);
        self.hr_bpm
    }
}
