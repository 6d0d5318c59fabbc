//! Feedback controllers for the three conditions.
//!
//! - **Adaptive NPC**: the pacing agent's longitudinal offset is a linear,
//!   saturating function of the distance between the measured heart rate and
//!   the target-zone centre. Ahead (positive) means the heart rate is too low.
//! - **Random NPC**: the offset wanders between seeded uniform targets,
//!   independent of heart rate.
//! - **Baseline**: no agent, only a bike-computer readout.
//!
//! The NPC never jumps; it slews toward its target at a bounded rate.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hr_zones::{ZoneError, ZoneId, ZoneModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptationError {
    #[error("target zone must be a training zone (1..=5), got {0}")]
    NotATrainingZone(ZoneId),
    #[error("invalid adaptation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Zone(#[from] ZoneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    #[serde(alias = "random")]
    RandomNpc,
    #[serde(alias = "adaptive")]
    AdaptiveNpc,
}

impl Condition {
    pub fn has_npc(self) -> bool {
        !matches!(self, Condition::Baseline)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::RandomNpc => "random_npc",
            Condition::AdaptiveNpc => "adaptive_npc",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "baseline" => Ok(Condition::Baseline),
            "random" | "random_npc" => Ok(Condition::RandomNpc),
            "adaptive" | "adaptive_npc" => Ok(Condition::AdaptiveNpc),
            other => Err(format!(
                "unknown condition `{other}` (expected adaptive|random|baseline)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    pub max_offset_m: f64,
    /// Deviation from the zone centre that saturates the offset.
    pub full_scale_dev_bpm: f64,
    pub npc_slew_mps: f64,
    /// Alignment radius; `None` uses the offset produced at the zone edge.
    pub green_radius_m: Option<f64>,
    pub random_retarget_s: f64,
    pub rng_seed: u64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            max_offset_m: 30.0,
            full_scale_dev_bpm: 15.0,
            npc_slew_mps: 2.0,
            green_radius_m: None,
            random_retarget_s: 2.0,
            rng_seed: 0,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<(), AdaptationError> {
        let ok = self.max_offset_m > 0.0
            && self.full_scale_dev_bpm > 0.0
            && self.npc_slew_mps > 0.0
            && self.random_retarget_s > 0.0;
        if ok {
            Ok(())
        } else {
            Err(AdaptationError::InvalidConfig(format!("{self:?}")))
        }
    }

    /// Alignment radius for a zone model. Zones all span 10 % of HR_max, so the
    /// edge offset does not depend on which zone is targeted.
    pub fn resolve_green_radius(&self, model: &ZoneModel) -> Result<f64, AdaptationError> {
        let radius = match self.green_radius_m {
            Some(r) => r,
            None => {
                let (lo, hi) = model.bounds(ZoneId::new(1)?)?;
                self.max_offset_m * (0.5 * (hi - lo)) / self.full_scale_dev_bpm
            }
        };
        if radius > 0.0 && radius < self.max_offset_m {
            Ok(radius)
        } else {
            Err(AdaptationError::InvalidConfig(format!(
                "green radius {radius} m must lie in (0, {})",
                self.max_offset_m
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NpcState {
    /// Positive: NPC ahead of the rider.
    pub offset_m: f64,
    pub aligned: bool,
    pub score: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BikeComputerView {
    pub hr_bpm: Option<f64>,
    pub current_zone: Option<ZoneId>,
    pub target_zone: ZoneId,
}

/// Per-condition output of one controller tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feedback {
    Npc(NpcState),
    BikeComputer(BikeComputerView),
}

/// Resolved motion limits for the NPC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpcKinematics {
    pub max_offset_m: f64,
    pub slew_mps: f64,
    pub green_radius_m: f64,
    /// Award a point per aligned tick.
    pub scoring: bool,
}

/// Target offset for the adaptive NPC.
pub fn adaptive_offset(
    hr_bpm: f64,
    target_zone: ZoneId,
    model: &ZoneModel,
    cfg: &AdaptationConfig,
) -> Result<f64, AdaptationError> {
    if !target_zone.is_training_zone() {
        return Err(AdaptationError::NotATrainingZone(target_zone));
    }
    let center = model.center(target_zone)?;
    let raw = cfg.max_offset_m * (center - hr_bpm) / cfg.full_scale_dev_bpm;
    Ok(raw.clamp(-cfg.max_offset_m, cfg.max_offset_m))
}

/// Move the NPC toward `target_offset_m` by at most `slew * dt`.
pub fn step_npc(state: NpcState, target_offset_m: f64, dt: f64, kin: &NpcKinematics) -> NpcState {
    let target = target_offset_m.clamp(-kin.max_offset_m, kin.max_offset_m);
    let max_step = kin.slew_mps * dt;
    let delta = (target - state.offset_m).clamp(-max_step, max_step);
    let offset_m = (state.offset_m + delta).clamp(-kin.max_offset_m, kin.max_offset_m);
    let aligned = offset_m.abs() <= kin.green_radius_m;
    NpcState {
        offset_m,
        aligned,
        score: state.score + u64::from(aligned && kin.scoring),
    }
}

/// Uniform draw on `[-max_offset_m, max_offset_m]`.
pub fn random_offset_target<R: Rng + ?Sized>(rng: &mut R, cfg: &AdaptationConfig) -> f64 {
    rng.random_range(-cfg.max_offset_m..=cfg.max_offset_m)
}

pub fn baseline_view(hr_bpm: Option<f64>, model: &ZoneModel, target_zone: ZoneId) -> BikeComputerView {
    BikeComputerView {
        hr_bpm,
        current_zone: hr_bpm.map(|hr| model.classify(hr)),
        target_zone,
    }
}

/// Stateful controller owned by one session loop.
#[derive(Debug, Clone)]
pub struct Controller {
    condition: Condition,
    cfg: AdaptationConfig,
    kin: NpcKinematics,
    rng: ChaCha8Rng,
    npc: NpcState,
    random_target: f64,
    retarget_every: u64,
    /// Ticks with heart rate present; drives the random retarget clock.
    hr_ticks: u64,
}

impl Controller {
    pub fn new(
        condition: Condition,
        cfg: AdaptationConfig,
        model: &ZoneModel,
        tick_hz: u32,
    ) -> Result<Self, AdaptationError> {
        cfg.validate()?;
        let green_radius_m = cfg.resolve_green_radius(model)?;
        let kin = NpcKinematics {
            max_offset_m: cfg.max_offset_m,
            slew_mps: cfg.npc_slew_mps,
            green_radius_m,
            scoring: condition == Condition::AdaptiveNpc,
        };
        let retarget_every = (cfg.random_retarget_s * tick_hz as f64).round().max(1.0) as u64;
        Ok(Self {
            condition,
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            cfg,
            kin,
            npc: NpcState::default(),
            random_target: 0.0,
            retarget_every,
            hr_ticks: 0,
        })
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn kinematics(&self) -> &NpcKinematics {
        &self.kin
    }

    pub fn npc(&self) -> NpcState {
        self.npc
    }

    /// Advance one tick. Without a heart-rate estimate the NPC is steered
    /// back to (and at start-up held at) zero offset.
    pub fn tick(
        &mut self,
        hr_bpm: Option<f64>,
        target_zone: ZoneId,
        model: &ZoneModel,
        dt: f64,
    ) -> Result<Feedback, AdaptationError> {
        if !target_zone.is_training_zone() {
            return Err(AdaptationError::NotATrainingZone(target_zone));
        }
        let target = match (self.condition, hr_bpm) {
            (Condition::Baseline, _) => {
                return Ok(Feedback::BikeComputer(baseline_view(hr_bpm, model, target_zone)));
            }
            (_, None) => 0.0,
            (Condition::AdaptiveNpc, Some(hr)) => adaptive_offset(hr, target_zone, model, &self.cfg)?,
            (Condition::RandomNpc, Some(_)) => {
                if self.hr_ticks.is_multiple_of(self.retarget_every) {
                    self.random_target = random_offset_target(&mut self.rng, &self.cfg);
                }
                self.hr_ticks += 1;
                self.random_target
            }
        };
        self.npc = step_npc(self.npc, target, dt, &self.kin);
        Ok(Feedback::Npc(self.npc))
    }
}
