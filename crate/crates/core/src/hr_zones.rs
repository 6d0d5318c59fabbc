//! Maximal heart rate and the five-zone intensity model.
//!
//! Zones are half-open `[lower, upper)` bands at 50/60/70/80/90/100 % of the
//! athlete's maximal heart rate. Boundaries are kept as reals; nothing in this
//! module rounds.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_AGE: u32 = 10;
pub const MAX_AGE: u32 = 100;

/// Boundary fractions of HR_max, in tenths.
const BOUNDARY_TENTHS: [u32; 6] = [5, 6, 7, 8, 9, 10];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZoneError {
    #[error("age {0} outside supported range {MIN_AGE}..={MAX_AGE}")]
    AgeOutOfRange(u32),
    #[error("resting heart rate {rest} bpm must be below HR_max {hr_max} bpm")]
    RestAboveMax { rest: f64, hr_max: f64 },
    #[error("zone id {0} out of range 0..=5")]
    InvalidZone(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HrMaxFormula {
    /// `208 - 0.7 * age`
    #[default]
    Tanaka,
    /// `220 - age`
    Fox,
}

impl HrMaxFormula {
    pub fn hr_max(self, age: u32) -> f64 {
        match self {
            // Integer arithmetic in tenths keeps e.g. age 30 at exactly 187.0.
            HrMaxFormula::Tanaka => (2080.0 - 7.0 * age as f64) / 10.0,
            HrMaxFormula::Fox => 220.0 - age as f64,
        }
    }
}

impl std::str::FromStr for HrMaxFormula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tanaka" => Ok(HrMaxFormula::Tanaka),
            "fox" => Ok(HrMaxFormula::Fox),
            other => Err(format!("unknown HR_max formula `{other}` (expected tanaka|fox)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AthleteProfile {
    pub age: u32,
    #[serde(default)]
    pub hr_max_formula: HrMaxFormula,
    #[serde(default)]
    pub hr_rest_bpm: Option<f64>,
}

impl AthleteProfile {
    pub fn new(age: u32) -> Self {
        Self {
            age,
            hr_max_formula: HrMaxFormula::Tanaka,
            hr_rest_bpm: None,
        }
    }

    pub fn with_formula(mut self, formula: HrMaxFormula) -> Self {
        self.hr_max_formula = formula;
        self
    }
}

/// Zone index: 0 is below Zone 1, 1..=5 are the training zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ZoneId(u8);

impl ZoneId {
    pub const BELOW: ZoneId = ZoneId(0);

    pub fn new(value: u8) -> Result<Self, ZoneError> {
        if value <= 5 {
            Ok(ZoneId(value))
        } else {
            Err(ZoneError::InvalidZone(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// True for the five training zones, false for [`ZoneId::BELOW`].
    pub fn is_training_zone(self) -> bool {
        self.0 >= 1
    }
}

impl TryFrom<u8> for ZoneId {
    type Error = ZoneError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        ZoneId::new(value)
    }
}

impl From<ZoneId> for u8 {
    fn from(z: ZoneId) -> u8 {
        z.0
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneModel {
    pub hr_max_bpm: f64,
    /// Ascending boundaries at 50/60/70/80/90/100 % of `hr_max_bpm`.
    pub boundaries: [f64; 6],
}

pub fn compute_zone_model(profile: &AthleteProfile) -> Result<ZoneModel, ZoneError> {
    if !(MIN_AGE..=MAX_AGE).contains(&profile.age) {
        return Err(ZoneError::AgeOutOfRange(profile.age));
    }
    let hr_max = profile.hr_max_formula.hr_max(profile.age);
    if let Some(rest) = profile.hr_rest_bpm {
        if !(rest < hr_max) {
            return Err(ZoneError::RestAboveMax { rest, hr_max });
        }
    }
    Ok(ZoneModel::from_hr_max(hr_max))
}

impl ZoneModel {
    pub fn from_hr_max(hr_max_bpm: f64) -> Self {
        // 50 % and 100 % are exact; the rest go through tenths so that
        // e.g. 0.7 * 187 prints as 130.9.
        let boundaries = BOUNDARY_TENTHS.map(|k| match k {
            5 => 0.5 * hr_max_bpm,
            10 => hr_max_bpm,
            k => hr_max_bpm * k as f64 / 10.0,
        });
        Self {
            hr_max_bpm,
            boundaries,
        }
    }

    /// Half-open classification; `hr >= hr_max` lands in Zone 5.
    pub fn classify(&self, hr_bpm: f64) -> ZoneId {
        // Number of boundaries at or below hr, capped at 5.
        let above = self.boundaries[..5].iter().filter(|&&b| hr_bpm >= b).count();
        ZoneId(above as u8)
    }

    /// `[lower, upper)` of a training zone.
    pub fn bounds(&self, zone: ZoneId) -> Result<(f64, f64), ZoneError> {
        if !zone.is_training_zone() {
            return Err(ZoneError::InvalidZone(zone.0));
        }
        let i = zone.0 as usize;
        Ok((self.boundaries[i - 1], self.boundaries[i]))
    }

    pub fn center(&self, zone: ZoneId) -> Result<f64, ZoneError> {
        let (lo, hi) = self.bounds(zone)?;
        Ok(0.5 * (lo + hi))
    }

    pub fn normalize(&self, hr_bpm: f64) -> f64 {
        hr_bpm / self.hr_max_bpm
    }
}

/// Free-function form of [`ZoneModel::classify`].
pub fn classify(hr_bpm: f64, model: &ZoneModel) -> ZoneId {
    model.classify(hr_bpm)
}
