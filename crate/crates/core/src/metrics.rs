//! Adherence metrics over session ticks.
//!
//! Only ticks in the `Running` phase that carry a heart-rate estimate count.
//! Every tick has the same duration, so a tick count stands in for time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hr_zones::ZoneId;
use crate::session::{LoopState, Phase, SessionLog};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("undefined metric: no running ticks with a heart-rate estimate")]
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub zone: ZoneId,
    pub ratio_pct: f64,
    pub mean_hr_norm: f64,
    pub n_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub optimal_hr_ratio_pct: f64,
    pub mean_hr_norm: f64,
    pub per_segment: Vec<SegmentMetrics>,
    pub n_ticks_total: u64,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    on_target: u64,
    n: u64,
    hr_norm_sum: f64,
}

impl Tally {
    fn add(&mut self, on_target: bool, hr_norm: f64) {
        self.on_target += u64::from(on_target);
        self.n += 1;
        self.hr_norm_sum += hr_norm;
    }

    fn ratio_pct(&self) -> f64 {
        100.0 * self.on_target as f64 / self.n as f64
    }

    fn mean_hr_norm(&self) -> f64 {
        self.hr_norm_sum / self.n as f64
    }
}

/// Streaming form of [`optimal_hr_ratio`].
///
/// Segments are maximal runs of running ticks with the same target zone.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    total: Tally,
    segments: Vec<(ZoneId, Tally)>,
}

impl MetricsAccumulator {
    pub fn push(&mut self, tick: &LoopState) {
        if tick.phase != Phase::Running {
            return;
        }
        if self.segments.last().is_none_or(|(z, _)| *z != tick.target_zone) {
            self.segments.push((tick.target_zone, Tally::default()));
        }
        let (Some(_), Some(hr_norm)) = (tick.hr_bpm, tick.hr_norm) else {
            return;
        };
        let on_target = tick.on_target();
        self.total.add(on_target, hr_norm);
        if let Some((_, seg)) = self.segments.last_mut() {
            seg.add(on_target, hr_norm);
        }
    }

    pub fn finish(&self) -> Result<SessionMetrics, MetricsError> {
        if self.total.n == 0 {
            return Err(MetricsError::Undefined);
        }
        Ok(SessionMetrics {
            optimal_hr_ratio_pct: self.total.ratio_pct(),
            mean_hr_norm: self.total.mean_hr_norm(),
            per_segment: self
                .segments
                .iter()
                .filter(|(_, t)| t.n > 0)
                .map(|(zone, t)| SegmentMetrics {
                    zone: *zone,
                    ratio_pct: t.ratio_pct(),
                    mean_hr_norm: t.mean_hr_norm(),
                    n_ticks: t.n,
                })
                .collect(),
            n_ticks_total: self.total.n,
        })
    }
}

pub fn optimal_hr_ratio(ticks: &[LoopState]) -> Result<SessionMetrics, MetricsError> {
    let mut acc = MetricsAccumulator::default();
    ticks.iter().for_each(|t| acc.push(t));
    acc.finish()
}

pub fn mean_normalized_hr(ticks: &[LoopState]) -> Result<f64, MetricsError> {
    optimal_hr_ratio(ticks).map(|m| m.mean_hr_norm)
}

impl SessionLog {
    pub fn metrics(&self) -> Result<SessionMetrics, MetricsError> {
        optimal_hr_ratio(&self.ticks)
    }
}
