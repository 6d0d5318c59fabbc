//! Streaming ECG processing: band-pass → QRS detection → RR → heart rate.
//!
//! Every stage is a fold over an ordered stream with private state. The batch
//! helpers ([`filter_stream`], [`detect_qrs`], [`compute_hr`]) drive the same
//! streaming types, so feeding a trace sample by sample and feeding it at once
//! produce the same output.

mod filter;
mod hr;
mod qrs;

pub use filter::{design_bandpass, magnitude_response, FilterSpec, FilterStep, FirFilter};
pub use hr::{compute_hr, HrTracker, HR_MAX_VALID_BPM, HR_MIN_VALID_BPM};
pub use qrs::{detect_qrs, QrsConfig, QrsDetector};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FS_HZ: f64 = 130.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid filter parameters: {0}")]
    InvalidFilter(String),
    #[error("invalid detector parameters: {0}")]
    InvalidDetector(String),
    #[error("timestamp regression: {t} s after {prev} s")]
    TimestampRegression { prev: f64, t: f64 },
    #[error("non-finite or negative sample (t = {t}, v = {v})")]
    InvalidSample { t: f64, v: f64 },
}

/// Raw electrode potential sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcgSample {
    /// Seconds since stream start.
    pub t: f64,
    /// Millivolts.
    pub v: f64,
}

impl EcgSample {
    pub fn new(t: f64, v: f64) -> Self {
        Self { t, v }
    }

    fn validate(&self) -> Result<(), DspError> {
        if self.t.is_finite() && self.t >= 0.0 && self.v.is_finite() {
            Ok(())
        } else {
            Err(DspError::InvalidSample { t: self.t, v: self.v })
        }
    }
}

/// Band-passed sample with the filter's group delay removed from `t`.
///
/// Early outputs can carry a negative timestamp while the filter fills.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredSample {
    pub t: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RPeak {
    pub t: f64,
    /// Filtered-signal units.
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrEstimate {
    pub t: f64,
    pub hr_bpm: f64,
    /// RR intervals averaged into this estimate.
    pub n_beats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub filter: FilterSpec,
    pub qrs: QrsConfig,
    pub hr_window_s: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            filter: FilterSpec::default(),
            qrs: QrsConfig::default(),
            hr_window_s: 10.0,
        }
    }
}

/// What one input sample produced.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PipelineStep {
    /// A gap was detected before this sample; downstream state was cleared.
    pub reset: bool,
    pub peak: Option<RPeak>,
    pub estimate: Option<HrEstimate>,
}

/// Filter, detector and HR tracker wired in sequence.
#[derive(Debug, Clone)]
pub struct EcgPipeline {
    filter: FirFilter,
    detector: QrsDetector,
    hr: HrTracker,
    warmup_s: f64,
    warmup_until: Option<f64>,
    latest: Option<HrEstimate>,
}

impl EcgPipeline {
    pub fn new(cfg: &DspConfig) -> Result<Self, DspError> {
        let filter = FirFilter::new(&cfg.filter)?;
        let detector = QrsDetector::new(cfg.filter.fs, cfg.qrs.clone())?;
        let hr = HrTracker::new(cfg.hr_window_s)?;
        let warmup_s = cfg.hr_window_s.max(filter.delay_s());
        Ok(Self {
            filter,
            detector,
            hr,
            warmup_s,
            warmup_until: None,
            latest: None,
        })
    }

    pub fn push(&mut self, sample: EcgSample) -> Result<PipelineStep, DspError> {
        let step = self.filter.push(sample)?;
        if step.reset {
            self.detector.reset();
            self.hr.reset();
            self.latest = None;
            self.warmup_until = None;
        }
        let warmup_until = *self.warmup_until.get_or_insert(sample.t + self.warmup_s);

        let mut out = PipelineStep {
            reset: step.reset,
            ..Default::default()
        };
        if let Some(peak) = self.detector.push(step.sample) {
            out.peak = Some(peak);
            if let Some(est) = self.hr.push(peak) {
                if est.t >= warmup_until {
                    self.latest = Some(est);
                    out.estimate = Some(est);
                }
            }
        }
        Ok(out)
    }

    /// Most recent estimate, held constant between beats.
    pub fn latest(&self) -> Option<HrEstimate> {
        self.latest
    }

    pub fn warmup_s(&self) -> f64 {
        self.warmup_s
    }
}

/// Run a whole trace through a fresh pipeline; returns all peaks and estimates.
pub fn run_pipeline(
    samples: &[EcgSample],
    cfg: &DspConfig,
) -> Result<(Vec<RPeak>, Vec<HrEstimate>), DspError> {
    let mut pipeline = EcgPipeline::new(cfg)?;
    let mut peaks = Vec::new();
    let mut estimates = Vec::new();
    for &s in samples {
        let step = pipeline.push(s)?;
        peaks.extend(step.peak);
        estimates.extend(step.estimate);
    }
    Ok((peaks, estimates))
}

/// Batch form of [`FirFilter`].
pub fn filter_stream(samples: &[EcgSample], spec: &FilterSpec) -> Result<Vec<FilterStep>, DspError> {
    let mut filter = FirFilter::new(spec)?;
    samples.iter().map(|&s| filter.push(s)).collect()
}
