use std::collections::VecDeque;

use super::{DspError, HrEstimate, RPeak};

pub const HR_MIN_VALID_BPM: f64 = 25.0;
pub const HR_MAX_VALID_BPM: f64 = 230.0;

/// Slack on the trailing-window boundary so a peak exactly `window_s` old is kept.
const WINDOW_EPS: f64 = 1e-9;

/// Mean heart rate over the RR intervals inside a trailing window.
#[derive(Debug, Clone)]
pub struct HrTracker {
    window_s: f64,
    peaks: VecDeque<f64>,
}

impl HrTracker {
    pub fn new(window_s: f64) -> Result<Self, DspError> {
        if !(window_s.is_finite() && window_s > 0.0) {
            return Err(DspError::InvalidDetector(format!("HR window {window_s} s")));
        }
        Ok(Self {
            window_s,
            peaks: VecDeque::new(),
        })
    }

    pub fn reset(&mut self) {
        self.peaks.clear();
    }

    /// Add a beat; returns an estimate once at least one valid RR interval is
    /// inside the window.
    pub fn push(&mut self, peak: RPeak) -> Option<HrEstimate> {
        self.peaks.push_back(peak.t);
        let oldest = peak.t - self.window_s - WINDOW_EPS;
        while self.peaks.front().is_some_and(|&t| t < oldest) {
            self.peaks.pop_front();
        }

        let rr_lo = 60.0 / HR_MAX_VALID_BPM;
        let rr_hi = 60.0 / HR_MIN_VALID_BPM;
        let (sum, count) = self
            .peaks
            .iter()
            .zip(self.peaks.iter().skip(1))
            .map(|(a, b)| b - a)
            .filter(|rr| (rr_lo..=rr_hi).contains(rr))
            .fold((0.0, 0usize), |(s, c), rr| (s + rr, c + 1));
        (count > 0).then(|| HrEstimate {
            t: peak.t,
            hr_bpm: 60.0 / (sum / count as f64),
            n_beats: count,
        })
    }
}

/// Batch form of [`HrTracker`]: one estimate per peak that yields one.
pub fn compute_hr(peaks: &[RPeak], window_s: f64) -> Result<Vec<HrEstimate>, DspError> {
    let mut tracker = HrTracker::new(window_s)?;
    Ok(peaks.iter().filter_map(|&p| tracker.push(p)).collect())
}
