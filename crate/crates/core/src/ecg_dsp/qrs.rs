//! Hamilton-style QRS detector.
//!
//! The band-passed signal is differentiated, rectified and smoothed with a
//! moving average over the integration window. Local maxima of that envelope
//! are peak candidates. A candidate is a QRS when it exceeds
//!
//! ```text
//! threshold = noise_mean + th_coeff * (qrs_mean - noise_mean)
//! ```
//!
//! where the means run over the last `buffer_len` QRS and noise peak heights,
//! and it lies outside the refractory period of the previous beat. When no
//! beat has been seen for `searchback_factor` times the running RR average,
//! the largest noise candidate above half the threshold is promoted.
//!
//! The first `learning_s` seconds only collect envelope peaks. Their
//! per-second maxima seed the QRS buffer, the noise buffer starts empty, and
//! the held peaks are then classified against that threshold, so
//! beats inside the learning period are still reported, just late.
//!
//! Beat timestamps are refined to the largest absolute filtered sample in a
//! short look-back window ending at the envelope peak.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{DspError, FilteredSample, RPeak};

/// Held search-back candidates; the smallest is dropped beyond this.
const MAX_CANDIDATES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrsConfig {
    pub th_coeff: f64,
    pub refractory_s: f64,
    pub integration_s: f64,
    pub buffer_len: usize,
    pub searchback_factor: f64,
    /// Search-back candidates must be at least this far past the last beat.
    pub searchback_min_s: f64,
    /// Search-back candidates must exceed this fraction of the threshold.
    pub searchback_th_frac: f64,
    /// Extra look-back beyond the integration window when refining R.
    pub refine_margin_s: f64,
    /// Initial period used only to seed the peak buffers.
    pub learning_s: f64,
}

impl Default for QrsConfig {
    fn default() -> Self {
        Self {
            th_coeff: 0.3125,
            refractory_s: 0.2,
            integration_s: 0.08,
            buffer_len: 8,
            searchback_factor: 1.5,
            searchback_min_s: 0.36,
            searchback_th_frac: 0.5,
            refine_margin_s: 0.05,
            learning_s: 2.0,
        }
    }
}

impl QrsConfig {
    fn validate(&self) -> Result<(), DspError> {
        let ok = self.th_coeff > 0.0
            && self.th_coeff < 1.0
            && self.refractory_s > 0.0
            && self.integration_s > 0.0
            && self.buffer_len > 0
            && self.searchback_factor > 1.0
            && self.searchback_min_s >= self.refractory_s
            && self.searchback_th_frac > 0.0
            && self.refine_margin_s >= 0.0
            && self.learning_s >= 0.0
            && self.learning_s.is_finite();
        if ok {
            Ok(())
        } else {
            Err(DspError::InvalidDetector(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    envelope: f64,
    r_index: u64,
    peak: RPeak,
}

/// Fixed-capacity running mean.
#[derive(Debug, Clone)]
struct PeakBuffer {
    values: VecDeque<f64>,
    cap: usize,
}

impl PeakBuffer {
    fn new(cap: usize) -> Self {
        Self {
            values: VecDeque::with_capacity(cap),
            cap,
        }
    }

    fn push(&mut self, v: f64) {
        if self.values.len() == self.cap {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }

    fn clear(&mut self) {
        self.values.clear();
    }
}

#[derive(Debug, Clone)]
pub struct QrsDetector {
    cfg: QrsConfig,
    integration_len: usize,
    refractory: u64,
    searchback_min: u64,
    lookback: usize,
    learning_len: u64,
    second_len: u64,

    index: u64,
    prev_v: Option<f64>,
    diff_window: VecDeque<f64>,
    diff_sum: f64,
    /// Filtered samples kept for R refinement, newest last.
    recent: VecDeque<FilteredSample>,
    /// Envelope at index-2 and index-1.
    env_prev2: f64,
    env_prev1: f64,

    qrs_heights: PeakBuffer,
    noise_heights: PeakBuffer,
    rr: PeakBuffer,
    threshold: f64,
    last_beat: Option<u64>,
    candidates: Vec<Candidate>,
    /// Envelope peaks seen during learning, oldest first.
    learning: Vec<Candidate>,
    /// Detections not yet returned; only ever holds more than one entry
    /// right after learning ends.
    pending: VecDeque<RPeak>,
}

impl QrsDetector {
    pub fn new(fs: f64, cfg: QrsConfig) -> Result<Self, DspError> {
        cfg.validate()?;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(DspError::InvalidDetector(format!("sampling rate {fs} Hz")));
        }
        let samples = |s: f64| (s * fs).round().max(1.0) as usize;
        let integration_len = samples(cfg.integration_s);
        let lookback = integration_len + samples(cfg.refine_margin_s);
        Ok(Self {
            integration_len,
            refractory: samples(cfg.refractory_s) as u64,
            searchback_min: samples(cfg.searchback_min_s) as u64,
            lookback,
            learning_len: (cfg.learning_s * fs).round() as u64,
            second_len: samples(1.0) as u64,
            index: 0,
            prev_v: None,
            diff_window: VecDeque::with_capacity(integration_len),
            diff_sum: 0.0,
            recent: VecDeque::with_capacity(lookback + 2),
            env_prev2: 0.0,
            env_prev1: 0.0,
            qrs_heights: PeakBuffer::new(cfg.buffer_len),
            noise_heights: PeakBuffer::new(cfg.buffer_len),
            rr: PeakBuffer::new(cfg.buffer_len),
            threshold: 0.0,
            last_beat: None,
            candidates: Vec::new(),
            learning: Vec::new(),
            pending: VecDeque::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &QrsConfig {
        &self.cfg
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Forget all history, as if the stream had just started.
    pub fn reset(&mut self) {
        self.index = 0;
        self.prev_v = None;
        self.diff_window.clear();
        self.diff_sum = 0.0;
        self.recent.clear();
        self.env_prev2 = 0.0;
        self.env_prev1 = 0.0;
        self.reset_thresholds();
        self.rr.clear();
        self.last_beat = None;
        self.candidates.clear();
        self.learning.clear();
        self.pending.clear();
    }

    fn reset_thresholds(&mut self) {
        self.qrs_heights.clear();
        self.noise_heights.clear();
        self.threshold = 0.0;
    }

    pub fn push(&mut self, sample: FilteredSample) -> Option<RPeak> {
        let n = self.index;
        self.index += 1;

        let d = self.prev_v.map_or(0.0, |p| (sample.v - p).abs());
        self.prev_v = Some(sample.v);
        if self.diff_window.len() == self.integration_len {
            self.diff_sum -= self.diff_window.pop_front().unwrap_or(0.0);
        }
        self.diff_window.push_back(d);
        self.diff_sum += d;
        if self.recent.len() == self.lookback + 2 {
            self.recent.pop_front();
        }
        self.recent.push_back(sample);

        // Blank the start-up transient of the integrator.
        let envelope = if n < 2 * self.integration_len as u64 {
            0.0
        } else {
            (self.diff_sum / self.integration_len as f64).max(0.0)
        };

        let is_peak = n >= 2 && self.env_prev2 < self.env_prev1 && self.env_prev1 >= envelope;
        let height = self.env_prev1;
        self.env_prev2 = self.env_prev1;
        self.env_prev1 = envelope;

        if n < self.learning_len {
            if is_peak {
                let (r_index, peak) = self.refine(n - 1);
                self.learning.push(Candidate {
                    envelope: height,
                    r_index,
                    peak,
                });
            }
            if n + 1 == self.learning_len {
                self.finish_learning();
            }
        } else {
            let mut emitted = None;
            if is_peak {
                emitted = self.on_envelope_peak(n - 1, height);
            }
            if emitted.is_none() {
                emitted = self.search_back(n);
            }
            self.pending.extend(emitted);
        }
        self.pending.pop_front()
    }

    fn finish_learning(&mut self) {
        let held = std::mem::take(&mut self.learning);
        if held.is_empty() {
            return;
        }
        let mut block_max: Vec<f64> = Vec::new();
        for c in &held {
            let block = (c.r_index / self.second_len) as usize;
            if block_max.len() <= block {
                block_max.resize(block + 1, 0.0);
            }
            block_max[block] = block_max[block].max(c.envelope);
        }
        for m in block_max.into_iter().filter(|&m| m > 0.0) {
            self.qrs_heights.push(m);
        }
        self.update_threshold();
        for c in held {
            if let Some(peak) = self.classify(c) {
                self.pending.push_back(peak);
            }
        }
    }

    /// Largest |v| in the look-back window ending at `peak_index`.
    fn refine(&self, peak_index: u64) -> (u64, RPeak) {
        // `recent` ends at the current index, one past `peak_index`.
        let newest = self.index - 1;
        let skip_tail = (newest - peak_index) as usize;
        let len = self.recent.len();
        let end = len.saturating_sub(skip_tail);
        let start = end.saturating_sub(self.lookback + 1);
        let (offset, best) = self
            .recent
            .range(start..end)
            .enumerate()
            .fold((0, None::<FilteredSample>), |(bi, best), (i, s)| match best {
                Some(b) if b.v.abs() >= s.v.abs() => (bi, Some(b)),
                _ => (i, Some(*s)),
            });
        let best = best.unwrap_or(FilteredSample { t: 0.0, v: 0.0 });
        let r_index = newest - (len - 1 - (start + offset)) as u64;
        (
            r_index,
            RPeak {
                t: best.t,
                amplitude: best.v,
            },
        )
    }

    fn on_envelope_peak(&mut self, peak_index: u64, height: f64) -> Option<RPeak> {
        let (r_index, peak) = self.refine(peak_index);
        self.classify(Candidate {
            envelope: height,
            r_index,
            peak,
        })
    }

    fn classify(&mut self, c: Candidate) -> Option<RPeak> {
        let Candidate {
            envelope: height,
            r_index,
            peak,
        } = c;
        let outside_refractory = self
            .last_beat
            .is_none_or(|last| r_index > last + self.refractory);
        if !outside_refractory {
            return None;
        }

        let result = if height > self.threshold {
            self.accept(r_index, height);
            Some(peak)
        } else {
            self.noise_heights.push(height);
            if self.candidates.len() == MAX_CANDIDATES {
                if let Some((i, _)) = self
                    .candidates
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.envelope.total_cmp(&b.1.envelope))
                {
                    self.candidates.remove(i);
                }
            }
            self.candidates.push(Candidate {
                envelope: height,
                r_index,
                peak,
            });
            None
        };
        self.update_threshold();
        result
    }

    fn accept(&mut self, r_index: u64, height: f64) {
        self.qrs_heights.push(height);
        if let Some(last) = self.last_beat {
            self.rr.push((r_index - last) as f64);
        }
        self.last_beat = Some(r_index);
        self.candidates.clear();
    }

    fn search_back(&mut self, n: u64) -> Option<RPeak> {
        let last = self.last_beat?;
        let rr_mean = self.rr.mean();
        if rr_mean <= 0.0 || ((n - last) as f64) <= self.cfg.searchback_factor * rr_mean {
            return None;
        }
        let floor = self.cfg.searchback_th_frac * self.threshold;
        let best = self
            .candidates
            .iter()
            .filter(|c| c.r_index > last + self.searchback_min && c.envelope > floor)
            .max_by(|a, b| a.envelope.total_cmp(&b.envelope))
            .copied()?;
        self.accept(best.r_index, best.envelope);
        self.update_threshold();
        Some(best.peak)
    }

    fn update_threshold(&mut self) {
        let noise = self.noise_heights.mean();
        let qrs = self.qrs_heights.mean();
        let th = noise + self.cfg.th_coeff * (qrs - noise);
        let has_history = !self.qrs_heights.values.is_empty();
        if !th.is_finite() || (has_history && th < f64::MIN_POSITIVE) {
            self.reset_thresholds();
        } else {
            self.threshold = th;
        }
    }
}

/// Batch form of [`QrsDetector`].
pub fn detect_qrs(filtered: &[FilteredSample], fs: f64, cfg: &QrsConfig) -> Result<Vec<RPeak>, DspError> {
    let mut det = QrsDetector::new(fs, cfg.clone())?;
    Ok(filtered.iter().filter_map(|&s| det.push(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize, v: f64) -> Vec<FilteredSample> {
        (0..n)
            .map(|i| FilteredSample {
                t: i as f64 / 130.0,
                v,
            })
            .collect()
    }

    #[test]
    fn zero_signal_has_no_peaks() {
        let peaks = detect_qrs(&flat(130 * 60, 0.0), 130.0, &QrsConfig::default()).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn constant_signal_has_no_peaks() {
        let peaks = detect_qrs(&flat(130 * 60, 3.0), 130.0, &QrsConfig::default()).unwrap();
        assert!(peaks.is_empty());
    }

    #[test]
    fn spike_train_is_detected_with_refined_timing() {
        // Narrow triangular spikes every 0.8 s.
        let fs = 130.0;
        let mut sig = flat(130 * 20, 0.0);
        let mut truth = Vec::new();
        let mut i = 65;
        while i + 3 < sig.len() {
            sig[i - 1].v = 0.5;
            sig[i].v = 1.0;
            sig[i + 1].v = 0.5;
            truth.push(sig[i].t);
            i += 104;
        }
        let peaks = detect_qrs(&sig, fs, &QrsConfig::default()).unwrap();
        assert!(peaks.len() + 1 >= truth.len(), "{} vs {}", peaks.len(), truth.len());
        for p in &peaks {
            let nearest = truth
                .iter()
                .map(|t| (t - p.t).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-9, "peak {} off by {nearest}", p.t);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = QrsConfig {
            th_coeff: 1.5,
            ..Default::default()
        };
        assert!(QrsDetector::new(130.0, cfg).is_err());
        assert!(QrsDetector::new(0.0, QrsConfig::default()).is_err());
    }
}
