//! Linear-phase windowed-sinc band-pass and its streaming convolution.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{DspError, EcgSample, FilteredSample};

/// Missing-sample count above which the stream is considered broken.
const MAX_GAP_SAMPLES: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub f_lo: f64,
    pub f_hi: f64,
    /// Odd, so the group delay is a whole number of samples.
    pub n_taps: usize,
    pub fs: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            f_lo: 3.0,
            f_hi: 45.0,
            n_taps: 129,
            fs: super::DEFAULT_FS_HZ,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |msg: String| Err(DspError::InvalidFilter(msg));
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return bad(format!("sampling rate {} Hz", self.fs));
        }
        if !(self.f_lo > 0.0 && self.f_lo < self.f_hi && self.f_hi < self.fs / 2.0) {
            return bad(format!(
                "band edges must satisfy 0 < f_lo < f_hi < fs/2, got {}..{} Hz at fs {} Hz",
                self.f_lo, self.f_hi, self.fs
            ));
        }
        if self.n_taps == 0 || self.n_taps.is_multiple_of(2) {
            return bad(format!("n_taps must be positive and odd, got {}", self.n_taps));
        }
        Ok(())
    }

    /// Group delay in seconds.
    pub fn delay_s(&self) -> f64 {
        (self.n_taps - 1) as f64 / 2.0 / self.fs
    }
}

fn hamming(n_taps: usize) -> impl Iterator<Item = f64> {
    let m = (n_taps - 1).max(1) as f64;
    (0..n_taps).map(move |n| 0.54 - 0.46 * (2.0 * PI * n as f64 / m).cos())
}

/// Hamming-windowed low-pass normalised to unit DC gain. `cutoff` in cycles/sample.
fn lowpass(cutoff: f64, n_taps: usize) -> Vec<f64> {
    let alpha = (n_taps - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = hamming(n_taps)
        .enumerate()
        .map(|(n, w)| {
            let x = n as f64 - alpha;
            let sinc = if x == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * x).sin() / (PI * x)
            };
            w * sinc
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|h| *h /= dc);
    taps
}

/// Band-pass as the difference of two unit-DC low-passes, so the taps sum to
/// zero and the response is symmetric (linear phase).
pub fn design_bandpass(spec: &FilterSpec) -> Result<Vec<f64>, DspError> {
    spec.validate()?;
    let hi = lowpass(spec.f_hi / spec.fs, spec.n_taps);
    let lo = lowpass(spec.f_lo / spec.fs, spec.n_taps);
    let mut taps: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| h - l).collect();
    // Enforce exact symmetry against rounding in the two sums.
    let n = taps.len();
    for i in 0..n / 2 {
        let avg = 0.5 * (taps[i] + taps[n - 1 - i]);
        taps[i] = avg;
        taps[n - 1 - i] = avg;
    }
    Ok(taps)
}

/// |H(f)| of an FIR filter.
pub fn magnitude_response(coeffs: &[f64], f_hz: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f_hz / fs;
    let (re, im) = coeffs
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (k, &h)| {
            let phase = w * k as f64;
            (re + h * phase.cos(), im - h * phase.sin())
        });
    re.hypot(im)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterStep {
    /// The sample followed a gap; history was cleared before filtering it.
    pub reset: bool,
    pub sample: FilteredSample,
}

/// Causal streaming FIR with group-delay-compensated output timestamps.
#[derive(Debug, Clone)]
pub struct FirFilter {
    coeffs: Vec<f64>,
    /// Ring buffer of the last `n_taps` inputs; `head` is the newest.
    history: Vec<f64>,
    head: usize,
    fs: f64,
    delay_s: f64,
    last_t: Option<f64>,
    primed: bool,
}

impl FirFilter {
    pub fn new(spec: &FilterSpec) -> Result<Self, DspError> {
        Ok(Self::with_coeffs(design_bandpass(spec)?, spec.fs))
    }

    pub fn with_coeffs(coeffs: Vec<f64>, fs: f64) -> Self {
        let n = coeffs.len();
        Self {
            delay_s: (n.saturating_sub(1)) as f64 / 2.0 / fs,
            coeffs,
            history: vec![0.0; n],
            head: 0,
            fs,
            last_t: None,
            primed: false,
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn delay_s(&self) -> f64 {
        self.delay_s
    }

    pub fn reset(&mut self) {
        self.history.iter_mut().for_each(|x| *x = 0.0);
        self.head = 0;
        self.last_t = None;
        self.primed = false;
    }

    pub fn push(&mut self, sample: EcgSample) -> Result<FilterStep, DspError> {
        sample.validate()?;
        let mut reset = false;
        if let Some(prev) = self.last_t {
            if sample.t < prev {
                return Err(DspError::TimestampRegression { prev, t: sample.t });
            }
            let missing = ((sample.t - prev) * self.fs).round() - 1.0;
            if missing > MAX_GAP_SAMPLES {
                self.reset();
                reset = true;
            }
        }
        self.last_t = Some(sample.t);
        if !self.primed {
            // Start from the steady state of the first value so a baseline
            // offset does not ring through the taps.
            self.history.iter_mut().for_each(|x| *x = sample.v);
            self.primed = true;
        }

        let n = self.history.len();
        self.head = (self.head + 1) % n;
        self.history[self.head] = sample.v;
        // y[n] = sum_k h[k] x[n-k]
        let mut acc = 0.0;
        let mut idx = self.head;
        for &h in &self.coeffs {
            acc += h * self.history[idx];
            idx = if idx == 0 { n - 1 } else { idx - 1 };
        }
        Ok(FilterStep {
            reset,
            sample: FilteredSample {
                t: sample.t - self.delay_s,
                v: acc,
            },
        })
    }
}
