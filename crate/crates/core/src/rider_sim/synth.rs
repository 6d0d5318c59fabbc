//! Synthetic ECG with known beat times.
//!
//! Beats are placed by integrating the instantaneous rate; each beat is a fixed
//! PQRST template built from five Gaussians. The template is anchored at the
//! beat onset (start of the P wave) so generation is causal, and the ground-truth
//! beat time is the R-wave centre.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::ecg_dsp::{EcgSample, HR_MAX_VALID_BPM, HR_MIN_VALID_BPM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    /// Centre relative to beat onset, seconds.
    pub offset_s: f64,
    pub amplitude_mv: f64,
    /// Gaussian sigma, seconds.
    pub width_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgTemplate {
    /// P, Q, R, S, T.
    pub waves: [Wave; 5],
}

impl Default for EcgTemplate {
    fn default() -> Self {
        let w = |offset_s, amplitude_mv, width_s| Wave {
            offset_s,
            amplitude_mv,
            width_s,
        };
        Self {
            waves: [
                w(0.000, 0.15, 0.025),
                w(0.175, -0.10, 0.010),
                w(0.200, 1.00, 0.012),
                w(0.225, -0.25, 0.010),
                w(0.450, 0.30, 0.050),
            ],
        }
    }
}

impl EcgTemplate {
    pub fn r_offset_s(&self) -> f64 {
        self.waves[2].offset_s
    }

    /// Time after onset beyond which the template is negligible.
    pub fn extent_s(&self) -> f64 {
        self.waves
            .iter()
            .map(|w| w.offset_s + 5.0 * w.width_s)
            .fold(0.0, f64::max)
    }

    pub fn value(&self, since_onset_s: f64) -> f64 {
        self.waves
            .iter()
            .map(|w| {
                let z = (since_onset_s - w.offset_s) / w.width_s;
                w.amplitude_mv * (-0.5 * z * z).exp()
            })
            .sum()
    }
}

/// Streaming generator: one sample per call at the current heart rate.
#[derive(Debug, Clone)]
pub struct EcgSynth {
    fs: f64,
    template: EcgTemplate,
    noise_sd_mv: f64,
    index: u64,
    phase: f64,
    onsets: VecDeque<f64>,
}

impl EcgSynth {
    pub fn new(fs: f64, template: EcgTemplate, noise_sd_mv: f64) -> Result<Self, SimError> {
        if !(fs >= 100.0 && fs.is_finite()) {
            return Err(SimError::InvalidSynth(format!("sampling rate {fs} Hz below 100 Hz")));
        }
        if !(noise_sd_mv >= 0.0) {
            return Err(SimError::InvalidSynth(format!("noise sd {noise_sd_mv} mV")));
        }
        Ok(Self {
            fs,
            template,
            noise_sd_mv,
            index: 0,
            // The first sample starts a beat.
            phase: 1.0,
            onsets: VecDeque::new(),
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Time of the next sample to be produced.
    pub fn next_t(&self) -> f64 {
        self.index as f64 / self.fs
    }

    /// Produce the next sample. Returns the R time of a beat whose onset fell
    /// in this sample interval, if any.
    pub fn next_sample<R: Rng + ?Sized>(&mut self, hr_bpm: f64, rng: &mut R) -> (EcgSample, Option<f64>) {
        let t = self.next_t();
        let dt = 1.0 / self.fs;
        let rate = hr_bpm.clamp(HR_MIN_VALID_BPM, HR_MAX_VALID_BPM) / 60.0;
        let mut beat = None;
        if self.index == 0 {
            self.phase = 0.0;
            self.onsets.push_back(0.0);
            beat = Some(self.template.r_offset_s());
        } else {
            let advanced = self.phase + rate * dt;
            if advanced >= 1.0 {
                let onset = (t - dt) + (1.0 - self.phase) / rate;
                self.onsets.push_back(onset);
                beat = Some(onset + self.template.r_offset_s());
                self.phase = advanced - 1.0;
            } else {
                self.phase = advanced;
            }
        }
        self.index += 1;

        let extent = self.template.extent_s();
        while self.onsets.front().is_some_and(|&o| t - o > extent) {
            self.onsets.pop_front();
        }
        let mut v: f64 = self
            .onsets
            .iter()
            .filter(|&&o| o <= t)
            .map(|&o| self.template.value(t - o))
            .sum();
        if self.noise_sd_mv > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            v += self.noise_sd_mv * z;
        }
        (EcgSample::new(t, v), beat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SynthNoise {
    None,
    /// Relative to the mean power of the clean trace.
    SnrDb(f64),
    SdMv(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrace {
    pub samples: Vec<EcgSample>,
    /// Ground-truth R times inside the trace.
    pub beats: Vec<f64>,
}

/// Generate `duration_s` of ECG following `hr_schedule`.
pub fn synth_ecg<F, R>(
    hr_schedule: F,
    fs: f64,
    duration_s: f64,
    noise: SynthNoise,
    template: &EcgTemplate,
    rng: &mut R,
) -> Result<SynthTrace, SimError>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(SimError::InvalidSynth(format!("duration {duration_s} s")));
    }
    let mut synth = EcgSynth::new(fs, template.clone(), 0.0)?;
    let n = (duration_s * fs).round() as usize;
    let mut samples = Vec::with_capacity(n);
    let mut beats = Vec::new();
    for _ in 0..n {
        let t = synth.next_t();
        let bpm = hr_schedule(t);
        if !(HR_MIN_VALID_BPM..=HR_MAX_VALID_BPM).contains(&bpm) {
            return Err(SimError::ScheduleOutOfRange { t, bpm });
        }
        let (s, beat) = synth.next_sample(bpm, rng);
        samples.push(s);
        beats.extend(beat.filter(|&b| b < duration_s));
    }

    let sd = match noise {
        SynthNoise::None => 0.0,
        SynthNoise::SdMv(sd) if sd >= 0.0 => sd,
        SynthNoise::SnrDb(db) if db.is_finite() => {
            let power = samples.iter().map(|s| s.v * s.v).sum::<f64>() / samples.len().max(1) as f64;
            (power / 10f64.powf(db / 10.0)).sqrt()
        }
        other => return Err(SimError::InvalidSynth(format!("{other:?}"))),
    };
    if sd > 0.0 {
        for s in &mut samples {
            let z: f64 = StandardNormal.sample(rng);
            s.v += sd * z;
        }
    }
    Ok(SynthTrace { samples, beats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gen(schedule: impl Fn(f64) -> f64, secs: f64) -> SynthTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        synth_ecg(schedule, 130.0, secs, SynthNoise::None, &EcgTemplate::default(), &mut rng).unwrap()
    }

    #[test]
    fn constant_sixty_bpm() {
        let tr = gen(|_| 60.0, 60.0);
        assert!((59..=61).contains(&tr.beats.len()), "{}", tr.beats.len());
        for w in tr.beats.windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-9);
        }
        assert_eq!(tr.samples.len(), 7800);
    }

    #[test]
    fn ramp_beat_count_matches_integral() {
        let schedule = |t: f64| 60.0 + t;
        // Oracle: trapezoid integral of rate/60 over [0, 60).
        let n = 60_000;
        let h = 60.0 / n as f64;
        let integral: f64 = (0..n)
            .map(|i| 0.5 * h * (schedule(i as f64 * h) + schedule((i + 1) as f64 * h)) / 60.0)
            .sum();
        assert!((integral - 90.0).abs() < 1e-6);
        let tr = gen(schedule, 60.0);
        assert!((tr.beats.len() as f64 - integral).abs() <= 1.0, "{}", tr.beats.len());
    }

    #[test]
    fn r_wave_dominates() {
        let tr = gen(|_| 75.0, 10.0);
        let (i_max, _) = tr
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.v.total_cmp(&b.1.v))
            .unwrap();
        let t = tr.samples[i_max].t;
        assert!(tr.beats.iter().any(|b| (b - t).abs() < 1.0 / 130.0));
    }

    #[test]
    fn schedule_out_of_range_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = synth_ecg(|_| 300.0, 130.0, 1.0, SynthNoise::None, &EcgTemplate::default(), &mut rng);
        assert!(matches!(r, Err(SimError::ScheduleOutOfRange { .. })));
        assert!(EcgSynth::new(50.0, EcgTemplate::default(), 0.0).is_err());
    }

    #[test]
    fn snr_noise_has_requested_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let clean = gen(|_| 75.0, 120.0);
        let noisy = synth_ecg(|_| 75.0, 130.0, 120.0, SynthNoise::SnrDb(20.0), &EcgTemplate::default(), &mut rng)
            .unwrap();
        let p_sig: f64 = clean.samples.iter().map(|s| s.v * s.v).sum::<f64>() / clean.samples.len() as f64;
        let p_noise: f64 = clean
            .samples
            .iter()
            .zip(&noisy.samples)
            .map(|(a, b)| (b.v - a.v).powi(2))
            .sum::<f64>()
            / clean.samples.len() as f64;
        let snr = 10.0 * (p_sig / p_noise).log10();
        assert!((snr - 20.0).abs() < 0.3, "snr {snr}");
    }
}
