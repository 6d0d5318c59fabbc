//! `synth-ecg` and `detect`: the batch ECG file formats.
//!
//! ECG files are CSV with header `t,v` (seconds, millivolts). Beat, peak and
//! heart-rate files are JSON Lines.

use std::fs::File;
use std::path::{Path, PathBuf};

use cardioloop_core::ecg_dsp::{run_pipeline, EcgSample};
use cardioloop_core::rider_sim::{synth_ecg, EcgTemplate, SynthNoise};
use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::exit::{CliResult, Failure, OrExit, DATA, IO, NO_INPUT, USAGE};
use crate::logs::write_file;
use crate::output::Output;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: f64,
    v: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Heart rate, or the starting rate of a linear ramp with `--bpm-end`.
    #[arg(long, default_value_t = 75.0)]
    pub bpm: f64,
    #[arg(long)]
    pub bpm_end: Option<f64>,
    #[arg(long, default_value_t = 120.0)]
    pub duration: f64,
    /// Sampling rate; defaults to the configured DSP rate.
    #[arg(long)]
    pub fs: Option<f64>,
    /// White noise relative to the clean signal power.
    #[arg(long, conflicts_with = "noise_sd")]
    pub snr_db: Option<f64>,
    /// White noise standard deviation in millivolts.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth beat times. Defaults to the output path with
    /// `.beats.jsonl` in place of its extension.
    #[arg(long)]
    pub beats: Option<PathBuf>,
}

pub fn synth(settings: &Settings, args: &SynthArgs, out: &mut Output) -> CliResult {
    let fs = args.fs.unwrap_or(settings.session.dsp.filter.fs);
    let noise = match (args.snr_db, args.noise_sd) {
        (Some(db), _) => SynthNoise::SnrDb(db),
        (None, Some(sd)) => SynthNoise::SdMv(sd),
        (None, None) => SynthNoise::None,
    };
    let (start, end, duration) = (args.bpm, args.bpm_end.unwrap_or(args.bpm), args.duration);
    let schedule = move |t: f64| start + (end - start) * (t / duration).clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.session.seeds.ecg);
    let trace = synth_ecg(schedule, fs, duration, noise, &EcgTemplate::default(), &mut rng).or_exit(USAGE)?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    for s in &trace.samples {
        csv.serialize(Row { t: s.t, v: s.v }).or_exit(IO)?;
    }
    let bytes = csv.into_inner().map_err(|e| Failure::msg(IO, e))?;
    write_file(&args.out, &bytes)?;

    let beats_path = args.beats.clone().unwrap_or_else(|| args.out.with_extension("beats.jsonl"));
    let mut beats = String::new();
    for t in &trace.beats {
        beats.push_str(&serde_json::json!({ "t": t }).to_string());
        beats.push('\n');
    }
    write_file(&beats_path, beats.as_bytes())?;
    out.line(format!(
        "{} samples at {fs} Hz, {} beats -> {}, {}",
        trace.samples.len(),
        trace.beats.len(),
        args.out.display(),
        beats_path.display()
    ))
}

pub fn read_csv(path: &Path) -> CliResult<Vec<EcgSample>> {
    let file = File::open(path).or_exit_with(NO_INPUT, || format!("cannot open {}", path.display()))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().or_exit(DATA)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "v"] {
        return Err(Failure::msg(DATA, format!("{}: line 1: header must be `t,v`", path.display())));
    }
    let mut samples = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Failure::msg(DATA, format!("{}: line {}: {e}", path.display(), i + 2)))?;
        samples.push(EcgSample::new(row.t, row.v));
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Hr,
    Peaks,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// CSV input with header `t,v`.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Emit::Hr)]
    pub emit: Emit,
    /// Sampling rate of the input; defaults to the configured DSP rate.
    #[arg(long)]
    pub fs: Option<f64>,
    /// JSON Lines destination; standard output by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn detect(settings: &Settings, args: &DetectArgs, out: &mut Output) -> CliResult {
    let samples = read_csv(&args.input)?;
    let mut dsp = settings.session.effective_dsp();
    if let Some(fs) = args.fs {
        dsp.filter.fs = fs;
    }
    let (peaks, estimates) = run_pipeline(&samples, &dsp).or_exit(DATA)?;
    let mut lines = String::new();
    match args.emit {
        Emit::Hr => {
            for e in estimates {
                lines.push_str(&serde_json::json!({ "t": e.t, "hr_bpm": e.hr_bpm }).to_string());
                lines.push('\n');
            }
        }
        Emit::Peaks => {
            for p in peaks {
                lines.push_str(&serde_json::json!({ "t": p.t, "amplitude": p.amplitude }).to_string());
                lines.push('\n');
            }
        }
    }
    match &args.out {
        Some(path) => write_file(path, lines.as_bytes()),
        None => out.text(&lines),
    }
}
