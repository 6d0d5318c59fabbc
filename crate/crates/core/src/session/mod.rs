//! Fixed-tick session state machine.
//!
//! A session runs a familiarisation phase followed by the scored run. Each
//! tick ingests whatever ECG arrived since the previous tick, samples the
//! current heart-rate estimate, looks up the scheduled target zone and runs
//! the condition's controller. All schedule arithmetic is done in integer
//! ticks, so segment boundaries land exactly on whole seconds.

mod config;
mod log;
mod sim;
mod state;

pub use config::{Seeds, SessionConfig, MAX_TICK_HZ, MIN_TICK_HZ};
pub use log::{ConfigRecord, LogError, LogRecord, SessionLog, SimSetup};
pub use sim::{run_simulated, simulate, SimDriver, SimulatedRun};
pub use state::{LoopState, Phase};

use thiserror::Error;

use crate::adaptation::{AdaptationError, Controller, Feedback};
use crate::ecg_dsp::{DspError, EcgPipeline, EcgSample};
use crate::hr_zones::{compute_zone_model, AthleteProfile, ZoneError, ZoneId, ZoneModel};
use crate::rider_sim::{power_to_speed, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("session already finished")]
    Finished,
    #[error(transparent)]
    Zone(#[from] ZoneError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Adaptation(#[from] AdaptationError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Input for one tick.
#[derive(Debug, Clone, Copy, Default)]
pub struct TickInput<'a> {
    /// ECG samples received since the previous tick, in time order.
    pub samples: &'a [EcgSample],
    /// Rider power if known; used for the speed readout.
    pub power_w: Option<f64>,
}

impl<'a> TickInput<'a> {
    pub fn ecg(samples: &'a [EcgSample]) -> Self {
        Self {
            samples,
            power_w: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    model: ZoneModel,
    green_radius_m: Option<f64>,
    pipeline: EcgPipeline,
    controller: Controller,
    tick: u64,
    training_ticks: u64,
    /// Cumulative end tick (exclusive) of each schedule segment.
    segment_ends: Vec<u64>,
    finished: bool,
}

impl Session {
    pub fn start(config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let profile = AthleteProfile {
            age: config.age,
            hr_max_formula: config.hr_max_formula,
            hr_rest_bpm: None,
        };
        let model = compute_zone_model(&profile)?;
        let pipeline = EcgPipeline::new(&config.effective_dsp())?;
        let controller = Controller::new(config.condition, config.effective_adaptation(), &model, config.tick_hz)?;
        let green_radius_m = config
            .condition
            .has_npc()
            .then(|| controller.kinematics().green_radius_m);
        let segment_ends = config
            .zone_schedule
            .iter()
            .scan(0u64, |acc, (_, dur)| {
                *acc += config.ticks_for(*dur);
                Some(*acc)
            })
            .collect();
        Ok(Self {
            training_ticks: config.ticks_for(config.training_s),
            config,
            model,
            green_radius_m,
            pipeline,
            controller,
            tick: 0,
            segment_ends,
            finished: false,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn zone_model(&self) -> &ZoneModel {
        &self.model
    }

    pub fn green_radius_m(&self) -> Option<f64> {
        self.green_radius_m
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn run_ticks(&self) -> u64 {
        self.segment_ends.last().copied().unwrap_or(0)
    }

    /// Scheduled target zone for a zero-based run tick index.
    pub fn target_zone_at(&self, run_tick: u64) -> ZoneId {
        let i = self.segment_ends.partition_point(|&end| end <= run_tick);
        let i = i.min(self.config.zone_schedule.len() - 1);
        self.config.zone_schedule[i].0
    }

    /// Configuration record as written at the head of a session log.
    pub fn config_record(&self) -> ConfigRecord {
        ConfigRecord {
            session: self.config.clone(),
            hr_max_bpm: self.model.hr_max_bpm,
            zone_boundaries: self.model.boundaries,
            green_radius_m: self.green_radius_m,
            sim: None,
        }
    }

    pub fn tick(&mut self, input: TickInput<'_>) -> Result<LoopState, SessionError> {
        if self.finished {
            return Err(SessionError::Finished);
        }
        for &s in input.samples {
            self.pipeline.push(s)?;
        }
        self.tick += 1;
        let n = self.tick;
        let hz = self.config.tick_hz as f64;
        let total = self.run_ticks();

        let (phase, target_zone, remaining_ticks) = if n <= self.training_ticks {
            (Phase::Training, self.config.zone_schedule[0].0, self.training_ticks - n)
        } else {
            let run_tick = n - self.training_ticks;
            let zone = self.target_zone_at(run_tick - 1);
            if run_tick >= total {
                (Phase::Finished, zone, 0)
            } else {
                (Phase::Running, zone, total - run_tick)
            }
        };
        self.emit(phase, target_zone, remaining_ticks as f64 / hz, input.power_w)
    }

    /// Operator stop: close the session early.
    pub fn stop(&mut self) -> Result<LoopState, SessionError> {
        if self.finished {
            return Err(SessionError::Finished);
        }
        self.tick += 1;
        let run_tick = self.tick.saturating_sub(self.training_ticks).max(1);
        let zone = self.target_zone_at(run_tick - 1);
        self.emit(Phase::Finished, zone, 0.0, None)
    }

    fn emit(
        &mut self,
        phase: Phase,
        target_zone: ZoneId,
        remaining_s: f64,
        power_w: Option<f64>,
    ) -> Result<LoopState, SessionError> {
        let hr_bpm = self.pipeline.latest().map(|e| e.hr_bpm);
        let dt = self.config.dt();
        let feedback = self.controller.tick(hr_bpm, target_zone, &self.model, dt)?;
        let (npc, bike_view) = match feedback {
            Feedback::Npc(s) => (Some(s), None),
            Feedback::BikeComputer(v) => (None, Some(v)),
        };
        self.finished = phase == Phase::Finished;
        Ok(LoopState {
            t_s: self.tick as f64 / self.config.tick_hz as f64,
            phase,
            hr_bpm,
            hr_norm: hr_bpm.map(|hr| self.model.normalize(hr)),
            current_zone: hr_bpm.map(|hr| self.model.classify(hr)),
            target_zone,
            remaining_s,
            condition: self.config.condition,
            npc,
            bike_view,
            speed_mps: power_w.map_or(0.0, |p| power_to_speed(p, &self.config.physics)),
            end_prompt: self.finished,
        })
    }
}
