//! Headless closed loop: simulated rider → synthetic ECG → session → rider.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LoopState, Phase, Session, SessionConfig, SessionError, SessionLog, SimSetup, TickInput};
use crate::ecg_dsp::EcgSample;
use crate::metrics::{MetricsAccumulator, MetricsError, SessionMetrics};
use crate::rider_sim::{EcgSynth, EcgTemplate, Rider, RiderAgent, RiderModel, RiderPolicy};

/// Simulated rider, optional policy and ECG synthesiser, advanced one session
/// tick at a time.
///
/// The ECG reaching the session is generated from the rider model's heart
/// rate, exactly as a live sensor stream would arrive. Without a policy the
/// power is whatever [`SimDriver::set_power`] last applied.
#[derive(Debug, Clone)]
pub struct SimDriver {
    rider: Rider,
    agent: Option<RiderAgent>,
    power_w: f64,
    synth: EcgSynth,
    ecg_rng: ChaCha8Rng,
    samples: Vec<EcgSample>,
    sample_index: u64,
}

impl SimDriver {
    pub fn new(
        config: &SessionConfig,
        rider_model: &RiderModel,
        policy: Option<&RiderPolicy>,
    ) -> Result<Self, SessionError> {
        let rider = Rider::new(rider_model.clone(), config.seeds.rider)?;
        let agent = policy.map(|p| RiderAgent::new(p.clone(), rider_model.p_max_w));
        let fs = config.dsp.filter.fs;
        Ok(Self {
            power_w: agent.as_ref().map_or(0.0, RiderAgent::power_w),
            rider,
            agent,
            synth: EcgSynth::new(fs, EcgTemplate::default(), config.ecg_noise_sd_mv)?,
            ecg_rng: ChaCha8Rng::seed_from_u64(config.seeds.ecg),
            samples: Vec::with_capacity((fs / config.tick_hz as f64).ceil() as usize + 1),
            sample_index: 0,
        })
    }

    pub fn power_w(&self) -> f64 {
        self.power_w
    }

    /// The rider's true heart rate, as opposed to the session's estimate.
    pub fn hr_bpm(&self) -> f64 {
        self.rider.hr_bpm()
    }

    pub fn p_max_w(&self) -> f64 {
        self.rider.model().p_max_w
    }

    /// Apply a power level directly; returns the value after clamping to
    /// `[0, p_max]`. A policy, if present, overrides it on the next tick.
    pub fn set_power(&mut self, power_w: f64) -> f64 {
        self.power_w = self.rider.model().clamp_power(power_w);
        self.power_w
    }

    pub fn tick(&mut self, session: &mut Session) -> Result<LoopState, SessionError> {
        let dt = session.config().dt();
        let tick_hz = session.config().tick_hz as f64;
        let fs = self.synth.fs();
        let hr = self.rider.step(self.power_w, dt);
        let tick_end = session.ticks() + 1;
        self.samples.clear();
        // sample k belongs to this tick while k / fs < n / tick_hz
        while (self.sample_index as f64) * tick_hz < (tick_end as f64) * fs {
            let (s, _) = self.synth.next_sample(hr, &mut self.ecg_rng);
            self.samples.push(s);
            self.sample_index += 1;
        }
        let state = session.tick(TickInput {
            samples: &self.samples,
            power_w: Some(self.power_w),
        })?;
        if let (Some(agent), Some(feedback)) = (self.agent.as_mut(), state.feedback()) {
            if state.phase != Phase::Finished {
                self.power_w = agent.step(state.t_s, feedback, dt);
            }
        }
        Ok(state)
    }
}

/// Drive a full simulated session, handing each tick to `on_tick`.
pub fn simulate<F>(
    config: &SessionConfig,
    rider_model: &RiderModel,
    policy: &RiderPolicy,
    mut on_tick: F,
) -> Result<Session, SessionError>
where
    F: FnMut(&LoopState),
{
    let mut session = Session::start(config.clone())?;
    let mut driver = SimDriver::new(config, rider_model, Some(policy))?;
    loop {
        let state = driver.tick(&mut session)?;
        on_tick(&state);
        if state.phase == Phase::Finished {
            return Ok(session);
        }
    }
}

/// Run a simulated session and return its complete log.
pub fn run_simulated(
    config: &SessionConfig,
    rider: &RiderModel,
    policy: &RiderPolicy,
) -> Result<SessionLog, SessionError> {
    let mut ticks = Vec::new();
    let session = simulate(config, rider, policy, |s| ticks.push(s.clone()))?;
    let mut record = session.config_record();
    record.sim = Some(SimSetup {
        rider: rider.clone(),
        policy: Some(policy.clone()),
    });
    Ok(SessionLog::close(record, ticks))
}

/// Metrics-only result of a simulated run; ticks are not retained.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub seed: u64,
    pub metrics: Result<SessionMetrics, MetricsError>,
    pub final_score: Option<u64>,
}

impl SimulatedRun {
    pub fn run(config: &SessionConfig, rider: &RiderModel, policy: &RiderPolicy) -> Result<Self, SessionError> {
        let mut acc = MetricsAccumulator::default();
        let mut final_score = None;
        simulate(config, rider, policy, |s| {
            acc.push(s);
            final_score = s.npc.map(|n| n.score);
        })?;
        Ok(Self {
            seed: config.seeds.adaptation,
            metrics: acc.finish(),
            final_score,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::Condition;
    use crate::rider_sim::PolicyKind;

    fn short() -> SessionConfig {
        SessionConfig {
            training_s: 30.0,
            zone_schedule: vec![(crate::ZoneId::new(2).unwrap(), 60.0)],
            ..Default::default()
        }
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let cfg = short().with_seed(5);
        let a = run_simulated(&cfg, &RiderModel::default(), &RiderPolicy::default()).unwrap();
        let b = run_simulated(&cfg, &RiderModel::default(), &RiderPolicy::default()).unwrap();
        assert_eq!(a.to_jsonl_bytes(), b.to_jsonl_bytes());
        let c = run_simulated(&short().with_seed(6), &RiderModel::default(), &RiderPolicy::default()).unwrap();
        assert_ne!(a.to_jsonl_bytes(), c.to_jsonl_bytes());
    }

    #[test]
    fn tick_count_and_clock() {
        let cfg = short();
        let log = run_simulated(&cfg, &RiderModel::default(), &RiderPolicy::default()).unwrap();
        assert_eq!(log.ticks.len(), 90 * 50);
        assert_eq!(log.ticks.last().unwrap().t_s, 90.0);
        assert!(log.ticks.iter().all(|t| t.npc.is_some() && t.bike_view.is_none()));
    }

    #[test]
    fn metrics_only_run_matches_full_log() {
        let cfg = SessionConfig {
            condition: Condition::RandomNpc,
            ..short()
        };
        let policy = RiderPolicy::new(PolicyKind::FollowNpc);
        let log = run_simulated(&cfg, &RiderModel::default(), &policy).unwrap();
        let run = SimulatedRun::run(&cfg, &RiderModel::default(), &policy).unwrap();
        assert_eq!(log.summary, run.metrics.ok());
    }
}
