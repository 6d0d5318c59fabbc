//! Batch execution of independent simulated sessions.
//!
//! Sessions never share state, so a batch parallelises across runs. With the
//! `parallel` feature (default) [`run_batch`] fans out over rayon; without it,
//! or through [`run_sequential`], runs execute in order on the calling thread.
//! Either path returns results in job order and is bit-identical.

use crate::adaptation::Condition;
use crate::rider_sim::{PolicyKind, RiderModel, RiderPolicy};
use crate::session::{SessionConfig, SessionError, SimulatedRun};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct SimJob {
    pub config: SessionConfig,
    pub rider: RiderModel,
    pub policy: RiderPolicy,
}

impl SimJob {
    pub fn run(&self) -> Result<SimulatedRun, SessionError> {
        SimulatedRun::run(&self.config, &self.rider, &self.policy)
    }
}

pub fn run_sequential(jobs: &[SimJob]) -> Vec<Result<SimulatedRun, SessionError>> {
    jobs.iter().map(SimJob::run).collect()
}

#[cfg(feature = "parallel")]
pub fn run_parallel(jobs: &[SimJob]) -> Vec<Result<SimulatedRun, SessionError>> {
    jobs.par_iter().map(SimJob::run).collect()
}

pub fn run_batch(jobs: &[SimJob]) -> Vec<Result<SimulatedRun, SessionError>> {
    #[cfg(feature = "parallel")]
    {
        run_parallel(jobs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sequential(jobs)
    }
}

/// One job per seed for a condition, with `policy` applied to every run.
pub fn seed_jobs(
    base: &SessionConfig,
    condition: Condition,
    seeds: impl IntoIterator<Item = u64>,
    rider: &RiderModel,
    policy: &RiderPolicy,
) -> Vec<SimJob> {
    seeds
        .into_iter()
        .map(|seed| SimJob {
            config: SessionConfig {
                condition,
                ..base.clone()
            }
            .with_seed(seed),
            rider: rider.clone(),
            policy: policy.clone(),
        })
        .collect()
}

/// The rider behaviour that matches each condition's feedback surface.
pub fn matching_policy(condition: Condition) -> RiderPolicy {
    match condition {
        Condition::Baseline => RiderPolicy::new(PolicyKind::FollowBikeComputer),
        Condition::AdaptiveNpc | Condition::RandomNpc => RiderPolicy::new(PolicyKind::FollowNpc),
    }
}

/// Summary of a condition across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub ratios_pct: Vec<f64>,
    pub mean_ratio_pct: f64,
    pub sd_ratio_pct: f64,
}

impl ConditionSummary {
    pub fn from_runs(condition: Condition, runs: &[Result<SimulatedRun, SessionError>]) -> Self {
        // Undefined metrics (no HR ticks) count as zero adherence.
        let ratios_pct: Vec<f64> = runs
            .iter()
            .map(|r| {
                r.as_ref()
                    .ok()
                    .and_then(|run| run.metrics.as_ref().ok())
                    .map_or(0.0, |m| m.optimal_hr_ratio_pct)
            })
            .collect();
        let n = ratios_pct.len().max(1) as f64;
        let mean = ratios_pct.iter().sum::<f64>() / n;
        let var = ratios_pct.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            condition,
            ratios_pct,
            mean_ratio_pct: mean,
            sd_ratio_pct: var.sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hr_zones::ZoneId;

    #[test]
    fn sequential_and_batch_agree() {
        let base = SessionConfig {
            training_s: 20.0,
            zone_schedule: vec![(ZoneId::new(1).unwrap(), 40.0)],
            ..Default::default()
        };
        let jobs = seed_jobs(
            &base,
            Condition::RandomNpc,
            1..=4,
            &RiderModel::default(),
            &matching_policy(Condition::RandomNpc),
        );
        let seq = run_sequential(&jobs);
        let batch = run_batch(&jobs);
        assert_eq!(seq.len(), 4);
        for (a, b) in seq.iter().zip(&batch) {
            assert_eq!(a.as_ref().unwrap(), b.as_ref().unwrap());
        }
        assert_eq!(seq[2].as_ref().unwrap().seed, 3);
    }
}
