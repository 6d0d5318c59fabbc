use std::collections::VecDeque;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptation::Feedback;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Integrate power on the NPC offset: ahead means push harder.
    FollowNpc,
    /// Fixed power step whenever the displayed zone is off target.
    FollowBikeComputer,
    ConstantPower { power_w: f64 },
}

impl FromStr for PolicyKind {
    type Err = String;

    /// `follow-npc`, `follow-bike-computer`, or `constant:<watts>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "follow-npc" => Ok(PolicyKind::FollowNpc),
            "follow-bike-computer" | "follow-bike" => Ok(PolicyKind::FollowBikeComputer),
            other => match other.strip_prefix("constant:") {
                Some(w) => w
                    .parse::<f64>()
                    .ok()
                    .filter(|w| w.is_finite() && *w >= 0.0)
                    .map(|power_w| PolicyKind::ConstantPower { power_w })
                    .ok_or_else(|| format!("invalid constant power `{w}`")),
                None => Err(format!(
                    "unknown policy `{s}` (expected follow-npc|follow-bike-computer|constant:<watts>)"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiderPolicy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    pub gain_w_per_m: f64,
    pub reaction_delay_s: f64,
    /// Per-tick step for [`PolicyKind::FollowBikeComputer`].
    pub bike_step_w: f64,
    /// Starting power for the following policies.
    pub initial_power_w: f64,
}

impl Default for RiderPolicy {
    fn default() -> Self {
        Self {
            kind: PolicyKind::FollowNpc,
            // An integrating rider on a 30 s HR lag with ~7 s of sensing and
            // reaction delay; 0.05 W/(m·s) leaves about 45° of phase margin.
            // Much larger gains limit-cycle across whole zones.
            gain_w_per_m: 0.05,
            reaction_delay_s: 1.5,
            bike_step_w: 10.0,
            initial_power_w: 0.0,
        }
    }
}

impl RiderPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            ..Default::default()
        }
    }

    pub fn initial_power(&self) -> f64 {
        match self.kind {
            PolicyKind::ConstantPower { power_w } => power_w,
            _ => self.initial_power_w,
        }
    }
}

/// Power update from feedback the rider has already perceived (no delay).
pub fn policy_step(policy: &RiderPolicy, feedback: Option<&Feedback>, power_w: f64, dt: f64, p_max_w: f64) -> f64 {
    let next = match (policy.kind, feedback) {
        (PolicyKind::ConstantPower { power_w }, _) => return power_w,
        (PolicyKind::FollowNpc, Some(Feedback::Npc(npc))) => power_w + policy.gain_w_per_m * npc.offset_m * dt,
        (PolicyKind::FollowBikeComputer, Some(Feedback::BikeComputer(view))) => match view.current_zone {
            Some(z) if z < view.target_zone => power_w + policy.bike_step_w,
            Some(z) if z > view.target_zone => power_w - policy.bike_step_w,
            _ => power_w,
        },
        _ => power_w,
    };
    next.clamp(0.0, p_max_w)
}

/// A policy with its perception delay line.
#[derive(Debug, Clone)]
pub struct RiderAgent {
    policy: RiderPolicy,
    p_max_w: f64,
    power_w: f64,
    pending: VecDeque<(f64, Feedback)>,
    perceived: Option<Feedback>,
}

impl RiderAgent {
    pub fn new(policy: RiderPolicy, p_max_w: f64) -> Self {
        Self {
            power_w: policy.initial_power().clamp(0.0, p_max_w),
            policy,
            p_max_w,
            pending: VecDeque::new(),
            perceived: None,
        }
    }

    pub fn power_w(&self) -> f64 {
        self.power_w
    }

    pub fn policy(&self) -> &RiderPolicy {
        &self.policy
    }

    /// Observe `feedback` shown at time `t` and update power for the next `dt`.
    pub fn step(&mut self, t: f64, feedback: Feedback, dt: f64) -> f64 {
        self.pending.push_back((t, feedback));
        let visible_until = t - self.policy.reaction_delay_s + 1e-9;
        while self.pending.front().is_some_and(|(ts, _)| *ts <= visible_until) {
            self.perceived = self.pending.pop_front().map(|(_, f)| f);
        }
        self.power_w = policy_step(&self.policy, self.perceived.as_ref(), self.power_w, dt, self.p_max_w);
        self.power_w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::{BikeComputerView, NpcState};
    use crate::hr_zones::ZoneId;

    fn npc(offset_m: f64) -> Feedback {
        Feedback::Npc(NpcState {
            offset_m,
            ..Default::default()
        })
    }

    #[test]
    fn zero_offset_keeps_power() {
        let p = RiderPolicy::default();
        assert_eq!(policy_step(&p, Some(&npc(0.0)), 150.0, 1.0, 400.0), 150.0);
    }

    #[test]
    fn saturated_offset_adds_gain_times_offset() {
        let p = RiderPolicy {
            gain_w_per_m: 3.0,
            ..Default::default()
        };
        assert_eq!(policy_step(&p, Some(&npc(30.0)), 100.0, 1.0, 400.0), 190.0);
        assert_eq!(policy_step(&p, Some(&npc(30.0)), 350.0, 1.0, 400.0), 400.0);
        assert_eq!(policy_step(&p, Some(&npc(-30.0)), 50.0, 1.0, 400.0), 0.0);
    }

    #[test]
    fn constant_power_ignores_feedback() {
        let p = RiderPolicy::new(PolicyKind::ConstantPower { power_w: 120.0 });
        for fb in [npc(30.0), npc(-30.0)] {
            assert_eq!(policy_step(&p, Some(&fb), 120.0, 0.02, 400.0), 120.0);
        }
        let mut agent = RiderAgent::new(p, 400.0);
        let seq: Vec<f64> = (0..50).map(|i| agent.step(i as f64 * 0.02, npc(i as f64), 0.02)).collect();
        assert!(seq.iter().all(|&w| w == 120.0));
    }

    #[test]
    fn bike_computer_steps_toward_target() {
        let p = RiderPolicy::new(PolicyKind::FollowBikeComputer);
        let view = |z: u8| {
            Feedback::BikeComputer(BikeComputerView {
                hr_bpm: Some(100.0),
                current_zone: Some(ZoneId::new(z).unwrap()),
                target_zone: ZoneId::new(3).unwrap(),
            })
        };
        assert_eq!(policy_step(&p, Some(&view(1)), 100.0, 0.02, 400.0), 110.0);
        assert_eq!(policy_step(&p, Some(&view(4)), 100.0, 0.02, 400.0), 90.0);
        assert_eq!(policy_step(&p, Some(&view(3)), 100.0, 0.02, 400.0), 100.0);
    }

    #[test]
    fn agent_reacts_after_delay() {
        let p = RiderPolicy {
            initial_power_w: 100.0,
            ..Default::default()
        };
        let mut agent = RiderAgent::new(p, 400.0);
        let dt = 0.1;
        // offset appears at t = 0; nothing changes until t = 1.5 s
        let mut t = 0.0;
        while t < 1.45 {
            assert_eq!(agent.step(t, npc(10.0), dt), 100.0);
            t += dt;
        }
        let mut moved = false;
        for _ in 0..3 {
            moved |= agent.step(t, npc(10.0), dt) > 100.0;
            t += dt;
        }
        assert!(moved);
    }

    #[test]
    fn parse_policy() {
        assert_eq!("follow-npc".parse::<PolicyKind>().unwrap(), PolicyKind::FollowNpc);
        assert_eq!(
            "constant:0".parse::<PolicyKind>().unwrap(),
            PolicyKind::ConstantPower { power_w: 0.0 }
        );
        assert!("constant:-3".parse::<PolicyKind>().is_err());
        assert!("sprint".parse::<PolicyKind>().is_err());
    }
}
