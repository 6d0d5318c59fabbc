use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::adaptation::{BikeComputerView, Condition, Feedback, NpcState};
use crate::hr_zones::ZoneId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Running,
    Finished,
}

/// Snapshot emitted once per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    #[serde(serialize_with = "six_decimals")]
    pub t_s: f64,
    pub phase: Phase,
    pub hr_bpm: Option<f64>,
    /// `hr_bpm / hr_max`.
    pub hr_norm: Option<f64>,
    pub current_zone: Option<ZoneId>,
    pub target_zone: ZoneId,
    /// Time left in the current phase.
    pub remaining_s: f64,
    pub condition: Condition,
    pub npc: Option<NpcState>,
    pub bike_view: Option<BikeComputerView>,
    pub speed_mps: f64,
    #[serde(default)]
    pub end_prompt: bool,
}

impl LoopState {
    pub fn feedback(&self) -> Option<Feedback> {
        match (self.npc, self.bike_view) {
            (Some(npc), _) => Some(Feedback::Npc(npc)),
            (None, Some(view)) => Some(Feedback::BikeComputer(view)),
            _ => None,
        }
    }

    pub fn on_target(&self) -> bool {
        self.current_zone == Some(self.target_zone)
    }
}

fn six_decimals<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
    if !t.is_finite() {
        return s.serialize_f64(*t);
    }
    let raw = RawValue::from_string(format!("{t:.6}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}
