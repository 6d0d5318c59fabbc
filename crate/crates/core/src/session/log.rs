//! JSON Lines session log.
//!
//! ```text
//! {"type":"config", ...}     exactly once, first line
//! {"type":"tick", ...}       one per tick, strictly increasing t_s
//! {"type":"summary", ...}    exactly once, last line
//! ```

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LoopState, SessionConfig};
use crate::metrics::{optimal_hr_ratio, MetricsError, SessionMetrics};
use crate::rider_sim::{RiderModel, RiderPolicy};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LogError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        LogError::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            LogError::Parse { line, .. } => Some(*line),
            LogError::Io(_) => None,
        }
    }
}

/// Rider model behind a simulated or manually driven run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetup {
    pub rider: RiderModel,
    /// `None` when a human set the power.
    #[serde(default)]
    pub policy: Option<RiderPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub session: SessionConfig,
    pub hr_max_bpm: f64,
    pub zone_boundaries: [f64; 6],
    /// Absent in the baseline condition.
    pub green_radius_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSetup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Config(ConfigRecord),
    Tick(LoopState),
    /// `None` fields when the metrics are undefined (no HR-bearing ticks).
    Summary(SummaryRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub metrics: Option<SessionMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub config: ConfigRecord,
    pub ticks: Vec<LoopState>,
    pub summary: Option<SessionMetrics>,
}

impl SessionLog {
    /// Close a run: compute the summary from the ticks.
    pub fn close(config: ConfigRecord, ticks: Vec<LoopState>) -> Self {
        let summary = optimal_hr_ratio(&ticks).ok();
        Self { config, ticks, summary }
    }

    pub fn recompute(&self) -> Result<SessionMetrics, MetricsError> {
        optimal_hr_ratio(&self.ticks)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut line = |rec: &LogRecord| -> io::Result<()> {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")
        };
        line(&LogRecord::Config(self.config.clone()))?;
        for t in &self.ticks {
            line(&LogRecord::Tick(t.clone()))?;
        }
        line(&LogRecord::Summary(SummaryRecord {
            metrics: self.summary.clone(),
        }))?;
        w.flush()
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, LogError> {
        let mut config = None;
        let mut ticks: Vec<LoopState> = Vec::new();
        let mut summary = None;
        let mut last_line = 0;
        for (i, line) in r.lines().enumerate() {
            let n = i + 1;
            last_line = n;
            let line = line?;
            if summary.is_some() {
                return Err(LogError::at(n, "content after summary record"));
            }
            let rec: LogRecord = serde_json::from_str(&line).map_err(|e| LogError::at(n, e.to_string()))?;
            match rec {
                LogRecord::Config(c) if n == 1 => config = Some(c),
                LogRecord::Config(_) => return Err(LogError::at(n, "config record must be the first line")),
                _ if config.is_none() => return Err(LogError::at(n, "missing config record")),
                LogRecord::Tick(t) => {
                    if let Some(prev) = ticks.last() {
                        if !(t.t_s > prev.t_s) {
                            return Err(LogError::at(n, "tick timestamps must strictly increase"));
                        }
                    }
                    ticks.push(t);
                }
                LogRecord::Summary(s) => summary = Some(s.metrics),
            }
        }
        let config = config.ok_or_else(|| LogError::at(1, "empty log"))?;
        let summary = summary.ok_or_else(|| LogError::at(last_line + 1, "missing summary record (truncated log?)"))?;
        Ok(Self { config, ticks, summary })
    }
}
