//! `sim`, `analyze` and `replay`: producing and reading session logs.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use cardioloop_core::hr_zones::{compute_zone_model, AthleteProfile};
use cardioloop_core::metrics::MetricsError;
use cardioloop_core::rider_sim::{PolicyKind, RiderPolicy};
use cardioloop_core::session::{run_simulated, LogError, SessionLog};
use cardioloop_core::sweep::matching_policy;
use cardioloop_core::{Condition, SessionMetrics};
use cardioloop_net::{AckFrame, Frame, StateFrame};
use clap::Args;

use crate::config::Settings;
use crate::exit::{CliResult, Failure, OrExit, DATA, IO, NO_INPUT, SOFTWARE, UNDEFINED, USAGE};
use crate::output::Output;

#[derive(Debug, Args)]
pub struct SimArgs {
    /// adaptive, random or baseline.
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long)]
    pub age: Option<u32>,
    /// follow-npc, follow-bike-computer or constant:<watts>. Defaults to the
    /// policy matching the condition's feedback.
    #[arg(long)]
    pub policy: Option<PolicyKind>,
    #[arg(long)]
    pub participant: Option<String>,
    /// Log path. Defaults to `<participant>_<condition>_seed<seed>.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn check_age(age: u32) -> CliResult<u32> {
    compute_zone_model(&AthleteProfile::new(age)).or_exit(USAGE)?;
    Ok(age)
}

pub fn sim(settings: &Settings, args: &SimArgs, out: &mut Output) -> CliResult {
    let mut config = settings.session.clone();
    if let Some(c) = args.condition {
        config.condition = c;
    }
    if let Some(age) = args.age {
        config.age = check_age(age)?;
    }
    if let Some(p) = &args.participant {
        config.participant_id = p.clone();
    }
    let policy = match (args.policy, &settings.policy) {
        (Some(kind), Some(p)) => RiderPolicy { kind, ..p.clone() },
        (Some(kind), None) => RiderPolicy::new(kind),
        (None, Some(p)) => p.clone(),
        (None, None) => matching_policy(config.condition),
    };
    let log = run_simulated(&config, &settings.rider, &policy).or_exit(SOFTWARE)?;
    let path = args.out.clone().unwrap_or_else(|| {
        PathBuf::from(format!(
            "{}_{}_seed{}.jsonl",
            config.participant_id, config.condition, settings.seed
        ))
    });
    write_file(&path, &log.to_jsonl_bytes())?;

    out.line(format!("log        {}", path.display()))?;
    out.line(format!("condition  {}", config.condition))?;
    out.line(format!("policy     {}", policy_name(&policy.kind)))?;
    out.line(format!("seed       {}", settings.seed))?;
    match &log.summary {
        Some(m) => out.text(&metrics_table(m))?,
        None => out.line(format!("optimal HR ratio  undefined ({})", MetricsError::Undefined))?,
    }
    Ok(())
}

fn policy_name(kind: &PolicyKind) -> String {
    match kind {
        PolicyKind::FollowNpc => "follow-npc".into(),
        PolicyKind::FollowBikeComputer => "follow-bike-computer".into(),
        PolicyKind::ConstantPower { power_w } => format!("constant:{power_w}"),
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    File::create(path)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .or_exit_with(IO, || format!("cannot write {}", path.display()))
}

pub fn metrics_table(m: &SessionMetrics) -> String {
    let mut s = String::new();
    s.push_str(&format!("optimal HR ratio  {:.1} %\n", m.optimal_hr_ratio_pct));
    s.push_str(&format!("mean HR / HR_max  {:.3}\n", m.mean_hr_norm));
    s.push_str(&format!("scored ticks      {}\n", m.n_ticks_total));
    s.push_str("segment  zone  ratio %  HR/HR_max  ticks\n");
    for (i, seg) in m.per_segment.iter().enumerate() {
        s.push_str(&format!(
            "{:>7}  {:>4}  {:>7.1}  {:>9.3}  {:>5}\n",
            i + 1,
            seg.zone,
            seg.ratio_pct,
            seg.mean_hr_norm,
            seg.n_ticks
        ));
    }
    s
}

pub fn read_log(path: &Path) -> CliResult<SessionLog> {
    let file = File::open(path).or_exit_with(NO_INPUT, || format!("cannot open {}", path.display()))?;
    SessionLog::read_jsonl(BufReader::new(file)).map_err(|e| match e {
        LogError::Parse { .. } => Failure::new(DATA, anyhow::Error::new(e).context(format!("{}", path.display()))),
        LogError::Io(e) => Failure::new(IO, anyhow::Error::new(e).context(format!("reading {}", path.display()))),
    })
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub log: PathBuf,
    /// Write the summary object here instead of after the table.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

pub fn analyze(args: &AnalyzeArgs, out: &mut Output) -> CliResult {
    let log = read_log(&args.log)?;
    let metrics = log.recompute().map_err(|e| Failure::new(UNDEFINED, e))?;
    let json = serde_json::to_string(&metrics).expect("metrics serialize");
    let stored = log.summary.as_ref().map(|m| serde_json::to_string(m).expect("metrics serialize"));
    if stored.as_deref() != Some(json.as_str()) {
        eprintln!("warning: stored summary differs from the metrics recomputed from the ticks");
    }
    out.text(&metrics_table(&metrics))?;
    let record = format!(r#"{{"type":"summary","metrics":{json}}}"#);
    match &args.json {
        Some(path) => write_file(path, format!("{record}\n").as_bytes()),
        None => out.line(record),
    }
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub log: PathBuf,
    /// Frame stream destination; standard output by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A log as the frames a console would have received: the configuration ack
/// followed by one state frame per tick. Replayed frames carry
/// `tick_wall_us` 0.
pub fn replay(args: &ReplayArgs, out: &mut Output) -> CliResult {
    let log = read_log(&args.log)?;
    let mut lines = String::new();
    let ack = AckFrame {
        note: Some("replay".into()),
        config: Some(Box::new(log.config.clone())),
        rider: log.config.sim.as_ref().map(|s| s.rider.clone()),
        ..Default::default()
    };
    lines.push_str(&Frame::Ack(Box::new(ack)).to_line());
    lines.push('\n');
    for state in log.ticks {
        let frame = Frame::State(Box::new(StateFrame {
            state,
            dropped: 0,
            tick_wall_us: 0,
        }));
        lines.push_str(&frame.to_line());
        lines.push('\n');
    }
    match &args.out {
        Some(path) => write_file(path, lines.as_bytes()),
        None => out.text(&lines),
    }
}
