//! The tick loop. One task owns the session; connection handlers talk to it
//! only through [`Command`]s on a single queue, and it fans out each tick as
//! an immutable snapshot on a broadcast channel.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use cardioloop_core::ecg_dsp::EcgSample;
use cardioloop_core::hr_zones::{compute_zone_model, AthleteProfile};
use cardioloop_core::rider_sim::{RiderModel, RiderPolicy};
use cardioloop_core::session::{
    ConfigRecord, LoopState, Phase, Session, SessionConfig, SessionError, SessionLog, SimDriver, SimSetup, TickInput,
};
use cardioloop_core::sweep::matching_policy;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::{self, Instant, MissedTickBehavior};

use crate::protocol::{AckFrame, CmdFrame, CmdKind, ErrorCode, ErrorFrame, Frame, Mode, Role, StateFrame};

/// Queue depth between connection handlers and the engine.
const COMMAND_QUEUE: usize = 1024;
/// Outbound frames buffered per client before replies are dropped.
pub(crate) const CLIENT_QUEUE: usize = 256;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Settings for the next session; `cmd` frames edit a copy of it.
    pub session: SessionConfig,
    pub mode: Mode,
    /// Rider behind `manual` and `sim` modes.
    pub rider: RiderModel,
    /// Policy for `sim` mode; `None` picks the one matching the condition.
    pub policy: Option<RiderPolicy>,
    /// Where finished session logs are written, if anywhere.
    pub log_dir: Option<PathBuf>,
    /// State frames buffered per observer before the oldest are dropped.
    pub broadcast_capacity: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            mode: Mode::default(),
            rider: RiderModel::default(),
            policy: None,
            log_dir: None,
            broadcast_capacity: 64,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        Session::start(self.session.clone())?;
        self.rider.validate()?;
        if self.broadcast_capacity == 0 {
            return Err(SessionError::Config("broadcast_capacity must be positive".into()));
        }
        Ok(())
    }
}

/// One tick as fanned out to every state-receiving client.
#[derive(Debug)]
pub(crate) struct TickFrame {
    pub frame: StateFrame,
    /// `frame` serialized once, for clients that have dropped nothing.
    pub line: String,
}

impl TickFrame {
    fn new(state: LoopState, tick_wall_us: u64) -> Self {
        let frame = StateFrame {
            state,
            dropped: 0,
            tick_wall_us,
        };
        let line = Frame::State(Box::new(frame.clone())).to_line();
        Self { frame, line }
    }

    pub fn line_with_dropped(&self, dropped: u64) -> String {
        if dropped == 0 {
            return self.line.clone();
        }
        let frame = StateFrame {
            dropped,
            ..self.frame.clone()
        };
        Frame::State(Box::new(frame)).to_line()
    }
}

pub(crate) type ConnId = u64;

/// What a connection's writer task is asked to do.
pub(crate) enum Outbound {
    Frame(Frame),
    /// Start forwarding the state broadcast.
    Subscribe(broadcast::Receiver<Arc<TickFrame>>),
    /// Flush and close the connection.
    Close,
}

pub(crate) enum Command {
    Hello {
        conn: ConnId,
        role: Role,
        replies: mpsc::Sender<Outbound>,
        done: oneshot::Sender<Result<(), ErrorFrame>>,
    },
    Leave {
        conn: ConnId,
    },
    Ecg {
        conn: ConnId,
        t: Vec<f64>,
        v: Vec<f64>,
    },
    Effort {
        conn: ConnId,
        power_w: f64,
    },
    Cmd {
        conn: ConnId,
        cmd: CmdFrame,
    },
}

/// Cloneable handle for submitting commands to a running engine.
#[derive(Clone)]
pub struct EngineHandle {
    pub(crate) tx: mpsc::Sender<Command>,
    next_conn: Arc<AtomicU64>,
}

impl EngineHandle {
    pub(crate) fn next_conn_id(&self) -> ConnId {
        self.next_conn.fetch_add(1, Ordering::Relaxed)
    }

    pub(crate) async fn send(&self, cmd: Command) -> bool {
        self.tx.send(cmd).await.is_ok()
    }
}

/// Start the engine on the current runtime.
pub fn spawn_engine(config: EngineConfig) -> Result<EngineHandle, SessionError> {
    config.validate()?;
    let (tx, rx) = mpsc::channel(COMMAND_QUEUE);
    let engine = Engine::new(config);
    tokio::spawn(engine.run(rx));
    Ok(EngineHandle {
        tx,
        next_conn: Arc::new(AtomicU64::new(1)),
    })
}

struct Client {
    role: Role,
    replies: mpsc::Sender<Outbound>,
}

struct Running {
    session: Session,
    driver: Option<SimDriver>,
    policy: Option<RiderPolicy>,
    ticks: Vec<LoopState>,
    /// ECG received since the previous tick.
    pending: Vec<EcgSample>,
    last_sample_t: Option<f64>,
}

struct Engine {
    next: SessionConfig,
    mode: Mode,
    rider: RiderModel,
    policy: Option<RiderPolicy>,
    log_dir: Option<PathBuf>,
    /// Power applied to the manual-mode rider, carried across sessions.
    manual_power_w: f64,
    clients: HashMap<ConnId, Client>,
    sensor: Option<ConnId>,
    states: broadcast::Sender<Arc<TickFrame>>,
    running: Option<Running>,
}

fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_micros() as u64)
}

impl Engine {
    fn new(config: EngineConfig) -> Self {
        let (states, _) = broadcast::channel(config.broadcast_capacity);
        Self {
            next: config.session,
            mode: config.mode,
            rider: config.rider,
            policy: config.policy,
            log_dir: config.log_dir,
            manual_power_w: 0.0,
            clients: HashMap::new(),
            sensor: None,
            states,
            running: None,
        }
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        let mut ticker = self.ticker();
        loop {
            let ticking = self.running.is_some();
            tokio::select! {
                biased;
                _ = ticker.tick(), if ticking => self.on_tick(),
                cmd = rx.recv() => match cmd {
                    Some(cmd) => {
                        let was_running = self.running.is_some();
                        self.handle(cmd);
                        if !was_running && self.running.is_some() {
                            ticker = self.ticker();
                        }
                    }
                    None => break,
                },
            }
        }
    }

    fn ticker(&self) -> time::Interval {
        let period = Duration::from_secs_f64(self.next.dt());
        let mut ticker = time::interval_at(Instant::now() + period, period);
        // Catch up after a stall so session time keeps pace with the sensor.
        ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
        ticker
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Hello {
                conn,
                role,
                replies,
                done,
            } => {
                let _ = done.send(self.hello(conn, role, replies));
            }
            Command::Leave { conn } => {
                self.clients.remove(&conn);
                if self.sensor == Some(conn) {
                    self.sensor = None;
                }
            }
            Command::Ecg { conn, t, v } => {
                if let Err(e) = self.ecg(conn, &t, &v) {
                    self.reply(conn, Frame::Error(e));
                }
            }
            Command::Effort { conn, power_w } => {
                let frame = match self.effort(conn, power_w) {
                    Ok(ack) => Frame::Ack(Box::new(ack)),
                    Err(e) => Frame::Error(e),
                };
                self.reply(conn, frame);
            }
            Command::Cmd { conn, cmd } => {
                let id = cmd.id;
                let frame = match self.command(conn, cmd) {
                    Ok(ack) => Frame::Ack(Box::new(ack)),
                    Err(e) => Frame::Error(e.with_id(id)),
                };
                self.reply(conn, frame);
            }
        }
    }

    /// Replies never block the loop: a client that is not reading loses them.
    fn reply(&self, conn: ConnId, frame: Frame) {
        if let Some(c) = self.clients.get(&conn) {
            let _ = c.replies.try_send(Outbound::Frame(frame));
        }
    }

    fn role(&self, conn: ConnId) -> Option<Role> {
        self.clients.get(&conn).map(|c| c.role)
    }

    /// The ack and the state subscription go through the client's own queue,
    /// so the configuration always reaches it before the first state frame.
    fn hello(&mut self, conn: ConnId, role: Role, replies: mpsc::Sender<Outbound>) -> Result<(), ErrorFrame> {
        if role == Role::Sensor {
            if self.sensor.is_some() {
                return Err(ErrorFrame::new(ErrorCode::RoleRejected, "a sensor is already connected"));
            }
            self.sensor = Some(conn);
        }
        let mut ack = self.status_ack();
        ack.note = Some(format!("hello {}", role_name(role)));
        let _ = replies.try_send(Outbound::Frame(Frame::Ack(Box::new(ack))));
        if role.receives_state() {
            let _ = replies.try_send(Outbound::Subscribe(self.states.subscribe()));
        }
        self.clients.insert(conn, Client { role, replies });
        Ok(())
    }

    /// Mode, configuration and rider: everything a console needs to draw.
    fn status_ack(&self) -> AckFrame {
        let config = match &self.running {
            Some(r) => {
                let mut rec = r.session.config_record();
                rec.sim = self.sim_setup(r.driver.is_some(), r.policy.clone());
                Some(rec)
            }
            None => self.preview(),
        };
        AckFrame {
            mode: Some(self.mode),
            config: config.map(Box::new),
            rider: (self.mode != Mode::Sensor).then(|| self.rider.clone()),
            ..Default::default()
        }
    }

    fn preview(&self) -> Option<ConfigRecord> {
        Session::start(self.next.clone()).ok().map(|s| s.config_record())
    }

    fn sim_setup(&self, simulated: bool, policy: Option<RiderPolicy>) -> Option<SimSetup> {
        simulated.then(|| SimSetup {
            rider: self.rider.clone(),
            policy,
        })
    }

    fn ecg(&mut self, conn: ConnId, t: &[f64], v: &[f64]) -> Result<(), ErrorFrame> {
        if self.role(conn) != Some(Role::Sensor) {
            return Err(ErrorFrame::new(ErrorCode::NotAccepted, "ecg frames are accepted from the sensor only"));
        }
        if self.mode != Mode::Sensor {
            return Err(ErrorFrame::new(
                ErrorCode::WrongMode,
                format!("server is in {} mode; ecg is ignored", self.mode),
            ));
        }
        if t.len() != v.len() {
            return Err(ErrorFrame::new(
                ErrorCode::BadFrame,
                format!("t has {} entries but v has {}", t.len(), v.len()),
            ));
        }
        // Samples outside a session are discarded.
        let Some(run) = self.running.as_mut() else {
            return Ok(());
        };
        for (&t, &v) in t.iter().zip(v) {
            if !(t.is_finite() && v.is_finite()) {
                return Err(ErrorFrame::new(ErrorCode::BadSample, format!("non-finite sample ({t}, {v})")));
            }
            if run.last_sample_t.is_some_and(|last| t <= last) {
                return Err(ErrorFrame::new(
                    ErrorCode::BadSample,
                    format!("sample time {t} does not advance past {}", run.last_sample_t.unwrap_or_default()),
                ));
            }
            run.last_sample_t = Some(t);
            run.pending.push(EcgSample::new(t, v));
        }
        Ok(())
    }

    fn effort(&mut self, conn: ConnId, power_w: f64) -> Result<AckFrame, ErrorFrame> {
        if self.role(conn) != Some(Role::Console) {
            return Err(ErrorFrame::new(ErrorCode::NotAccepted, "effort frames are accepted from a console only"));
        }
        if self.mode != Mode::Manual {
            return Err(ErrorFrame::new(
                ErrorCode::WrongMode,
                format!("effort requires manual mode; server is in {} mode", self.mode),
            ));
        }
        if power_w.is_nan() {
            return Err(ErrorFrame::new(ErrorCode::InvalidArgument, "power_w is not a number"));
        }
        let applied = self.rider.clamp_power(power_w);
        self.manual_power_w = applied;
        if let Some(driver) = self.running.as_mut().and_then(|r| r.driver.as_mut()) {
            driver.set_power(applied);
        }
        Ok(AckFrame {
            note: (applied != power_w).then(|| format!("power {power_w} W clamped to {applied} W")),
            power_w: Some(applied),
            ..Default::default()
        })
    }

    fn command(&mut self, conn: ConnId, cmd: CmdFrame) -> Result<AckFrame, ErrorFrame> {
        if self.role(conn) != Some(Role::Console) {
            return Err(ErrorFrame::new(ErrorCode::NotAccepted, "commands are accepted from a console only"));
        }
        let invalid = |msg: &str| ErrorFrame::new(ErrorCode::InvalidArgument, msg);
        if cmd.cmd == CmdKind::Stop {
            if self.running.is_none() {
                return Err(ErrorFrame::new(ErrorCode::WrongPhase, "no session is running"));
            }
            self.stop();
            return Ok(AckFrame {
                id: cmd.id,
                cmd: Some(cmd.cmd),
                ..Default::default()
            });
        }
        if self.running.is_some() {
            return Err(ErrorFrame::new(
                ErrorCode::WrongPhase,
                "a session is running; stop it first",
            ));
        }
        match cmd.cmd {
            CmdKind::SetAge => {
                let age = cmd.age.ok_or_else(|| invalid("set_age needs `age`"))?;
                self.next.age = checked_age(age, &self.next)?;
            }
            CmdKind::SetCondition => {
                self.next.condition = cmd.condition.ok_or_else(|| invalid("set_condition needs `condition`"))?;
            }
            CmdKind::SetMode => {
                self.mode = cmd.mode.ok_or_else(|| invalid("set_mode needs `mode`"))?;
            }
            CmdKind::Start => {
                let mut config = self.next.clone();
                if let Some(age) = cmd.age {
                    config.age = checked_age(age, &config)?;
                }
                if let Some(c) = cmd.condition {
                    config.condition = c;
                }
                if let Some(p) = cmd.participant_id.clone() {
                    config.participant_id = p;
                }
                self.next = config;
                self.start().map_err(|e| ErrorFrame::new(ErrorCode::InvalidArgument, e.to_string()))?;
            }
            CmdKind::Stop => unreachable!(),
        }
        let mut ack = self.status_ack();
        ack.id = cmd.id;
        ack.cmd = Some(cmd.cmd);
        if cmd.cmd == CmdKind::Start {
            // Every other console and observer learns the new configuration.
            let others = AckFrame { id: None, ..ack.clone() };
            for (&id, c) in &self.clients {
                if id != conn && c.role.receives_state() {
                    let _ = c.replies.try_send(Outbound::Frame(Frame::Ack(Box::new(others.clone()))));
                }
            }
        }
        Ok(ack)
    }

    fn start(&mut self) -> Result<(), SessionError> {
        let config = self.next.clone();
        let session = Session::start(config.clone())?;
        let (driver, policy) = match self.mode {
            Mode::Sensor => (None, None),
            Mode::Manual => {
                let mut d = SimDriver::new(&config, &self.rider, None)?;
                d.set_power(self.manual_power_w);
                (Some(d), None)
            }
            Mode::Sim => {
                let policy = self.policy.clone().unwrap_or_else(|| matching_policy(config.condition));
                (Some(SimDriver::new(&config, &self.rider, Some(&policy))?), Some(policy))
            }
        };
        let capacity = session.run_ticks() as usize + config.ticks_for(config.training_s) as usize;
        tracing::info!(
            mode = %self.mode,
            condition = %config.condition,
            age = config.age,
            participant = %config.participant_id,
            "session started"
        );
        self.running = Some(Running {
            session,
            driver,
            policy,
            ticks: Vec::with_capacity(capacity),
            pending: Vec::new(),
            last_sample_t: None,
        });
        Ok(())
    }

    fn on_tick(&mut self) {
        let Some(run) = self.running.as_mut() else { return };
        let wall = now_us();
        let result = match run.driver.as_mut() {
            Some(driver) => driver.tick(&mut run.session),
            None => run.session.tick(TickInput::ecg(&run.pending)),
        };
        run.pending.clear();
        match result {
            Ok(state) => self.publish(state, wall),
            Err(e) => {
                tracing::error!(error = %e, "tick failed; session aborted");
                for c in self.clients.values().filter(|c| c.role.receives_state()) {
                    let frame = Frame::error(ErrorCode::Internal, format!("session aborted: {e}"));
                    let _ = c.replies.try_send(Outbound::Frame(frame));
                }
                self.finish();
            }
        }
    }

    fn stop(&mut self) {
        let Some(run) = self.running.as_mut() else { return };
        let wall = now_us();
        match run.session.stop() {
            Ok(state) => self.publish(state, wall),
            Err(_) => self.finish(),
        }
    }

    fn publish(&mut self, state: LoopState, wall: u64) {
        let finished = state.phase == Phase::Finished;
        let run = self.running.as_mut().expect("publish while running");
        run.ticks.push(state.clone());
        // No receivers is not an error: the session runs unobserved.
        let _ = self.states.send(Arc::new(TickFrame::new(state, wall)));
        if finished {
            self.finish();
        }
    }

    fn finish(&mut self) {
        let Some(run) = self.running.take() else { return };
        tracing::info!(ticks = run.ticks.len(), "session finished");
        let Some(dir) = self.log_dir.clone() else { return };
        let mut record = run.session.config_record();
        record.sim = self.sim_setup(run.driver.is_some(), run.policy);
        let log = SessionLog::close(record, run.ticks);
        let name = format!(
            "{}_{}_{}.jsonl",
            sanitize(&log.config.session.participant_id),
            log.config.session.condition,
            now_us() / 1000
        );
        tokio::task::spawn_blocking(move || {
            let path = dir.join(name);
            let result = std::fs::create_dir_all(&dir)
                .and_then(|_| std::fs::File::create(&path))
                .and_then(|f| log.write_jsonl(std::io::BufWriter::new(f)));
            match result {
                Ok(()) => tracing::info!(path = %path.display(), "session log written"),
                Err(e) => tracing::error!(path = %path.display(), error = %e, "session log not written"),
            }
        });
    }
}

fn checked_age(age: u32, config: &SessionConfig) -> Result<u32, ErrorFrame> {
    let profile = AthleteProfile::new(age).with_formula(config.hr_max_formula);
    compute_zone_model(&profile).map_err(|e| ErrorFrame::new(ErrorCode::InvalidArgument, e.to_string()))?;
    Ok(age)
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Sensor => "sensor",
        Role::Console => "console",
        Role::Observer => "observer",
    }
}

/// Keep participant ids safe as file-name components.
fn sanitize(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "session".into()
    } else {
        s
    }
}
