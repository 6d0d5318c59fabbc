//! Engine behaviour over in-memory connections, on a paused clock.

mod common;

use std::time::Duration;

use cardioloop_core::hr_zones::ZoneId;
use cardioloop_core::rider_sim::{synth_ecg, EcgTemplate, RiderModel, SynthNoise};
use cardioloop_core::session::{Phase, SessionConfig, SessionLog};
use cardioloop_core::Condition;
use cardioloop_net::{spawn_engine, CmdKind, EngineConfig, EngineHandle, ErrorCode, Frame, Mode, OneOrMany, Role};
use common::{cmd, Client};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokio::io::DuplexStream;
use tokio::time::{sleep_until, Instant};

fn engine(config: EngineConfig) -> EngineHandle {
    spawn_engine(config).unwrap()
}

fn connect(engine: &EngineHandle) -> Client<DuplexStream> {
    Client::new(engine.connect_in_memory())
}

fn zone(z: u8) -> ZoneId {
    ZoneId::new(z).unwrap()
}

#[tokio::test(start_paused = true)]
async fn second_sensor_is_refused_and_closed() {
    let e = engine(EngineConfig::default());
    let mut first = connect(&e);
    first.hello(Role::Sensor).await;
    let mut second = connect(&e);
    second.send(&Frame::Hello { role: Role::Sensor }).await;
    assert_eq!(second.error().await.code, ErrorCode::RoleRejected);
    assert_eq!(second.recv_line().await, None);

    // The slot frees up when the first sensor leaves.
    drop(first);
    tokio::time::sleep(Duration::from_millis(50)).await;
    let mut third = connect(&e);
    third.hello(Role::Sensor).await;
}

#[tokio::test(start_paused = true)]
async fn bad_frames_get_errors_and_the_connection_stays_open() {
    let e = engine(EngineConfig::default());
    let mut c = connect(&e);
    c.cmd(cmd(CmdKind::Start, 1)).await;
    assert_eq!(c.error().await.code, ErrorCode::HelloRequired);
    c.send_raw(r#"{"type":"teleport","to":"mars"}"#).await;
    assert_eq!(c.error().await.code, ErrorCode::UnknownType);
    c.send_raw("{oops").await;
    assert_eq!(c.error().await.code, ErrorCode::BadFrame);
    c.send_raw(r#"{"type":"ecg","t":[1,2],"v":[0.1]}"#).await;
    // Shape errors are caught only after hello; here hello is still missing.
    assert_eq!(c.error().await.code, ErrorCode::HelloRequired);

    let ack = c.hello(Role::Console).await;
    assert_eq!(ack.mode, Some(Mode::Sensor));
    assert_eq!(ack.config.unwrap().hr_max_bpm, 187.0);
    c.send(&Frame::Hello { role: Role::Observer }).await;
    assert_eq!(c.error().await.code, ErrorCode::RoleRejected);
    c.send_raw(r#"{"type":"error","code":"internal","message":"x"}"#).await;
    assert_eq!(c.error().await.code, ErrorCode::NotAccepted);
    c.send_raw(r#"{"type":"cmd","cmd":"set_age","id":9,"age":300}"#).await;
    let err = c.error().await;
    assert_eq!((err.code, err.id), (ErrorCode::InvalidArgument, Some(9)));
    c.send_raw(r#"{"type":"cmd","cmd":"set_age","id":10,"age":40,"extra":true}"#).await;
    let ack = c.ack().await;
    assert_eq!(ack.id, Some(10));
    assert_eq!(ack.config.unwrap().session.age, 40);
}

#[tokio::test(start_paused = true)]
async fn sensor_samples_are_validated() {
    let e = engine(EngineConfig::default());
    let mut console = connect(&e);
    console.hello(Role::Console).await;
    let mut sensor = connect(&e);
    sensor.hello(Role::Sensor).await;
    console.cmd(cmd(CmdKind::Start, 1)).await;
    console.ack().await;

    let ecg = |t: Vec<f64>, v: Vec<f64>| Frame::Ecg {
        t: OneOrMany::Many(t),
        v: OneOrMany::Many(v),
    };
    sensor.send(&ecg(vec![1.0, 2.0], vec![0.1])).await;
    assert_eq!(sensor.error().await.code, ErrorCode::BadFrame);
    sensor.send(&ecg(vec![1.0, 1.0], vec![0.1, 0.2])).await;
    assert_eq!(sensor.error().await.code, ErrorCode::BadSample);
    sensor
        .send(&Frame::Ecg {
            t: OneOrMany::One(0.5),
            v: OneOrMany::One(0.0),
        })
        .await;
    assert_eq!(sensor.error().await.code, ErrorCode::BadSample);
    console.send(&ecg(vec![5.0], vec![0.0])).await;
    assert_eq!(console.error().await.code, ErrorCode::NotAccepted);
}

#[tokio::test(start_paused = true)]
async fn start_at_age_30_adaptive_begins_in_zone_one_with_an_offset() {
    let e = engine(EngineConfig::default());
    let mut observer = connect(&e);
    observer.hello(Role::Observer).await;
    let mut console = connect(&e);
    console.hello(Role::Console).await;
    console
        .cmd(cardioloop_net::CmdFrame {
            age: Some(30),
            condition: Some(Condition::AdaptiveNpc),
            participant_id: Some("P07".into()),
            ..cmd(CmdKind::Start, 1)
        })
        .await;
    let ack = console.ack().await;
    assert_eq!((ack.id, ack.cmd), (Some(1), Some(CmdKind::Start)));
    let config = ack.config.unwrap();
    assert_eq!(config.session.age, 30);
    assert_eq!(config.session.participant_id, "P07");

    // Observers hear about the start before the first state.
    let Frame::Ack(seen) = observer.recv().await else {
        panic!("observer expected the start ack first")
    };
    assert_eq!(seen.id, None);
    assert_eq!(seen.config.unwrap().session.condition, Condition::AdaptiveNpc);

    for c in [&mut console, &mut observer] {
        let first = c.state().await;
        assert_eq!(first.state.target_zone, zone(1));
        assert_eq!(first.state.phase, Phase::Training);
        assert_eq!(first.state.t_s, 0.02);
        assert!(first.state.npc.is_some());
        assert!(first.state.bike_view.is_none());
        assert!(first.tick_wall_us > 0);
    }
}

#[tokio::test(start_paused = true)]
async fn phase_rules_for_commands() {
    let e = engine(EngineConfig::default());
    let mut c = connect(&e);
    c.hello(Role::Console).await;
    c.cmd(cmd(CmdKind::Stop, 1)).await;
    assert_eq!(c.error().await.code, ErrorCode::WrongPhase);
    c.cmd(cmd(CmdKind::SetCondition, 2)).await;
    assert_eq!(c.error().await.code, ErrorCode::InvalidArgument);
    c.cmd(cardioloop_net::CmdFrame {
        condition: Some(Condition::Baseline),
        ..cmd(CmdKind::SetCondition, 3)
    })
    .await;
    assert_eq!(c.ack().await.config.unwrap().session.condition, Condition::Baseline);

    c.cmd(cmd(CmdKind::Start, 4)).await;
    c.ack().await;
    let s = c.state().await;
    assert!(s.state.bike_view.is_some() && s.state.npc.is_none());
    for (id, kind) in [(5, CmdKind::Start), (6, CmdKind::SetAge), (7, CmdKind::SetMode)] {
        c.cmd(cardioloop_net::CmdFrame {
            age: Some(40),
            mode: Some(Mode::Sim),
            ..cmd(kind, id)
        })
        .await;
        let err = c.error().await;
        assert_eq!((err.code, err.id), (ErrorCode::WrongPhase, Some(id)));
    }
    c.cmd(cmd(CmdKind::Stop, 8)).await;
    // The ack and the final state travel on different queues; either may
    // arrive first.
    let (mut acked, mut last) = (false, None);
    while !acked || last.is_none() {
        match c.recv().await {
            Frame::Ack(a) => acked = a.id == Some(8),
            Frame::State(s) if s.state.phase == Phase::Finished => last = Some(s),
            Frame::State(_) => {}
            other => panic!("{other:?}"),
        }
    }
    assert!(last.unwrap().state.end_prompt);
    // Idle again: settings can change and a new session can start.
    c.cmd(cardioloop_net::CmdFrame {
        age: Some(41),
        ..cmd(CmdKind::SetAge, 9)
    })
    .await;
    assert_eq!(c.ack().await.config.unwrap().session.age, 41);
}

#[tokio::test(start_paused = true)]
async fn effort_is_clamped_in_manual_mode_and_refused_in_sensor_mode() {
    let e = engine(EngineConfig::default());
    let mut c = connect(&e);
    c.hello(Role::Console).await;
    c.send(&Frame::Effort { power_w: 100.0 }).await;
    assert_eq!(c.error().await.code, ErrorCode::WrongMode);

    c.cmd(cardioloop_net::CmdFrame {
        mode: Some(Mode::Manual),
        ..cmd(CmdKind::SetMode, 1)
    })
    .await;
    let ack = c.ack().await;
    assert_eq!(ack.mode, Some(Mode::Manual));
    let p_max = ack.rider.unwrap().p_max_w;

    c.send(&Frame::Effort { power_w: -5.0 }).await;
    let ack = c.ack().await;
    assert_eq!(ack.power_w, Some(0.0));
    assert!(ack.note.unwrap().contains("clamped"));
    c.send(&Frame::Effort { power_w: 1e6 }).await;
    assert_eq!(c.ack().await.power_w, Some(p_max));
    c.send(&Frame::Effort { power_w: 150.0 }).await;
    let ack = c.ack().await;
    assert_eq!((ack.power_w, ack.note), (Some(150.0), None));

    let mut observer = connect(&e);
    observer.hello(Role::Observer).await;
    observer.send(&Frame::Effort { power_w: 10.0 }).await;
    assert_eq!(observer.error().await.code, ErrorCode::NotAccepted);
}

/// Least-squares slope of `ln(gap)` against time.
fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| {
        (a + (x - mx) * (y.ln() - my), b + (x - mx) * (x - mx))
    });
    num / den
}

#[tokio::test(start_paused = true)]
async fn manual_power_step_raises_heart_rate_with_the_model_time_constant() {
    let rider = RiderModel {
        noise_bpm_sd: 0.0,
        ..Default::default()
    };
    let e = engine(EngineConfig {
        mode: Mode::Manual,
        rider: rider.clone(),
        session: SessionConfig {
            training_s: 0.0,
            zone_schedule: vec![(zone(2), 600.0)],
            ..Default::default()
        },
        ..Default::default()
    });
    let mut c = connect(&e);
    c.hello(Role::Console).await;
    c.cmd(cmd(CmdKind::Start, 1)).await;
    c.ack().await;

    // Rest at 0 W until the estimate has settled.
    let mut hr = None;
    while c.state().await.state.t_s < 60.0 - 1e-9 {}
    while hr.is_none() {
        hr = c.state().await.state.hr_bpm;
    }
    let rest = hr.unwrap();
    assert!((rest - rider.hr_rest_bpm).abs() <= 3.0, "resting estimate {rest}");

    c.send(&Frame::Effort { power_w: 200.0 }).await;
    let steady = rider.steady_state(200.0);
    let mut trace = Vec::new();
    let t0 = loop {
        match c.recv().await {
            Frame::Ack(a) => {
                assert_eq!(a.power_w, Some(200.0));
                break trace.last().map_or(60.0, |&(t, _)| t);
            }
            Frame::State(s) => trace.push((s.state.t_s, s.state.hr_bpm.unwrap())),
            other => panic!("{other:?}"),
        }
    };
    trace.clear();
    while trace.last().is_none_or(|&(t, _)| t < t0 + 180.0) {
        let s = c.state().await;
        trace.push((s.state.t_s, s.state.hr_bpm.unwrap()));
    }
    // The estimate is a trailing window mean of beat intervals: it lags but
    // decays with the same time constant. Fit the gap to steady state once
    // the window has filled, and stop before the gap sinks into beat noise.
    let gaps: Vec<_> = trace
        .iter()
        .filter(|&&(t, hr)| t > t0 + 15.0 && steady - hr > 4.0)
        .map(|&(t, hr)| (t - t0, steady - hr))
        .collect();
    assert!(gaps.len() > 50 * 60, "only {} points to fit", gaps.len());
    let tau = -1.0 / log_slope(&gaps);
    assert!((tau - rider.tau_up_s).abs() <= 0.2 * rider.tau_up_s, "fitted tau {tau}");
    let end = trace.last().unwrap().1;
    assert!((end - steady).abs() <= 3.0, "HR {end} after 180 s at 200 W, model {steady}");

    // Back to 0 W: HR decays toward rest.
    c.send(&Frame::Effort { power_w: 0.0 }).await;
    c.ack().await;
    let t1 = end;
    let mut last = (0.0, t1);
    while last.0 < t0 + 180.0 + 240.0 {
        let s = c.state().await;
        last = (s.state.t_s, s.state.hr_bpm.unwrap());
    }
    assert!((last.1 - rider.hr_rest_bpm).abs() <= 4.0, "HR {} after 240 s at 0 W", last.1);
}

#[tokio::test(start_paused = true)]
async fn streamed_sensor_ecg_converges_to_the_true_rate() {
    let e = engine(EngineConfig::default());
    let mut console = connect(&e);
    console.hello(Role::Console).await;
    let mut sensor = connect(&e);
    sensor.hello(Role::Sensor).await;
    console.cmd(cmd(CmdKind::Start, 1)).await;
    console.ack().await;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trace = synth_ecg(|_| 75.0, 130.0, 60.0, SynthNoise::SnrDb(20.0), &EcgTemplate::default(), &mut rng).unwrap();
    let feeder = tokio::spawn(async move {
        let start = Instant::now();
        // 13 samples every 100 ms: 130 Hz in real-time-sized batches.
        for (k, chunk) in trace.samples.chunks(13).enumerate() {
            sleep_until(start + Duration::from_millis(100 * k as u64)).await;
            sensor
                .send(&Frame::Ecg {
                    t: OneOrMany::Many(chunk.iter().map(|s| s.t).collect()),
                    v: OneOrMany::Many(chunk.iter().map(|s| s.v).collect()),
                })
                .await;
        }
        sensor
    });
    let mut late = Vec::new();
    loop {
        let s = console.state().await;
        if s.state.t_s > 30.0 {
            late.extend(s.state.hr_bpm);
        }
        if s.state.t_s >= 60.0 - 1e-9 {
            break;
        }
    }
    feeder.await.unwrap();
    assert!(late.len() > 50 * 25);
    for hr in &late {
        assert!((hr - 75.0).abs() <= 2.0, "estimate {hr}");
    }
}

#[tokio::test(start_paused = true)]
async fn stalled_observer_loses_frames_without_delaying_ticks() {
    let e = engine(EngineConfig {
        broadcast_capacity: 16,
        ..Default::default()
    });
    let mut stalled = connect(&e);
    stalled.hello(Role::Observer).await;
    let mut console = connect(&e);
    console.hello(Role::Console).await;
    let start = Instant::now();
    console.cmd(cmd(CmdKind::Start, 1)).await;
    console.ack().await;

    // Far more state traffic than the in-memory pipe buffers.
    let mut prev = 0.0;
    let mut count = 0u64;
    loop {
        let s = console.state().await;
        assert_eq!(s.dropped, 0);
        assert!((s.state.t_s - prev - 0.02).abs() < 1e-9, "gap after {prev}");
        prev = s.state.t_s;
        count += 1;
        if count == 50 * 120 {
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!((elapsed - 120.0).abs() < 0.1, "120 s of ticks took {elapsed} s");

    // The stalled observer drains what was buffered, then sees the gap.
    let mut reported = 0;
    while reported == 0 {
        let s = stalled.state().await;
        reported = s.dropped;
    }
    assert!(reported > 1000, "only {reported} drops reported");
}

#[tokio::test(start_paused = true)]
async fn finished_sim_session_writes_a_replayable_log() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(EngineConfig {
        mode: Mode::Sim,
        log_dir: Some(dir.path().to_path_buf()),
        session: SessionConfig {
            training_s: 2.0,
            zone_schedule: vec![(zone(1), 20.0)],
            ..Default::default()
        }
        .with_seed(3),
        ..Default::default()
    });
    let mut c = connect(&e);
    c.hello(Role::Console).await;
    c.cmd(cmd(CmdKind::Start, 1)).await;
    let ack = c.ack().await;
    let sim = ack.config.unwrap().sim.expect("sim setup in config");
    assert!(sim.policy.is_some());
    let mut n = 0;
    loop {
        n += 1;
        if c.state().await.state.phase == Phase::Finished {
            break;
        }
    }
    assert_eq!(n, 22 * 50);

    let path = loop {
        let found = std::fs::read_dir(dir.path()).unwrap().next();
        if let Some(entry) = found {
            let path = entry.unwrap().path();
            // Written on a blocking thread; wait until it is complete.
            if std::fs::read_to_string(&path).unwrap().contains("\"type\":\"summary\"") {
                break path;
            }
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    };
    assert!(path.file_name().unwrap().to_str().unwrap().starts_with("P00_adaptive_npc_"));
    let bytes = std::fs::read(&path).unwrap();
    let log = SessionLog::read_jsonl(bytes.as_slice()).unwrap();
    assert_eq!(log.ticks.len(), 22 * 50);
    assert_eq!(log.recompute().ok(), log.summary);
    assert!(log.config.sim.unwrap().policy.is_some());
}
