//! Proptest strategies covering every frame type.

use cardioloop_core::adaptation::{BikeComputerView, NpcState};
use cardioloop_core::rider_sim::{RiderModel, RiderPolicy};
use cardioloop_core::session::{LoopState, Phase, Session, SessionConfig, SimSetup};
use cardioloop_core::{Condition, ZoneId};
use proptest::collection::vec;
use proptest::option;
use proptest::prelude::*;

use crate::protocol::{
    AckFrame, CmdFrame, CmdKind, ErrorCode, ErrorFrame, Frame, Mode, OneOrMany, Role, StateFrame,
};

/// Finite floats across many magnitudes; non-finite values are not JSON.
pub fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        Just(0.0),
    ]
}

pub fn role() -> impl Strategy<Value = Role> {
    prop_oneof![Just(Role::Sensor), Just(Role::Console), Just(Role::Observer)]
}

pub fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Sensor), Just(Mode::Manual), Just(Mode::Sim)]
}

pub fn condition() -> impl Strategy<Value = Condition> {
    prop_oneof![
        Just(Condition::Baseline),
        Just(Condition::RandomNpc),
        Just(Condition::AdaptiveNpc)
    ]
}

fn zone() -> impl Strategy<Value = ZoneId> {
    (1u8..=5).prop_map(|z| ZoneId::new(z).unwrap())
}

fn any_zone() -> impl Strategy<Value = ZoneId> {
    (0u8..=5).prop_map(|z| ZoneId::new(z).unwrap())
}

fn cmd_kind() -> impl Strategy<Value = CmdKind> {
    prop_oneof![
        Just(CmdKind::Start),
        Just(CmdKind::Stop),
        Just(CmdKind::SetCondition),
        Just(CmdKind::SetAge),
        Just(CmdKind::SetMode),
    ]
}

fn error_code() -> impl Strategy<Value = ErrorCode> {
    prop_oneof![
        Just(ErrorCode::BadFrame),
        Just(ErrorCode::FrameTooLarge),
        Just(ErrorCode::UnknownType),
        Just(ErrorCode::HelloRequired),
        Just(ErrorCode::RoleRejected),
        Just(ErrorCode::WrongMode),
        Just(ErrorCode::WrongPhase),
        Just(ErrorCode::InvalidArgument),
        Just(ErrorCode::BadSample),
        Just(ErrorCode::NotAccepted),
        Just(ErrorCode::Internal),
    ]
}

fn one_or_many(len: usize) -> BoxedStrategy<OneOrMany> {
    if len == 1 {
        prop_oneof![finite().prop_map(OneOrMany::One), vec(finite(), 1).prop_map(OneOrMany::Many)].boxed()
    } else {
        vec(finite(), len).prop_map(OneOrMany::Many).boxed()
    }
}

pub fn cmd() -> impl Strategy<Value = CmdFrame> {
    (
        option::of(any::<u64>()),
        cmd_kind(),
        option::of(any::<u32>()),
        option::of(condition()),
        option::of(mode()),
        option::of("[A-Za-z0-9 _-]{0,12}"),
    )
        .prop_map(|(id, cmd, age, condition, mode, participant_id)| CmdFrame {
            id,
            cmd,
            age,
            condition,
            mode,
            participant_id,
        })
}

pub fn loop_state() -> impl Strategy<Value = LoopState> {
    let npc = (finite(), any::<bool>(), any::<u64>()).prop_map(|(offset_m, aligned, score)| NpcState {
        offset_m,
        aligned,
        score,
    });
    let bike = (option::of(finite()), option::of(any_zone()), zone()).prop_map(
        |(hr_bpm, current_zone, target_zone)| BikeComputerView {
            hr_bpm,
            current_zone,
            target_zone,
        },
    );
    (
        // Log timestamps carry six decimals, so draw them on a microsecond grid.
        (0u64..1u64 << 40).prop_map(|us| us as f64 / 1e6),
        prop_oneof![Just(Phase::Training), Just(Phase::Running), Just(Phase::Finished)],
        option::of(finite()),
        option::of(finite()),
        option::of(any_zone()),
        zone(),
        finite(),
        condition(),
        option::of(npc),
        option::of(bike),
        finite(),
        any::<bool>(),
    )
        .prop_map(
            |(t_s, phase, hr_bpm, hr_norm, current_zone, target_zone, remaining_s, condition, npc, bike_view, speed_mps, end_prompt)| {
                LoopState {
                    t_s,
                    phase,
                    hr_bpm,
                    hr_norm,
                    current_zone,
                    target_zone,
                    remaining_s,
                    condition,
                    npc,
                    bike_view,
                    speed_mps,
                    end_prompt,
                }
            },
        )
}

pub fn ack() -> impl Strategy<Value = AckFrame> {
    let config = (10u32..=100, condition(), any::<u64>(), "[A-Za-z0-9]{1,8}", any::<bool>()).prop_map(
        |(age, condition, seed, participant_id, sim)| {
            let session = SessionConfig {
                age,
                condition,
                participant_id,
                ..Default::default()
            }
            .with_seed(seed);
            let mut rec = Session::start(session).unwrap().config_record();
            rec.sim = sim.then(|| SimSetup {
                rider: RiderModel::default(),
                policy: Some(RiderPolicy::default()),
            });
            Box::new(rec)
        },
    );
    let rider = (50.0f64..80.0, 0.1f64..0.5, 300.0f64..600.0).prop_map(|(rest, gain, p_max)| RiderModel {
        hr_rest_bpm: rest,
        hr_gain_bpm_per_w: gain,
        p_max_w: p_max,
        ..Default::default()
    });
    (
        option::of(any::<u64>()),
        option::of(cmd_kind()),
        option::of(".{0,24}"),
        option::of(mode()),
        option::of(config),
        option::of(rider),
        option::of(finite()),
    )
        .prop_map(|(id, cmd, note, mode, config, rider, power_w)| AckFrame {
            id,
            cmd,
            note,
            mode,
            config,
            rider,
            power_w,
        })
}

pub fn frame() -> impl Strategy<Value = Frame> {
    prop_oneof![
        role().prop_map(|role| Frame::Hello { role }),
        (1usize..32)
            .prop_flat_map(|n| (one_or_many(n), one_or_many(n)))
            .prop_map(|(t, v)| Frame::Ecg { t, v }),
        finite().prop_map(|power_w| Frame::Effort { power_w }),
        cmd().prop_map(Frame::Cmd),
        (loop_state(), any::<u64>(), any::<u64>()).prop_map(|(state, dropped, tick_wall_us)| {
            Frame::State(Box::new(StateFrame {
                state,
                dropped,
                tick_wall_us,
            }))
        }),
        ack().prop_map(|a| Frame::Ack(Box::new(a))),
        (error_code(), ".{0,40}", option::of(any::<u64>())).prop_map(|(code, message, id)| {
            Frame::Error(ErrorFrame { code, message, id })
        }),
    ]
}
