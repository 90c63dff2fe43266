use std::collections::BTreeMap;

use proptest::prelude::*;

use raycover::bus::{
    ActuatorCommand, AntennaSpec, CoverageRequest, CoverageResult, GridSpec, Message, ResultStatus,
    SceneSpec, SensorKind, SensorReading, SensorValue, TraceSpec, TxSpec, XyzSpec,
};

fn id() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_.:-]{1,48}"
}

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

fn boresight() -> impl Strategy<Value = XyzSpec> {
    (finite(-1.0, 1.0), finite(-1.0, 1.0), finite(-1.0, 1.0))
        .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-6)
        .prop_map(|(x, y, z)| XyzSpec { x, y, z })
}

fn antenna() -> impl Strategy<Value = AntennaSpec> {
    prop_oneof![
        Just(AntennaSpec::isotropic()),
        finite(0.0, 20.0).prop_map(|exponent| AntennaSpec {
            kind: "directional".into(),
            exponent,
        }),
    ]
}

fn tx() -> impl Strategy<Value = TxSpec> {
    (
        finite(-1e4, 1e4),
        finite(-1e4, 1e4),
        finite(-100.0, 500.0),
        finite(1e6, 1e11),
        antenna(),
        boresight(),
    )
        .prop_map(|(x, y, z, frequency_hz, antenna, boresight)| TxSpec {
            x,
            y,
            z,
            frequency_hz,
            antenna,
            boresight,
        })
}

fn grid() -> impl Strategy<Value = GridSpec> {
    (
        finite(-1e3, 1e3),
        finite(-1e3, 1e3),
        finite(1.0, 400.0),
        finite(1.0, 400.0),
        finite(0.5, 10.0),
        finite(0.0, 30.0),
    )
        .prop_map(|(x0, y0, w, h, cell_size, height)| GridSpec {
            x0,
            y0,
            x1: x0 + w,
            y1: y0 + h,
            cell_size,
            height,
        })
}

fn trace() -> impl Strategy<Value = TraceSpec> {
    (1u64..50_000_000, 0u32..12, finite(0.0, 1e-3), any::<u64>()).prop_map(
        |(rays, max_depth, min_amplitude, seed)| TraceSpec {
            rays,
            max_depth,
            min_amplitude,
            seed,
        },
    )
}

fn scene() -> impl Strategy<Value = SceneSpec> {
    prop_oneof![
        ".{0,200}".prop_map(|doc| SceneSpec::inline(&doc)),
        ("[a-z/._-]{1,60}", "[0-9a-f]{64}").prop_map(|(uri, h)| SceneSpec::reference(uri, h)),
    ]
}

fn request() -> impl Strategy<Value = Message> {
    (id(), tx(), grid(), trace(), scene()).prop_map(|(job_id, tx, grid, trace, scene)| {
        Message::CoverageRequest(CoverageRequest {
            job_id,
            tx,
            grid,
            trace,
            scene,
        })
    })
}

fn result() -> impl Strategy<Value = Message> {
    (
        id(),
        0..3u8,
        finite(0.0, 1e4),
        "[A-Za-z0-9+/]{0,64}",
        ".{0,80}",
    )
        .prop_map(|(job_id, status, duration_s, map, error)| {
            let (status, map_b64, error) = match status {
                0 => (ResultStatus::Done, Some(map), None),
                1 => (ResultStatus::Failed, None, Some(error)),
                _ => (ResultStatus::Superseded, None, None),
            };
            Message::CoverageResult(CoverageResult {
                job_id,
                status,
                duration_s,
                map_b64,
                error,
            })
        })
}

fn reading() -> impl Strategy<Value = Message> {
    let kind = prop_oneof![
        Just(SensorKind::Temperature),
        Just(SensorKind::Weather),
        Just(SensorKind::Custom)
    ];
    let value = prop_oneof![
        any::<f64>()
            .prop_filter("finite", |v| v.is_finite())
            .prop_map(SensorValue::Number),
        ".{0,30}".prop_map(SensorValue::Text),
    ];
    (id(), kind, value, ".{0,8}", 1..u64::MAX).prop_map(|(sensor_id, kind, value, unit, ts_ms)| {
        Message::SensorReading(SensorReading {
            sensor_id,
            kind,
            value,
            unit,
            ts_ms,
        })
    })
}

fn command() -> impl Strategy<Value = Message> {
    (
        id(),
        "[a-z_]{1,12}",
        prop::collection::btree_map(".{0,10}", ".{0,20}", 0..5),
        1..u64::MAX,
    )
        .prop_map(
            |(actuator_id, command, args, ts_ms): (_, _, BTreeMap<_, _>, _)| {
                Message::ActuatorCommand(ActuatorCommand {
                    actuator_id,
                    command,
                    args,
                    ts_ms,
                })
            },
        )
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![request(), result(), reading(), command()]
}
