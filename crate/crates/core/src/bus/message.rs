//! JSON wire vocabulary of the twin bus.
//!
//! Field names and order are fixed; encoding is deterministic. Decoding
//! either yields a fully validated message or an error.

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::topics::is_level_safe;
use super::BusError;
use crate::coverage::{decode_map, encode_map, make_grid, CoverageGrid, CoverageMap};
use crate::geometry::Vec3;
use crate::propagation::{AntennaPattern, TraceConfig, Transmitter};

pub const MAX_JOB_ID_LEN: usize = 128;
pub const MAX_INLINE_SCENE_BYTES: usize = 8 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    CoverageRequest,
    CoverageResult,
    SensorReading,
    ActuatorCommand,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::CoverageRequest => "CoverageRequest",
            MessageKind::CoverageResult => "CoverageResult",
            MessageKind::SensorReading => "SensorReading",
            MessageKind::ActuatorCommand => "ActuatorCommand",
        })
    }
}

fn invalid(msg: impl Into<String>) -> BusError {
    BusError::Validation(msg.into())
}

fn check_finite(name: &str, v: f64) -> Result<(), BusError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XyzSpec {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<XyzSpec> for Vec3 {
    fn from(v: XyzSpec) -> Vec3 {
        Vec3::new(v.x, v.y, v.z)
    }
}

impl From<Vec3> for XyzSpec {
    fn from(v: Vec3) -> XyzSpec {
        XyzSpec {
            x: v.x,
            y: v.y,
            z: v.z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaSpec {
    /// `isotropic` or `directional`.
    pub kind: String,
    #[serde(default)]
    pub exponent: f64,
}

impl AntennaSpec {
    pub fn isotropic() -> AntennaSpec {
        AntennaSpec {
            kind: "isotropic".into(),
            exponent: 0.0,
        }
    }

    pub fn to_pattern(&self) -> Result<AntennaPattern, BusError> {
        let pattern = match self.kind.as_str() {
            "isotropic" => AntennaPattern::Isotropic,
            "directional" => AntennaPattern::Directional {
                exponent: self.exponent,
            },
            other => return Err(invalid(format!("unknown antenna kind `{other}`"))),
        };
        if !pattern.is_valid() {
            return Err(invalid("antenna exponent must be finite and >= 0"));
        }
        Ok(pattern)
    }
}

impl From<AntennaPattern> for AntennaSpec {
    fn from(p: AntennaPattern) -> AntennaSpec {
        match p {
            AntennaPattern::Isotropic => AntennaSpec::isotropic(),
            AntennaPattern::Directional { exponent } => AntennaSpec {
                kind: "directional".into(),
                exponent,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxSpec {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub frequency_hz: f64,
    pub antenna: AntennaSpec,
    pub boresight: XyzSpec,
}

impl TxSpec {
    pub fn to_transmitter(&self) -> Result<Transmitter, BusError> {
        Transmitter::new(
            Vec3::new(self.x, self.y, self.z),
            self.frequency_hz,
            self.antenna.to_pattern()?,
            self.boresight.into(),
        )
        .map_err(|e| invalid(format!("tx: {e}")))
    }
}

impl From<&Transmitter> for TxSpec {
    fn from(tx: &Transmitter) -> TxSpec {
        TxSpec {
            x: tx.position.x,
            y: tx.position.y,
            z: tx.position.z,
            frequency_hz: tx.frequency_hz,
            antenna: tx.antenna.into(),
            boresight: tx.boresight.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub cell_size: f64,
    #[serde(default = "default_height")]
    pub height: f64,
}

fn default_height() -> f64 {
    crate::coverage::DEFAULT_HEIGHT
}

impl GridSpec {
    pub fn to_grid(&self) -> Result<CoverageGrid, BusError> {
        check_finite("grid.height", self.height)?;
        make_grid(
            (self.x0, self.y0, self.x1, self.y1),
            self.cell_size,
            self.height,
        )
        .map_err(|e| invalid(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub rays: u64,
    pub max_depth: u32,
    #[serde(default)]
    pub min_amplitude: f64,
    pub seed: u64,
}

impl TraceSpec {
    pub fn to_config(&self) -> Result<TraceConfig, BusError> {
        TraceConfig::new(self.rays, self.max_depth, self.min_amplitude, self.seed)
            .map_err(|e| invalid(format!("trace: {e}")))
    }
}

impl From<&TraceConfig> for TraceSpec {
    fn from(c: &TraceConfig) -> TraceSpec {
        TraceSpec {
            rays: c.rays,
            max_depth: c.max_depth,
            min_amplitude: c.min_amplitude,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRef {
    pub uri: String,
    /// Lower-case hex SHA-256 of the referenced scene document.
    pub sha256: String,
}

/// Where the scene comes from; exactly one of the two must be set.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline_b64: Option<String>,
    #[serde(default, rename = "ref", skip_serializing_if = "Option::is_none")]
    pub reference: Option<SceneRef>,
}

impl SceneSpec {
    pub fn inline(document: &str) -> SceneSpec {
        SceneSpec {
            inline_b64: Some(B64.encode(document.as_bytes())),
            reference: None,
        }
    }

    pub fn reference(uri: impl Into<String>, sha256: impl Into<String>) -> SceneSpec {
        SceneSpec {
            inline_b64: None,
            reference: Some(SceneRef {
                uri: uri.into(),
                sha256: sha256.into(),
            }),
        }
    }

    pub fn validate(&self) -> Result<(), BusError> {
        match (&self.inline_b64, &self.reference) {
            (Some(_), Some(_)) => Err(invalid("scene must be inline or a reference, not both")),
            (None, None) => Err(invalid("scene source missing")),
            (Some(b64), None) => {
                let padding = b64.bytes().rev().take_while(|&b| b == b'=').count();
                let decoded = (b64.len() / 4 * 3 + b64.len() % 4 * 3 / 4).saturating_sub(padding);
                if decoded > MAX_INLINE_SCENE_BYTES {
                    return Err(invalid(format!(
                        "inline scene exceeds {MAX_INLINE_SCENE_BYTES} bytes; use a reference"
                    )));
                }
                Ok(())
            }
            (None, Some(r)) => {
                if r.uri.is_empty() {
                    return Err(invalid("scene reference uri is empty"));
                }
                if r.sha256.len() != 64 || !r.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(invalid("scene reference sha256 must be 64 hex digits"));
                }
                Ok(())
            }
        }
    }

    /// Decoded inline document, if this is an inline source.
    pub fn inline_document(&self) -> Result<Option<String>, BusError> {
        let Some(b64) = &self.inline_b64 else {
            return Ok(None);
        };
        let bytes = B64
            .decode(b64)
            .map_err(|e| invalid(format!("inline scene is not base64: {e}")))?;
        if bytes.len() > MAX_INLINE_SCENE_BYTES {
            return Err(invalid(format!(
                "inline scene is {} bytes, above the {MAX_INLINE_SCENE_BYTES} byte cap",
                bytes.len()
            )));
        }
        String::from_utf8(bytes)
            .map(Some)
            .map_err(|_| invalid("inline scene is not UTF-8"))
    }
}

fn check_id(field: &str, id: &str, max: usize) -> Result<(), BusError> {
    if id.is_empty() {
        return Err(invalid(format!("{field} is empty")));
    }
    if id.chars().count() > max {
        return Err(invalid(format!("{field} longer than {max} characters")));
    }
    if !is_level_safe(id) || id.chars().any(char::is_control) {
        return Err(invalid(format!(
            "{field} `{id}` may not contain `/`, `+`, `#` or control characters"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageRequest {
    pub job_id: String,
    pub tx: TxSpec,
    pub grid: GridSpec,
    pub trace: TraceSpec,
    pub scene: SceneSpec,
}

impl CoverageRequest {
    pub fn validate(&self) -> Result<(), BusError> {
        check_id("job_id", &self.job_id, MAX_JOB_ID_LEN)?;
        self.tx.to_transmitter()?;
        self.grid.to_grid()?;
        self.trace.to_config()?;
        self.scene.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultStatus {
    Done,
    Failed,
    Superseded,
}

impl fmt::Display for ResultStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResultStatus::Done => "done",
            ResultStatus::Failed => "failed",
            ResultStatus::Superseded => "superseded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageResult {
    pub job_id: String,
    pub status: ResultStatus,
    pub duration_s: f64,
    /// Base64 of a `raycover-map v1` document; present iff `done`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_b64: Option<String>,
    /// Present iff `failed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CoverageResult {
    pub fn done(job_id: &str, map: &CoverageMap, duration_s: f64) -> CoverageResult {
        CoverageResult {
            job_id: job_id.to_string(),
            status: ResultStatus::Done,
            duration_s,
            map_b64: Some(B64.encode(encode_map(map))),
            error: None,
        }
    }

    pub fn failed(job_id: &str, error: impl Into<String>, duration_s: f64) -> CoverageResult {
        CoverageResult {
            job_id: job_id.to_string(),
            status: ResultStatus::Failed,
            duration_s,
            map_b64: None,
            error: Some(error.into()),
        }
    }

    pub fn superseded(job_id: &str, duration_s: f64) -> CoverageResult {
        CoverageResult {
            job_id: job_id.to_string(),
            status: ResultStatus::Superseded,
            duration_s,
            map_b64: None,
            error: None,
        }
    }

    pub fn validate(&self) -> Result<(), BusError> {
        check_id("job_id", &self.job_id, MAX_JOB_ID_LEN)?;
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(invalid("duration_s must be finite and >= 0"));
        }
        match (self.status, &self.map_b64, &self.error) {
            (ResultStatus::Done, Some(_), None) => Ok(()),
            (ResultStatus::Failed, None, Some(_)) => Ok(()),
            (ResultStatus::Superseded, None, None) => Ok(()),
            (status, _, _) => Err(invalid(format!(
                "status {status} requires {}",
                match status {
                    ResultStatus::Done => "map_b64 and no error",
                    ResultStatus::Failed => "error and no map_b64",
                    ResultStatus::Superseded => "neither map_b64 nor error",
                }
            ))),
        }
    }

    /// Decodes the attached map, if any.
    pub fn map(&self) -> Result<Option<CoverageMap>, BusError> {
        let Some(b64) = &self.map_b64 else {
            return Ok(None);
        };
        let bytes = B64
            .decode(b64)
            .map_err(|e| invalid(format!("map_b64 is not base64: {e}")))?;
        let text = String::from_utf8(bytes).map_err(|_| invalid("map document is not UTF-8"))?;
        decode_map(&text)
            .map(Some)
            .map_err(|e| invalid(format!("map document: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Temperature,
    Weather,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SensorValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorReading {
    pub sensor_id: String,
    pub kind: SensorKind,
    pub value: SensorValue,
    pub unit: String,
    /// UTC milliseconds.
    pub ts_ms: u64,
}

impl SensorReading {
    pub fn validate(&self) -> Result<(), BusError> {
        check_id("sensor_id", &self.sensor_id, usize::MAX)?;
        if self.ts_ms == 0 {
            return Err(invalid("ts_ms must be positive"));
        }
        if let SensorValue::Number(v) = self.value {
            check_finite("value", v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorCommand {
    pub actuator_id: String,
    pub command: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
    pub ts_ms: u64,
}

impl ActuatorCommand {
    pub fn validate(&self) -> Result<(), BusError> {
        check_id("actuator_id", &self.actuator_id, usize::MAX)?;
        if self.command.is_empty() {
            return Err(invalid("command is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    CoverageRequest(CoverageRequest),
    CoverageResult(CoverageResult),
    SensorReading(SensorReading),
    ActuatorCommand(ActuatorCommand),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::CoverageRequest(_) => MessageKind::CoverageRequest,
            Message::CoverageResult(_) => MessageKind::CoverageResult,
            Message::SensorReading(_) => MessageKind::SensorReading,
            Message::ActuatorCommand(_) => MessageKind::ActuatorCommand,
        }
    }

    pub fn validate(&self) -> Result<(), BusError> {
        match self {
            Message::CoverageRequest(m) => m.validate(),
            Message::CoverageResult(m) => m.validate(),
            Message::SensorReading(m) => m.validate(),
            Message::ActuatorCommand(m) => m.validate(),
        }
    }
}

macro_rules! message_from {
    ($($t:ident),*) => {$(
        impl From<$t> for Message {
            fn from(m: $t) -> Message {
                Message::$t(m)
            }
        }
    )*};
}
message_from!(
    CoverageRequest,
    CoverageResult,
    SensorReading,
    ActuatorCommand
);

pub fn encode_message(msg: &Message) -> Result<Vec<u8>, BusError> {
    msg.validate()?;
    let bytes = match msg {
        Message::CoverageRequest(m) => serde_json::to_vec(m),
        Message::CoverageResult(m) => serde_json::to_vec(m),
        Message::SensorReading(m) => serde_json::to_vec(m),
        Message::ActuatorCommand(m) => serde_json::to_vec(m),
    };
    bytes.map_err(|e| invalid(e.to_string()))
}

fn parse_error(e: serde_json::Error) -> BusError {
    BusError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Guesses the kind from the identifying keys of a JSON object.
fn detect_kind(value: &serde_json::Value) -> Option<MessageKind> {
    let obj = value.as_object()?;
    if obj.contains_key("sensor_id") {
        Some(MessageKind::SensorReading)
    } else if obj.contains_key("actuator_id") {
        Some(MessageKind::ActuatorCommand)
    } else if obj.contains_key("job_id") && obj.contains_key("status") {
        Some(MessageKind::CoverageResult)
    } else if obj.contains_key("job_id") && obj.contains_key("tx") {
        Some(MessageKind::CoverageRequest)
    } else {
        None
    }
}

fn typed<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, BusError> {
    serde_json::from_slice(bytes).map_err(parse_error)
}

pub fn decode_message(bytes: &[u8], expected: MessageKind) -> Result<Message, BusError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(parse_error)?;
    if !value.is_object() {
        return Err(BusError::Parse {
            line: 1,
            column: 1,
            message: "expected a JSON object".into(),
        });
    }
    if let Some(found) = detect_kind(&value) {
        if found != expected {
            return Err(BusError::Kind {
                expected,
                found: found.to_string(),
            });
        }
    }
    let msg = match expected {
        MessageKind::CoverageRequest => Message::CoverageRequest(typed(bytes)?),
        MessageKind::CoverageResult => Message::CoverageResult(typed(bytes)?),
        MessageKind::SensorReading => Message::SensorReading(typed(bytes)?),
        MessageKind::ActuatorCommand => Message::ActuatorCommand(typed(bytes)?),
    };
    msg.validate()?;
    Ok(msg)
}

macro_rules! typed_codec {
    ($($t:ident),*) => {$(
        impl $t {
            pub fn encode(&self) -> Result<Vec<u8>, BusError> {
                self.validate()?;
                serde_json::to_vec(self).map_err(|e| invalid(e.to_string()))
            }

            pub fn decode(bytes: &[u8]) -> Result<$t, BusError> {
                match decode_message(bytes, MessageKind::$t)? {
                    Message::$t(m) => Ok(m),
                    _ => unreachable!("decode_message returns the expected kind"),
                }
            }
        }
    )*};
}
typed_codec!(
    CoverageRequest,
    CoverageResult,
    SensorReading,
    ActuatorCommand
);
