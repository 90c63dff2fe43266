//! Digital-twin message bus: wire vocabulary, topic rules, and sessions
//! against either an MQTT broker or the in-process loopback broker.

mod loopback;
mod message;
mod mqtt;
pub mod topics;

use std::sync::Arc;

use thiserror::Error;

pub use loopback::{LoopbackBroker, LoopbackSession};
pub use message::{
    decode_message, encode_message, ActuatorCommand, AntennaSpec, CoverageRequest, CoverageResult,
    GridSpec, Message, MessageKind, ResultStatus, SceneRef, SceneSpec, SensorKind, SensorReading,
    SensorValue, TraceSpec, TxSpec, XyzSpec, MAX_INLINE_SCENE_BYTES, MAX_JOB_ID_LEN,
};
pub use mqtt::{backoff_delay, connect, BrokerEndpoint, Credentials, MqttSession, RetryPolicy};

#[derive(Debug, Error)]
pub enum BusError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("expected a {expected} message, found {found}")]
    Kind {
        expected: MessageKind,
        found: String,
    },
    #[error("invalid message: {0}")]
    Validation(String),
    #[error("invalid topic `{topic}`: {reason}")]
    Topic { topic: String, reason: String },
    #[error("session is closed")]
    Closed,
    #[error("cannot reach broker {endpoint} after {attempts} attempts: {reason}")]
    Connection {
        endpoint: String,
        attempts: u32,
        reason: String,
    },
    #[error("broker rejected credentials: {0}")]
    Credentials(String),
    #[error("broker error: {0}")]
    Broker(String),
}

/// Callback for delivered messages: `(topic, payload)`.
///
/// Runs on the session's delivery thread and must return quickly.
pub type Handler = Box<dyn Fn(&str, &[u8]) + Send + Sync>;

/// A connection to a publish/subscribe broker.
pub trait BusSession: Send + Sync {
    /// At-least-once delivery to the broker. Fails on a closed session.
    fn publish(&self, topic: &str, payload: &[u8]) -> Result<(), BusError>;

    /// Registers `handler` for messages whose topic matches `filter`.
    /// Messages on one topic reach a handler in broker delivery order.
    fn subscribe(&self, filter: &str, handler: Handler) -> Result<(), BusError>;

    fn close(&self);

    fn is_open(&self) -> bool;
}

impl<T: BusSession + ?Sized> BusSession for Arc<T> {
    fn publish(&self, topic: &str, payload: &[u8]) -> Result<(), BusError> {
        (**self).publish(topic, payload)
    }

    fn subscribe(&self, filter: &str, handler: Handler) -> Result<(), BusError> {
        (**self).subscribe(filter, handler)
    }

    fn close(&self) {
        (**self).close()
    }

    fn is_open(&self) -> bool {
        (**self).is_open()
    }
}
