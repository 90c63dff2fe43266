//! MQTT 3.1.1 sessions over TCP.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use rumqttc::{
    Client, ConnectReturnCode, Connection, ConnectionError, Event, MqttOptions, Packet, QoS,
};

use super::topics::{matches, validate_filter, validate_topic};
use super::{BusError, BusSession, Handler};

const CHANNEL_CAPACITY: usize = 1024;
const MAX_PACKET_BYTES: usize = 16 * 1024 * 1024;
const KEEP_ALIVE: Duration = Duration::from_secs(10);
const CONNACK_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrokerEndpoint {
    pub host: String,
    pub port: u16,
}

impl BrokerEndpoint {
    pub fn new(host: impl Into<String>, port: u16) -> BrokerEndpoint {
        BrokerEndpoint {
            host: host.into(),
            port,
        }
    }
}

impl fmt::Display for BrokerEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

impl Credentials {
    pub fn new(username: impl Into<String>, password: impl Into<String>) -> Credentials {
        Credentials {
            username: username.into(),
            password: password.into(),
        }
    }
}

impl fmt::Debug for Credentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Credentials")
            .field("username", &self.username)
            .field("password", &"***")
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(10),
        }
    }
}

/// Delay before retry `n` (0-based): `base * 2^n`, capped at `max_delay`.
pub fn backoff_delay(policy: &RetryPolicy, n: u32) -> Duration {
    let factor = 1u32.checked_shl(n).unwrap_or(u32::MAX);
    policy
        .base_delay
        .checked_mul(factor)
        .unwrap_or(policy.max_delay)
        .min(policy.max_delay)
}

enum Attempt {
    Connected(Client, Box<Connection>),
    Fatal(BusError),
    Retry(String),
}

fn attempt(opts: MqttOptions) -> Attempt {
    let (client, mut connection) = Client::new(opts, CHANNEL_CAPACITY);
    match connection.recv_timeout(CONNACK_TIMEOUT) {
        Ok(Ok(Event::Incoming(Packet::ConnAck(ack)))) => match ack.code {
            ConnectReturnCode::Success => Attempt::Connected(client, Box::new(connection)),
            ConnectReturnCode::BadUserNamePassword | ConnectReturnCode::NotAuthorized => {
                Attempt::Fatal(BusError::Credentials(format!("{:?}", ack.code)))
            }
            code => Attempt::Retry(format!("connection refused: {code:?}")),
        },
        Ok(Ok(other)) => Attempt::Retry(format!("unexpected first event {other:?}")),
        Ok(Err(ConnectionError::ConnectionRefused(
            code @ (ConnectReturnCode::BadUserNamePassword | ConnectReturnCode::NotAuthorized),
        ))) => Attempt::Fatal(BusError::Credentials(format!("{code:?}"))),
        Ok(Err(e)) => Attempt::Retry(e.to_string()),
        Err(_) => Attempt::Retry("timed out waiting for CONNACK".into()),
    }
}

/// Connects, retrying transport failures per `policy`.
///
/// Rejected credentials fail immediately.
pub fn connect(
    endpoint: &BrokerEndpoint,
    client_id: &str,
    credentials: Option<&Credentials>,
    policy: RetryPolicy,
) -> Result<MqttSession, BusError> {
    let mut opts = MqttOptions::new(client_id, endpoint.host.clone(), endpoint.port);
    opts.set_keep_alive(KEEP_ALIVE)
        .set_max_packet_size(MAX_PACKET_BYTES, MAX_PACKET_BYTES)
        .set_clean_session(true);
    if let Some(c) = credentials {
        opts.set_credentials(c.username.clone(), c.password.clone());
    }
    let mut last = String::new();
    for n in 0..=policy.retries {
        if n > 0 {
            let delay = backoff_delay(&policy, n - 1);
            log::warn!("broker {endpoint} unreachable ({last}); retry {n} in {delay:?}");
            std::thread::sleep(delay);
        }
        match attempt(opts.clone()) {
            Attempt::Connected(client, connection) => {
                log::info!("connected to broker {endpoint} as `{client_id}`");
                return Ok(MqttSession::start(client, *connection, policy));
            }
            Attempt::Fatal(e) => return Err(e),
            Attempt::Retry(reason) => last = reason,
        }
    }
    Err(BusError::Connection {
        endpoint: endpoint.to_string(),
        attempts: policy.retries + 1,
        reason: last,
    })
}

type HandlerList = Arc<RwLock<Vec<(String, Handler)>>>;

pub struct MqttSession {
    client: Client,
    handlers: HandlerList,
    open: Arc<AtomicBool>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl MqttSession {
    fn start(client: Client, mut connection: Connection, policy: RetryPolicy) -> MqttSession {
        let handlers: HandlerList = Arc::default();
        let open = Arc::new(AtomicBool::new(true));
        let worker = {
            let handlers = Arc::clone(&handlers);
            let open = Arc::clone(&open);
            let client = client.clone();
            std::thread::spawn(move || {
                let mut failures = 0u32;
                for event in connection.iter() {
                    match event {
                        Ok(Event::Incoming(Packet::Publish(p))) => {
                            failures = 0;
                            for (filter, handler) in handlers.read().unwrap().iter() {
                                if matches(filter, &p.topic) {
                                    handler(&p.topic, &p.payload);
                                }
                            }
                        }
                        Ok(Event::Incoming(Packet::ConnAck(_))) => {
                            // Clean sessions lose their subscriptions on reconnect.
                            for (filter, _) in handlers.read().unwrap().iter() {
                                let _ = client.try_subscribe(filter.clone(), QoS::AtLeastOnce);
                            }
                        }
                        Ok(_) => failures = 0,
                        Err(e) => {
                            if !open.load(Ordering::SeqCst) {
                                break;
                            }
                            let delay = backoff_delay(&policy, failures);
                            log::warn!("broker connection lost ({e}); reconnecting in {delay:?}");
                            failures = failures.saturating_add(1);
                            std::thread::sleep(delay);
                        }
                    }
                }
            })
        };
        MqttSession {
            client,
            handlers,
            open,
            worker: Mutex::new(Some(worker)),
        }
    }
}

impl BusSession for MqttSession {
    fn publish(&self, topic: &str, payload: &[u8]) -> Result<(), BusError> {
        if !self.is_open() {
            return Err(BusError::Closed);
        }
        validate_topic(topic)?;
        self.client
            .publish(topic, QoS::AtLeastOnce, false, payload.to_vec())
            .map_err(|e| BusError::Broker(e.to_string()))
    }

    fn subscribe(&self, filter: &str, handler: Handler) -> Result<(), BusError> {
        if !self.is_open() {
            return Err(BusError::Closed);
        }
        validate_filter(filter)?;
        self.handlers
            .write()
            .unwrap()
            .push((filter.to_string(), handler));
        self.client
            .subscribe(filter, QoS::AtLeastOnce)
            .map_err(|e| BusError::Broker(e.to_string()))
    }

    fn close(&self) {
        if self.open.swap(false, Ordering::SeqCst) {
            let _ = self.client.disconnect();
            let worker = self.worker.lock().unwrap().take();
            if let Some(worker) = worker {
                if worker.thread().id() != std::thread::current().id() {
                    let _ = worker.join();
                }
            }
        }
    }

    fn is_open(&self) -> bool {
        self.open.load(Ordering::SeqCst)
    }
}

impl Drop for MqttSession {
    fn drop(&mut self) {
        self.close();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;
    use std::time::Instant;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy::default();
        assert_eq!(backoff_delay(&p, 0), Duration::from_millis(500));
        assert_eq!(backoff_delay(&p, 1), Duration::from_secs(1));
        assert_eq!(backoff_delay(&p, 2), Duration::from_secs(2));
        assert_eq!(backoff_delay(&p, 5), Duration::from_secs(10));
        assert_eq!(backoff_delay(&p, 40), Duration::from_secs(10));
    }

    #[test]
    fn unreachable_broker_reports_attempts() {
        // Bind then drop to find a port with nothing listening.
        let port = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let policy = RetryPolicy {
            retries: 2,
            base_delay: Duration::from_millis(10),
            max_delay: Duration::from_millis(20),
        };
        let start = Instant::now();
        let err = connect(&BrokerEndpoint::new("127.0.0.1", port), "t", None, policy)
            .err()
            .unwrap();
        match err {
            BusError::Connection { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(start.elapsed() >= Duration::from_millis(30));
    }

    #[test]
    fn credentials_are_redacted() {
        let c = Credentials::new("u", "secret");
        assert!(!format!("{c:?}").contains("secret"));
    }
}
