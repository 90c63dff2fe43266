//! In-process broker with MQTT topic semantics.
//!
//! Each session owns a delivery thread, so handlers run off the publisher's
//! thread and see messages in the order the broker accepted them.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::topics::{matches, validate_filter, validate_topic};
use super::{BusError, BusSession, Credentials, Handler};

type Delivery = (Arc<str>, Arc<[u8]>);
type HandlerList = Arc<RwLock<Vec<(String, Handler)>>>;

struct Peer {
    id: u64,
    client_id: String,
    filters: Vec<String>,
    tx: Sender<Delivery>,
}

struct BrokerState {
    peers: Vec<Peer>,
    next_id: u64,
}

struct BrokerShared {
    state: Mutex<BrokerState>,
    credentials: Option<Credentials>,
    in_flight: AtomicUsize,
}

#[derive(Clone)]
pub struct LoopbackBroker {
    shared: Arc<BrokerShared>,
}

impl Default for LoopbackBroker {
    fn default() -> Self {
        LoopbackBroker::new()
    }
}

impl LoopbackBroker {
    pub fn new() -> LoopbackBroker {
        LoopbackBroker::build(None)
    }

    /// A broker that only admits sessions presenting `credentials`.
    pub fn with_credentials(credentials: Credentials) -> LoopbackBroker {
        LoopbackBroker::build(Some(credentials))
    }

    fn build(credentials: Option<Credentials>) -> LoopbackBroker {
        LoopbackBroker {
            shared: Arc::new(BrokerShared {
                state: Mutex::new(BrokerState {
                    peers: Vec::new(),
                    next_id: 0,
                }),
                credentials,
                in_flight: AtomicUsize::new(0),
            }),
        }
    }

    pub fn connect(&self, client_id: &str) -> Result<LoopbackSession, BusError> {
        self.connect_with(client_id, None)
    }

    pub fn connect_with(
        &self,
        client_id: &str,
        credentials: Option<&Credentials>,
    ) -> Result<LoopbackSession, BusError> {
        if let Some(required) = &self.shared.credentials {
            if credentials != Some(required) {
                return Err(BusError::Credentials(format!(
                    "client `{client_id}` not authorized"
                )));
            }
        }
        let (tx, rx) = channel::<Delivery>();
        let handlers: HandlerList = Arc::default();
        let id = {
            let mut state = self.shared.state.lock().unwrap();
            let id = state.next_id;
            state.next_id += 1;
            state.peers.push(Peer {
                id,
                client_id: client_id.to_string(),
                filters: Vec::new(),
                tx,
            });
            id
        };
        let worker = {
            let handlers = Arc::clone(&handlers);
            let shared = Arc::clone(&self.shared);
            std::thread::Builder::new()
                .name(format!("bus-{client_id}"))
                .spawn(move || {
                    for (topic, payload) in rx {
                        for (filter, handler) in handlers.read().unwrap().iter() {
                            if matches(filter, &topic) {
                                handler(&topic, &payload);
                            }
                        }
                        shared.in_flight.fetch_sub(1, Ordering::SeqCst);
                    }
                })
                .map_err(|e| BusError::Broker(e.to_string()))?
        };
        Ok(LoopbackSession {
            broker: self.clone(),
            id,
            handlers,
            open: AtomicBool::new(true),
            worker: Mutex::new(Some(worker)),
        })
    }

    /// Number of sessions currently attached.
    pub fn session_count(&self) -> usize {
        self.shared.state.lock().unwrap().peers.len()
    }

    pub fn client_ids(&self) -> Vec<String> {
        let state = self.shared.state.lock().unwrap();
        state.peers.iter().map(|p| p.client_id.clone()).collect()
    }

    /// Waits until every accepted message has been handed to its handlers.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.shared.in_flight.load(Ordering::SeqCst) > 0 {
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(1));
        }
        true
    }

    fn route(&self, topic: &str, payload: &[u8]) {
        let state = self.shared.state.lock().unwrap();
        let topic: Arc<str> = Arc::from(topic);
        let payload: Arc<[u8]> = Arc::from(payload);
        for peer in &state.peers {
            if peer.filters.iter().any(|f| matches(f, &topic)) {
                self.shared.in_flight.fetch_add(1, Ordering::SeqCst);
                if peer
                    .tx
                    .send((Arc::clone(&topic), Arc::clone(&payload)))
                    .is_err()
                {
                    self.shared.in_flight.fetch_sub(1, Ordering::SeqCst);
                }
            }
        }
    }

    fn add_filter(&self, id: u64, filter: &str) {
        let mut state = self.shared.state.lock().unwrap();
        if let Some(peer) = state.peers.iter_mut().find(|p| p.id == id) {
            if !peer.filters.iter().any(|f| f == filter) {
                peer.filters.push(filter.to_string());
            }
        }
    }

    fn detach(&self, id: u64) {
        let mut state = self.shared.state.lock().unwrap();
        state.peers.retain(|p| p.id != id);
    }
}

pub struct LoopbackSession {
    broker: LoopbackBroker,
    id: u64,
    handlers: HandlerList,
    open: AtomicBool,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl LoopbackSession {
    pub fn broker(&self) -> &LoopbackBroker {
        &self.broker
    }
}

impl BusSession for LoopbackSession {
    fn publish(&self, topic: &str, payload: &[u8]) -> Result<(), BusError> {
        if !self.is_open() {
            return Err(BusError::Closed);
        }
        validate_topic(topic)?;
        self.broker.route(topic, payload);
        Ok(())
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
        self.broker.add_filter(self.id, filter);
        Ok(())
    }

    fn close(&self) {
        if self.open.swap(false, Ordering::SeqCst) {
            self.broker.detach(self.id);
            let worker = self.worker.lock().unwrap().take();
            if let Some(worker) = worker {
                // A handler closing its own session must not join itself.
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

impl Drop for LoopbackSession {
    fn drop(&mut self) {
        self.close();
    }
}
