//! Bus-connected coverage service.
//!
//! One runner thread executes coverage jobs with latest-wins supersession:
//! at most one job runs and at most one waits. A newer request replaces the
//! waiting job and asks the running one to stop at its next batch boundary.
//! Sensor readings feed a last-value store read through snapshots.

mod state;

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::thread::JoinHandle;
use std::time::{Instant, SystemTime};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bus::topics::{self, COVERAGE_REQUEST};
use crate::bus::{
    ActuatorCommand, BusError, BusSession, CoverageRequest, CoverageResult, ResultStatus,
    SceneSpec, SensorReading,
};
use crate::propagation::{Execution, PropagationError};
use crate::scene::{build_index, load_scene};
use crate::simulate::simulate_coverage;

pub use state::{TwinSnapshot, TwinState};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("service is shutting down")]
    Stopped,
    #[error("audit log: {0}")]
    Audit(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Superseded,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            JobState::Done | JobState::Failed | JobState::Superseded
        )
    }

    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Superseded) | (Running, Done | Failed | Superseded)
        )
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Done => "done",
            JobState::Failed => "failed",
            JobState::Superseded => "superseded",
        })
    }
}

impl From<ResultStatus> for JobState {
    fn from(s: ResultStatus) -> JobState {
        match s {
            ResultStatus::Done => JobState::Done,
            ResultStatus::Failed => JobState::Failed,
            ResultStatus::Superseded => JobState::Superseded,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    pub job_id: String,
    /// `None` when the payload did not decode.
    pub request: Option<CoverageRequest>,
    pub state: JobState,
    pub submitted: SystemTime,
    pub started: Option<SystemTime>,
    pub finished: Option<SystemTime>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Tracing threads; `None` uses every core.
    pub workers: Option<usize>,
    /// Rays between cancellation checks; zero picks the tracer default.
    pub batch_rays: u64,
    /// Append-only JSON-lines log of actuator commands.
    pub audit_log: Option<PathBuf>,
    /// Base directory for relative scene reference URIs.
    pub scene_root: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            workers: None,
            batch_rays: 0,
            audit_log: None,
            scene_root: PathBuf::from("."),
        }
    }
}

struct Pending {
    job: Job,
    scene: String,
}

struct Running {
    job_id: String,
    cancel: Arc<AtomicBool>,
}

#[derive(Default)]
struct Jobs {
    queued: Option<Pending>,
    running: Option<Running>,
    history: HashMap<String, Job>,
    stopping: bool,
}

struct Audit {
    entries: Vec<ActuatorCommand>,
    file: Option<File>,
}

struct Inner {
    bus: Arc<dyn BusSession>,
    config: ServiceConfig,
    jobs: Mutex<Jobs>,
    wake: Condvar,
    twin: TwinState,
    audit: Mutex<Audit>,
    running_now: AtomicUsize,
    peak_running: AtomicUsize,
}

/// Handle to a running service. Dropping it shuts the service down.
pub struct Service {
    inner: Arc<Inner>,
    runner: Mutex<Option<JoinHandle<()>>>,
}

fn resolve_uri(root: &Path, uri: &str) -> PathBuf {
    let path = Path::new(uri.strip_prefix("file://").unwrap_or(uri));
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        root.join(path)
    }
}

/// Loads the scene document a request points at.
pub fn resolve_scene(spec: &SceneSpec, root: &Path) -> Result<String, String> {
    if let Some(doc) = spec.inline_document().map_err(|e| e.to_string())? {
        return Ok(doc);
    }
    let Some(reference) = &spec.reference else {
        return Err("scene source missing".into());
    };
    let path = resolve_uri(root, &reference.uri);
    let bytes =
        std::fs::read(&path).map_err(|e| format!("cannot read scene {}: {e}", path.display()))?;
    let digest: String = Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    if !digest.eq_ignore_ascii_case(&reference.sha256) {
        return Err(format!(
            "scene sha256 mismatch for {}: expected {}, found {digest}",
            reference.uri, reference.sha256
        ));
    }
    String::from_utf8(bytes).map_err(|_| "scene document is not UTF-8".into())
}

impl Inner {
    fn publish_result(&self, result: &CoverageResult) {
        let topic = topics::coverage_result(&result.job_id);
        match result.encode() {
            Ok(bytes) => {
                if let Err(e) = self.bus.publish(&topic, &bytes) {
                    log::error!("cannot publish result for job {}: {e}", result.job_id);
                }
            }
            Err(e) => log::error!("cannot encode result for job {}: {e}", result.job_id),
        }
    }

    fn transition(&self, jobs: &mut Jobs, job_id: &str, next: JobState) {
        let Some(job) = jobs.history.get_mut(job_id) else {
            return;
        };
        debug_assert!(job.state.can_become(next), "{} -> {next}", job.state);
        log::info!("job {job_id}: {} -> {next}", job.state);
        job.state = next;
        let now = SystemTime::now();
        match next {
            JobState::Running => job.started = Some(now),
            s if s.is_terminal() => job.finished = Some(now),
            _ => {}
        }
    }

    /// Records a job that ends without ever being queued and publishes its result.
    fn reject(&self, request: Option<CoverageRequest>, result: CoverageResult) -> JobState {
        let job_id = result.job_id.clone();
        let state = JobState::from(result.status);
        {
            let mut jobs = self.jobs.lock().unwrap();
            if jobs.history.contains_key(&job_id) {
                return jobs.history[&job_id].state;
            }
            let now = SystemTime::now();
            log::info!(
                "job {job_id}: {state}{}",
                result
                    .error
                    .as_deref()
                    .map(|e| format!(" ({e})"))
                    .unwrap_or_default()
            );
            jobs.history.insert(
                job_id.clone(),
                Job {
                    job_id: job_id.clone(),
                    request,
                    state,
                    submitted: now,
                    started: None,
                    finished: Some(now),
                },
            );
        }
        self.publish_result(&result);
        state
    }

    fn submit(&self, request: CoverageRequest) -> JobState {
        let job_id = request.job_id.clone();
        if let Some(existing) = self.jobs.lock().unwrap().history.get(&job_id) {
            // At-least-once delivery can repeat a request.
            log::debug!("job {job_id}: duplicate request ignored");
            return existing.state;
        }
        let resolved = request
            .validate()
            .map_err(|e| e.to_string())
            .and_then(|_| resolve_scene(&request.scene, &self.config.scene_root));
        let scene = match resolved {
            Ok(scene) => scene,
            Err(message) => {
                let result = CoverageResult::failed(&job_id, message, 0.0);
                return self.reject(Some(request), result);
            }
        };

        let mut jobs = self.jobs.lock().unwrap();
        if let Some(existing) = jobs.history.get(&job_id) {
            return existing.state;
        }
        if jobs.stopping {
            drop(jobs);
            return self.reject(Some(request), CoverageResult::superseded(&job_id, 0.0));
        }
        let job = Job {
            job_id: job_id.clone(),
            request: Some(request),
            state: JobState::Queued,
            submitted: SystemTime::now(),
            started: None,
            finished: None,
        };
        log::info!("job {job_id}: queued");
        jobs.history.insert(job_id.clone(), job.clone());
        let mut superseded = None;
        if let Some(old) = jobs.queued.take() {
            self.transition(&mut jobs, &old.job.job_id, JobState::Superseded);
            superseded = Some(old.job.job_id);
        }
        if let Some(running) = &jobs.running {
            running.cancel.store(true, Ordering::SeqCst);
        }
        jobs.queued = Some(Pending { job, scene });
        self.wake.notify_all();
        drop(jobs);
        if let Some(old) = superseded {
            self.publish_result(&CoverageResult::superseded(&old, 0.0));
        }
        JobState::Queued
    }

    fn run(&self, pending: &Pending, cancel: &AtomicBool) -> CoverageResult {
        let started = Instant::now();
        let job_id = &pending.job.job_id;
        let req = pending
            .job
            .request
            .as_ref()
            .expect("queued jobs carry their request");
        let outcome = (|| -> Result<_, String> {
            let tx = req.tx.to_transmitter().map_err(|e| e.to_string())?;
            let grid = req.grid.to_grid().map_err(|e| e.to_string())?;
            let cfg = req.trace.to_config().map_err(|e| e.to_string())?;
            let scene = load_scene(&pending.scene, None).map_err(|e| format!("scene: {e}"))?;
            let index = build_index(&scene);
            let exec = Execution {
                workers: self.config.workers,
                cancel: Some(cancel),
                batch_rays: self.config.batch_rays,
            };
            match simulate_coverage(&scene, &index, &tx, &grid, &cfg, &exec) {
                Ok(map) => Ok(Some((map, tx))),
                Err(PropagationError::Cancelled) => Ok(None),
                Err(e) => Err(e.to_string()),
            }
        })();
        let duration = started.elapsed().as_secs_f64();
        match outcome {
            Ok(Some((map, tx))) => {
                let result = CoverageResult::done(job_id, &map, duration);
                self.twin.set_map(map, tx);
                result
            }
            Ok(None) => CoverageResult::superseded(job_id, duration),
            Err(message) => CoverageResult::failed(job_id, message, duration),
        }
    }

    fn runner_loop(&self) {
        loop {
            let (pending, cancel) = {
                let mut jobs = self.jobs.lock().unwrap();
                let pending = loop {
                    if let Some(p) = jobs.queued.take() {
                        break p;
                    }
                    if jobs.stopping {
                        return;
                    }
                    jobs = self.wake.wait(jobs).unwrap();
                };
                let cancel = Arc::new(AtomicBool::new(false));
                let n = self.running_now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak_running.fetch_max(n, Ordering::SeqCst);
                self.transition(&mut jobs, &pending.job.job_id, JobState::Running);
                jobs.running = Some(Running {
                    job_id: pending.job.job_id.clone(),
                    cancel: Arc::clone(&cancel),
                });
                (pending, cancel)
            };
            let job_id = pending.job.job_id.clone();
            let result = self.run(&pending, &cancel);
            {
                let mut jobs = self.jobs.lock().unwrap();
                self.transition(&mut jobs, &job_id, result.status.into());
                jobs.running = None;
                self.running_now.fetch_sub(1, Ordering::SeqCst);
            }
            self.publish_result(&result);
        }
    }
}

impl Service {
    /// Starts the runner without subscribing to the bus.
    pub fn new(bus: Arc<dyn BusSession>, config: ServiceConfig) -> Result<Service, ServiceError> {
        let file = match &config.audit_log {
            None => None,
            Some(path) => Some(OpenOptions::new().create(true).append(true).open(path)?),
        };
        let inner = Arc::new(Inner {
            bus,
            config,
            jobs: Mutex::new(Jobs::default()),
            wake: Condvar::new(),
            twin: TwinState::default(),
            audit: Mutex::new(Audit {
                entries: Vec::new(),
                file,
            }),
            running_now: AtomicUsize::new(0),
            peak_running: AtomicUsize::new(0),
        });
        let runner = {
            let inner = Arc::clone(&inner);
            std::thread::Builder::new()
                .name("coverage-runner".into())
                .spawn(move || inner.runner_loop())
                .map_err(ServiceError::Audit)?
        };
        Ok(Service {
            inner,
            runner: Mutex::new(Some(runner)),
        })
    }

    /// Starts the runner and subscribes to requests and sensor readings.
    pub fn start(bus: Arc<dyn BusSession>, config: ServiceConfig) -> Result<Service, ServiceError> {
        let service = Service::new(Arc::clone(&bus), config)?;
        let weak: Weak<Inner> = Arc::downgrade(&service.inner);
        bus.subscribe(
            COVERAGE_REQUEST,
            Box::new(move |_, payload| {
                if let Some(inner) = weak.upgrade() {
                    on_request(&inner, payload);
                }
            }),
        )?;
        let weak: Weak<Inner> = Arc::downgrade(&service.inner);
        bus.subscribe(
            topics::ALL_SENSORS,
            Box::new(move |topic, payload| {
                let Some(inner) = weak.upgrade() else { return };
                match SensorReading::decode(payload) {
                    Ok(reading) => {
                        inner.twin.ingest(reading);
                    }
                    Err(e) => log::warn!("dropping reading on {topic}: {e}"),
                }
            }),
        )?;
        Ok(service)
    }

    /// Queues `request` under latest-wins and returns the job's state.
    ///
    /// Invalid requests and unresolvable scenes fail immediately with a
    /// published result; a repeated job id returns the existing state.
    pub fn submit_request(&self, request: CoverageRequest) -> JobState {
        self.inner.submit(request)
    }

    pub fn job(&self, job_id: &str) -> Option<Job> {
        self.inner.jobs.lock().unwrap().history.get(job_id).cloned()
    }

    pub fn job_state(&self, job_id: &str) -> Option<JobState> {
        self.job(job_id).map(|j| j.state)
    }

    /// Id of the running job, if any.
    pub fn running_job(&self) -> Option<String> {
        let jobs = self.inner.jobs.lock().unwrap();
        jobs.running.as_ref().map(|r| r.job_id.clone())
    }

    /// Highest number of jobs ever running at the same time.
    pub fn peak_running(&self) -> usize {
        self.inner.peak_running.load(Ordering::SeqCst)
    }

    /// Blocks until no job is queued or running, or `timeout` passes.
    pub fn wait_idle(&self, timeout: std::time::Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            {
                let jobs = self.inner.jobs.lock().unwrap();
                if jobs.queued.is_none() && jobs.running.is_none() {
                    return true;
                }
            }
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(std::time::Duration::from_millis(2));
        }
    }

    pub fn ingest_sensor(&self, reading: SensorReading) -> bool {
        self.inner.twin.ingest(reading)
    }

    pub fn query_state(&self) -> TwinSnapshot {
        self.inner.twin.snapshot()
    }

    /// Publishes `cmd` on its actuator topic, then records it in the audit log.
    pub fn send_actuator(&self, cmd: &ActuatorCommand) -> Result<(), ServiceError> {
        let payload = cmd.encode()?;
        let mut audit = self.inner.audit.lock().unwrap();
        self.inner
            .bus
            .publish(&topics::actuator(&cmd.actuator_id), &payload)?;
        audit.entries.push(cmd.clone());
        if let Some(file) = &mut audit.file {
            file.write_all(&payload)?;
            file.write_all(b"\n")?;
            file.flush()?;
        }
        log::info!("actuator {}: {}", cmd.actuator_id, cmd.command);
        Ok(())
    }

    pub fn audit_entries(&self) -> Vec<ActuatorCommand> {
        self.inner.audit.lock().unwrap().entries.clone()
    }

    /// Supersedes queued and running work, then stops the runner.
    pub fn shutdown(&self) {
        let queued = {
            let mut jobs = self.inner.jobs.lock().unwrap();
            jobs.stopping = true;
            if let Some(running) = &jobs.running {
                running.cancel.store(true, Ordering::SeqCst);
            }
            let queued = jobs.queued.take();
            if let Some(q) = &queued {
                self.inner
                    .transition(&mut jobs, &q.job.job_id, JobState::Superseded);
            }
            self.inner.wake.notify_all();
            queued
        };
        if let Some(q) = queued {
            self.inner
                .publish_result(&CoverageResult::superseded(&q.job.job_id, 0.0));
        }
        if let Some(runner) = self.runner.lock().unwrap().take() {
            let _ = runner.join();
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn on_request(inner: &Inner, payload: &[u8]) {
    match CoverageRequest::decode(payload) {
        Ok(request) => {
            inner.submit(request);
        }
        Err(e) => {
            // Answer on the result topic when the job id is recoverable.
            let job_id = serde_json::from_slice::<serde_json::Value>(payload)
                .ok()
                .and_then(|v| v.get("job_id")?.as_str().map(str::to_string))
                .filter(|id| id.len() <= crate::bus::MAX_JOB_ID_LEN && topics::is_level_safe(id));
            log::warn!("rejecting coverage request: {e}");
            if let Some(job_id) = job_id {
                inner.reject(None, CoverageResult::failed(&job_id, e.to_string(), 0.0));
            }
        }
    }
}

impl fmt::Debug for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Service")
            .field("running", &self.running_job())
            .finish()
    }
}
