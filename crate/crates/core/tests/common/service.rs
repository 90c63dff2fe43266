use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use raycover::bus::topics::{self, ALL_RESULTS, COVERAGE_REQUEST};
use raycover::bus::{
    AntennaSpec, BusSession, CoverageRequest, CoverageResult, GridSpec, LoopbackBroker,
    LoopbackSession, SceneSpec, TraceSpec, TxSpec, XyzSpec,
};
use raycover::scene::write_obj;
use raycover::service::{Service, ServiceConfig};

pub struct Harness {
    pub broker: LoopbackBroker,
    pub client: LoopbackSession,
    pub service: Service,
    pub results: Arc<Mutex<Vec<CoverageResult>>>,
}

impl Harness {
    pub fn new(config: ServiceConfig) -> Harness {
        let broker = LoopbackBroker::new();
        let session: Arc<dyn BusSession> = Arc::new(broker.connect("service").unwrap());
        let service = Service::start(session, config).unwrap();
        let client = broker.connect("client").unwrap();
        let results = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&results);
        client
            .subscribe(
                ALL_RESULTS,
                Box::new(move |topic, payload| {
                    let r = CoverageResult::decode(payload).unwrap();
                    assert_eq!(topic, topics::coverage_result(&r.job_id));
                    sink.lock().unwrap().push(r);
                }),
            )
            .unwrap();
        Harness {
            broker,
            client,
            service,
            results,
        }
    }

    /// Publishes `req` without client-side validation.
    pub fn send(&self, req: &CoverageRequest) {
        self.client
            .publish(COVERAGE_REQUEST, &serde_json::to_vec(req).unwrap())
            .unwrap();
    }

    pub fn wait_for(&self, job_id: &str, timeout: Duration) -> CoverageResult {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(r) = self
                .results
                .lock()
                .unwrap()
                .iter()
                .find(|r| r.job_id == job_id)
            {
                return r.clone();
            }
            assert!(Instant::now() < deadline, "no result for {job_id}");
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    pub fn settle(&self) {
        assert!(self.broker.wait_idle(Duration::from_secs(10)));
        assert!(self.service.wait_idle(Duration::from_secs(60)));
        assert!(self.broker.wait_idle(Duration::from_secs(10)));
    }
}

pub fn wall_scene_doc() -> String {
    write_obj(&super::wall_y(30.0, 40.0, 0.0, 20.0, 0.8))
}

pub fn request(job_id: &str, rays: u64) -> CoverageRequest {
    CoverageRequest {
        job_id: job_id.into(),
        tx: TxSpec {
            x: 0.0,
            y: 0.0,
            z: 10.0,
            frequency_hz: 2.4e9,
            antenna: AntennaSpec::isotropic(),
            boresight: XyzSpec {
                x: 0.0,
                y: 1.0,
                z: 0.0,
            },
        },
        grid: GridSpec {
            x0: -20.0,
            y0: -20.0,
            x1: 20.0,
            y1: 20.0,
            cell_size: 2.0,
            height: 1.5,
        },
        trace: TraceSpec {
            rays,
            max_depth: 2,
            min_amplitude: 0.0,
            seed: 11,
        },
        scene: SceneSpec::inline(&wall_scene_doc()),
    }
}

pub fn small_batches() -> ServiceConfig {
    ServiceConfig {
        batch_rays: 4096,
        ..ServiceConfig::default()
    }
}
