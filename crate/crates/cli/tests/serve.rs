use std::collections::HashMap;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use raycover::bus::{
    self, topics, BrokerEndpoint, BusSession, CoverageResult, ResultStatus, RetryPolicy,
};
use serde_json::json;
use sha2::{Digest, Sha256};

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn start_broker() -> u16 {
    let port = free_port();
    let server = rumqttd::ServerSettings {
        name: "v4-cli".into(),
        listen: format!("127.0.0.1:{port}").parse().unwrap(),
        tls: None,
        next_connection_delay_ms: 1,
        connections: rumqttd::ConnectionSettings {
            connection_timeout_ms: 5000,
            max_payload_size: 16 * 1024 * 1024,
            max_inflight_count: 200,
            auth: None,
            external_auth: None,
            dynamic_filters: true,
        },
    };
    let config = rumqttd::Config {
        id: 0,
        router: rumqttd::RouterConfig {
            max_connections: 100,
            max_outgoing_packet_count: 200,
            max_segment_size: 16 * 1024 * 1024,
            max_segment_count: 10,
            ..Default::default()
        },
        v4: Some(HashMap::from([("1".to_string(), server)])),
        ..Default::default()
    };
    std::thread::spawn(move || {
        let _ = rumqttd::Broker::new(config).start();
    });
    for _ in 0..200 {
        if std::net::TcpStream::connect(("127.0.0.1", port)).is_ok() {
            return port;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    panic!("broker did not start on port {port}");
}

fn spawn_serve(dir: &Path, broker: serde_json::Value) -> Child {
    let config = json!({ "broker": broker, "service": { "audit_log": "audit.jsonl" } });
    let path = dir.join("serve.json");
    std::fs::write(&path, config.to_string()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_raycover"))
        .args(["serve", "--config", path.to_str().unwrap()])
        .env("RUST_LOG", "info")
        .stdout(Stdio::null())
        .stderr(std::fs::File::create(dir.join("serve.log")).unwrap())
        .spawn()
        .unwrap()
}

fn wait_exit(child: &mut Child, timeout: Duration) -> ExitStatus {
    let start = Instant::now();
    loop {
        if let Some(status) = child.try_wait().unwrap() {
            return status;
        }
        if start.elapsed() > timeout {
            let _ = child.kill();
            panic!("serve did not exit within {timeout:?}");
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

#[test]
fn serve_answers_requests_and_stops_on_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let scene = "v -50 30 0\nv 50 30 0\nv 50 30 20\nv -50 30 20\nf 1 2 3 4\n";
    std::fs::write(dir.path().join("wall.obj"), scene).unwrap();
    let digest: String = Sha256::digest(scene.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();

    let port = start_broker();
    let mut child = spawn_serve(
        dir.path(),
        json!({ "host": "127.0.0.1", "port": port, "client_id": "svc" }),
    );

    let client = bus::connect(
        &BrokerEndpoint::new("127.0.0.1", port),
        "operator",
        None,
        RetryPolicy::default(),
    )
    .unwrap();
    let (tx, rx) = mpsc::channel();
    client
        .subscribe(
            &topics::coverage_result("cli-1"),
            Box::new(move |_, payload| {
                let _ = tx.send(payload.to_vec());
            }),
        )
        .unwrap();

    let request = json!({
        "job_id": "cli-1",
        "tx": { "x": 0, "y": 0, "z": 10, "frequency_hz": 2.4e9,
                "antenna": { "kind": "isotropic", "exponent": 0 },
                "boresight": { "x": 0, "y": 1, "z": 0 } },
        "grid": { "x0": -20, "y0": -20, "x1": 20, "y1": 20, "cell_size": 2, "height": 1.5 },
        "trace": { "rays": 50000, "max_depth": 2, "min_amplitude": 0, "seed": 4 },
        "scene": { "ref": { "uri": "wall.obj", "sha256": digest } }
    })
    .to_string();

    // The server may not have subscribed yet; repeats of a job id are ignored.
    let deadline = Instant::now() + Duration::from_secs(30);
    let payload = loop {
        client
            .publish(topics::COVERAGE_REQUEST, request.as_bytes())
            .unwrap();
        if let Ok(p) = rx.recv_timeout(Duration::from_millis(300)) {
            break p;
        }
        assert!(Instant::now() < deadline, "no result");
    };
    let result = CoverageResult::decode(&payload).unwrap();
    assert_eq!(result.status, ResultStatus::Done, "{:?}", result.error);
    let map = result.map().unwrap().unwrap();
    assert_eq!((map.grid.ni, map.grid.nj), (20, 20));
    client.close();

    let status = Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    let status = wait_exit(&mut child, Duration::from_secs(15));
    let log = std::fs::read_to_string(dir.path().join("serve.log")).unwrap();
    assert_eq!(status.code(), Some(0), "{log}");
    assert!(log.contains("cli-1"), "{log}");
}

#[test]
fn unreachable_broker_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let mut child = spawn_serve(
        dir.path(),
        json!({ "host": "127.0.0.1", "port": port, "retries": 1, "retry_base_ms": 10 }),
    );
    let status = wait_exit(&mut child, Duration::from_secs(15));
    assert_eq!(status.code(), Some(4));
    let log = std::fs::read_to_string(dir.path().join("serve.log")).unwrap();
    assert!(log.contains("error[broker]:"), "{log}");
}

#[test]
fn serve_without_broker_section_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("serve.json");
    std::fs::write(&path, "{}").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_raycover"))
        .args(["serve", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broker"));
}
