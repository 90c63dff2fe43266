use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};

use raycover::bus::{self, BusError, BusSession};
use raycover::config::{Config, ConfigError};
use raycover::coverage::{decode_map, encode_map, render_heatmap, Palette};
use raycover::propagation::Execution;
use raycover::scene::{build_index, load_scene_files};
use raycover::service::{Service, ServiceConfig};
use raycover::simulate_coverage;

#[derive(Parser)]
#[command(name = "raycover", version, about = "Ray-traced radio coverage maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a coverage map from a config document.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Tracing threads; defaults to the config or every core.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render a stored map to PNG (or PPM for `.ppm` outputs).
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "viridis")]
        palette: String,
        /// Display range in dB as `lo,hi`.
        #[arg(long, allow_hyphen_values = true)]
        range: Option<String>,
    },
    /// Serve coverage requests from the configured MQTT broker.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

/// An error exit: code plus a one-line `error[kind]: message` report.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl ToString) -> Failure {
        // Keep the report on one line.
        let message = message.to_string().replace(['\n', '\r'], " ");
        Failure {
            code,
            kind,
            message,
        }
    }

    fn config(e: ConfigError) -> Failure {
        Failure::new(2, "config", e)
    }

    fn internal(e: impl ToString) -> Failure {
        Failure::new(1, "internal", e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, workers } => cmd_run(&config, workers),
        Command::Render {
            map,
            out,
            palette,
            range,
        } => cmd_render(&map, &out, &palette, range.as_deref()),
        Command::Serve { config } => cmd_serve(&config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_run(config_path: &Path, workers: Option<usize>) -> Result<(), Failure> {
    let config = Config::load(config_path).map_err(Failure::config)?;
    let run = config.run_settings().map_err(Failure::config)?;
    let started = Instant::now();
    let scene = load_scene_files(&run.scene, run.materials.as_deref())
        .map_err(|e| Failure::new(3, "scene", e))?;
    for w in &scene.warnings {
        log::warn!("{}: {w}", run.scene.display());
    }
    let index = build_index(&scene);
    let exec = Execution {
        workers: workers.or(run.workers),
        ..Execution::default()
    };
    let map = simulate_coverage(&scene, &index, &run.tx, &run.grid, &run.trace, &exec)
        .map_err(Failure::internal)?;
    write_file(&run.map_out, encode_map(&map).as_bytes())?;
    if let Some(path) = &run.heatmap_out {
        let heatmap = render_heatmap(&map, run.palette, run.db_range).map_err(Failure::internal)?;
        ensure_parent(path)?;
        heatmap
            .save(path)
            .map_err(|e| Failure::internal(format!("{}: {e}", path.display())))?;
    }

    let mut hits: Vec<u32> = map.hits.iter().copied().filter(|&h| h > 0).collect();
    hits.sort_unstable();
    let (lo, med, hi) = match hits.len() {
        0 => (0, 0, 0),
        n => (hits[0], hits[n / 2], hits[n - 1]),
    };
    println!(
        "traced {} rays over {} triangles in {:.3} s (total {:.3} s)",
        run.trace.rays,
        scene.triangles.len(),
        map.meta.duration_s,
        started.elapsed().as_secs_f64()
    );
    println!(
        "cells with hits: {}/{}; hits per cell min {lo} median {med} max {hi}; crossings {}",
        hits.len(),
        map.grid.cells(),
        map.total_hits()
    );
    println!("map written to {}", run.map_out.display());
    Ok(())
}

fn parse_range(text: &str) -> Result<(f64, f64), Failure> {
    let bad = || {
        Failure::new(
            2,
            "range",
            format!("expected `lo,hi` with lo < hi, got `{text}`"),
        )
    };
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn cmd_render(map: &Path, out: &Path, palette: &str, range: Option<&str>) -> Result<(), Failure> {
    let db_range = match range {
        Some(r) => parse_range(r)?,
        None => raycover::coverage::DEFAULT_DB_RANGE,
    };
    let palette: Palette = palette.parse().map_err(|e| Failure::new(2, "palette", e))?;
    let text = std::fs::read_to_string(map)
        .map_err(|e| Failure::new(3, "map", format!("{}: {e}", map.display())))?;
    let map_doc =
        decode_map(&text).map_err(|e| Failure::new(3, "map", format!("{}: {e}", map.display())))?;
    let heatmap =
        render_heatmap(&map_doc, palette, db_range).map_err(|e| Failure::new(2, "range", e))?;
    ensure_parent(out)?;
    heatmap
        .save(out)
        .map_err(|e| Failure::internal(format!("{}: {e}", out.display())))?;
    println!(
        "{}x{} heatmap written to {}",
        heatmap.width,
        heatmap.height,
        out.display()
    );
    Ok(())
}

fn cmd_serve(config_path: &Path) -> Result<(), Failure> {
    let config = Config::load(config_path).map_err(Failure::config)?;
    let broker = config.broker().map_err(Failure::config)?;
    let section = config.service_section();

    let (stop_tx, stop_rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = stop_tx.send(());
    })
    .map_err(Failure::internal)?;

    let session = bus::connect(
        &broker.endpoint(),
        &broker.client_id,
        broker.credentials().as_ref(),
        broker.retry_policy(),
    )
    .map_err(|e| match e {
        BusError::Credentials(_) => Failure::new(4, "credentials", e),
        other => Failure::new(4, "broker", other),
    })?;
    let session: Arc<dyn BusSession> = Arc::new(session);
    let service = Service::start(
        Arc::clone(&session),
        ServiceConfig {
            workers: section.workers,
            audit_log: section.audit_log,
            scene_root: section.scene_root.unwrap_or_else(|| PathBuf::from(".")),
            ..ServiceConfig::default()
        },
    )
    .map_err(Failure::internal)?;
    log::info!(
        "serving coverage requests on {} via {}",
        bus::topics::COVERAGE_REQUEST,
        broker.endpoint()
    );
    let _ = stop_rx.recv();
    log::info!("shutting down");
    service.shutdown();
    session.close();
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir)
            .map_err(|e| Failure::internal(format!("{}: {e}", dir.display()))),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    ensure_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}
