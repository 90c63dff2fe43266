//! The JSON configuration document shared by `run` and `serve`.
//!
//! ```json
//! {
//!   "scene":   { "path": "site.obj", "materials": "site.materials" },
//!   "tx":      { "x": 0, "y": 0, "z": 10, "frequency_hz": 2.4e9,
//!                "antenna": { "kind": "isotropic" }, "boresight": { "x": 0, "y": 1, "z": 0 } },
//!   "grid":    { "x0": -50, "y0": -50, "x1": 50, "y1": 50, "cell_size": 1, "height": 1.5 },
//!   "trace":   { "rays": 1000000, "max_depth": 3, "min_amplitude": 0, "seed": 1 },
//!   "output":  { "map": "out.map", "heatmap": "out.png", "palette": "viridis", "db_range": [-140, -40] },
//!   "broker":  { "host": "localhost", "port": 1883, "client_id": "raycover", "retries": 3 },
//!   "service": { "audit_log": "audit.jsonl", "workers": 8 }
//! }
//! ```
//!
//! The `tx`, `grid` and `trace` sections use the bus request schema.
//! Relative paths resolve against the directory holding the document.
//! Sections a command does not use are ignored.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::bus::{BrokerEndpoint, Credentials, GridSpec, RetryPolicy, TraceSpec, TxSpec};
use crate::coverage::{CoverageGrid, Palette, DEFAULT_DB_RANGE};
use crate::propagation::{TraceConfig, Transmitter};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing field `{0}`")]
    Missing(String),
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: &str, message: impl ToString) -> ConfigError {
        ConfigError::Invalid {
            field: field.to_string(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub path: PathBuf,
    #[serde(default)]
    pub materials: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub map: PathBuf,
    #[serde(default)]
    pub heatmap: Option<PathBuf>,
    #[serde(default)]
    pub palette: Option<String>,
    #[serde(default)]
    pub db_range: Option<(f64, f64)>,
}

fn default_port() -> u16 {
    1883
}

fn default_client_id() -> String {
    "raycover".to_string()
}

fn default_retries() -> u32 {
    RetryPolicy::default().retries
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokerSection {
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_client_id")]
    pub client_id: String,
    #[serde(default)]
    pub username: Option<String>,
    #[serde(default)]
    pub password: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub retry_base_ms: Option<u64>,
}

impl BrokerSection {
    pub fn endpoint(&self) -> BrokerEndpoint {
        BrokerEndpoint::new(self.host.clone(), self.port)
    }

    pub fn credentials(&self) -> Option<Credentials> {
        self.username
            .as_ref()
            .map(|u| Credentials::new(u.clone(), self.password.clone().unwrap_or_default()))
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        let mut policy = RetryPolicy {
            retries: self.retries,
            ..RetryPolicy::default()
        };
        if let Some(ms) = self.retry_base_ms {
            policy.base_delay = Duration::from_millis(ms);
        }
        policy
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Base directory for relative scene reference URIs.
    #[serde(default)]
    pub scene_root: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Config {
    #[serde(default)]
    pub scene: Option<SceneSection>,
    #[serde(default)]
    pub tx: Option<TxSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub trace: Option<TraceSpec>,
    #[serde(default)]
    pub output: Option<OutputSection>,
    #[serde(default)]
    pub broker: Option<BrokerSection>,
    #[serde(default)]
    pub service: Option<ServiceSection>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Everything `run` needs, validated and with absolute paths.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub scene: PathBuf,
    pub materials: Option<PathBuf>,
    pub tx: Transmitter,
    pub grid: CoverageGrid,
    pub trace: TraceConfig,
    pub map_out: PathBuf,
    pub heatmap_out: Option<PathBuf>,
    pub palette: Palette,
    pub db_range: (f64, f64),
    pub workers: Option<usize>,
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, ConfigError> {
    section
        .as_ref()
        .ok_or_else(|| ConfigError::Missing(name.to_string()))
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Config, ConfigError> {
        let mut config: Config = serde_json::from_str(text).map_err(|e| {
            let message = e.to_string();
            // serde names missing fields as "missing field `x`".
            match message.split('`').nth(1) {
                Some(field) if message.starts_with("missing field") => {
                    ConfigError::Missing(field.to_string())
                }
                _ => ConfigError::Syntax {
                    line: e.line(),
                    column: e.column(),
                    message,
                },
            }
        })?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Config::parse(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn run_settings(&self) -> Result<RunSettings, ConfigError> {
        let scene = require(&self.scene, "scene")?;
        let tx = require(&self.tx, "tx")?
            .to_transmitter()
            .map_err(|e| ConfigError::invalid("tx", e))?;
        let grid = require(&self.grid, "grid")?
            .to_grid()
            .map_err(|e| ConfigError::invalid("grid", e))?;
        let trace = require(&self.trace, "trace")?
            .to_config()
            .map_err(|e| ConfigError::invalid("trace", e))?;
        let output = require(&self.output, "output")?;
        let palette = match &output.palette {
            None => Palette::default(),
            Some(name) => name
                .parse()
                .map_err(|e| ConfigError::invalid("output.palette", e))?,
        };
        let db_range = output.db_range.unwrap_or(DEFAULT_DB_RANGE);
        if !(db_range.0.is_finite() && db_range.1.is_finite() && db_range.0 < db_range.1) {
            return Err(ConfigError::invalid(
                "output.db_range",
                "expected [lo, hi] with lo < hi",
            ));
        }
        Ok(RunSettings {
            scene: self.resolve(&scene.path),
            materials: scene.materials.as_deref().map(|m| self.resolve(m)),
            tx,
            grid,
            trace,
            map_out: self.resolve(&output.map),
            heatmap_out: output.heatmap.as_deref().map(|h| self.resolve(h)),
            palette,
            db_range,
            workers: self.service.as_ref().and_then(|s| s.workers),
        })
    }

    pub fn broker(&self) -> Result<&BrokerSection, ConfigError> {
        let broker = require(&self.broker, "broker")?;
        if broker.host.is_empty() {
            return Err(ConfigError::invalid("broker.host", "empty"));
        }
        Ok(broker)
    }

    pub fn service_section(&self) -> ServiceSection {
        let mut s = self.service.clone().unwrap_or_default();
        s.audit_log = s.audit_log.map(|p| self.resolve(&p));
        s.scene_root = Some(self.resolve(s.scene_root.as_deref().unwrap_or(Path::new(""))));
        s
    }
}
