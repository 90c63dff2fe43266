//! Radio coverage maps by Monte Carlo ray tracing, and the digital-twin
//! service that produces them on request over a publish/subscribe bus.
//!
//! The pipeline is [`scene::load_scene`] → [`scene::build_index`] →
//! [`propagation::RayTracer`] → [`coverage::accumulate_map`]; the
//! [`service`] module runs it in the background for [`bus`] requests.

pub mod bus;
pub mod config;
pub mod coverage;
pub mod geometry;
pub mod propagation;
pub mod scene;
pub mod service;
pub mod simulate;

pub use coverage::{CoverageGrid, CoverageMap};
pub use geometry::Vec3;
pub use propagation::{AntennaPattern, PlaneCrossing, TraceConfig, Transmitter};
pub use scene::{AccelIndex, Scene};
pub use simulate::simulate_coverage;
