//! Ray launching and specular propagation through a scene.
//!
//! Each ray carries the free-space amplitude at the 1 m reference distance,
//! `sqrt(g) * lambda / (4 pi)`, scaled by the product of reflection
//! coefficients met so far. Whenever a segment crosses the horizontal
//! measurement plane before hitting geometry, a [`PlaneCrossing`] is emitted
//! with `|h|^2 = g * (lambda / (4 pi d))^2 * prod(gamma^2)` for the unfolded
//! path length `d`.

mod antenna;
mod sampling;

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::scene::{AccelIndex, Ray, Scene};

pub use antenna::{antenna_gain, AntennaPattern};
pub use sampling::{ray_stream, SphereStrata};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Crossings flatter than this (|cos| to the plane normal) are dropped.
pub const MIN_CROSSING_COS: f64 = 0.05;

/// Upper bound on rays traced between cancellation checks.
pub const MAX_BATCH_RAYS: u64 = 65_536;

/// Transmitters further than this outside the scene bounds draw a warning.
pub const BBOX_MARGIN: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum PropagationError {
    #[error("frequency must be positive and finite, got {0}")]
    Frequency(f64),
    #[error("boresight must be a non-zero finite vector")]
    Boresight,
    #[error("transmitter position must be finite")]
    Position,
    #[error("antenna exponent must be finite and >= 0")]
    Antenna,
    #[error("ray budget must be at least 1")]
    RayBudget,
    #[error("min_amplitude must be finite and >= 0, got {0}")]
    MinAmplitude(f64),
    #[error("plane height must be finite")]
    PlaneHeight,
    #[error("cancelled")]
    Cancelled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmitter {
    pub position: Vec3,
    pub frequency_hz: f64,
    pub antenna: AntennaPattern,
    /// Unit length.
    pub boresight: Vec3,
}

impl Transmitter {
    /// Validates the parameters and normalizes the boresight.
    pub fn new(
        position: Vec3,
        frequency_hz: f64,
        antenna: AntennaPattern,
        boresight: Vec3,
    ) -> Result<Transmitter, PropagationError> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(PropagationError::Frequency(frequency_hz));
        }
        if !position.is_finite() {
            return Err(PropagationError::Position);
        }
        if !antenna.is_valid() {
            return Err(PropagationError::Antenna);
        }
        let boresight = boresight.normalized().ok_or(PropagationError::Boresight)?;
        Ok(Transmitter {
            position,
            frequency_hz,
            antenna,
            boresight,
        })
    }

    pub fn isotropic(position: Vec3, frequency_hz: f64) -> Result<Transmitter, PropagationError> {
        Transmitter::new(position, frequency_hz, AntennaPattern::Isotropic, Vec3::Z)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    /// True when the position lies outside the scene bounds grown by
    /// [`BBOX_MARGIN`].
    pub fn outside_scene(&self, scene: &Scene) -> bool {
        scene
            .bbox()
            .is_some_and(|b| !b.inflated(BBOX_MARGIN).contains(self.position))
    }
}

/// Free-space path gain `(lambda / (4 pi d))^2` at distance `d`.
pub fn friis_gain(wavelength: f64, distance: f64) -> f64 {
    let a = wavelength / (4.0 * std::f64::consts::PI * distance);
    a * a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceConfig {
    pub rays: u64,
    pub max_depth: u32,
    pub min_amplitude: f64,
    pub seed: u64,
}

impl TraceConfig {
    pub fn new(
        rays: u64,
        max_depth: u32,
        min_amplitude: f64,
        seed: u64,
    ) -> Result<Self, PropagationError> {
        let cfg = TraceConfig {
            rays,
            max_depth,
            min_amplitude,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        if self.rays == 0 {
            return Err(PropagationError::RayBudget);
        }
        if !(self.min_amplitude.is_finite() && self.min_amplitude >= 0.0) {
            return Err(PropagationError::MinAmplitude(self.min_amplitude));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneCrossing {
    pub ray: u64,
    /// Position on the measurement plane.
    pub x: f64,
    pub y: f64,
    /// Squared path-coefficient amplitude.
    pub h_sq: f64,
    /// Unfolded length from the transmitter through all bounces.
    pub path_length: f64,
    /// |cos| between the ray and the plane normal, in `[MIN_CROSSING_COS, 1]`.
    pub cos_incidence: f64,
    pub bounces: u32,
}

/// How many threads trace, and an optional flag polled between batches.
#[derive(Debug, Default, Clone, Copy)]
pub struct Execution<'a> {
    /// `None` uses the global rayon pool.
    pub workers: Option<usize>,
    pub cancel: Option<&'a AtomicBool>,
    /// Rays per batch, capped at [`MAX_BATCH_RAYS`]. Zero picks the default.
    pub batch_rays: u64,
}

impl Execution<'_> {
    fn batch(&self) -> u64 {
        match self.batch_rays {
            0 => 16_384,
            b => b.min(MAX_BATCH_RAYS),
        }
    }

    fn cancelled(&self) -> bool {
        self.cancel.is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

/// A configured tracing run over one scene and transmitter.
pub struct RayTracer<'s> {
    scene: &'s Scene,
    index: &'s AccelIndex,
    tx: Transmitter,
    plane_z: f64,
    cfg: TraceConfig,
    strata: SphereStrata,
    wavelength: f64,
}

impl<'s> RayTracer<'s> {
    pub fn new(
        scene: &'s Scene,
        index: &'s AccelIndex,
        tx: Transmitter,
        plane_height: f64,
        cfg: TraceConfig,
    ) -> Result<RayTracer<'s>, PropagationError> {
        cfg.validate()?;
        if !plane_height.is_finite() {
            return Err(PropagationError::PlaneHeight);
        }
        if tx.outside_scene(scene) {
            log::warn!(
                "transmitter at ({:.2}, {:.2}, {:.2}) lies outside the scene bounds",
                tx.position.x,
                tx.position.y,
                tx.position.z
            );
        }
        Ok(RayTracer {
            scene,
            index,
            tx,
            plane_z: plane_height,
            cfg,
            strata: SphereStrata::new(cfg.rays),
            wavelength: tx.wavelength(),
        })
    }

    pub fn config(&self) -> &TraceConfig {
        &self.cfg
    }

    pub fn transmitter(&self) -> &Transmitter {
        &self.tx
    }

    /// Follows ray `ray` through the scene, calling `emit` for each plane
    /// crossing in path order.
    pub fn trace_ray(&self, ray: u64, emit: &mut impl FnMut(PlaneCrossing)) {
        let mut dir = self.strata.sample(self.cfg.seed, ray);
        let gain = self.tx.antenna.gain(self.tx.boresight, dir);
        let free_amp = self.wavelength / (4.0 * std::f64::consts::PI);
        let mut amplitude = gain.sqrt() * free_amp;
        if amplitude == 0.0 || amplitude < self.cfg.min_amplitude {
            return;
        }
        // Product of squared reflection coefficients so far.
        let mut reflection_power = 1.0;
        let mut origin = self.tx.position;
        let mut travelled = 0.0;
        let mut bounces = 0u32;
        loop {
            let segment = Ray {
                origin,
                direction: dir,
            };
            let hit = self.index.intersect_first(self.scene, &segment);
            let t_hit = hit.map_or(f64::INFINITY, |h| h.t);
            if dir.z != 0.0 {
                let t_plane = (self.plane_z - origin.z) / dir.z;
                let cos = dir.z.abs();
                // A tiny floor keeps a bounce point lying on the plane from
                // being counted twice.
                if t_plane > 1e-9 && t_plane < t_hit && cos >= MIN_CROSSING_COS {
                    let d = travelled + t_plane;
                    emit(PlaneCrossing {
                        ray,
                        x: origin.x + dir.x * t_plane,
                        y: origin.y + dir.y * t_plane,
                        h_sq: gain * friis_gain(self.wavelength, d) * reflection_power,
                        path_length: d,
                        cos_incidence: cos,
                        bounces,
                    });
                }
            }
            let Some(hit) = hit else { break };
            bounces += 1;
            if bounces > self.cfg.max_depth {
                break;
            }
            let gamma = self.scene.reflection(hit.material);
            amplitude *= gamma;
            reflection_power *= gamma * gamma;
            if amplitude == 0.0 || amplitude < self.cfg.min_amplitude {
                break;
            }
            travelled += hit.t;
            origin = hit.point;
            dir = dir.reflect(hit.normal).normalized().unwrap_or(dir);
        }
    }

    pub fn trace_range(&self, rays: Range<u64>, emit: &mut impl FnMut(PlaneCrossing)) {
        for ray in rays {
            self.trace_ray(ray, emit);
        }
    }

    /// Ray-index ranges traced as one unit of work.
    pub fn batches(&self, exec: &Execution<'_>) -> Vec<Range<u64>> {
        let step = exec.batch();
        (0..self.cfg.rays)
            .step_by(step as usize)
            .map(|start| start..(start + step).min(self.cfg.rays))
            .collect()
    }

    /// Runs `work` on every batch in parallel and hands the outputs to `fold`
    /// in ascending batch order. At most `window` batch outputs are held at
    /// once. Returns [`PropagationError::Cancelled`] if the cancel flag is
    /// raised; the flag is checked before each batch starts.
    pub fn for_each_batch<R, W, F>(
        &self,
        exec: &Execution<'_>,
        work: W,
        mut fold: F,
    ) -> Result<(), PropagationError>
    where
        R: Send,
        W: Fn(&Self, Range<u64>) -> R + Sync,
        F: FnMut(R),
    {
        let batches = self.batches(exec);
        let pool = exec.workers.map(|n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("failed to start tracer threads")
        });
        let threads = pool
            .as_ref()
            .map_or_else(rayon::current_num_threads, |p| p.current_num_threads());
        let work = &work;
        let map_chunk = |chunk: &[Range<u64>]| -> Vec<Option<R>> {
            chunk
                .par_iter()
                .map(|range| (!exec.cancelled()).then(|| work(self, range.clone())))
                .collect()
        };
        for chunk in batches.chunks(threads.max(1) * 4) {
            let outputs = match &pool {
                Some(p) => p.install(|| map_chunk(chunk)),
                None => map_chunk(chunk),
            };
            for out in outputs {
                fold(out.ok_or(PropagationError::Cancelled)?);
            }
        }
        Ok(())
    }

    /// All crossings, ordered by ray index and then by path order.
    pub fn crossings(&self, exec: &Execution<'_>) -> Result<Vec<PlaneCrossing>, PropagationError> {
        let mut all = Vec::new();
        self.for_each_batch(
            exec,
            |tracer, range| {
                let mut out = Vec::new();
                tracer.trace_range(range, &mut |c| out.push(c));
                out
            },
            |batch| all.extend(batch),
        )?;
        Ok(all)
    }
}

/// Traces `cfg.rays` rays from `tx` and returns every crossing of the plane
/// `z = plane_height`.
pub fn trace_coverage_rays(
    scene: &Scene,
    index: &AccelIndex,
    tx: &Transmitter,
    plane_height: f64,
    cfg: &TraceConfig,
) -> Result<Vec<PlaneCrossing>, PropagationError> {
    RayTracer::new(scene, index, *tx, plane_height, *cfg)?.crossings(&Execution::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_index, Material, Triangle};

    const F: f64 = 2.4e9;

    fn vertical_wall(x: f64, gamma: f64, half: f64) -> Scene {
        let m = vec![Material {
            name: "w".into(),
            reflection_amplitude: gamma,
        }];
        let a = Vec3::new(x, -half, -half);
        let b = Vec3::new(x, half, -half);
        let c = Vec3::new(x, half, half);
        let d = Vec3::new(x, -half, half);
        Scene::from_parts(
            vec![
                Triangle {
                    a,
                    b,
                    c,
                    material: 0,
                },
                Triangle {
                    a,
                    b: c,
                    c: d,
                    material: 0,
                },
            ],
            m,
        )
    }

    #[test]
    fn config_validation() {
        assert_eq!(
            TraceConfig::new(0, 1, 0.0, 1),
            Err(PropagationError::RayBudget)
        );
        assert!(matches!(
            TraceConfig::new(1, 1, -1.0, 1),
            Err(PropagationError::MinAmplitude(_))
        ));
        assert!(TraceConfig::new(1, 0, 0.0, 1).is_ok());
        assert_eq!(
            Transmitter::isotropic(Vec3::ZERO, 0.0),
            Err(PropagationError::Frequency(0.0))
        );
        assert_eq!(
            Transmitter::new(Vec3::ZERO, F, AntennaPattern::Isotropic, Vec3::ZERO),
            Err(PropagationError::Boresight)
        );
        assert_eq!(
            Transmitter::new(
                Vec3::ZERO,
                F,
                AntennaPattern::Directional { exponent: -1.0 },
                Vec3::Y
            ),
            Err(PropagationError::Antenna)
        );
    }

    #[test]
    fn free_space_crossings_follow_friis() {
        let scene = Scene::empty();
        let index = build_index(&scene);
        let tx = Transmitter::isotropic(Vec3::new(0.0, 0.0, 10.0), F).unwrap();
        let cfg = TraceConfig::new(100_000, 3, 0.0, 9).unwrap();
        let crossings = trace_coverage_rays(&scene, &index, &tx, 1.5, &cfg).unwrap();
        let lambda = tx.wavelength();
        let strata = SphereStrata::new(cfg.rays);
        let mut per_ray = vec![0u32; cfg.rays as usize];
        for c in &crossings {
            per_ray[c.ray as usize] += 1;
            assert_eq!(c.bounces, 0);
            let expect = friis_gain(lambda, c.path_length);
            assert!((c.h_sq - expect).abs() <= 1e-12 * expect);
            let geometric = ((c.x).powi(2) + c.y.powi(2) + 8.5f64.powi(2)).sqrt();
            assert!((geometric - c.path_length).abs() < 1e-9);
        }
        // Every downward ray steep enough to pass the grazing guard crosses once.
        for (i, &n) in per_ray.iter().enumerate() {
            let d = strata.sample(cfg.seed, i as u64);
            let expected = u32::from(d.z < 0.0 && d.z.abs() >= MIN_CROSSING_COS);
            assert_eq!(n, expected, "ray {i}");
        }
    }

    #[test]
    fn absorbing_wall_blocks_everything_behind_it() {
        let scene = vertical_wall(5.0, 0.0, 1e4);
        let index = build_index(&scene);
        let tx = Transmitter::isotropic(Vec3::new(0.0, 0.0, 10.0), F).unwrap();
        let cfg = TraceConfig::new(50_000, 3, 0.0, 1).unwrap();
        let crossings = trace_coverage_rays(&scene, &index, &tx, 1.5, &cfg).unwrap();
        assert!(!crossings.is_empty());
        assert!(crossings.iter().all(|c| c.x < 5.0 && c.bounces == 0));
    }

    #[test]
    fn reflected_family_matches_image_source() {
        let scene = vertical_wall(10.0, 1.0, 1e4);
        let index = build_index(&scene);
        let tx_pos = Vec3::new(0.0, 0.0, 6.0);
        let tx = Transmitter::isotropic(tx_pos, F).unwrap();
        let cfg = TraceConfig::new(200_000, 1, 0.0, 3).unwrap();
        let crossings = trace_coverage_rays(&scene, &index, &tx, 1.5, &cfg).unwrap();
        let image = Vec3::new(20.0, 0.0, 6.0);
        let near: Vec<_> = crossings
            .iter()
            .filter(|c| (c.x - 5.0).abs() < 1.0 && c.y.abs() < 1.0)
            .collect();
        assert!(near.iter().any(|c| c.bounces == 0));
        assert!(near.iter().any(|c| c.bounces == 1));
        for c in near {
            let p = Vec3::new(c.x, c.y, 1.5);
            let source = if c.bounces == 0 { tx_pos } else { image };
            assert!(((p - source).norm() - c.path_length).abs() < 1e-6);
            assert!(c.h_sq <= friis_gain(tx.wavelength(), c.path_length) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn depth_limit_and_monotone_decay() {
        // Parallel walls make long bounce chains.
        let mut a = vertical_wall(2.0, 0.9, 1e3);
        let b = vertical_wall(-2.0, 0.8, 1e3);
        let off = a.materials.len();
        a.materials.extend(b.materials);
        let tris: Vec<_> = a
            .triangles
            .iter()
            .copied()
            .chain(b.triangles.iter().map(|t| Triangle {
                material: t.material + off,
                ..*t
            }))
            .collect();
        let scene = Scene::from_parts(tris, a.materials);
        let index = build_index(&scene);
        let tx = Transmitter::isotropic(Vec3::new(0.0, 0.0, 3.0), F).unwrap();
        for max_depth in [0, 2, 5] {
            let cfg = TraceConfig::new(20_000, max_depth, 0.0, 5).unwrap();
            let crossings = trace_coverage_rays(&scene, &index, &tx, 1.5, &cfg).unwrap();
            assert!(crossings.iter().all(|c| c.bounces <= max_depth));
            if max_depth > 0 {
                assert!(crossings.iter().any(|c| c.bounces == max_depth));
            }
        }
        // Floor and ceiling make a single ray cross the plane repeatedly.
        let floor = Material {
            name: "f".into(),
            reflection_amplitude: 0.9,
        };
        let big = 1e3;
        let quad = |z: f64| {
            let (p, q, r, s) = (
                Vec3::new(-big, -big, z),
                Vec3::new(big, -big, z),
                Vec3::new(big, big, z),
                Vec3::new(-big, big, z),
            );
            [
                Triangle {
                    a: p,
                    b: q,
                    c: r,
                    material: 0,
                },
                Triangle {
                    a: p,
                    b: r,
                    c: s,
                    material: 0,
                },
            ]
        };
        let scene = Scene::from_parts(
            quad(0.0).into_iter().chain(quad(4.0)).collect(),
            vec![floor],
        );
        let index = build_index(&scene);
        let cfg = TraceConfig::new(5_000, 6, 0.0, 11).unwrap();
        let crossings = trace_coverage_rays(&scene, &index, &tx, 1.5, &cfg).unwrap();
        let mut multi = 0;
        for w in crossings.windows(2) {
            if w[0].ray == w[1].ray {
                multi += 1;
                assert!(w[1].path_length > w[0].path_length);
                assert!(w[1].h_sq <= w[0].h_sq);
            }
        }
        assert!(multi > 100);
    }

    #[test]
    fn min_amplitude_cuts_weak_rays() {
        let scene = vertical_wall(5.0, 0.1, 1e4);
        let index = build_index(&scene);
        let tx = Transmitter::isotropic(Vec3::new(0.0, 0.0, 10.0), F).unwrap();
        let launch = tx.wavelength() / (4.0 * std::f64::consts::PI);
        let cfg = TraceConfig::new(20_000, 3, launch * 0.5, 1).unwrap();
        let crossings = trace_coverage_rays(&scene, &index, &tx, 1.5, &cfg).unwrap();
        assert!(crossings.iter().all(|c| c.bounces == 0));
        let cfg = TraceConfig::new(20_000, 3, launch * 2.0, 1).unwrap();
        assert!(trace_coverage_rays(&scene, &index, &tx, 1.5, &cfg)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn identical_across_worker_counts_and_batch_sizes() {
        let scene = vertical_wall(7.0, 0.6, 50.0);
        let index = build_index(&scene);
        let tx = Transmitter::isotropic(Vec3::new(0.0, 0.0, 4.0), F).unwrap();
        let cfg = TraceConfig::new(30_000, 2, 0.0, 77).unwrap();
        let tracer = RayTracer::new(&scene, &index, tx, 1.5, cfg).unwrap();
        let reference = tracer
            .crossings(&Execution {
                workers: Some(1),
                ..Default::default()
            })
            .unwrap();
        for (workers, batch_rays) in [(2, 1000), (4, 0), (3, 65_536)] {
            let exec = Execution {
                workers: Some(workers),
                cancel: None,
                batch_rays,
            };
            assert_eq!(tracer.crossings(&exec).unwrap(), reference);
        }
    }

    #[test]
    fn cancel_flag_stops_between_batches() {
        let scene = Scene::empty();
        let index = build_index(&scene);
        let tx = Transmitter::isotropic(Vec3::new(0.0, 0.0, 4.0), F).unwrap();
        let cfg = TraceConfig::new(10_000, 0, 0.0, 1).unwrap();
        let tracer = RayTracer::new(&scene, &index, tx, 1.5, cfg).unwrap();
        let flag = AtomicBool::new(true);
        let exec = Execution {
            workers: Some(1),
            cancel: Some(&flag),
            batch_rays: 100,
        };
        assert_eq!(tracer.crossings(&exec), Err(PropagationError::Cancelled));
    }
}
