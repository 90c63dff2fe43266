//! Launch directions: one ray per equal-area stratum of the unit sphere.
//!
//! The sphere is cut into `rows` bands of constant `z` and each band into
//! equal longitude wedges, so every stratum has solid angle exactly `4pi/N`.
//! Ray `i` owns stratum `i` and is jittered uniformly inside it from its own
//! random substream, which keeps the launch set uniform in expectation while
//! removing most of the clumping of independent draws.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct SphereStrata {
    rays: u64,
    rows: u64,
}

impl SphereStrata {
    pub fn new(rays: u64) -> SphereStrata {
        assert!(rays > 0, "at least one ray is required");
        // Bands about as tall (in z) as wedges are wide at the equator.
        let rows = ((rays as f64 / PI).sqrt().round() as u64).clamp(1, rays);
        SphereStrata { rays, rows }
    }

    pub fn rays(&self) -> u64 {
        self.rays
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    #[inline]
    fn row_start(&self, row: u64) -> u64 {
        (row as u128 * self.rays as u128 / self.rows as u128) as u64
    }

    fn row_of(&self, ray: u64) -> u64 {
        let mut r = (ray as u128 * self.rows as u128 / self.rays as u128) as u64;
        while r + 1 < self.rows && self.row_start(r + 1) <= ray {
            r += 1;
        }
        while self.row_start(r) > ray {
            r -= 1;
        }
        r
    }

    /// `(z_lo, z_hi, phi_lo, phi_hi)` of stratum `ray`.
    pub fn stratum(&self, ray: u64) -> (f64, f64, f64, f64) {
        let (z_lo, z_hi, phi_lo, phi_hi) = self.stratum_coords(ray, 0.0, 0.0, 1.0, 1.0);
        (z_lo, z_hi, phi_lo, phi_hi)
    }

    fn stratum_coords(&self, ray: u64, u0: f64, v0: f64, u1: f64, v1: f64) -> (f64, f64, f64, f64) {
        let row = self.row_of(ray);
        let start = self.row_start(row);
        let width = self.row_start(row + 1) - start;
        let col = (ray - start) as f64;
        let n = self.rays as f64;
        let z = |u: f64| -1.0 + 2.0 * (start as f64 + u * width as f64) / n;
        let phi = |v: f64| 2.0 * PI * (col + v) / width as f64;
        (z(u0), z(u1), phi(v0), phi(v1))
    }

    /// Maps jitter `(u, v)` in `[0,1)^2` to a unit direction inside stratum `ray`.
    pub fn direction(&self, ray: u64, u: f64, v: f64) -> Vec3 {
        let (z, _, phi, _) = self.stratum_coords(ray, u, v, u, v);
        let z = z.clamp(-1.0, 1.0);
        let r = (1.0 - z * z).max(0.0).sqrt();
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    }

    /// Direction of ray `ray` for a given run seed.
    pub fn sample(&self, seed: u64, ray: u64) -> Vec3 {
        let mut rng = ray_stream(seed, ray);
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        self.direction(ray, u, v)
    }
}

/// Independent random stream for one ray: the run seed keys the generator and
/// the ray index selects the stream.
pub fn ray_stream(seed: u64, ray: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ray);
    rng
}
