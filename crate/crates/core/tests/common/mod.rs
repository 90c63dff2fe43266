#![allow(dead_code)]

pub mod messages;
pub mod service;

use raycover::geometry::Vec3;
use raycover::scene::{Material, Scene, Triangle};

pub const F_24GHZ: f64 = 2.4e9;

pub fn material(name: &str, gamma: f64) -> Material {
    Material {
        name: name.into(),
        reflection_amplitude: gamma,
    }
}

/// Two triangles spanning the quad `a b c d`.
pub fn quad(out: &mut Vec<Triangle>, q: [Vec3; 4], material: usize) {
    out.push(Triangle {
        a: q[0],
        b: q[1],
        c: q[2],
        material,
    });
    out.push(Triangle {
        a: q[0],
        b: q[2],
        c: q[3],
        material,
    });
}

/// Wall in the plane `x = x0` covering `|y| <= half_y`, `z0 <= z <= z1`.
pub fn wall_x(x0: f64, half_y: f64, z0: f64, z1: f64, gamma: f64) -> Scene {
    let mut t = Vec::new();
    quad(
        &mut t,
        [
            Vec3::new(x0, -half_y, z0),
            Vec3::new(x0, half_y, z0),
            Vec3::new(x0, half_y, z1),
            Vec3::new(x0, -half_y, z1),
        ],
        0,
    );
    Scene::from_parts(t, vec![material("wall", gamma)])
}

/// Wall in the plane `y = y0` covering `|x| <= half_x`, `z0 <= z <= z1`.
pub fn wall_y(y0: f64, half_x: f64, z0: f64, z1: f64, gamma: f64) -> Scene {
    let mut t = Vec::new();
    quad(
        &mut t,
        [
            Vec3::new(-half_x, y0, z0),
            Vec3::new(half_x, y0, z0),
            Vec3::new(half_x, y0, z1),
            Vec3::new(-half_x, y0, z1),
        ],
        0,
    );
    Scene::from_parts(t, vec![material("wall", gamma)])
}

pub fn push_box(out: &mut Vec<Triangle>, lo: Vec3, hi: Vec3, material: usize) {
    let c = Vec3::new;
    let faces = [
        [
            c(lo.x, lo.y, lo.z),
            c(hi.x, lo.y, lo.z),
            c(hi.x, lo.y, hi.z),
            c(lo.x, lo.y, hi.z),
        ],
        [
            c(hi.x, lo.y, lo.z),
            c(hi.x, hi.y, lo.z),
            c(hi.x, hi.y, hi.z),
            c(hi.x, lo.y, hi.z),
        ],
        [
            c(hi.x, hi.y, lo.z),
            c(lo.x, hi.y, lo.z),
            c(lo.x, hi.y, hi.z),
            c(hi.x, hi.y, hi.z),
        ],
        [
            c(lo.x, hi.y, lo.z),
            c(lo.x, lo.y, lo.z),
            c(lo.x, lo.y, hi.z),
            c(lo.x, hi.y, hi.z),
        ],
        [
            c(lo.x, lo.y, hi.z),
            c(hi.x, lo.y, hi.z),
            c(hi.x, hi.y, hi.z),
            c(lo.x, hi.y, hi.z),
        ],
    ];
    for f in faces {
        quad(out, f, material);
    }
}

/// `n x n` boxes on a 400 m square: `10 n^2` triangles.
pub fn block_city(n: usize) -> Scene {
    let mut t = Vec::with_capacity(10 * n * n);
    let pitch = 400.0 / n as f64;
    let side = pitch * 0.6;
    for bi in 0..n {
        for bj in 0..n {
            let x0 = -200.0 + bi as f64 * pitch + (pitch - side) / 2.0;
            let y0 = -200.0 + bj as f64 * pitch + (pitch - side) / 2.0;
            let h = 10.0 + ((bi * 7 + bj * 13) % 5) as f64 * 5.0;
            push_box(
                &mut t,
                Vec3::new(x0, y0, 0.0),
                Vec3::new(x0 + side, y0 + side, h),
                0,
            );
        }
    }
    Scene::from_parts(t, vec![material("concrete", 0.6)])
}

pub fn wavelength(f: f64) -> f64 {
    299_792_458.0 / f
}

/// Free-space gain `(lambda / (4 pi d))^2` in dB.
pub fn friis_db(f: f64, d: f64) -> f64 {
    20.0 * (wavelength(f) / (4.0 * std::f64::consts::PI * d)).log10()
}

pub fn friis_linear(f: f64, d: f64) -> f64 {
    (wavelength(f) / (4.0 * std::f64::consts::PI * d)).powi(2)
}
