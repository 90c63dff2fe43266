//! Synthetic scenes shared by the benchmarks.

use raycover::geometry::Vec3;
use raycover::scene::{Material, Scene, Triangle};

/// An `n x n` block city: boxes of height 10..30 m on a 400 m square,
/// `10 n^2` triangles in total.
pub fn block_city(n: usize) -> Scene {
    let materials = vec![Material {
        name: "concrete".into(),
        reflection_amplitude: 0.6,
    }];
    let mut triangles = Vec::with_capacity(10 * n * n);
    let pitch = 400.0 / n as f64;
    let side = pitch * 0.6;
    for bi in 0..n {
        for bj in 0..n {
            let x0 = -200.0 + bi as f64 * pitch + (pitch - side) / 2.0;
            let y0 = -200.0 + bj as f64 * pitch + (pitch - side) / 2.0;
            let h = 10.0 + ((bi * 7 + bj * 13) % 5) as f64 * 5.0;
            push_box(
                &mut triangles,
                Vec3::new(x0, y0, 0.0),
                Vec3::new(x0 + side, y0 + side, h),
            );
        }
    }
    Scene::from_parts(triangles, materials)
}

fn push_box(out: &mut Vec<Triangle>, lo: Vec3, hi: Vec3) {
    let c = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let quads = [
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
    for q in quads {
        for (a, b, d) in [(q[0], q[1], q[2]), (q[0], q[2], q[3])] {
            out.push(Triangle {
                a,
                b,
                c: d,
                material: 0,
            });
        }
    }
}
