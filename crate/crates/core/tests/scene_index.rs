mod common;

use proptest::prelude::*;

use raycover::geometry::Vec3;
use raycover::scene::{
    build_index, load_scene, load_scene_files, write_materials, write_obj, Material, Ray, Scene,
    SceneError, SceneWarning, Triangle,
};

fn coord() -> impl Strategy<Value = f64> {
    -20.0..20.0f64
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn triangle(materials: usize) -> impl Strategy<Value = Triangle> {
    (vec3(), vec3(), vec3(), 0..materials).prop_map(|(a, b, c, material)| Triangle {
        a,
        b,
        c,
        material,
    })
}

/// Random soups, plus exact duplicates to exercise the tie rule.
fn soup() -> impl Strategy<Value = Scene> {
    (
        prop::collection::vec(triangle(3), 1..120),
        prop::collection::vec(any::<prop::sample::Index>(), 0..4),
    )
        .prop_map(|(mut tris, dups)| {
            for d in dups {
                let t = tris[d.index(tris.len())];
                tris.push(t);
            }
            let mats = (0..3)
                .map(|k| Material {
                    name: format!("m{k}"),
                    reflection_amplitude: 0.25 * k as f64,
                })
                .collect();
            Scene::from_parts(tris, mats)
        })
}

fn brute_force(scene: &Scene, ray: &Ray) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, t) in scene.triangles.iter().enumerate() {
        if let Some(d) = t.intersect(ray) {
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, i));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn index_matches_brute_force(
        scene in soup(),
        rays in prop::collection::vec((vec3(), vec3()), 1..16),
    ) {
        let index = build_index(&scene);
        for (o, d) in rays {
            let Some(ray) = Ray::new(o, d) else { continue };
            let expected = brute_force(&scene, &ray);
            let got = index.intersect_first(&scene, &ray).map(|h| (h.t, h.triangle));
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn bounded_query_agrees(scene in soup(), o in vec3(), d in vec3(), t_max in 0.0..60.0f64) {
        let index = build_index(&scene);
        if let Some(ray) = Ray::new(o, d) {
            let expected = brute_force(&scene, &ray).filter(|&(t, _)| t < t_max);
            let got = index.intersect_within(&scene, &ray, t_max).map(|h| (h.t, h.triangle));
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn serialize_round_trip(scene in soup()) {
        let doc = write_obj(&scene);
        let back = load_scene(&doc, Some(&write_materials(&scene))).unwrap();
        // Random soups may hold slivers that the loader drops.
        let kept: Vec<&Triangle> = scene.triangles.iter().filter(|t| t.area() > 1e-12).collect();
        prop_assert_eq!(back.triangles.len(), kept.len());
        for (a, b) in back.triangles.iter().zip(kept) {
            prop_assert_eq!((a.a, a.b, a.c), (b.a, b.b, b.c));
            prop_assert_eq!(
                &back.materials[a.material].name,
                &scene.materials[b.material].name
            );
            prop_assert_eq!(
                back.reflection(a.material),
                scene.reflection(b.material)
            );
        }
        // The embedded directives alone carry the materials.
        let inline_only = load_scene(&doc, None).unwrap();
        prop_assert_eq!(inline_only.triangles.len(), back.triangles.len());
        let unknown = inline_only
            .warnings
            .iter()
            .any(|w| matches!(w, SceneWarning::UnknownMaterial { .. }));
        prop_assert!(!unknown);
    }
}

#[test]
fn unit_square_wall_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("wall.obj");
    let mats = dir.path().join("wall.materials");
    std::fs::write(
        &obj,
        "# raycover-scene v1\nv 5 -1 -1\nv 5 1 -1\nv 5 1 1\nv 5 -1 1\nusemtl concrete\nf 1 2 3 4\n",
    )
    .unwrap();
    std::fs::write(&mats, "concrete 0.7\n").unwrap();
    let scene = load_scene_files(&obj, Some(&mats)).unwrap();
    assert_eq!(scene.triangles.len(), 2);
    let index = build_index(&scene);
    let hit = index
        .intersect_first(&scene, &Ray::new(Vec3::ZERO, Vec3::X).unwrap())
        .unwrap();
    assert!((hit.t - 5.0).abs() < 1e-12);
    assert_eq!(hit.normal, Vec3::new(-1.0, 0.0, 0.0));
    assert_eq!(scene.reflection(hit.material), 0.7);
    let miss = Ray::new(Vec3::ZERO, -Vec3::X).unwrap();
    assert!(index.intersect_first(&scene, &miss).is_none());
}

#[test]
fn missing_file_is_io_error() {
    let err = load_scene_files(std::path::Path::new("/nonexistent/site.obj"), None).unwrap_err();
    assert!(matches!(err, SceneError::Io { .. }));
}

#[test]
fn unknown_material_defaults_with_one_warning() {
    let doc = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nusemtl mystery\nf 1 2 3\nf 1 2 4\n";
    let scene = load_scene(doc, None).unwrap();
    assert_eq!(scene.triangles.len(), 2);
    assert!(scene
        .triangles
        .iter()
        .all(|t| scene.reflection(t.material) == 0.5));
    let unknown = scene
        .warnings
        .iter()
        .filter(|w| matches!(w, SceneWarning::UnknownMaterial { .. }))
        .count();
    assert_eq!(unknown, 1);
}

#[test]
fn large_scene_stays_exact() {
    let scene = common::block_city(31);
    assert!(scene.triangles.len() <= 10_000);
    let index = build_index(&scene);
    let mut checked = 0;
    for k in 0..2000 {
        let a = k as f64 * 0.0137;
        let ray = Ray::new(
            Vec3::new(3.0, -2.0, 35.0),
            Vec3::new(a.cos(), a.sin(), -0.05 - (k % 17) as f64 * 0.02),
        )
        .unwrap();
        let got = index
            .intersect_first(&scene, &ray)
            .map(|h| (h.t, h.triangle));
        assert_eq!(got, brute_force(&scene, &ray));
        checked += got.is_some() as usize;
    }
    assert!(checked > 1000);
}
