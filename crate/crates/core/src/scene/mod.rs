//! Triangle-mesh scenes, their materials, and first-hit ray queries.

mod bvh;
mod obj;

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{Aabb, Vec3};

pub use bvh::AccelIndex;
pub use obj::{parse_materials, write_materials, write_obj, SCENE_FORMAT_TAG};

/// Hits closer than this are treated as self-intersections and ignored.
pub const SELF_HIT_EPSILON: f64 = 1e-6;

/// Faces with an area at or below this are dropped at load.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Reflection amplitude given to faces whose material cannot be resolved.
pub const DEFAULT_REFLECTION: f64 = 0.5;

/// Name of the material used by faces that precede any `usemtl` record.
pub const DEFAULT_MATERIAL_NAME: &str = "default";

pub type MaterialId = usize;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("materials line {line}: {message}")]
    Materials { line: usize, message: String },
    #[error("unsupported scene format version `{0}`")]
    Version(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    /// Scalar amplitude reflection coefficient, in `[0, 1]`.
    pub reflection_amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
    pub material: MaterialId,
}

impl Triangle {
    pub fn area(&self) -> f64 {
        0.5 * (self.b - self.a).cross(self.c - self.a).norm()
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        b.grow(self.a);
        b.grow(self.b);
        b.grow(self.c);
        b
    }

    pub fn centroid(&self) -> Vec3 {
        (self.a + self.b + self.c) / 3.0
    }

    /// Moller-Trumbore. Returns the ray distance of a hit beyond the
    /// self-intersection epsilon.
    #[inline]
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        let e1 = self.b - self.a;
        let e2 = self.c - self.a;
        let p = ray.direction.cross(e2);
        let det = e1.dot(p);
        if det.abs() <= 1e-14 * (e1.dot(e1) * e2.dot(e2)).sqrt() {
            return None;
        }
        let inv_det = 1.0 / det;
        let s = ray.origin - self.a;
        let u = s.dot(p) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(e1);
        let v = ray.direction.dot(q) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(q) * inv_det;
        (t > SELF_HIT_EPSILON).then_some(t)
    }

    /// Unit geometric normal, following the winding order.
    pub fn normal(&self) -> Vec3 {
        (self.b - self.a)
            .cross(self.c - self.a)
            .normalized()
            .unwrap_or(Vec3::Z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; `None` if it has no length.
    pub fn new(origin: Vec3, direction: Vec3) -> Option<Ray> {
        direction
            .normalized()
            .map(|direction| Ray { origin, direction })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    /// Unit normal facing back towards the incoming ray.
    pub normal: Vec3,
    pub material: MaterialId,
    pub triangle: usize,
}

impl Hit {
    pub fn new(scene: &Scene, ray: &Ray, triangle: usize, t: f64) -> Hit {
        let tri = &scene.triangles[triangle];
        let mut normal = tri.normal();
        if normal.dot(ray.direction) > 0.0 {
            normal = -normal;
        }
        Hit {
            t,
            point: ray.at(t),
            normal,
            material: tri.material,
            triangle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SceneWarning {
    DegenerateFace { line: usize },
    UnknownMaterial { name: String, line: usize },
}

impl fmt::Display for SceneWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneWarning::DegenerateFace { line } => {
                write!(f, "line {line}: dropped degenerate face")
            }
            SceneWarning::UnknownMaterial { name, line } => write!(
                f,
                "line {line}: unknown material `{name}`, using reflection {DEFAULT_REFLECTION}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub triangles: Vec<Triangle>,
    pub materials: Vec<Material>,
    pub warnings: Vec<SceneWarning>,
    bbox: Option<Aabb>,
}

impl Scene {
    /// Builds a scene from already-resolved parts. Degenerate triangles are
    /// dropped and reported as warnings with line 0.
    pub fn from_parts(triangles: Vec<Triangle>, materials: Vec<Material>) -> Scene {
        let mut scene = Scene {
            materials,
            ..Scene::default()
        };
        for tri in triangles {
            assert!(
                tri.material < scene.materials.len(),
                "triangle material {} out of range",
                tri.material
            );
            if tri.area() > MIN_TRIANGLE_AREA {
                scene.triangles.push(tri);
            } else {
                scene
                    .warnings
                    .push(SceneWarning::DegenerateFace { line: 0 });
            }
        }
        scene.recompute_bbox();
        scene
    }

    pub fn empty() -> Scene {
        Scene::default()
    }

    pub(crate) fn recompute_bbox(&mut self) {
        let mut b = Aabb::EMPTY;
        for t in &self.triangles {
            b = b.union(&t.bounds());
        }
        self.bbox = (!b.is_empty()).then_some(b);
    }

    /// Bounding box of all vertices, `None` for an empty scene.
    pub fn bbox(&self) -> Option<Aabb> {
        self.bbox
    }

    pub fn material(&self, id: MaterialId) -> &Material {
        &self.materials[id]
    }

    pub fn material_id(&self, name: &str) -> Option<MaterialId> {
        self.materials.iter().position(|m| m.name == name)
    }

    pub fn reflection(&self, id: MaterialId) -> f64 {
        self.materials[id].reflection_amplitude
    }

    pub fn dropped_faces(&self) -> usize {
        self.warnings
            .iter()
            .filter(|w| matches!(w, SceneWarning::DegenerateFace { .. }))
            .count()
    }
}

/// Parses a scene document with an optional material sidecar.
///
/// Material declarations embedded in the scene document are applied first;
/// sidecar entries override them by name.
pub fn load_scene(document: &str, materials: Option<&str>) -> Result<Scene, SceneError> {
    obj::parse_scene(document, materials)
}

pub fn load_scene_files(scene: &Path, materials: Option<&Path>) -> Result<Scene, SceneError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| SceneError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let doc = read(scene)?;
    let mats = materials.map(read).transpose()?;
    load_scene(&doc, mats.as_deref())
}

pub fn build_index(scene: &Scene) -> AccelIndex {
    AccelIndex::build(scene)
}
