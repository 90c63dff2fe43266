//! Wavefront OBJ subset reader/writer plus the material sidecar format.
//!
//! Supported records: `v`, `f` (fan-triangulated), `usemtl`. Texture,
//! normal, grouping and smoothing records are accepted and ignored.
//! Materials may be declared inline with `# raycover-material <name> <gamma>`
//! comment lines, which other OBJ readers skip.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{
    Material, Scene, SceneError, SceneWarning, Triangle, DEFAULT_MATERIAL_NAME, DEFAULT_REFLECTION,
    MIN_TRIANGLE_AREA,
};
use crate::geometry::Vec3;

pub const SCENE_FORMAT_TAG: &str = "raycover-scene";
const INLINE_MATERIAL: &str = "raycover-material";
const IGNORED_RECORDS: &[&str] = &["vn", "vt", "vp", "o", "g", "s", "mtllib", "l", "p"];

/// Checks a `# raycover-scene vN` header on the first non-blank line.
fn check_version(text: &str) -> Result<(), SceneError> {
    let Some(first) = text.lines().map(str::trim).find(|l| !l.is_empty()) else {
        return Ok(());
    };
    let Some(rest) = first.strip_prefix('#') else {
        return Ok(());
    };
    let mut words = rest.split_whitespace();
    if words.next() == Some(SCENE_FORMAT_TAG) {
        match words.next() {
            Some("v1") => {}
            other => return Err(SceneError::Version(other.unwrap_or("").to_string())),
        }
    }
    Ok(())
}

fn parse_gamma(name: &str, value: &str) -> Result<f64, String> {
    let gamma: f64 = value
        .parse()
        .map_err(|_| format!("material `{name}`: `{value}` is not a number"))?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(format!(
            "material `{name}`: reflection amplitude {gamma} outside [0, 1]"
        ));
    }
    Ok(gamma)
}

/// Parses a sidecar of `name gamma` pairs. Later entries win.
pub fn parse_materials(text: &str) -> Result<Vec<Material>, SceneError> {
    check_version(text)?;
    let mut out: Vec<Material> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| SceneError::Materials {
            line: n + 1,
            message,
        };
        if fields.len() != 2 {
            return Err(err(format!(
                "expected `name gamma`, found {} fields",
                fields.len()
            )));
        }
        let gamma = parse_gamma(fields[0], fields[1]).map_err(err)?;
        upsert(&mut out, fields[0], gamma);
    }
    Ok(out)
}

fn upsert(table: &mut Vec<Material>, name: &str, gamma: f64) {
    match table.iter_mut().find(|m| m.name == name) {
        Some(m) => m.reflection_amplitude = gamma,
        None => table.push(Material {
            name: name.to_string(),
            reflection_amplitude: gamma,
        }),
    }
}

fn parse_index(token: &str, vertex_count: usize) -> Result<usize, String> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head
        .parse()
        .map_err(|_| format!("bad vertex reference `{token}`"))?;
    let resolved = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        vertex_count as i64 + raw
    } else {
        return Err("vertex index 0 is invalid".to_string());
    };
    if resolved < 0 || resolved as usize >= vertex_count {
        return Err(format!(
            "vertex reference {raw} out of range ({vertex_count} vertices defined)"
        ));
    }
    Ok(resolved as usize)
}

struct PendingFace {
    line: usize,
    material: Option<String>,
    vertices: [usize; 3],
}

pub(super) fn parse_scene(document: &str, sidecar: Option<&str>) -> Result<Scene, SceneError> {
    check_version(document)?;
    let mut declared: Vec<Material> = Vec::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<PendingFace> = Vec::new();
    let mut current: Option<String> = None;

    for (n, raw) in document.lines().enumerate() {
        let line_no = n + 1;
        let err = |message: String| SceneError::Parse {
            line: line_no,
            message,
        };
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some(INLINE_MATERIAL) {
                let (Some(name), Some(value), None) = (words.next(), words.next(), words.next())
                else {
                    return Err(err(format!("expected `# {INLINE_MATERIAL} name gamma`")));
                };
                upsert(&mut declared, name, parse_gamma(name, value).map_err(err)?);
            }
            continue;
        }
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        match keyword {
            "v" => {
                let coords: Vec<f64> = words
                    .map(|w| w.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err("vertex coordinate is not a number".into()))?;
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(err(format!(
                        "vertex needs 3 coordinates, found {}",
                        coords.len()
                    )));
                }
                let v = Vec3::new(coords[0], coords[1], coords[2]);
                if !v.is_finite() {
                    return Err(err("vertex coordinate is not finite".into()));
                }
                vertices.push(v);
            }
            "f" => {
                let idx: Vec<usize> = words
                    .map(|w| parse_index(w, vertices.len()))
                    .collect::<Result<_, _>>()
                    .map_err(err)?;
                if idx.len() < 3 {
                    return Err(err(format!("face needs 3 vertices, found {}", idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    faces.push(PendingFace {
                        line: line_no,
                        material: current.clone(),
                        vertices: [idx[0], idx[k], idx[k + 1]],
                    });
                }
            }
            "usemtl" => {
                let name = words
                    .next()
                    .ok_or_else(|| err("usemtl without a name".into()))?;
                current = Some(name.to_string());
            }
            k if IGNORED_RECORDS.contains(&k) => {}
            other => return Err(err(format!("unsupported record `{other}`"))),
        }
    }

    if let Some(text) = sidecar {
        for m in parse_materials(text)? {
            upsert(&mut declared, &m.name, m.reflection_amplitude);
        }
    }

    let mut scene = Scene::default();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for m in declared {
        ids.insert(m.name.clone(), scene.materials.len());
        scene.materials.push(m);
    }
    for face in faces {
        let [i, j, k] = face.vertices;
        let mut tri = Triangle {
            a: vertices[i],
            b: vertices[j],
            c: vertices[k],
            material: 0,
        };
        if tri.area() <= MIN_TRIANGLE_AREA {
            scene
                .warnings
                .push(SceneWarning::DegenerateFace { line: face.line });
            continue;
        }
        let name = face.material.as_deref().unwrap_or(DEFAULT_MATERIAL_NAME);
        tri.material = match ids.get(name) {
            Some(&id) => id,
            None => {
                // Only named-but-undeclared materials are worth a warning.
                if face.material.is_some() {
                    scene.warnings.push(SceneWarning::UnknownMaterial {
                        name: name.to_string(),
                        line: face.line,
                    });
                }
                let id = scene.materials.len();
                scene.materials.push(Material {
                    name: name.to_string(),
                    reflection_amplitude: DEFAULT_REFLECTION,
                });
                ids.insert(name.to_string(), id);
                id
            }
        };
        scene.triangles.push(tri);
    }
    scene.recompute_bbox();
    Ok(scene)
}

/// Writes the scene as an OBJ document (three vertices per face) with the
/// materials embedded as comment directives.
pub fn write_obj(scene: &Scene) -> String {
    let mut out = format!("# {SCENE_FORMAT_TAG} v1\n");
    for m in &scene.materials {
        let _ = writeln!(
            out,
            "# {INLINE_MATERIAL} {} {:?}",
            m.name, m.reflection_amplitude
        );
    }
    for t in &scene.triangles {
        for v in [t.a, t.b, t.c] {
            let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
    }
    let mut current = None;
    for (i, t) in scene.triangles.iter().enumerate() {
        if current != Some(t.material) {
            let _ = writeln!(out, "usemtl {}", scene.materials[t.material].name);
            current = Some(t.material);
        }
        let base = 3 * i + 1;
        let _ = writeln!(out, "f {} {} {}", base, base + 1, base + 2);
    }
    out
}

pub fn write_materials(scene: &Scene) -> String {
    let mut out = format!("# {SCENE_FORMAT_TAG} v1\n");
    for m in &scene.materials {
        let _ = writeln!(out, "{} {:?}", m.name, m.reflection_amplitude);
    }
    out
}
