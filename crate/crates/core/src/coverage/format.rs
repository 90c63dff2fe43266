//! `raycover-map v1` text document.
//!
//! ```text
//! # raycover-map v1
//! origin_x <f64>
//! origin_y <f64>
//! cell_size <f64>
//! cells_x <usize>
//! cells_y <usize>
//! height <f64>
//! rays <u64>
//! max_depth <u32>
//! seed <u64>
//! tx none | tx <x> <y> <z> <frequency_hz> <isotropic|directional> <exponent> <bx> <by> <bz>
//! gain
//! <cells_y lines of cells_x values, j = 0 first>
//! hits
//! <cells_y lines of cells_x counts>
//! end
//! ```
//!
//! Gains are written with ten significant digits so the document is
//! byte-stable under last-bit differences in the reduction order.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{CoverageError, CoverageGrid, CoverageMap, MapMeta};
use crate::geometry::Vec3;
use crate::propagation::{AntennaPattern, Transmitter};

pub const MAP_FORMAT_TAG: &str = "raycover-map";

const HEADER_KEYS: &[&str] = &[
    "origin_x",
    "origin_y",
    "cell_size",
    "cells_x",
    "cells_y",
    "height",
    "rays",
    "max_depth",
    "seed",
    "tx",
];

pub fn encode_map(map: &CoverageMap) -> String {
    let g = &map.grid;
    let mut out = String::with_capacity(g.cells() * 18 + 512);
    let _ = writeln!(out, "# {MAP_FORMAT_TAG} v1");
    let _ = writeln!(out, "origin_x {:?}", g.x0);
    let _ = writeln!(out, "origin_y {:?}", g.y0);
    let _ = writeln!(out, "cell_size {:?}", g.cell_size);
    let _ = writeln!(out, "cells_x {}", g.ni);
    let _ = writeln!(out, "cells_y {}", g.nj);
    let _ = writeln!(out, "height {:?}", g.height);
    let _ = writeln!(out, "rays {}", map.meta.rays);
    let _ = writeln!(out, "max_depth {}", map.meta.max_depth);
    let _ = writeln!(out, "seed {}", map.meta.seed);
    match &map.meta.tx {
        None => out.push_str("tx none\n"),
        Some(tx) => {
            let (kind, exponent) = match tx.antenna {
                AntennaPattern::Isotropic => ("isotropic", 0.0),
                AntennaPattern::Directional { exponent } => ("directional", exponent),
            };
            let _ = writeln!(
                out,
                "tx {:?} {:?} {:?} {:?} {} {:?} {:?} {:?} {:?}",
                tx.position.x,
                tx.position.y,
                tx.position.z,
                tx.frequency_hz,
                kind,
                exponent,
                tx.boresight.x,
                tx.boresight.y,
                tx.boresight.z
            );
        }
    }
    out.push_str("gain\n");
    for row in map.gain.chunks(g.ni) {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            if *v == 0.0 {
                out.push('0');
            } else {
                let _ = write!(out, "{v:.9e}");
            }
        }
        out.push('\n');
    }
    out.push_str("hits\n");
    for row in map.hits.chunks(g.ni) {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

fn format_err(line: usize, message: impl Into<String>) -> CoverageError {
    CoverageError::Format {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, s: &str) -> Result<T, CoverageError> {
    s.parse()
        .map_err(|_| format_err(line, format!("`{key}`: cannot parse `{s}`")))
}

fn parse_tx(line: usize, value: &str) -> Result<Option<Transmitter>, CoverageError> {
    if value == "none" {
        return Ok(None);
    }
    let f: Vec<&str> = value.split_whitespace().collect();
    if f.len() != 9 {
        return Err(format_err(line, "`tx` needs 9 fields or `none`"));
    }
    let num = |k: usize| parse_num::<f64>(line, "tx", f[k]);
    let antenna = match f[4] {
        "isotropic" => AntennaPattern::Isotropic,
        "directional" => AntennaPattern::Directional { exponent: num(5)? },
        other => return Err(format_err(line, format!("unknown antenna `{other}`"))),
    };
    Transmitter::new(
        Vec3::new(num(0)?, num(1)?, num(2)?),
        num(3)?,
        antenna,
        Vec3::new(num(6)?, num(7)?, num(8)?),
    )
    .map(Some)
    .map_err(|e| format_err(line, e.to_string()))
}

fn read_block<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    grid: &CoverageGrid,
    name: &str,
) -> Result<Vec<&'a str>, CoverageError> {
    let mut values = Vec::with_capacity(grid.cells());
    for _ in 0..grid.nj {
        let (n, line) = lines
            .next()
            .ok_or_else(|| format_err(0, format!("`{name}` section truncated")))?;
        let before = values.len();
        values.extend(line.split_whitespace());
        if values.len() - before != grid.ni {
            return Err(format_err(
                n,
                format!(
                    "`{name}` row has {} values, expected {}",
                    values.len() - before,
                    grid.ni
                ),
            ));
        }
    }
    Ok(values)
}

pub fn decode_map(text: &str) -> Result<CoverageMap, CoverageError> {
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));
    match lines.next() {
        Some((_, first)) if first == format!("# {MAP_FORMAT_TAG} v1") => {}
        Some((_, first)) if first.starts_with(&format!("# {MAP_FORMAT_TAG}")) => {
            return Err(format_err(1, format!("unsupported version: `{first}`")));
        }
        _ => {
            return Err(format_err(
                1,
                format!("missing `# {MAP_FORMAT_TAG} v1` header"),
            ))
        }
    }

    let mut header: HashMap<&str, (usize, &str)> = HashMap::new();
    let mut gain_line = 0;
    for (n, line) in lines.by_ref() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "gain" {
            gain_line = n;
            break;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| format_err(n, format!("expected `key value`, found `{line}`")))?;
        if !HEADER_KEYS.contains(&key) {
            return Err(format_err(n, format!("unknown header field `{key}`")));
        }
        if header.insert(key, (n, value.trim())).is_some() {
            return Err(format_err(n, format!("duplicate header field `{key}`")));
        }
    }
    if gain_line == 0 {
        return Err(format_err(text.lines().count(), "missing `gain` section"));
    }
    let field = |key: &str| {
        header
            .get(key)
            .copied()
            .ok_or_else(|| format_err(gain_line, format!("missing header field `{key}`")))
    };
    let f64_field = |key: &str| field(key).and_then(|(n, v)| parse_num::<f64>(n, key, v));
    let usize_field = |key: &str| field(key).and_then(|(n, v)| parse_num::<usize>(n, key, v));

    let grid = CoverageGrid::new(
        f64_field("origin_x")?,
        f64_field("origin_y")?,
        f64_field("cell_size")?,
        usize_field("cells_x")?,
        usize_field("cells_y")?,
        f64_field("height")?,
    )
    .map_err(|e| format_err(gain_line, e.to_string()))?;
    let (n, v) = field("rays")?;
    let rays: u64 = parse_num(n, "rays", v)?;
    let (n, v) = field("max_depth")?;
    let max_depth: u32 = parse_num(n, "max_depth", v)?;
    let (n, v) = field("seed")?;
    let seed: u64 = parse_num(n, "seed", v)?;
    let (n, v) = field("tx")?;
    let tx = parse_tx(n, v)?;

    let gain = read_block(&mut lines, &grid, "gain")?
        .into_iter()
        .map(|s| {
            let v: f64 = parse_num(0, "gain", s)?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(format_err(
                    0,
                    format!("gain value `{s}` must be finite and >= 0"),
                ))
            }
        })
        .collect::<Result<Vec<f64>, _>>()?;
    match lines.next() {
        Some((_, "hits")) => {}
        Some((n, other)) => return Err(format_err(n, format!("expected `hits`, found `{other}`"))),
        None => return Err(format_err(0, "missing `hits` section")),
    }
    let hits = read_block(&mut lines, &grid, "hits")?
        .into_iter()
        .map(|s| parse_num::<u32>(0, "hits", s))
        .collect::<Result<Vec<u32>, _>>()?;
    match lines.next() {
        Some((_, "end")) => {}
        _ => return Err(format_err(0, "missing `end` marker")),
    }
    if gain.iter().zip(&hits).any(|(&g, &h)| h == 0 && g != 0.0) {
        return Err(format_err(0, "cell with zero hits carries non-zero gain"));
    }
    Ok(CoverageMap {
        grid,
        gain,
        hits,
        meta: MapMeta {
            rays,
            seed,
            max_depth,
            tx,
            duration_s: 0.0,
        },
    })
}
