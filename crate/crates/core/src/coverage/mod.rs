//! Measurement grids, the Monte Carlo path-gain estimate per cell, and the
//! derived dB rasters and heatmaps.
//!
//! A ray launched uniformly over the sphere reaches a small plane patch of
//! area `A` at distance `d` and incidence `cos` with probability
//! `A cos / (4 pi d^2)`. Weighting each crossing by the inverse of that
//! density, `4 pi d^2 / (N A cos)`, turns the sum of `|h|^2` over a cell into
//! an unbiased estimate of the cell-averaged path gain.

mod format;
mod grid;
mod heatmap;

use std::f64::consts::PI;

use thiserror::Error;

use crate::propagation::{PlaneCrossing, Transmitter};

pub use format::{decode_map, encode_map, MAP_FORMAT_TAG};
pub use grid::{make_grid, CoverageGrid, DEFAULT_HEIGHT};
pub use heatmap::{render_heatmap, Heatmap, Palette, DEFAULT_DB_RANGE};

#[derive(Debug, Error, PartialEq)]
pub enum CoverageError {
    #[error("{0}")]
    Invalid(String),
    #[error("map document line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Provenance recorded alongside a map.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MapMeta {
    pub rays: u64,
    pub seed: u64,
    pub max_depth: u32,
    pub tx: Option<Transmitter>,
    /// Wall-clock seconds spent producing the map. Not persisted.
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    pub grid: CoverageGrid,
    /// Linear path gain per cell, row-major (see [`CoverageGrid::offset`]).
    pub gain: Vec<f64>,
    pub hits: Vec<u32>,
    pub meta: MapMeta,
}

/// Estimator weight of one crossing for a run of `rays` launches.
#[inline]
pub fn crossing_weight(c: &PlaneCrossing, rays: u64, cell_area: f64) -> f64 {
    c.h_sq * 4.0 * PI * c.path_length * c.path_length / (rays as f64 * cell_area * c.cos_incidence)
}

impl CoverageMap {
    pub fn empty(grid: CoverageGrid, meta: MapMeta) -> CoverageMap {
        CoverageMap {
            grid,
            gain: vec![0.0; grid.cells()],
            hits: vec![0; grid.cells()],
            meta,
        }
    }

    pub fn gain_at(&self, i: usize, j: usize) -> f64 {
        self.gain[self.grid.offset(i, j)]
    }

    pub fn hits_at(&self, i: usize, j: usize) -> u32 {
        self.hits[self.grid.offset(i, j)]
    }

    /// Adds one crossing; crossings outside the grid are ignored.
    #[inline]
    pub fn add(&mut self, c: &PlaneCrossing) {
        if let Some((i, j)) = self.grid.world_to_cell(c.x, c.y) {
            let k = self.grid.offset(i, j);
            self.gain[k] += crossing_weight(c, self.meta.rays, self.grid.cell_area());
            self.hits[k] += 1;
        }
    }

    pub fn total_hits(&self) -> u64 {
        self.hits.iter().map(|&h| h as u64).sum()
    }

    pub fn cells_with_hits(&self) -> usize {
        self.hits.iter().filter(|&&h| h > 0).count()
    }
}

/// Folds crossings from a run of `rays` launches into per-cell gains.
pub fn accumulate_map<'a>(
    grid: CoverageGrid,
    crossings: impl IntoIterator<Item = &'a PlaneCrossing>,
    rays: u64,
) -> Result<CoverageMap, CoverageError> {
    if rays == 0 {
        return Err(CoverageError::Invalid("ray count must be positive".into()));
    }
    let mut map = CoverageMap::empty(
        grid,
        MapMeta {
            rays,
            ..MapMeta::default()
        },
    );
    for c in crossings {
        map.add(c);
    }
    Ok(map)
}

/// Per-cell dB values; `None` marks cells without data.
#[derive(Debug, Clone, PartialEq)]
pub struct DbRaster {
    pub ni: usize,
    pub nj: usize,
    pub values: Vec<Option<f64>>,
}

impl DbRaster {
    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.values[j * self.ni + i]
    }
}

pub fn gain_to_db(gain: f64) -> Option<f64> {
    (gain > 0.0).then(|| 10.0 * gain.log10())
}

pub fn to_db(map: &CoverageMap) -> DbRaster {
    DbRaster {
        ni: map.grid.ni,
        nj: map.grid.nj,
        values: map
            .gain
            .iter()
            .zip(&map.hits)
            .map(|(&g, &h)| if h == 0 { None } else { gain_to_db(g) })
            .collect(),
    }
}
