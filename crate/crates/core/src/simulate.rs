//! Scene-to-map pipeline shared by the CLI and the bus service.

use std::time::Instant;

use crate::coverage::{crossing_weight, CoverageGrid, CoverageMap, MapMeta};
use crate::propagation::{Execution, PropagationError, RayTracer, TraceConfig, Transmitter};
use crate::scene::{AccelIndex, Scene};

/// Traces `cfg.rays` rays and accumulates the crossings on `grid`.
///
/// Batches run in parallel but their per-cell contributions are added in ray
/// order, so the result does not depend on the worker count.
pub fn simulate_coverage(
    scene: &Scene,
    index: &AccelIndex,
    tx: &Transmitter,
    grid: &CoverageGrid,
    cfg: &TraceConfig,
    exec: &Execution<'_>,
) -> Result<CoverageMap, PropagationError> {
    let started = Instant::now();
    let tracer = RayTracer::new(scene, index, *tx, grid.height, *cfg)?;
    let mut map = CoverageMap::empty(
        *grid,
        MapMeta {
            rays: cfg.rays,
            seed: cfg.seed,
            max_depth: cfg.max_depth,
            tx: Some(*tx),
            duration_s: 0.0,
        },
    );
    let cell_area = grid.cell_area();
    tracer.for_each_batch(
        exec,
        |tracer, range| {
            let mut contributions: Vec<(u32, f64)> = Vec::new();
            tracer.trace_range(range, &mut |c| {
                if let Some((i, j)) = grid.world_to_cell(c.x, c.y) {
                    let w = crossing_weight(&c, cfg.rays, cell_area);
                    contributions.push((grid.offset(i, j) as u32, w));
                }
            });
            contributions
        },
        |contributions| {
            for (k, w) in contributions {
                map.gain[k as usize] += w;
                map.hits[k as usize] += 1;
            }
        },
    )?;
    map.meta.duration_s = started.elapsed().as_secs_f64();
    Ok(map)
}
