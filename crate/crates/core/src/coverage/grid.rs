use crate::geometry::Vec3;

use super::CoverageError;

/// Default measurement-plane elevation above ground, meters.
pub const DEFAULT_HEIGHT: f64 = 1.5;

/// Regular grid of square cells on a horizontal plane.
///
/// Cell `(i, j)` covers `[x0 + i*d, x0 + (i+1)*d) x [y0 + j*d, y0 + (j+1)*d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageGrid {
    pub x0: f64,
    pub y0: f64,
    pub cell_size: f64,
    pub ni: usize,
    pub nj: usize,
    pub height: f64,
}

impl CoverageGrid {
    /// Grid from explicit parameters, checked for consistency.
    pub fn new(
        x0: f64,
        y0: f64,
        cell_size: f64,
        ni: usize,
        nj: usize,
        height: f64,
    ) -> Result<CoverageGrid, CoverageError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(CoverageError::Invalid(format!(
                "cell_size must be positive, got {cell_size}"
            )));
        }
        if ni == 0 || nj == 0 {
            return Err(CoverageError::Invalid(format!(
                "grid needs at least one cell per axis, got {ni}x{nj}"
            )));
        }
        if !(x0.is_finite() && y0.is_finite() && height.is_finite()) {
            return Err(CoverageError::Invalid(
                "grid origin and height must be finite".into(),
            ));
        }
        Ok(CoverageGrid {
            x0,
            y0,
            cell_size,
            ni,
            nj,
            height,
        })
    }

    pub fn cells(&self) -> usize {
        self.ni * self.nj
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    /// Row-major offset, `j` selecting the row.
    #[inline]
    pub fn offset(&self, i: usize, j: usize) -> usize {
        j * self.ni + i
    }

    /// `(x1, y1)` corner opposite the origin.
    pub fn far_corner(&self) -> (f64, f64) {
        (
            self.x0 + self.ni as f64 * self.cell_size,
            self.y0 + self.nj as f64 * self.cell_size,
        )
    }

    #[inline]
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.x0) / self.cell_size).floor();
        let fj = ((y - self.y0) / self.cell_size).floor();
        if fi >= 0.0 && fj >= 0.0 && fi < self.ni as f64 && fj < self.nj as f64 {
            Some((fi as usize, fj as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Result<Vec3, CoverageError> {
        if i >= self.ni || j >= self.nj {
            return Err(CoverageError::Invalid(format!(
                "cell ({i}, {j}) outside {}x{} grid",
                self.ni, self.nj
            )));
        }
        Ok(Vec3::new(
            self.x0 + (i as f64 + 0.5) * self.cell_size,
            self.y0 + (j as f64 + 0.5) * self.cell_size,
            self.height,
        ))
    }
}

/// Covers the extent `(x0, y0)..(x1, y1)` with `ceil` cells per axis.
pub fn make_grid(
    extent: (f64, f64, f64, f64),
    cell_size: f64,
    height: f64,
) -> Result<CoverageGrid, CoverageError> {
    let (x0, y0, x1, y1) = extent;
    if !(x1 > x0 && y1 > y0) {
        return Err(CoverageError::Invalid(format!(
            "extent ({x0}, {y0}, {x1}, {y1}) is empty"
        )));
    }
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(CoverageError::Invalid(format!(
            "cell_size must be positive, got {cell_size}"
        )));
    }
    let count = |span: f64| -> Result<usize, CoverageError> {
        let n = (span / cell_size).ceil();
        if !n.is_finite() || n > u32::MAX as f64 {
            return Err(CoverageError::Invalid(format!(
                "extent {span} m with cell_size {cell_size} m is too many cells"
            )));
        }
        Ok(n as usize)
    };
    CoverageGrid::new(x0, y0, cell_size, count(x1 - x0)?, count(y1 - y0)?, height)
}
