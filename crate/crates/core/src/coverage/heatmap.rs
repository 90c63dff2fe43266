use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::{to_db, CoverageError, CoverageMap};

pub const DEFAULT_DB_RANGE: (f64, f64) = (-140.0, -40.0);

const NO_DATA: [u8; 3] = [0, 0, 0];

// Evenly spaced stops of the matplotlib perceptual maps, purple to yellow.
const VIRIDIS: [[u8; 3]; 11] = [
    [0x44, 0x01, 0x54],
    [0x48, 0x24, 0x75],
    [0x41, 0x44, 0x87],
    [0x35, 0x5f, 0x8d],
    [0x2a, 0x78, 0x8e],
    [0x21, 0x91, 0x8c],
    [0x22, 0xa8, 0x84],
    [0x44, 0xbf, 0x70],
    [0x7a, 0xd1, 0x51],
    [0xbd, 0xdf, 0x26],
    [0xfd, 0xe7, 0x25],
];

const PLASMA: [[u8; 3]; 11] = [
    [0x0d, 0x08, 0x87],
    [0x41, 0x04, 0x9d],
    [0x6a, 0x00, 0xa8],
    [0x8f, 0x0d, 0xa4],
    [0xb1, 0x2a, 0x90],
    [0xcc, 0x47, 0x78],
    [0xe1, 0x64, 0x62],
    [0xf2, 0x84, 0x4b],
    [0xfc, 0xa6, 0x36],
    [0xfc, 0xce, 0x25],
    [0xf0, 0xf9, 0x21],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Palette {
    #[default]
    Viridis,
    Plasma,
}

impl Palette {
    pub fn name(&self) -> &'static str {
        match self {
            Palette::Viridis => "viridis",
            Palette::Plasma => "plasma",
        }
    }

    fn stops(&self) -> &'static [[u8; 3]] {
        match self {
            Palette::Viridis => &VIRIDIS,
            Palette::Plasma => &PLASMA,
        }
    }

    /// Color at `t` in `[0, 1]` (clamped), linearly interpolated between stops.
    pub fn color(&self, t: f64) -> [u8; 3] {
        let stops = self.stops();
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let pos = t * (stops.len() - 1) as f64;
        let k = (pos.floor() as usize).min(stops.len() - 2);
        let f = pos - k as f64;
        let (a, b) = (stops[k], stops[k + 1]);
        std::array::from_fn(|c| (a[c] as f64 + (b[c] as f64 - a[c] as f64) * f).round() as u8)
    }

    pub fn low(&self) -> [u8; 3] {
        self.stops()[0]
    }

    pub fn high(&self) -> [u8; 3] {
        *self.stops().last().unwrap()
    }
}

impl FromStr for Palette {
    type Err = CoverageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "viridis" => Ok(Palette::Viridis),
            "plasma" => Ok(Palette::Plasma),
            other => Err(CoverageError::Invalid(format!("unknown palette `{other}`"))),
        }
    }
}

/// One pixel per cell, north (highest `j`) on the top row.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
    pub palette: Palette,
    pub db_range: (f64, f64),
}

impl Heatmap {
    /// Pixel for grid cell `(i, j)`.
    pub fn cell_pixel(&self, i: usize, j: usize) -> [u8; 3] {
        self.pixels[(self.height - 1 - j) * self.width + i]
    }

    pub fn rgb_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }

    /// Binary portable pixmap (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.rgb_bytes());
        out
    }

    /// Writes PNG, or PPM when the extension is `.ppm`.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
        {
            let mut f = std::fs::File::create(path)?;
            return f.write_all(&self.to_ppm());
        }
        image::save_buffer(
            path,
            &self.rgb_bytes(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(std::io::Error::other)
    }
}

pub fn render_heatmap(
    map: &CoverageMap,
    palette: Palette,
    db_range: (f64, f64),
) -> Result<Heatmap, CoverageError> {
    let (lo, hi) = db_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(CoverageError::Invalid(format!(
            "dB range ({lo}, {hi}) must satisfy lo < hi"
        )));
    }
    let db = to_db(map);
    let (w, h) = (map.grid.ni, map.grid.nj);
    let mut pixels = Vec::with_capacity(w * h);
    for row in (0..h).rev() {
        for i in 0..w {
            pixels.push(match db.at(i, row) {
                None => NO_DATA,
                Some(v) => palette.color((v - lo) / (hi - lo)),
            });
        }
    }
    Ok(Heatmap {
        width: w,
        height: h,
        pixels,
        palette,
        db_range,
    })
}
