//! Binary PPM (P6) rendering of label grids and boundary sets.
//!
//! Grid row 0 is drawn at the bottom of the image, so axis 1 runs rightward
//! and axis 2 upward.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basinmap::{BasinMap, SENTINEL};
use crate::error::{Error, Result};
use crate::fractal::BoundaryGrid;

pub type Rgb = [u8; 3];

const SENTINEL_RGB: Rgb = [0, 0, 0];
const BOUNDARY_RGB: Rgb = [0, 0, 0];
const BACKGROUND_RGB: Rgb = [255, 255, 255];
const SENTINEL_GREY: Rgb = [128, 128, 128];

/// Label → colour mapping. Hues are spread by the golden ratio from a
/// seed-dependent offset, so consecutive labels stay far apart on the wheel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Palette {
    offset: f64,
}

impl Palette {
    pub fn new(seed: u64) -> Self {
        Palette {
            offset: ChaCha8Rng::seed_from_u64(seed).random::<f64>(),
        }
    }

    pub fn color(&self, label: i32) -> Rgb {
        if label == SENTINEL {
            return SENTINEL_RGB;
        }
        const GOLDEN: f64 = 0.618_033_988_749_894_9;
        let hue = (self.offset + label as f64 * GOLDEN).fract();
        // alternate value bands so labels that land on nearby hues still differ
        let value = if label % 2 == 0 { 0.95 } else { 0.75 };
        hsv_to_rgb(hue, 0.7, value)
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let h6 = h * 6.0;
    let sector = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let byte = |c: f64| (c * 255.0).round().clamp(0.0, 255.0) as u8;
    [byte(r), byte(g), byte(b)]
}

/// Minimal in-memory RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Top-to-bottom rows of RGB triples.
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let o = 3 * (y * self.width + x);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn parse_ppm(bytes: &[u8]) -> Result<Image> {
        let bad = |m: &str| Error::Validation(format!("not a binary PPM: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad("expected P6 with maxval 255"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let pixels = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?.to_vec();
        if pixels.len() != 3 * width * height {
            return Err(bad("raster size mismatch"));
        }
        Ok(Image { width, height, pixels })
    }
}

fn paint(nx: usize, ny: usize, f: impl Fn(usize, usize) -> Rgb) -> Image {
    let mut pixels = Vec::with_capacity(3 * nx * ny);
    for row in (0..ny).rev() {
        for ix in 0..nx {
            pixels.extend_from_slice(&f(ix, row));
        }
    }
    Image {
        width: nx,
        height: ny,
        pixels,
    }
}

/// One pixel per cell; boundary cells drawn black when an overlay is given.
pub fn render_basin(bm: &BasinMap, palette_seed: u64, overlay: Option<&BoundaryGrid>) -> Image {
    let palette = Palette::new(palette_seed);
    paint(bm.nx, bm.ny, |ix, iy| match overlay {
        Some(bg) if bg.at(ix, iy) => BOUNDARY_RGB,
        _ => palette.color(bm.at(ix, iy)),
    })
}

/// Boundary cells black on white; sentinel cells grey.
pub fn render_boundary(bm: &BasinMap, bg: &BoundaryGrid) -> Image {
    paint(bm.nx, bm.ny, |ix, iy| {
        if bg.at(ix, iy) {
            BOUNDARY_RGB
        } else if bm.at(ix, iy) == SENTINEL {
            SENTINEL_GREY
        } else {
            BACKGROUND_RGB
        }
    })
}
