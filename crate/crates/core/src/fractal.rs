//! Basin-boundary extraction and fractality measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basinmap::{BasinMap, SENTINEL};
use crate::error::{Error, Result};

/// Smallest box side (in cells) admitted to the dimension fit.
pub const MIN_FIT_EPSILON: usize = 2;
/// Smallest box count admitted to the dimension fit.
pub const MIN_FIT_COUNT: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub nx: usize,
    pub ny: usize,
    /// `cells[iy * nx + ix]`
    pub cells: Vec<bool>,
}

impl BoundaryGrid {
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.cells.len() as f64
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.nx + ix]
    }
}

/// A cell is on the boundary when one of its 4 neighbours carries a different
/// label. Sentinel cells are never boundary and never make a neighbour boundary.
pub fn extract_boundary(bm: &BasinMap) -> BoundaryGrid {
    let (nx, ny) = (bm.nx, bm.ny);
    let mut cells = vec![false; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let here = bm.at(ix, iy);
            if here == SENTINEL {
                continue;
            }
            let differs = |jx: usize, jy: usize| {
                let other = bm.at(jx, jy);
                other != SENTINEL && other != here
            };
            cells[iy * nx + ix] = (ix > 0 && differs(ix - 1, iy))
                || (ix + 1 < nx && differs(ix + 1, iy))
                || (iy > 0 && differs(ix, iy - 1))
                || (iy + 1 < ny && differs(ix, iy + 1));
        }
    }
    BoundaryGrid { nx, ny, cells }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleCount {
    pub epsilon_cells: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCountResult {
    pub scales: Vec<ScaleCount>,
    pub d_box: Option<f64>,
    pub fit_intercept: Option<f64>,
    pub fit_r2: Option<f64>,
    /// Smallest and largest ε that entered the fit.
    pub scale_window: Option<(usize, usize)>,
    pub min_fit_epsilon: usize,
    pub min_fit_count: usize,
}

/// Powers of two up to half the shorter grid side.
pub fn default_scales(nx: usize, ny: usize) -> Vec<usize> {
    let limit = nx.min(ny) / 2;
    std::iter::successors(Some(1usize), |e| Some(e * 2))
        .take_while(|&e| e <= limit)
        .collect()
}

/// Counts occupied boxes of an origin-anchored `ε × ε` mesh for each scale.
pub fn box_count(bg: &BoundaryGrid, scales: &[usize]) -> Result<BoxCountResult> {
    if bg.count() == 0 {
        return Err(Error::EmptyBoundary);
    }
    let limit = bg.nx.min(bg.ny) / 2;
    let mut out = Vec::with_capacity(scales.len());
    for &eps in scales {
        if eps == 0 || eps > limit.max(1) {
            return Err(Error::Argument(format!(
                "box size {eps} outside [1, {}] for a {}x{} grid",
                limit.max(1),
                bg.nx,
                bg.ny
            )));
        }
        let bx = bg.nx.div_ceil(eps);
        let by = bg.ny.div_ceil(eps);
        let mut occupied = vec![false; bx * by];
        for iy in 0..bg.ny {
            let row = &bg.cells[iy * bg.nx..(iy + 1) * bg.nx];
            for (ix, &c) in row.iter().enumerate() {
                if c {
                    occupied[(iy / eps) * bx + ix / eps] = true;
                }
            }
        }
        out.push(ScaleCount {
            epsilon_cells: eps,
            count: occupied.iter().filter(|o| **o).count(),
        });
    }
    Ok(BoxCountResult {
        scales: out,
        d_box: None,
        fit_intercept: None,
        fit_r2: None,
        scale_window: None,
        min_fit_epsilon: MIN_FIT_EPSILON,
        min_fit_count: MIN_FIT_COUNT,
    })
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fits `ln N(ε)` against `ln(1/ε)` over scales with `ε ≥ 2` and `N(ε) ≥ 8`.
pub fn fit_box_dimension(mut counts: BoxCountResult) -> Result<BoxCountResult> {
    let used: Vec<ScaleCount> = counts
        .scales
        .iter()
        .copied()
        .filter(|s| s.epsilon_cells >= counts.min_fit_epsilon && s.count >= counts.min_fit_count)
        .collect();
    if used.len() < 3 {
        return Err(Error::InsufficientScales(used.len()));
    }
    let xs: Vec<f64> = used.iter().map(|s| (1.0 / s.epsilon_cells as f64).ln()).collect();
    let ys: Vec<f64> = used.iter().map(|s| (s.count as f64).ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    let lo = used.iter().map(|s| s.epsilon_cells).min().unwrap();
    let hi = used.iter().map(|s| s.epsilon_cells).max().unwrap();
    counts.d_box = Some(slope);
    counts.fit_intercept = Some(intercept);
    counts.fit_r2 = Some(r2);
    counts.scale_window = Some((lo, hi));
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyResult {
    /// Separations in slice units.
    pub epsilons: Vec<f64>,
    pub uncertain_fraction: Vec<f64>,
    pub alpha: Option<f64>,
    pub implied_dimension: Option<f64>,
    /// Set when fewer than two separations had a nonzero fraction.
    pub fit_failed: bool,
}

/// Probes final-state sensitivity: for each separation `ε` (slice units),
/// draws `n_pairs` cell pairs `ε` apart in a random direction and records the
/// fraction landing on different labels. `ln f` against `ln ε` gives the
/// uncertainty exponent `α`; the boundary dimension estimate is `2 − α`.
///
/// `cell_size` is the slice extent of one cell along each axis.
pub fn uncertainty_exponent(
    bm: &BasinMap,
    cell_size: (f64, f64),
    epsilons: &[f64],
    n_pairs: usize,
    seed: u64,
) -> Result<UncertaintyResult> {
    if n_pairs == 0 {
        return Err(Error::Argument("n_pairs must be positive".into()));
    }
    if !(cell_size.0 > 0.0 && cell_size.1 > 0.0) {
        return Err(Error::Argument("cell size must be positive".into()));
    }
    let (nx, ny) = (bm.nx as i64, bm.ny as i64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fractions = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let (rx, ry) = (eps / cell_size.0, eps / cell_size.1);
        if !(eps > 0.0) || rx >= nx as f64 || ry >= ny as f64 {
            return Err(Error::Argument(format!(
                "separation {eps} must be positive and inside the slice"
            )));
        }
        let mut differing = 0usize;
        let mut drawn = 0usize;
        let mut attempts = 0usize;
        while drawn < n_pairs {
            attempts += 1;
            if attempts > 1000 * n_pairs {
                return Err(Error::Argument(format!(
                    "could not place {n_pairs} pairs at separation {eps} (map mostly sentinel?)"
                )));
            }
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let dx = (rx * angle.cos()).round() as i64;
            let dy = (ry * angle.sin()).round() as i64;
            if dx == 0 && dy == 0 {
                continue;
            }
            let x0 = rng.random_range(0..nx as u64) as i64;
            let y0 = rng.random_range(0..ny as u64) as i64;
            let (x1, y1) = (x0 + dx, y0 + dy);
            if x1 < 0 || x1 >= nx || y1 < 0 || y1 >= ny {
                continue;
            }
            let a = bm.at(x0 as usize, y0 as usize);
            let b = bm.at(x1 as usize, y1 as usize);
            if a == SENTINEL || b == SENTINEL {
                continue;
            }
            drawn += 1;
            if a != b {
                differing += 1;
            }
        }
        fractions.push(differing as f64 / n_pairs as f64);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = epsilons
        .iter()
        .zip(&fractions)
        .filter(|(_, &f)| f > 0.0)
        .map(|(&e, &f)| (e.ln(), f.ln()))
        .unzip();
    let (alpha, fit_failed) = if xs.len() >= 2 {
        (Some(linear_fit(&xs, &ys).0), false)
    } else {
        (None, true)
    };
    Ok(UncertaintyResult {
        epsilons: epsilons.to_vec(),
        uncertain_fraction: fractions,
        alpha,
        implied_dimension: alpha.map(|a| 2.0 - a),
        fit_failed,
    })
}

/// Rasterized Sierpinski triangle on a `2^depth` square grid.
pub fn sierpinski_grid(depth: u32) -> BoundaryGrid {
    let n = 1usize << depth;
    let cells = (0..n * n).map(|i| (i / n) & (i % n) == 0).collect();
    BoundaryGrid { nx: n, ny: n, cells }
}
