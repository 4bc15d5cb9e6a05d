//! Vector Pattern State fingerprints.
//!
//! For every node pair `i < j` the scalar observables are cross-correlated,
//! `R(τ) = Σ_t s_i(t) · s_j(t − τ)`, over `τ ∈ [−max_lag, max_lag]`. The
//! maximizing lag `τ*` is paired with the mean squared distance between the
//! two full node trajectories at that lag. The fingerprint is all lags
//! (pair order `(0,1), (0,2), …, (N−2,N−1)`) followed by `β`-scaled costs in
//! the same order.
//!
//! Lag ties are broken towards the smallest `|τ|`, then towards positive `τ`.
//! Direct summation is the reference definition of `R`; the FFT path only
//! proposes candidates, which are re-scored by direct summation before the
//! final choice, so both paths return identical lags.

use std::cell::RefCell;
use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{observable_series, ObservableKind, TrajectorySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrMode {
    /// Indices wrap modulo the series length.
    Circular,
    /// `t` runs over `[max_lag, T − max_lag)` so every lag sums the same number of terms.
    LinearValid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrNormalization {
    Raw,
    ZeroMeanUnitNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VpsConfig {
    pub beta: f64,
    /// Lag search bound in samples; `None` means a quarter of the stored window.
    pub max_lag: Option<usize>,
    pub corr_mode: CorrMode,
    pub normalization: CorrNormalization,
}

impl Default for VpsConfig {
    fn default() -> Self {
        VpsConfig {
            beta: 1.0,
            max_lag: None,
            corr_mode: CorrMode::LinearValid,
            normalization: CorrNormalization::Raw,
        }
    }
}

impl VpsConfig {
    pub fn resolved_max_lag(&self, n_samples: usize) -> usize {
        self.max_lag.unwrap_or(n_samples / 4)
    }

    /// Checks the lag bound against a series length.
    pub fn validate_for(&self, n_samples: usize) -> Result<usize> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Validation(format!("beta must be >= 0, got {}", self.beta)));
        }
        let max_lag = self.resolved_max_lag(n_samples);
        if max_lag >= n_samples {
            return Err(Error::Validation(format!(
                "max_lag {max_lag} must be below the series length {n_samples}"
            )));
        }
        if self.corr_mode == CorrMode::LinearValid && n_samples <= 2 * max_lag {
            return Err(Error::Validation(format!(
                "linear-valid correlation needs length > 2*max_lag ({n_samples} <= {})",
                2 * max_lag
            )));
        }
        Ok(max_lag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagEstimate {
    pub tau_star: i64,
    pub correlation_at_tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAlignment {
    pub tau_star: i64,
    pub correlation_at_tau: f64,
    pub cost_at_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpsVector {
    pub n_nodes: usize,
    pub entries: Vec<f64>,
}

impl VpsVector {
    pub fn n_pairs(&self) -> usize {
        self.n_nodes * (self.n_nodes - 1) / 2
    }

    pub fn lags(&self) -> &[f64] {
        &self.entries[..self.n_pairs()]
    }

    pub fn costs(&self) -> &[f64] {
        &self.entries[self.n_pairs()..]
    }
}

/// Pair `(i, j)`, `i < j`, in fingerprint order.
pub fn pair_order(n_nodes: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_nodes).flat_map(move |i| (i + 1..n_nodes).map(move |j| (i, j)))
}

/// Lags in tie-break preference order: 0, 1, −1, 2, −2, …
fn lag_order(max_lag: usize) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_lag as i64).flat_map(|k| [k, -k]))
}

fn prepare(series: &[f64], norm: CorrNormalization) -> Result<Vec<f64>> {
    match norm {
        CorrNormalization::Raw => Ok(series.to_vec()),
        CorrNormalization::ZeroMeanUnitNorm => {
            let mean = series.iter().sum::<f64>() / series.len() as f64;
            let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
            let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateSignal(
                    "series is constant; it has no zero-mean unit-norm form".into(),
                ));
            }
            Ok(centered.into_iter().map(|v| v / norm).collect())
        }
    }
}

/// `R(τ)` by direct summation in increasing `t`; this is the reference value.
pub fn direct_correlation(a: &[f64], b: &[f64], tau: i64, mode: CorrMode, max_lag: usize) -> f64 {
    let n = a.len();
    match mode {
        CorrMode::Circular => {
            let s = tau.rem_euclid(n as i64) as usize;
            let mut acc = 0.0;
            for t in 0..s {
                acc += a[t] * b[t + n - s];
            }
            for t in s..n {
                acc += a[t] * b[t - s];
            }
            acc
        }
        CorrMode::LinearValid => {
            let mut acc = 0.0;
            for t in max_lag..n - max_lag {
                acc += a[t] * b[(t as i64 - tau) as usize];
            }
            acc
        }
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Argument("empty series".into()));
    }
    Ok(())
}

/// Correlations closer to the maximum than this fraction of `‖a‖·‖b‖` count
/// as tied, so the tie-break survives rounding on periodic signals whose
/// correlation peaks repeat exactly.
pub const CORRELATION_TIE_RTOL: f64 = 1e-9;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Lag maximizing the cross-correlation of `series_i` against `series_j`.
pub fn best_lag(series_i: &[f64], series_j: &[f64], cfg: &VpsConfig) -> Result<LagEstimate> {
    check_pair(series_i, series_j)?;
    let max_lag = cfg.validate_for(series_i.len())?;
    let a = prepare(series_i, cfg.normalization)?;
    let b = prepare(series_j, cfg.normalization)?;
    let tol = CORRELATION_TIE_RTOL * norm(&a) * norm(&b);
    Ok(pick_direct(&a, &b, cfg.corr_mode, max_lag, tol))
}

/// First lag in preference order whose score is within `tol` of the best.
fn choose(scored: &[(i64, f64)], tol: f64) -> LagEstimate {
    let top = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let &(tau_star, correlation_at_tau) = scored
        .iter()
        .find(|s| s.1 >= top - tol)
        .expect("at least lag 0 is scored");
    LagEstimate {
        tau_star,
        correlation_at_tau,
    }
}

fn pick_direct(a: &[f64], b: &[f64], mode: CorrMode, max_lag: usize, tol: f64) -> LagEstimate {
    let scored: Vec<(i64, f64)> = lag_order(max_lag)
        .map(|tau| (tau, direct_correlation(a, b, tau, mode, max_lag)))
        .collect();
    choose(&scored, tol)
}

/// Final choice from approximate correlations: every lag that could be within
/// `tol` of the true maximum given the FFT error `band` is re-scored directly.
fn pick_refined(
    a: &[f64],
    b: &[f64],
    mode: CorrMode,
    max_lag: usize,
    approx: impl Fn(i64) -> f64,
    band: f64,
    tol: f64,
) -> LagEstimate {
    let top = lag_order(max_lag)
        .map(&approx)
        .fold(f64::NEG_INFINITY, f64::max);
    let scored: Vec<(i64, f64)> = lag_order(max_lag)
        .filter(|&tau| approx(tau) >= top - 2.0 * band - tol)
        .map(|tau| (tau, direct_correlation(a, b, tau, mode, max_lag)))
        .collect();
    choose(&scored, tol)
}

/// Mean squared Euclidean distance between `x_i(s)` and `x_j(s − τ)`.
///
/// `traj_i`/`traj_j` hold `dim` consecutive series of equal length (the
/// layout of [`TrajectorySet::node_block`]). Circular mode averages over the
/// whole wrapped window; linear-valid mode over the overlap of length `T − |τ|`.
pub fn alignment_cost(
    traj_i: &[f64],
    traj_j: &[f64],
    dim: usize,
    tau: i64,
    mode: CorrMode,
) -> Result<f64> {
    if dim == 0 || traj_i.len() != traj_j.len() || !traj_i.len().is_multiple_of(dim) {
        return Err(Error::Argument(format!(
            "trajectory blocks of length {} / {} do not hold {dim} equal series",
            traj_i.len(),
            traj_j.len()
        )));
    }
    let n = traj_i.len() / dim;
    if n == 0 {
        return Err(Error::Argument("empty trajectories".into()));
    }
    match mode {
        CorrMode::Circular => {
            let s = tau.rem_euclid(n as i64) as usize;
            let mut acc = 0.0;
            for c in 0..dim {
                let a = &traj_i[c * n..(c + 1) * n];
                let b = &traj_j[c * n..(c + 1) * n];
                for t in 0..s {
                    let d = a[t] - b[t + n - s];
                    acc += d * d;
                }
                for t in s..n {
                    let d = a[t] - b[t - s];
                    acc += d * d;
                }
            }
            Ok(acc / n as f64)
        }
        CorrMode::LinearValid => {
            if tau.unsigned_abs() as usize >= n {
                return Err(Error::Argument(format!(
                    "lag {tau} leaves no overlap in a window of {n} samples"
                )));
            }
            let lo = tau.max(0) as usize;
            let hi = (n as i64 + tau.min(0)) as usize;
            let mut acc = 0.0;
            for c in 0..dim {
                let a = &traj_i[c * n..(c + 1) * n];
                let b = &traj_j[c * n..(c + 1) * n];
                for t in lo..hi {
                    let d = a[t] - b[(t as i64 - tau) as usize];
                    acc += d * d;
                }
            }
            Ok(acc / (hi - lo) as f64)
        }
    }
}

pub fn vps_distance(e1: &VpsVector, e2: &VpsVector) -> Result<f64> {
    if e1.entries.len() != e2.entries.len() {
        return Err(Error::Argument(format!(
            "VPS lengths differ ({} vs {})",
            e1.entries.len(),
            e2.entries.len()
        )));
    }
    Ok(squared_distance(&e1.entries, &e2.entries).sqrt())
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Whether the transform path is cheaper than direct summation for one pair.
fn prefer_fft(n: usize, max_lag: usize, mode: CorrMode) -> bool {
    let terms = match mode {
        CorrMode::Circular => n,
        CorrMode::LinearValid => n - 2 * max_lag,
    };
    let direct = (2 * max_lag + 1) * terms;
    let log_n = (usize::BITS - n.leading_zeros()) as usize;
    direct > 12 * n * log_n
}

/// Embedding used for the alignment cost: full node state, or `(cos θ, sin θ)`
/// for phase oscillators so that unwrapped phases compare on the circle.
fn cost_blocks(traj: &TrajectorySet, observable: ObservableKind) -> (Vec<Vec<f64>>, usize) {
    match observable {
        ObservableKind::SinPhase => {
            let blocks = (0..traj.n_nodes())
                .map(|i| {
                    let th = traj.series(i, 0);
                    th.iter().map(|v| v.cos()).chain(th.iter().map(|v| v.sin())).collect()
                })
                .collect();
            (blocks, 2)
        }
        ObservableKind::Component0 => (
            (0..traj.n_nodes())
                .map(|i| traj.node_block(i).to_vec())
                .collect(),
            traj.node_dim(),
        ),
    }
}

/// Optimal lag and alignment cost for every pair `i < j`, in fingerprint order.
pub fn align_pairs(
    traj: &TrajectorySet,
    cfg: &VpsConfig,
    observable: ObservableKind,
) -> Result<Vec<PairAlignment>> {
    let n_nodes = traj.n_nodes();
    if n_nodes < 2 {
        return Err(Error::Argument("a fingerprint needs at least 2 nodes".into()));
    }
    let n = traj.n_samples();
    let max_lag = cfg.validate_for(n)?;
    let obs = observable_series(traj, observable)?;
    let prepared = obs
        .iter()
        .map(|s| prepare(s, cfg.normalization))
        .collect::<Result<Vec<_>>>()?;
    let norms: Vec<f64> = prepared.iter().map(|s| norm(s)).collect();
    let lags = if prefer_fft(n, max_lag, cfg.corr_mode) {
        fft_lags(&prepared, &norms, cfg.corr_mode, max_lag)
    } else {
        pair_order(n_nodes)
            .map(|(i, j)| {
                let tol = CORRELATION_TIE_RTOL * norms[i] * norms[j];
                pick_direct(&prepared[i], &prepared[j], cfg.corr_mode, max_lag, tol)
            })
            .collect()
    };
    let (blocks, dim) = cost_blocks(traj, observable);
    pair_order(n_nodes)
        .zip(lags)
        .map(|((i, j), lag)| {
            let cost = alignment_cost(&blocks[i], &blocks[j], dim, lag.tau_star, cfg.corr_mode)?;
            Ok(PairAlignment {
                tau_star: lag.tau_star,
                correlation_at_tau: lag.correlation_at_tau,
                cost_at_tau: cost,
            })
        })
        .collect()
}

fn fft_lags(prepared: &[Vec<f64>], norms: &[f64], mode: CorrMode, max_lag: usize) -> Vec<LagEstimate> {
    let n = prepared[0].len();
    let (fwd, inv) = plans(n);
    let spectrum = |values: &mut dyn Iterator<Item = f64>| -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.map(|v| Complex64::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        buf
    };
    // left operand: windowed in linear-valid mode; right operand: full series
    let left: Vec<Vec<Complex64>> = prepared
        .iter()
        .map(|s| match mode {
            CorrMode::Circular => spectrum(&mut s.iter().copied()),
            CorrMode::LinearValid => spectrum(&mut s.iter().enumerate().map(|(t, &v)| {
                if t >= max_lag && t < n - max_lag {
                    v
                } else {
                    0.0
                }
            })),
        })
        .collect();
    let right: Vec<Vec<Complex64>> = match mode {
        CorrMode::Circular => left.clone(),
        CorrMode::LinearValid => prepared.iter().map(|s| spectrum(&mut s.iter().copied())).collect(),
    };
    let pairs: Vec<(usize, usize)> = pair_order(prepared.len()).collect();
    let mut out = Vec::with_capacity(pairs.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    // Two real correlations per complex inverse transform: real part carries
    // the first pair, imaginary part the second.
    for chunk in pairs.chunks(2) {
        let (i0, j0) = chunk[0];
        let second = chunk.get(1).copied();
        for k in 0..n {
            let p = left[i0][k] * right[j0][k].conj();
            let q = match second {
                Some((i1, j1)) => left[i1][k] * right[j1][k].conj(),
                None => Complex64::new(0.0, 0.0),
            };
            buf[k] = p + Complex64::new(-q.im, q.re);
        }
        inv.process(&mut buf);
        for (slot, &(i, j)) in chunk.iter().enumerate() {
            let at = |tau: i64| {
                let c = buf[tau.rem_euclid(n as i64) as usize];
                scale * if slot == 0 { c.re } else { c.im }
            };
            let band = 1e-9 * norms[i] * norms[j] + f64::MIN_POSITIVE;
            let tol = CORRELATION_TIE_RTOL * norms[i] * norms[j];
            out.push(pick_refined(&prepared[i], &prepared[j], mode, max_lag, at, band, tol));
        }
    }
    out
}

pub fn build_vps(
    traj: &TrajectorySet,
    cfg: &VpsConfig,
    observable: ObservableKind,
) -> Result<VpsVector> {
    let pairs = align_pairs(traj, cfg, observable)?;
    let mut entries = Vec::with_capacity(2 * pairs.len());
    entries.extend(pairs.iter().map(|p| p.tau_star as f64));
    entries.extend(pairs.iter().map(|p| cfg.beta * p.cost_at_tau));
    Ok(VpsVector {
        n_nodes: traj.n_nodes(),
        entries,
    })
}

const MAGIC: &[u8; 4] = b"VPS1";

/// Binary VPS matrix: `VPS1`, `u32` row count, `u32` row length, then
/// little-endian `f64` entries row-major.
pub fn write_vps_rows<W: Write>(mut out: W, n_rows: usize, row_len: usize, data: &[f64]) -> std::io::Result<()> {
    assert_eq!(data.len(), n_rows * row_len);
    out.write_all(MAGIC)?;
    out.write_all(&(n_rows as u32).to_le_bytes())?;
    out.write_all(&(row_len as u32).to_le_bytes())?;
    let mut chunk = Vec::with_capacity(8 * 4096);
    for block in data.chunks(4096) {
        chunk.clear();
        for v in block {
            chunk.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&chunk)?;
    }
    Ok(())
}

/// Inverse of [`write_vps_rows`]; returns `(n_rows, row_len, data)`.
pub fn read_vps_rows<R: Read>(mut input: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut header = [0u8; 12];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Validation(format!("VPS header: {e}")))?;
    if &header[..4] != MAGIC {
        return Err(Error::Validation("not a VPS1 matrix file".into()));
    }
    let n_rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let row_len = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let len = n_rows * row_len;
    let mut data = Vec::with_capacity(len);
    let mut buf = vec![0u8; 8 * 4096];
    while data.len() < len {
        let take = (len - data.len()).min(4096);
        input.read_exact(&mut buf[..8 * take]).map_err(|_| {
            Error::Shape(format!("VPS body ends after {} of {len} values", data.len()))
        })?;
        data.extend(buf[..8 * take].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())));
    }
    if input.read(&mut buf[..1]).map_err(|e| Error::Validation(format!("VPS body: {e}")))? != 0 {
        return Err(Error::Shape(format!("VPS body is longer than {len} values")));
    }
    Ok((n_rows, row_len, data))
}

/// CSV export: one fingerprint per line.
pub fn write_vps_csv<W: Write>(mut out: W, row_len: usize, data: &[f64]) -> std::io::Result<()> {
    for row in data.chunks(row_len.max(1)) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
