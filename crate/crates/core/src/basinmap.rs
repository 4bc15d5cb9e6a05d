//! Initial-condition slices, parallel fingerprint sweeps, k-means partitioning
//! and the resulting label grids.
//!
//! Grid point `(ix, iy)` has flat index `l = ix · ny + iy` (axis 2 varies
//! fastest). Label grids are stored with `ny` rows of `nx` cells, row `iy`
//! holding the points with the `iy`-th axis-2 value, so `grid[iy][ix]`.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::SystemModel;
use crate::error::{Error, Result};
use crate::integrate::{simulate, IntegrationConfig, ObservableKind};
use crate::util::{sha256_hex, HashWriter};
use crate::vps::{build_vps, read_vps_rows, squared_distance, write_vps_rows, VpsConfig};

/// Label reserved for initial conditions without a usable fingerprint.
pub const SENTINEL: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceAxis {
    pub node: usize,
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub axis1: SliceAxis,
    pub axis2: SliceAxis,
    pub range1: (f64, f64),
    pub range2: (f64, f64),
    /// `(nx, ny)`: points along axis 1 and axis 2.
    pub resolution: (usize, usize),
    /// Values of every coordinate at `t = 0`; the two slice coordinates are overwritten.
    pub base_state: Vec<f64>,
}

impl SliceSpec {
    pub fn nx(&self) -> usize {
        self.resolution.0
    }

    pub fn ny(&self) -> usize {
        self.resolution.1
    }

    pub fn n_points(&self) -> usize {
        self.nx() * self.ny()
    }

    fn flat_index(axis: SliceAxis, node_dim: usize) -> usize {
        axis.node * node_dim + axis.component
    }

    pub fn validate(&self, node_dim: usize) -> Result<()> {
        let len = self.base_state.len();
        for (name, axis) in [("axis1", self.axis1), ("axis2", self.axis2)] {
            if axis.component >= node_dim || Self::flat_index(axis, node_dim) >= len {
                return Err(Error::Argument(format!(
                    "{name} (node {}, component {}) is outside a state of {} nodes x {node_dim}",
                    axis.node,
                    axis.component,
                    len / node_dim.max(1)
                )));
            }
        }
        if self.axis1 == self.axis2 {
            return Err(Error::Argument("slice axes must differ".into()));
        }
        for (name, (lo, hi)) in [("range1", self.range1), ("range2", self.range2)] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Argument(format!("{name} needs min < max, got ({lo}, {hi})")));
            }
        }
        if self.nx() < 2 || self.ny() < 2 {
            return Err(Error::Argument(format!(
                "resolution must be at least 2x2, got {}x{}",
                self.nx(),
                self.ny()
            )));
        }
        Ok(())
    }

    /// Coordinates of grid point `(ix, iy)` along both axes.
    pub fn coords(&self, ix: usize, iy: usize) -> (f64, f64) {
        let step = |(lo, hi): (f64, f64), n: usize| (hi - lo) / (n - 1) as f64;
        (
            self.range1.0 + ix as f64 * step(self.range1, self.nx()),
            self.range2.0 + iy as f64 * step(self.range2, self.ny()),
        )
    }

    /// Initial state of flat point `l`; call [`SliceSpec::validate`] first.
    pub fn state_at(&self, l: usize, node_dim: usize) -> Vec<f64> {
        let (ix, iy) = (l / self.ny(), l % self.ny());
        let (v1, v2) = self.coords(ix, iy);
        let mut s = self.base_state.clone();
        s[Self::flat_index(self.axis1, node_dim)] = v1;
        s[Self::flat_index(self.axis2, node_dim)] = v2;
        s
    }
}

/// All initial states of the slice in flat order.
pub fn sample_slice(spec: &SliceSpec, node_dim: usize) -> Result<Vec<Vec<f64>>> {
    spec.validate(node_dim)?;
    Ok((0..spec.n_points()).map(|l| spec.state_at(l, node_dim)).collect())
}

/// One fingerprint per slice point; sentinel rows are filled with `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct VpsMatrix {
    pub slice: SliceSpec,
    pub row_len: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl VpsMatrix {
    pub fn n_rows(&self) -> usize {
        self.valid.len()
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.row_len..(l + 1) * self.row_len]
    }

    pub fn n_sentinel(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        write_vps_rows(&mut out, self.n_rows(), self.row_len, &self.data)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        crate::vps::write_vps_csv(&mut out, self.row_len, &self.data)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path, slice: SliceSpec) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let (n_rows, row_len, data) = read_vps_rows(std::io::BufReader::new(file))?;
        if n_rows != slice.n_points() {
            return Err(Error::Shape(format!(
                "{} holds {n_rows} rows, slice has {} points",
                path.display(),
                slice.n_points()
            )));
        }
        let valid = (0..n_rows)
            .map(|l| data[l * row_len..(l + 1) * row_len].iter().all(|v| v.is_finite()))
            .collect();
        Ok(VpsMatrix {
            slice,
            row_len,
            data,
            valid,
        })
    }

    /// SHA-256 of the binary encoding.
    pub fn digest(&self) -> String {
        let mut hasher = HashWriter::default();
        write_vps_rows(&mut hasher, self.n_rows(), self.row_len, &self.data).expect("hashing cannot fail");
        hasher.hex()
    }
}

pub type ProgressFn = dyn Fn(usize, usize) + Send + Sync;

#[derive(Default, Clone)]
pub struct SweepOptions {
    /// Worker threads; `0` uses the available parallelism.
    pub workers: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Rows per checkpoint flush (also the unit of work between cancellation checks).
    pub checkpoint_every: usize,
    pub cancel: Option<Arc<AtomicBool>>,
    /// Called after each flushed chunk with `(completed, total)`.
    pub progress: Option<Arc<ProgressFn>>,
}

const PENDING: u8 = 0;
const DONE_VALID: u8 = 1;
const DONE_SENTINEL: u8 = 2;

#[derive(Serialize, Deserialize, PartialEq)]
struct CheckpointMeta {
    n_rows: usize,
    row_len: usize,
    fingerprint: String,
}

/// Rows persisted in fixed slots; the status file is only updated after the
/// rows it marks have been synced, so a crash never exposes a half-written row.
struct Checkpoint {
    rows: File,
    status_path: PathBuf,
    status: Vec<u8>,
    row_len: usize,
}

impl Checkpoint {
    fn open(dir: &Path, n_rows: usize, row_len: usize, fingerprint: &str) -> Result<(Self, Vec<f64>)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_path = dir.join("meta.json");
        let rows_path = dir.join("rows.bin");
        let status_path = dir.join("status.bin");
        let meta = CheckpointMeta {
            n_rows,
            row_len,
            fingerprint: fingerprint.to_string(),
        };
        let resumable = std::fs::read(&meta_path)
            .ok()
            .and_then(|b| serde_json::from_slice::<CheckpointMeta>(&b).ok())
            .is_some_and(|m| m == meta)
            && status_path.exists()
            && rows_path.exists();
        let mut data = vec![f64::INFINITY; n_rows * row_len];
        let (rows, status) = if resumable {
            let status = std::fs::read(&status_path).map_err(|e| Error::io(&status_path, e))?;
            if status.len() != n_rows {
                return Err(Error::Validation(format!(
                    "{} has {} entries, expected {n_rows}",
                    status_path.display(),
                    status.len()
                )));
            }
            let mut rows = OpenOptions::new()
                .read(true)
                .write(true)
                .open(&rows_path)
                .map_err(|e| Error::io(&rows_path, e))?;
            let mut buf = vec![0u8; 8 * row_len];
            for (l, &st) in status.iter().enumerate() {
                if st == DONE_VALID {
                    rows.seek(SeekFrom::Start((8 * l * row_len) as u64))
                        .and_then(|_| rows.read_exact(&mut buf))
                        .map_err(|e| Error::io(&rows_path, e))?;
                    for (k, c) in buf.chunks_exact(8).enumerate() {
                        data[l * row_len + k] = f64::from_le_bytes(c.try_into().unwrap());
                    }
                }
            }
            (rows, status)
        } else {
            let rows = OpenOptions::new()
                .read(true)
                .write(true)
                .create(true)
                .truncate(true)
                .open(&rows_path)
                .map_err(|e| Error::io(&rows_path, e))?;
            rows.set_len((8 * n_rows * row_len) as u64)
                .map_err(|e| Error::io(&rows_path, e))?;
            let status = vec![PENDING; n_rows];
            std::fs::write(&status_path, &status).map_err(|e| Error::io(&status_path, e))?;
            std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)
                .map_err(|e| Error::io(&meta_path, e))?;
            (rows, status)
        };
        Ok((
            Checkpoint {
                rows,
                status_path,
                status,
                row_len,
            },
            data,
        ))
    }

    fn flush(&mut self, done: &[(usize, Option<Vec<f64>>)]) -> std::io::Result<()> {
        let mut bytes = Vec::with_capacity(8 * self.row_len);
        for (l, row) in done {
            if let Some(row) = row {
                bytes.clear();
                for v in row {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                self.rows.seek(SeekFrom::Start((8 * l * self.row_len) as u64))?;
                self.rows.write_all(&bytes)?;
            }
        }
        self.rows.sync_data()?;
        for (l, row) in done {
            self.status[*l] = if row.is_some() { DONE_VALID } else { DONE_SENTINEL };
        }
        let tmp = self.status_path.with_extension("tmp");
        std::fs::write(&tmp, &self.status)?;
        std::fs::rename(&tmp, &self.status_path)
    }
}

/// Digest identifying a sweep's inputs, used to refuse resuming a different sweep.
pub fn sweep_fingerprint(
    model: &SystemModel,
    spec: &SliceSpec,
    icfg: &IntegrationConfig,
    vcfg: &VpsConfig,
    observable: ObservableKind,
) -> String {
    let doc = serde_json::json!({
        "dynamics": model.dynamics(),
        "network": model.network(),
        "slice": spec,
        "integration": icfg,
        "vps": vcfg,
        "observable": observable,
    });
    sha256_hex(doc.to_string().as_bytes())
}

/// Fingerprint of one initial condition, or `None` when it diverged or
/// produced a degenerate signal.
pub fn fingerprint_point(
    model: &SystemModel,
    init: &[f64],
    icfg: &IntegrationConfig,
    vcfg: &VpsConfig,
    observable: ObservableKind,
) -> Result<Option<Vec<f64>>> {
    let outcome = simulate(model, init, icfg).and_then(|traj| build_vps(&traj, vcfg, observable));
    match outcome {
        Ok(v) => Ok(Some(v.entries)),
        Err(e) if e.is_numerical_outcome() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fingerprints every slice point. Output does not depend on `workers` or on
/// how the run was split across resumptions.
pub fn sweep(
    model: &SystemModel,
    spec: &SliceSpec,
    icfg: &IntegrationConfig,
    vcfg: &VpsConfig,
    observable: ObservableKind,
    opts: &SweepOptions,
) -> Result<VpsMatrix> {
    let node_dim = model.node_dim();
    spec.validate(node_dim)?;
    if spec.base_state.len() != model.state_len() {
        return Err(Error::Argument(format!(
            "base state has {} entries, model state has {}",
            spec.base_state.len(),
            model.state_len()
        )));
    }
    let n_samples = icfg.stored_samples(model.kind())?;
    vcfg.validate_for(n_samples)?;
    let n = model.n_nodes();
    let row_len = n * (n - 1);
    let total = spec.n_points();

    let (mut checkpoint, mut data) = match &opts.checkpoint_dir {
        Some(dir) => {
            let fp = sweep_fingerprint(model, spec, icfg, vcfg, observable);
            let (cp, data) = Checkpoint::open(dir, total, row_len, &fp)?;
            (Some(cp), data)
        }
        None => (None, vec![f64::INFINITY; total * row_len]),
    };
    let mut valid = vec![false; total];
    let mut pending = Vec::new();
    match &checkpoint {
        Some(cp) => {
            for (l, &st) in cp.status.iter().enumerate() {
                match st {
                    DONE_VALID => valid[l] = true,
                    DONE_SENTINEL => {}
                    _ => pending.push(l),
                }
            }
        }
        None => pending.extend(0..total),
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Argument(format!("worker pool: {e}")))?;
    let chunk = opts.checkpoint_every.max(1);
    let mut completed = total - pending.len();
    for batch in pending.chunks(chunk) {
        if opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst)) {
            return Err(Error::Interrupted { completed, total });
        }
        let results: Vec<(usize, Option<Vec<f64>>)> = pool.install(|| {
            batch
                .par_iter()
                .map(|&l| {
                    let init = spec.state_at(l, node_dim);
                    fingerprint_point(model, &init, icfg, vcfg, observable).map(|row| (l, row))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        if let Some(cp) = checkpoint.as_mut() {
            let dir = opts.checkpoint_dir.as_deref().unwrap_or(Path::new("."));
            cp.flush(&results).map_err(|e| Error::io(dir, e))?;
        }
        for (l, row) in results {
            if let Some(row) = row {
                data[l * row_len..(l + 1) * row_len].copy_from_slice(&row);
                valid[l] = true;
            }
        }
        completed += batch.len();
        if let Some(progress) = &opts.progress {
            progress(completed, total);
        }
    }
    Ok(VpsMatrix {
        slice: spec.clone(),
        row_len,
        data,
        valid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    /// One label per matrix row; sentinel rows carry [`SENTINEL`].
    pub labels: Vec<i32>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
    pub restarts: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            restarts: 5,
            max_iter: 300,
        }
    }
}

/// Result of one k-means fit on a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

/// Counts distinct points, stopping once `limit` have been found.
fn distinct_at_least(points: &[&[f64]], limit: usize) -> usize {
    let mut reps: Vec<&[f64]> = Vec::new();
    for p in points {
        if !reps.iter().any(|r| r == p) {
            reps.push(p);
            if reps.len() >= limit {
                break;
            }
        }
    }
    reps.len()
}

/// Nearest centroid, ties to the lowest index.
#[inline]
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = squared_distance(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let m = points.len();
    let first = rng.random_range(0..m as u64) as usize;
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points
        .par_iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("k-means++ ran out of distinct points");
        let c = points[pick].to_vec();
        d2.par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(squared_distance(p, &c)));
        centroids.push(c);
    }
    centroids
}

fn recompute_centroids(points: &[&[f64]], labels: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p.iter()) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            let inv = 1.0 / c as f64;
            s.iter_mut().for_each(|v| *v *= inv);
        }
    }
    (sums, counts)
}

fn lloyd(points: &[&[f64]], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansFit {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    loop {
        let assigned: Vec<usize> = points.par_iter().map(|p| nearest(p, &centroids).0).collect();
        let changed = assigned != labels;
        labels = assigned;
        iterations += 1;
        let (mut cen, mut counts) = recompute_centroids(points, &labels, k, dim);
        // empty clusters take the farthest member of the currently largest cluster
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let largest = (0..k).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
            let far = (0..points.len())
                .filter(|&i| labels[i] == largest)
                .map(|i| (i, squared_distance(points[i], &cen[largest])))
                .fold((usize::MAX, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0;
            labels[far] = empty;
            let (c2, n2) = recompute_centroids(points, &labels, k, dim);
            cen = c2;
            counts = n2;
        }
        centroids = cen;
        if !changed || iterations >= max_iter {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum();
    KMeansFit {
        labels,
        centroids,
        inertia,
        iterations,
    }
}

/// Lloyd iterations from k-means++ seeds; the lowest-inertia restart wins.
pub fn kmeans_points(points: &[&[f64]], k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::Argument("k must be >= 1".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::Argument("restarts must be >= 1".into()));
    }
    let distinct = distinct_at_least(points, k);
    if distinct < k {
        return Err(Error::Argument(format!(
            "k = {k} exceeds the {distinct} distinct fingerprints available"
        )));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.random::<u64>());
        let init = kmeans_pp(points, k, &mut rng);
        let fit = lloyd(points, init, opts.max_iter.max(1));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

fn valid_points(vm: &VpsMatrix) -> (Vec<usize>, Vec<&[f64]>) {
    let idx: Vec<usize> = (0..vm.n_rows()).filter(|&l| vm.valid[l]).collect();
    let pts = idx.iter().map(|&l| vm.row(l)).collect();
    (idx, pts)
}

/// k-means on the non-sentinel rows of a VPS matrix.
pub fn kmeans_cluster(vm: &VpsMatrix, k: usize, seed: u64, opts: &KMeansOptions) -> Result<Clustering> {
    let (idx, pts) = valid_points(vm);
    if pts.is_empty() {
        return Err(Error::Argument("every fingerprint is a sentinel; nothing to cluster".into()));
    }
    let fit = kmeans_points(&pts, k, seed, opts)?;
    let mut labels = vec![SENTINEL; vm.n_rows()];
    for (&l, &lab) in idx.iter().zip(&fit.labels) {
        labels[l] = lab as i32;
    }
    Ok(Clustering {
        k,
        labels,
        centroids: fit.centroids,
        inertia: fit.inertia,
        seed,
        restarts: opts.restarts,
        iterations: fit.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowResult {
    pub k: usize,
    /// `inertia_curve[k-1]` is the inertia with `k` clusters.
    pub inertia_curve: Vec<f64>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub clustering: Option<Clustering>,
}

/// Second-difference elbow over `W(1..=k_max)`; ties go to the smaller `k`.
pub fn elbow_from_curve(curve: &[f64]) -> usize {
    let mut best = (2, f64::NEG_INFINITY);
    for k in 2..curve.len() {
        let second = curve[k - 2] - 2.0 * curve[k - 1] + curve[k];
        if second > best.1 {
            best = (k, second);
        }
    }
    best.0
}

pub fn select_k_elbow(vm: &VpsMatrix, k_max: usize, seed: u64, opts: &KMeansOptions) -> Result<ElbowResult> {
    if k_max < 3 {
        return Err(Error::Argument(format!("k_max must be >= 3, got {k_max}")));
    }
    let (_, pts) = valid_points(vm);
    let mut warnings = Vec::new();
    let distinct = distinct_at_least(&pts, k_max);
    let k_top = k_max.min(distinct);
    if k_top < 3 {
        return Err(Error::Argument(format!(
            "elbow selection needs >= 3 distinct fingerprints, found {distinct}"
        )));
    }
    if k_top < k_max {
        warnings.push(format!(
            "only {distinct} distinct fingerprints; inertia curve stops at k = {k_top}"
        ));
    }
    let fits = (1..=k_top)
        .map(|k| kmeans_cluster(vm, k, seed, opts))
        .collect::<Result<Vec<_>>>()?;
    let curve: Vec<f64> = fits.iter().map(|c| c.inertia).collect();
    for k in 1..curve.len() {
        if curve[k] > curve[k - 1] {
            warnings.push(format!(
                "inertia increased from k = {} ({}) to k = {} ({})",
                k,
                curve[k - 1],
                k + 1,
                curve[k]
            ));
        }
    }
    let k = elbow_from_curve(&curve);
    Ok(ElbowResult {
        k,
        inertia_curve: curve,
        warnings,
        clustering: fits.into_iter().nth(k - 1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinMap {
    pub nx: usize,
    pub ny: usize,
    pub k: usize,
    /// `ny` rows of `nx` labels: `grid[iy * nx + ix]`.
    pub grid: Vec<i32>,
}

impl BasinMap {
    pub fn from_grid(nx: usize, ny: usize, grid: Vec<i32>) -> Result<Self> {
        if grid.len() != nx * ny {
            return Err(Error::Shape(format!(
                "{} labels do not fill a {nx}x{ny} grid",
                grid.len()
            )));
        }
        if let Some(bad) = grid.iter().find(|&&v| v < SENTINEL) {
            return Err(Error::Validation(format!("label {bad} is below the sentinel -1")));
        }
        let k = grid.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        Ok(BasinMap { nx, ny, k, grid })
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> i32 {
        self.grid[iy * self.nx + ix]
    }

    /// Number of distinct non-sentinel labels present.
    pub fn n_labels(&self) -> usize {
        let mut seen: Vec<i32> = self.grid.iter().copied().filter(|&v| v != SENTINEL).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.grid.len() * 3);
        for row in self.grid.chunks(self.nx) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let mut grid = Vec::new();
        let mut nx = None;
        let mut ny = 0;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    c.trim().parse::<i32>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        message: format!("`{c}` is not an integer label"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            match nx {
                None => nx = Some(row.len()),
                Some(n) if n != row.len() => {
                    return Err(Error::Shape(format!(
                        "{}:{}: row has {} cells, expected {n}",
                        path.display(),
                        idx + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            grid.extend(row);
            ny += 1;
        }
        BasinMap::from_grid(nx.unwrap_or(0), ny, grid)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }
}

/// Reshapes flat-order labels into the `ny × nx` grid.
pub fn build_basin_map(labels: &[i32], nx: usize, ny: usize, k: usize) -> Result<BasinMap> {
    if labels.len() != nx * ny {
        return Err(Error::Argument(format!(
            "{} labels for a {nx}x{ny} slice",
            labels.len()
        )));
    }
    let mut grid = vec![SENTINEL; nx * ny];
    for ix in 0..nx {
        for iy in 0..ny {
            grid[iy * nx + ix] = labels[ix * ny + iy];
        }
    }
    Ok(BasinMap { nx, ny, k, grid })
}

/// [`build_basin_map`] from a VPS matrix and its clustering.
pub fn basin_map_for(vm: &VpsMatrix, cl: &Clustering) -> Result<BasinMap> {
    if cl.labels.len() != vm.n_rows() {
        return Err(Error::Argument(format!(
            "clustering has {} labels, matrix has {} rows",
            cl.labels.len(),
            vm.n_rows()
        )));
    }
    build_basin_map(&cl.labels, vm.slice.nx(), vm.slice.ny(), cl.k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nx: usize, ny: usize) -> SliceSpec {
        SliceSpec {
            axis1: SliceAxis { node: 0, component: 0 },
            axis2: SliceAxis { node: 1, component: 0 },
            range1: (0.0, 1.0),
            range2: (0.0, 1.0),
            resolution: (nx, ny),
            base_state: vec![-0.5; 6],
        }
    }

    #[test]
    fn corners_of_unit_square() {
        let states = sample_slice(&spec(2, 2), 3).unwrap();
        let coords: Vec<(f64, f64)> = states.iter().map(|s| (s[0], s[3])).collect();
        assert_eq!(coords, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
        assert!(states.iter().all(|s| s[1] == -0.5 && s[2] == -0.5 && s[4] == -0.5));
    }

    #[test]
    fn slice_validation() {
        let mut s = spec(2, 2);
        s.axis2 = SliceAxis { node: 2, component: 0 };
        assert!(sample_slice(&s, 3).is_err());
        let mut s = spec(2, 2);
        s.axis2 = s.axis1;
        assert!(sample_slice(&s, 3).is_err());
        let mut s = spec(2, 2);
        s.range1 = (1.0, 1.0);
        assert!(sample_slice(&s, 3).is_err());
        assert!(sample_slice(&spec(1, 4), 3).is_err());
        let mut s = spec(2, 2);
        s.axis1.component = 3;
        assert!(sample_slice(&s, 3).is_err());
    }

    #[test]
    fn large_grid_count() {
        let mut s = spec(750, 750);
        s.base_state = vec![0.0; 6];
        s.validate(3).unwrap();
        assert_eq!(s.n_points(), 562_500);
        let last = s.state_at(s.n_points() - 1, 3);
        assert_eq!((last[0], last[3]), (1.0, 1.0));
    }

    fn matrix(rows: &[&[f64]]) -> VpsMatrix {
        let row_len = rows[0].len();
        let mut s = spec(rows.len(), 1);
        s.resolution = (rows.len(), 1);
        VpsMatrix {
            slice: s,
            row_len,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
            valid: vec![true; rows.len()],
        }
    }

    #[test]
    fn two_doublets() {
        let vm = matrix(&[&[0.0, 0.0], &[0.0, 1.0], &[100.0, 100.0], &[101.0, 100.0]]);
        let cl = kmeans_cluster(&vm, 2, 7, &KMeansOptions::default()).unwrap();
        assert_eq!(cl.labels[0], cl.labels[1]);
        assert_eq!(cl.labels[2], cl.labels[3]);
        assert_ne!(cl.labels[0], cl.labels[2]);
        assert!((cl.inertia - (0.5 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_mean() {
        let vm = matrix(&[&[1.0, 2.0], &[3.0, 6.0], &[5.0, 1.0]]);
        let cl = kmeans_cluster(&vm, 1, 0, &KMeansOptions::default()).unwrap();
        assert_eq!(cl.labels, vec![0, 0, 0]);
        assert!((cl.centroids[0][0] - 3.0).abs() < 1e-15);
        assert!((cl.centroids[0][1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn duplicates_share_labels_and_k_bounded_by_distinct() {
        let vm = matrix(&[&[1.0], &[1.0], &[2.0], &[9.0], &[9.0], &[2.0]]);
        let cl = kmeans_cluster(&vm, 3, 3, &KMeansOptions::default()).unwrap();
        assert_eq!(cl.labels[0], cl.labels[1]);
        assert_eq!(cl.labels[3], cl.labels[4]);
        assert_eq!(cl.labels[2], cl.labels[5]);
        assert!(matches!(
            kmeans_cluster(&vm, 4, 3, &KMeansOptions::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn sentinel_rows_are_excluded() {
        let mut vm = matrix(&[&[0.0], &[f64::INFINITY], &[10.0], &[10.5]]);
        vm.valid[1] = false;
        let cl = kmeans_cluster(&vm, 2, 1, &KMeansOptions::default()).unwrap();
        assert_eq!(cl.labels[1], SENTINEL);
        assert_eq!(cl.labels[2], cl.labels[3]);
    }

    #[test]
    fn inertia_matches_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let vm = matrix(&refs);
        let cl = kmeans_cluster(&vm, 4, 9, &KMeansOptions::default()).unwrap();
        let again: f64 = (0..60)
            .map(|l| squared_distance(vm.row(l), &cl.centroids[cl.labels[l] as usize]))
            .sum();
        assert!((cl.inertia - again).abs() <= 1e-9 * again);
        assert!(cl.labels.iter().all(|&l| (0..4).contains(&l)));
        assert_eq!(cl, kmeans_cluster(&vm, 4, 9, &KMeansOptions::default()).unwrap());
    }

    #[test]
    fn elbow_curve_rule() {
        assert_eq!(elbow_from_curve(&[100.0, 40.0, 5.0, 4.0, 3.5]), 3);
        assert_eq!(elbow_from_curve(&[100.0, 10.0, 9.0, 8.0]), 2);
    }

    #[test]
    fn basin_reshape() {
        let bm = build_basin_map(&[0, 1, 1, 0], 2, 2, 2).unwrap();
        assert_eq!(bm.grid, vec![0, 1, 1, 0]);
        // axis 2 fastest in flat order, rows of the grid follow axis 2
        let bm = build_basin_map(&[0, 1, 2, 3, 4, 5], 2, 3, 6).unwrap();
        assert_eq!(bm.grid, vec![0, 3, 1, 4, 2, 5]);
        assert_eq!(bm.at(1, 0), 3);
        let bm = build_basin_map(&[0, SENTINEL, 1, 0], 2, 2, 2).unwrap();
        assert_eq!(bm.grid[2], SENTINEL);
        assert!(build_basin_map(&[0, 1, 1], 2, 2, 2).is_err());
    }

    #[test]
    fn label_csv_roundtrip() {
        let bm = BasinMap::from_grid(3, 2, vec![0, 1, -1, 2, 2, 0]).unwrap();
        let text = bm.to_csv();
        assert_eq!(text, "0,1,-1\n2,2,0\n");
        assert_eq!(BasinMap::parse_csv(&text, Path::new("x")).unwrap(), bm);
        assert!(BasinMap::parse_csv("0,1\n2\n", Path::new("x")).is_err());
        assert!(matches!(
            BasinMap::parse_csv("0,a\n", Path::new("x")),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(BasinMap::from_grid(2, 1, vec![0, -2]).is_err());
    }
}
