//! C ABI over the `vpsbasin` library.
//!
//! Every fallible function returns a [`VbStatus`]; on failure the message is
//! available from [`vb_last_error`] on the same thread until the next call.
//! Objects cross the boundary as opaque handles and must be released with the
//! matching `*_free` function. Strings returned by the library are released
//! with [`vb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use vpsbasin::basinmap::BasinMap;
use vpsbasin::dynsys::{Dynamics, SystemModel};
use vpsbasin::fractal::{box_count, default_scales, extract_boundary, fit_box_dimension};
use vpsbasin::integrate::{simulate, IntegrationConfig, ObservableKind, TrajectorySet};
use vpsbasin::netgraph::{
    generate_modular, generate_two_population, load_network, network_info, LoadOptions, ModularSpec, Network,
    NetworkFormat, TwoPopulationSpec,
};
use vpsbasin::vps::{alignment_cost, best_lag, build_vps, CorrMode, CorrNormalization, VpsConfig};
use vpsbasin::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Validation = 5,
    Diverged = 6,
    DegenerateSignal = 7,
    EmptyBoundary = 8,
    InsufficientScales = 9,
    BufferSize = 10,
    Panic = 11,
    Internal = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbNetworkFormat {
    EdgeList = 0,
    Dense = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbCorrMode {
    Circular = 0,
    LinearValid = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbNormalization {
    Raw = 0,
    ZeroMeanUnitNorm = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbObservable {
    Component0 = 0,
    SinPhase = 1,
}

/// Integration settings. ODE models read `dt`, `transient_time` and
/// `window_time`; maps read `transient_steps` and `window_steps`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VbIntegration {
    pub dt: f64,
    pub transient_time: f64,
    pub window_time: f64,
    pub transient_steps: u64,
    pub window_steps: u64,
    pub sample_stride: u64,
}

/// Fingerprint settings. A negative `max_lag` selects a quarter of the window.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VbVpsConfig {
    pub beta: f64,
    pub max_lag: i64,
    pub corr_mode: VbCorrMode,
    pub normalization: VbNormalization,
}

pub struct VbNetwork {
    inner: Arc<Network>,
}

pub struct VbModel {
    inner: SystemModel,
}

pub struct VbTrajectory {
    inner: TrajectorySet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VbStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) => VbStatus::Parse,
        Error::Io { .. } => VbStatus::Io,
        Error::Validation(_) | Error::Config(_) | Error::Shape(_) => VbStatus::Validation,
        Error::Argument(_) | Error::WrongSystem(..) => VbStatus::InvalidArgument,
        Error::Divergence { .. } => VbStatus::Diverged,
        Error::DegenerateSignal(_) => VbStatus::DegenerateSignal,
        Error::EmptyBoundary => VbStatus::EmptyBoundary,
        Error::InsufficientScales(_) => VbStatus::InsufficientScales,
        _ => VbStatus::Internal,
    }
}

struct Fail(VbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult = Result<(), Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> VbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VbStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VbStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(VbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(VbStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> FfiResult {
    if out.is_null() {
        return Err(null("output string"));
    }
    *out = CString::new(s)
        .map_err(|_| Fail(VbStatus::Internal, "string contains NUL".into()))?
        .into_raw();
    Ok(())
}

fn check_len(got: usize, want: usize, what: &str) -> FfiResult {
    if got != want {
        return Err(Fail(VbStatus::BufferSize, format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

fn vps_config(c: &VbVpsConfig) -> VpsConfig {
    VpsConfig {
        beta: c.beta,
        max_lag: usize::try_from(c.max_lag).ok(),
        corr_mode: corr_mode(c.corr_mode),
        normalization: match c.normalization {
            VbNormalization::Raw => CorrNormalization::Raw,
            VbNormalization::ZeroMeanUnitNorm => CorrNormalization::ZeroMeanUnitNorm,
        },
    }
}

fn corr_mode(m: VbCorrMode) -> CorrMode {
    match m {
        VbCorrMode::Circular => CorrMode::Circular,
        VbCorrMode::LinearValid => CorrMode::LinearValid,
    }
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library; valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn vb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Recommended defaults for a model kind (`"hr-diffusive"`, `"kuramoto"`, ...).
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_integration_default(kind: *const c_char, out: *mut VbIntegration) -> VbStatus {
    guard(|| {
        let kind = str_arg(kind, "kind")?;
        let kind = serde_json::from_value(serde_json::Value::String(kind.into()))
            .map_err(|_| Fail(VbStatus::InvalidArgument, format!("unknown model kind `{kind}`")))?;
        let c = IntegrationConfig::default_for(kind);
        if out.is_null() {
            return Err(null("out"));
        }
        *out = VbIntegration {
            dt: c.dt,
            transient_time: c.transient_time,
            window_time: c.window_time,
            transient_steps: c.transient_steps,
            window_steps: c.window_steps,
            sample_stride: c.sample_stride as u64,
        };
        Ok(())
    })
}

// ---- networks

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_network_load(
    path: *const c_char,
    format: VbNetworkFormat,
    symmetrize: bool,
    out: *mut *mut VbNetwork,
) -> VbStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let format = match format {
            VbNetworkFormat::EdgeList => NetworkFormat::EdgeList,
            VbNetworkFormat::Dense => NetworkFormat::Dense,
        };
        let net = load_network(Path::new(path), format, LoadOptions { symmetrize })?;
        put(out, VbNetwork { inner: Arc::new(net) })
    })
}

/// Network from a row-major `n_nodes × n_nodes` weight matrix.
///
/// # Safety
/// `weights` must point to `n_nodes * n_nodes` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_network_from_dense(
    n_nodes: usize,
    weights: *const f64,
    directed: bool,
    out: *mut *mut VbNetwork,
) -> VbStatus {
    guard(|| {
        let len = n_nodes
            .checked_mul(n_nodes)
            .ok_or_else(|| Fail(VbStatus::InvalidArgument, "n_nodes overflows".into()))?;
        let w = slice(weights, len, "weights")?.to_vec();
        let net = Network::from_dense("dense", n_nodes, w, directed)?;
        put(out, VbNetwork { inner: Arc::new(net) })
    })
}

/// Two all-to-all populations. A negative `drop_edge_seed` keeps every edge.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_network_two_population(
    pop_size: usize,
    intra_weight: f64,
    inter_weight: f64,
    drop_edge_seed: i64,
    out: *mut *mut VbNetwork,
) -> VbStatus {
    guard(|| {
        let net = generate_two_population(&TwoPopulationSpec {
            pop_size,
            intra_weight,
            inter_weight,
            drop_edge_seed: u64::try_from(drop_edge_seed).ok(),
        })?;
        put(out, VbNetwork { inner: Arc::new(net) })
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_network_modular(
    n_nodes: usize,
    n_modules: usize,
    p_intra: f64,
    p_inter: f64,
    seed: u64,
    out: *mut *mut VbNetwork,
) -> VbStatus {
    guard(|| {
        let net = generate_modular(&ModularSpec {
            n_nodes,
            n_modules,
            p_intra,
            p_inter,
            seed,
        })?;
        put(out, VbNetwork { inner: Arc::new(net) })
    })
}

/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_network_n_nodes(net: *const VbNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.n_nodes())
}

/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_network_weight(net: *const VbNetwork, i: usize, j: usize, out: *mut f64) -> VbStatus {
    guard(|| {
        let net = &deref(net, "network")?.inner;
        let n = net.n_nodes();
        if i >= n || j >= n {
            return Err(Fail(VbStatus::InvalidArgument, format!("node ({i}, {j}) outside 0..{n}")));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = net.weight(i, j);
        Ok(())
    })
}

/// JSON summary (node count, degrees, symmetry, ...). Free with [`vb_string_free`].
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_network_info_json(net: *const VbNetwork, out: *mut *mut c_char) -> VbStatus {
    guard(|| {
        let net = &deref(net, "network")?.inner;
        let json = serde_json::to_string(&network_info(net)).map_err(Error::from)?;
        put_string(out, json)
    })
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vb_network_free(net: *mut VbNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

// ---- models

/// Model from a dynamics document such as
/// `{"kind":"henon","henon":{"p":1.44,"b":0.164,"sigma":0.8}}`.
/// The network handle stays owned by the caller.
///
/// # Safety
/// `net` must be a live handle, `dynamics_json` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vb_model_new(
    net: *const VbNetwork,
    dynamics_json: *const c_char,
    out: *mut *mut VbModel,
) -> VbStatus {
    guard(|| {
        let net = deref(net, "network")?.inner.clone();
        let text = str_arg(dynamics_json, "dynamics_json")?;
        let dynamics: Dynamics = serde_json::from_str(text).map_err(Error::from)?;
        put(out, VbModel { inner: SystemModel::new(dynamics, net)? })
    })
}

/// Full state length `n_nodes * node_dim`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_model_state_len(model: *const VbModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.state_len())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_model_node_dim(model: *const VbModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.node_dim())
}

/// Right-hand side of a continuous-time model. Both buffers hold `len` doubles.
///
/// # Safety
/// Pointers must be valid for `len` elements; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_model_vector_field(
    model: *const VbModel,
    state: *const f64,
    out: *mut f64,
    len: usize,
) -> VbStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        check_len(len, m.state_len(), "state")?;
        let s = slice(state, len, "state")?;
        let o = slice_mut(out, len, "out")?;
        m.vector_field_into(s, o)?;
        Ok(())
    })
}

/// One iterate of the network Hénon map. Both buffers hold `len` doubles.
///
/// # Safety
/// Pointers must be valid for `len` elements; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_model_henon_step(
    model: *const VbModel,
    state: *const f64,
    out: *mut f64,
    len: usize,
) -> VbStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        check_len(len, m.state_len(), "state")?;
        let s = slice(state, len, "state")?;
        let o = slice_mut(out, len, "out")?;
        m.henon_step_into(s, o)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vb_model_free(model: *mut VbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---- trajectories

/// Integrates (or iterates) from `init` and keeps the post-transient window.
///
/// # Safety
/// `init` must hold `len` doubles; `model`, `cfg` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vb_simulate(
    model: *const VbModel,
    init: *const f64,
    len: usize,
    cfg: *const VbIntegration,
    out: *mut *mut VbTrajectory,
) -> VbStatus {
    guard(|| {
        let m = &deref(model, "model")?.inner;
        let c = deref(cfg, "cfg")?;
        let init = slice(init, len, "init")?;
        let icfg = IntegrationConfig {
            dt: c.dt,
            transient_time: c.transient_time,
            window_time: c.window_time,
            transient_steps: c.transient_steps,
            window_steps: c.window_steps,
            sample_stride: usize::try_from(c.sample_stride)
                .map_err(|_| Fail(VbStatus::InvalidArgument, "sample_stride too large".into()))?,
        };
        put(out, VbTrajectory { inner: simulate(m, init, &icfg)? })
    })
}

/// Any of the output pointers may be null.
///
/// # Safety
/// `traj` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_trajectory_shape(
    traj: *const VbTrajectory,
    n_nodes: *mut usize,
    node_dim: *mut usize,
    n_samples: *mut usize,
    sample_dt: *mut f64,
) -> VbStatus {
    guard(|| {
        let t = &deref(traj, "trajectory")?.inner;
        if !n_nodes.is_null() {
            *n_nodes = t.n_nodes();
        }
        if !node_dim.is_null() {
            *node_dim = t.node_dim();
        }
        if !n_samples.is_null() {
            *n_samples = t.n_samples();
        }
        if !sample_dt.is_null() {
            *sample_dt = t.sample_dt();
        }
        Ok(())
    })
}

/// Copies one component series; `len` must equal the sample count.
///
/// # Safety
/// `out` must be valid for `len` doubles; `traj` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vb_trajectory_series(
    traj: *const VbTrajectory,
    node: usize,
    component: usize,
    out: *mut f64,
    len: usize,
) -> VbStatus {
    guard(|| {
        let t = &deref(traj, "trajectory")?.inner;
        if node >= t.n_nodes() || component >= t.node_dim() {
            return Err(Fail(
                VbStatus::InvalidArgument,
                format!("series ({node}, {component}) outside the trajectory"),
            ));
        }
        check_len(len, t.n_samples(), "out")?;
        slice_mut(out, len, "out")?.copy_from_slice(t.series(node, component));
        Ok(())
    })
}

/// # Safety
/// `traj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vb_trajectory_free(traj: *mut VbTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

// ---- fingerprints

/// Writes the `n(n−1)` fingerprint entries: lags first, then `β·L`.
///
/// # Safety
/// `out` must be valid for `len` doubles; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn vb_build_vps(
    traj: *const VbTrajectory,
    cfg: *const VbVpsConfig,
    observable: VbObservable,
    out: *mut f64,
    len: usize,
) -> VbStatus {
    guard(|| {
        let t = &deref(traj, "trajectory")?.inner;
        let c = vps_config(deref(cfg, "cfg")?);
        let obs = match observable {
            VbObservable::Component0 => ObservableKind::Component0,
            VbObservable::SinPhase => ObservableKind::SinPhase,
        };
        let n = t.n_nodes();
        check_len(len, n * (n - 1), "out")?;
        let v = build_vps(t, &c, obs)?;
        slice_mut(out, len, "out")?.copy_from_slice(&v.entries);
        Ok(())
    })
}

/// Lag maximizing the cross-correlation of two equal-length series.
///
/// # Safety
/// `a` and `b` must hold `len` doubles; `cfg` and the outputs must be valid
/// (`correlation` may be null).
#[no_mangle]
pub unsafe extern "C" fn vb_best_lag(
    a: *const f64,
    b: *const f64,
    len: usize,
    cfg: *const VbVpsConfig,
    tau: *mut i64,
    correlation: *mut f64,
) -> VbStatus {
    guard(|| {
        let c = vps_config(deref(cfg, "cfg")?);
        let est = best_lag(slice(a, len, "a")?, slice(b, len, "b")?, &c)?;
        if tau.is_null() {
            return Err(null("tau"));
        }
        *tau = est.tau_star;
        if !correlation.is_null() {
            *correlation = est.correlation_at_tau;
        }
        Ok(())
    })
}

/// Mean squared distance between two `dim × (len/dim)` trajectory blocks at lag `tau`.
///
/// # Safety
/// `a` and `b` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_alignment_cost(
    a: *const f64,
    b: *const f64,
    len: usize,
    dim: usize,
    tau: i64,
    mode: VbCorrMode,
    out: *mut f64,
) -> VbStatus {
    guard(|| {
        let cost = alignment_cost(slice(a, len, "a")?, slice(b, len, "b")?, dim, tau, corr_mode(mode))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = cost;
        Ok(())
    })
}

// ---- fractal

/// Box-counting dimension of the boundary of an `nx × ny` label grid
/// (`labels[iy * nx + ix]`, −1 for unlabelled cells) over power-of-two boxes.
///
/// # Safety
/// `labels` must hold `nx * ny` values; `d_box` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vb_box_dimension(labels: *const i32, nx: usize, ny: usize, d_box: *mut f64) -> VbStatus {
    guard(|| {
        let len = nx
            .checked_mul(ny)
            .ok_or_else(|| Fail(VbStatus::InvalidArgument, "grid size overflows".into()))?;
        let grid = slice(labels, len, "labels")?.to_vec();
        let bm = BasinMap::from_grid(nx, ny, grid)?;
        let bg = extract_boundary(&bm);
        let fit = fit_box_dimension(box_count(&bg, &default_scales(nx, ny))?)?;
        if d_box.is_null() {
            return Err(null("d_box"));
        }
        *d_box = fit.d_box.expect("fit sets d_box");
        Ok(())
    })
}
