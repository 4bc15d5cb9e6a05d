//! Post-transient trajectories: fixed-step RK4 for flows, plain iteration for maps.
//!
//! Only the analysis window is stored; the transient is advanced in place, so
//! memory per trajectory is `n_nodes · node_dim · stored_samples` floats.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynsys::{ModelKind, SystemModel};
use crate::error::{Error, Result};

/// Any state component beyond this magnitude counts as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Stored windows shorter than this are rejected.
pub const MIN_STORED_SAMPLES: usize = 32;

/// Time discretization. Flows use `dt`, `transient_time` and `window_time`;
/// maps use `transient_steps` and `window_steps`. `sample_stride` applies to both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub transient_time: f64,
    pub window_time: f64,
    pub transient_steps: u64,
    pub window_steps: u64,
    pub sample_stride: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self::default_for(ModelKind::HrDiffusive)
    }
}

impl IntegrationConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        let (dt, t0, t) = match kind {
            ModelKind::Kuramoto => (0.01, 200.0, 200.0),
            _ => (0.01, 500.0, 500.0),
        };
        IntegrationConfig {
            dt,
            transient_time: t0,
            window_time: t,
            transient_steps: 5000,
            window_steps: 2048,
            sample_stride: if kind.is_continuous() { 10 } else { 1 },
        }
    }

    /// `(transient steps, window steps)` for a model of the given kind.
    pub fn step_counts(&self, kind: ModelKind) -> Result<(u64, u64)> {
        if self.sample_stride == 0 {
            return Err(Error::Validation("sample_stride must be >= 1".into()));
        }
        if !kind.is_continuous() {
            return Ok((self.transient_steps, self.window_steps));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.transient_time >= 0.0) {
            return Err(Error::Validation(format!(
                "transient_time must be >= 0, got {}",
                self.transient_time
            )));
        }
        if !(self.window_time > 0.0) {
            return Err(Error::Validation(format!(
                "window_time must be > 0, got {}",
                self.window_time
            )));
        }
        let steps = |span: f64, label: &str| -> Result<u64> {
            let n = (span / self.dt).round();
            if (n * self.dt - span).abs() > 1e-9 * span.max(self.dt) {
                return Err(Error::Validation(format!(
                    "{label} = {span} is not a whole number of dt = {} steps",
                    self.dt
                )));
            }
            Ok(n as u64)
        };
        Ok((
            steps(self.transient_time, "transient_time")?,
            steps(self.window_time, "window_time")?,
        ))
    }

    /// Number of stored samples, checked against the minimum window length.
    pub fn stored_samples(&self, kind: ModelKind) -> Result<usize> {
        let (_, window) = self.step_counts(kind)?;
        let stored = (window / self.sample_stride as u64) as usize;
        if stored < MIN_STORED_SAMPLES {
            return Err(Error::Validation(format!(
                "window stores {stored} samples, at least {MIN_STORED_SAMPLES} required"
            )));
        }
        Ok(stored)
    }

    pub fn sample_dt(&self, kind: ModelKind) -> f64 {
        let step = if kind.is_continuous() { self.dt } else { 1.0 };
        step * self.sample_stride as f64
    }
}

/// Sampled window of one run: `samples[node][component][time]`, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    n_nodes: usize,
    node_dim: usize,
    n_samples: usize,
    sample_dt: f64,
    /// Time of the first stored sample.
    t_start: f64,
    samples: Vec<f64>,
    origin: Vec<f64>,
}

impl TrajectorySet {
    /// Assembles a trajectory from already-sampled data laid out as
    /// `[node][component][time]`.
    pub fn from_samples(
        n_nodes: usize,
        node_dim: usize,
        sample_dt: f64,
        samples: Vec<f64>,
        origin: Vec<f64>,
    ) -> Result<Self> {
        let block = n_nodes * node_dim;
        if block == 0 || !samples.len().is_multiple_of(block) {
            return Err(Error::Shape(format!(
                "{} samples do not split into {n_nodes} nodes x {node_dim} components",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("trajectory contains non-finite samples".into()));
        }
        Ok(TrajectorySet {
            n_nodes,
            node_dim,
            n_samples: samples.len() / block,
            sample_dt,
            t_start: sample_dt,
            samples,
            origin,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn node_dim(&self) -> usize {
        self.node_dim
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sample_dt(&self) -> f64 {
        self.sample_dt
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// One component of one node over the window.
    pub fn series(&self, node: usize, component: usize) -> &[f64] {
        let start = (node * self.node_dim + component) * self.n_samples;
        &self.samples[start..start + self.n_samples]
    }

    /// All components of a node, `node_dim` consecutive series of `n_samples`.
    pub fn node_block(&self, node: usize) -> &[f64] {
        let len = self.node_dim * self.n_samples;
        &self.samples[node * len..(node + 1) * len]
    }
}

struct Recorder {
    n_state: usize,
    n_samples: usize,
    samples: Vec<f64>,
    next: usize,
}

impl Recorder {
    fn new(n_state: usize, n_samples: usize) -> Self {
        Recorder {
            n_state,
            n_samples,
            samples: vec![0.0; n_state * n_samples],
            next: 0,
        }
    }

    fn push(&mut self, state: &[f64]) {
        // state is node-major with components inside, which is exactly the
        // (node, component) row order of the sample array
        for (k, &v) in state.iter().enumerate().take(self.n_state) {
            self.samples[k * self.n_samples + self.next] = v;
        }
        self.next += 1;
    }
}

#[inline]
fn escaped(state: &[f64]) -> bool {
    state.iter().any(|v| !(v.abs() <= DIVERGENCE_BOUND))
}

/// Classical RK4 from `t = 0` to `T₀ + T`, storing every `sample_stride`-th
/// step with `t ∈ (T₀, T₀ + T]`.
pub fn integrate_ode(
    model: &SystemModel,
    init: &[f64],
    cfg: &IntegrationConfig,
) -> Result<TrajectorySet> {
    let kind = model.kind();
    if !kind.is_continuous() {
        return Err(Error::WrongSystem("a Hénon map", "ODE integration"));
    }
    model.check_state(init)?;
    let (n_transient, n_window) = cfg.step_counts(kind)?;
    let n_samples = cfg.stored_samples(kind)?;
    let dt = cfg.dt;
    let len = init.len();

    let mut x = init.to_vec();
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    let mut rec = Recorder::new(len, n_samples);
    let stride = cfg.sample_stride as u64;
    let half = 0.5 * dt;
    let sixth = dt / 6.0;

    if escaped(&x) {
        return Err(Error::Divergence { time: 0.0 });
    }
    for step in 1..=n_transient + n_window {
        model.rhs(&x, &mut k1);
        for i in 0..len {
            tmp[i] = x[i] + half * k1[i];
        }
        model.rhs(&tmp, &mut k2);
        for i in 0..len {
            tmp[i] = x[i] + half * k2[i];
        }
        model.rhs(&tmp, &mut k3);
        for i in 0..len {
            tmp[i] = x[i] + dt * k3[i];
        }
        model.rhs(&tmp, &mut k4);
        for i in 0..len {
            x[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if escaped(&x) {
            return Err(Error::Divergence {
                time: step as f64 * dt,
            });
        }
        if step > n_transient {
            let k = step - n_transient;
            if k % stride == 0 && rec.next < n_samples {
                rec.push(&x);
            }
        }
    }
    Ok(TrajectorySet {
        n_nodes: model.n_nodes(),
        node_dim: model.node_dim(),
        n_samples,
        sample_dt: cfg.sample_dt(kind),
        t_start: (n_transient + stride) as f64 * dt,
        samples: rec.samples,
        origin: init.to_vec(),
    })
}

/// Iterates the map `transient_steps` times, then stores the following
/// `window_steps` iterates (every `sample_stride`-th).
pub fn iterate_map(
    model: &SystemModel,
    init: &[f64],
    cfg: &IntegrationConfig,
) -> Result<TrajectorySet> {
    let kind = model.kind();
    if kind != ModelKind::Henon {
        return Err(Error::WrongSystem("a continuous-time model", "map iteration"));
    }
    model.check_state(init)?;
    let (n_transient, n_window) = cfg.step_counts(kind)?;
    let n_samples = cfg.stored_samples(kind)?;
    let len = init.len();
    let mut x = init.to_vec();
    let mut next = vec![0.0; len];
    let mut scratch = vec![0.0; model.n_nodes()];
    let mut rec = Recorder::new(len, n_samples);
    let stride = cfg.sample_stride as u64;

    if escaped(&x) {
        return Err(Error::Divergence { time: 0.0 });
    }
    for step in 1..=n_transient + n_window {
        model.map_step(&x, &mut next, &mut scratch);
        std::mem::swap(&mut x, &mut next);
        if escaped(&x) {
            return Err(Error::Divergence { time: step as f64 });
        }
        if step > n_transient {
            let k = step - n_transient;
            if k % stride == 0 && rec.next < n_samples {
                rec.push(&x);
            }
        }
    }
    Ok(TrajectorySet {
        n_nodes: model.n_nodes(),
        node_dim: model.node_dim(),
        n_samples,
        sample_dt: cfg.sample_dt(kind),
        t_start: (n_transient + stride) as f64,
        samples: rec.samples,
        origin: init.to_vec(),
    })
}

/// Dispatches to [`integrate_ode`] or [`iterate_map`] by model kind.
pub fn simulate(model: &SystemModel, init: &[f64], cfg: &IntegrationConfig) -> Result<TrajectorySet> {
    if model.kind().is_continuous() {
        integrate_ode(model, init, cfg)
    } else {
        iterate_map(model, init, cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservableKind {
    /// First state component of every node (HR `x`, Hénon `x`).
    Component0,
    /// `sin θ` for phase oscillators.
    SinPhase,
}

impl ObservableKind {
    /// The natural scalar observable for a model kind.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Kuramoto => ObservableKind::SinPhase,
            _ => ObservableKind::Component0,
        }
    }
}

/// Scalar series per node: `result[node][time]`.
pub fn observable_series(traj: &TrajectorySet, kind: ObservableKind) -> Result<Vec<Vec<f64>>> {
    match kind {
        ObservableKind::Component0 => Ok((0..traj.n_nodes)
            .map(|i| traj.series(i, 0).to_vec())
            .collect()),
        ObservableKind::SinPhase => {
            if traj.node_dim != 1 {
                return Err(Error::Argument(format!(
                    "sin-phase needs scalar phase nodes, trajectory has node_dim {}",
                    traj.node_dim
                )));
            }
            Ok((0..traj.n_nodes)
                .map(|i| traj.series(i, 0).iter().map(|th| th.sin()).collect())
                .collect())
        }
    }
}

/// Debug dump: header `t,node,c0[,c1[,c2]]`, one line per (time, node).
pub fn write_trajectory_csv<W: Write>(traj: &TrajectorySet, mut out: W) -> std::io::Result<()> {
    let comps: Vec<String> = (0..traj.node_dim).map(|c| format!("c{c}")).collect();
    writeln!(out, "t,node,{}", comps.join(","))?;
    for t in 0..traj.n_samples {
        let time = traj.t_start + t as f64 * traj.sample_dt;
        for node in 0..traj.n_nodes {
            write!(out, "{time},{node}")?;
            for c in 0..traj.node_dim {
                write!(out, ",{}", traj.series(node, c)[t])?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{Dynamics, HrParams};
    use crate::netgraph::Network;
    use std::sync::Arc;

    fn zero_net(n: usize) -> Arc<Network> {
        Arc::new(Network::from_dense("z", n, vec![0.0; n * n], false).unwrap())
    }

    fn henon_isolated() -> SystemModel {
        SystemModel::new(Dynamics::default_for(ModelKind::Henon), zero_net(2)).unwrap()
    }

    fn map_cfg(transient: u64, window: u64) -> IntegrationConfig {
        IntegrationConfig {
            transient_steps: transient,
            window_steps: window,
            sample_stride: 1,
            ..IntegrationConfig::default_for(ModelKind::Henon)
        }
    }

    // Hand iteration of the uncoupled map from (0, 0).
    fn henon_orbit(n: usize) -> Vec<(f64, f64)> {
        let (mut x, mut y) = (0.0f64, 0.0f64);
        (0..n)
            .map(|_| {
                let nx = 1.0 - 1.44 * x * x + y;
                let ny = 0.164 * x;
                x = nx;
                y = ny;
                (x, y)
            })
            .collect()
    }

    #[test]
    fn map_window_from_origin() {
        let traj = iterate_map(&henon_isolated(), &[0.0; 4], &map_cfg(0, 40)).unwrap();
        let x = traj.series(0, 0);
        assert_eq!(x[0], 1.0);
        assert!((x[1] + 0.44).abs() < 1e-15);
        let orbit = henon_orbit(40);
        for t in 0..40 {
            assert_eq!(x[t], orbit[t].0);
            assert_eq!(traj.series(0, 1)[t], orbit[t].1);
        }
        assert_eq!(traj.sample_dt(), 1.0);
    }

    #[test]
    fn map_transient_composes() {
        let model = henon_isolated();
        let a = iterate_map(&model, &[0.1, 0.0, 0.2, 0.05], &map_cfg(10, 40)).unwrap();
        let b = iterate_map(&model, &[0.1, 0.0, 0.2, 0.05], &map_cfg(0, 50)).unwrap();
        for node in 0..2 {
            for c in 0..2 {
                assert_eq!(a.series(node, c), &b.series(node, c)[10..]);
            }
        }
    }

    #[test]
    fn map_escape_reports_step() {
        let err = iterate_map(&henon_isolated(), &[5.0, 0.0, 0.0, 0.0], &map_cfg(0, 40)).unwrap_err();
        match err {
            Error::Divergence { time } => assert!(time >= 1.0 && time == time.round()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stride_and_minimum_window() {
        let cfg = IntegrationConfig {
            sample_stride: 2,
            ..map_cfg(0, 64)
        };
        let traj = iterate_map(&henon_isolated(), &[0.0; 4], &cfg).unwrap();
        assert_eq!(traj.n_samples(), 32);
        let orbit = henon_orbit(64);
        assert_eq!(traj.series(0, 0)[0], orbit[1].0);
        assert_eq!(traj.sample_dt(), 2.0);
        assert!(iterate_map(&henon_isolated(), &[0.0; 4], &map_cfg(0, 31)).is_err());
    }

    #[test]
    fn decoupled_identical_nodes_stay_identical() {
        let model = SystemModel::new(
            Dynamics::HrDiffusive {
                hr: HrParams { sigma: 0.0, ..HrParams::small_network() },
            },
            Arc::new(Network::from_dense("k3", 3, vec![0., 1., 1., 1., 0., 1., 1., 1., 0.], false).unwrap()),
        )
        .unwrap();
        let init: Vec<f64> = (0..3).flat_map(|_| [-0.5, -0.5, -0.5]).collect();
        let cfg = IntegrationConfig {
            dt: 0.01,
            transient_time: 10.0,
            window_time: 20.0,
            sample_stride: 5,
            ..Default::default()
        };
        let traj = integrate_ode(&model, &init, &cfg).unwrap();
        assert_eq!(traj.n_samples(), 400);
        for c in 0..3 {
            assert_eq!(traj.series(0, c), traj.series(1, c));
            assert_eq!(traj.series(0, c), traj.series(2, c));
        }
    }

    #[test]
    fn non_integral_window_rejected() {
        let cfg = IntegrationConfig {
            dt: 0.03,
            window_time: 1.0,
            ..Default::default()
        };
        assert!(matches!(cfg.step_counts(ModelKind::HrDiffusive), Err(Error::Validation(_))));
        let cfg = IntegrationConfig { dt: -0.1, ..Default::default() };
        assert!(cfg.step_counts(ModelKind::Kuramoto).is_err());
    }

    #[test]
    fn wrong_kind_errors() {
        let model = henon_isolated();
        assert!(matches!(
            integrate_ode(&model, &[0.0; 4], &IntegrationConfig::default()),
            Err(Error::WrongSystem(..))
        ));
    }

    #[test]
    fn observables() {
        let traj = TrajectorySet::from_samples(
            2,
            1,
            0.1,
            vec![std::f64::consts::FRAC_PI_6; 64],
            vec![0.0; 2],
        )
        .unwrap();
        let obs = observable_series(&traj, ObservableKind::SinPhase).unwrap();
        for row in &obs {
            assert!(row.iter().all(|v| (v - 0.5).abs() < 1e-15));
        }
        let shifted: Vec<f64> = traj
            .samples()
            .iter()
            .map(|v| v + 2.0 * std::f64::consts::PI)
            .collect();
        let traj2 = TrajectorySet::from_samples(2, 1, 0.1, shifted, vec![0.0; 2]).unwrap();
        let obs2 = observable_series(&traj2, ObservableKind::SinPhase).unwrap();
        for (a, b) in obs.iter().flatten().zip(obs2.iter().flatten()) {
            assert!((a - b).abs() < 1e-14);
        }

        let hr = TrajectorySet::from_samples(2, 3, 0.1, (0..6 * 40).map(|v| v as f64).collect(), vec![0.0; 6])
            .unwrap();
        let x = observable_series(&hr, ObservableKind::Component0).unwrap();
        assert_eq!(x[1], hr.series(1, 0));
        assert!(observable_series(&hr, ObservableKind::SinPhase).is_err());
    }

    #[test]
    fn csv_dump_header() {
        let traj = iterate_map(&henon_isolated(), &[0.0; 4], &map_cfg(0, 32)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,node,c0,c1"));
        assert_eq!(lines.next(), Some("1,0,1,0"));
        assert_eq!(text.lines().count(), 1 + 64);
    }
}
