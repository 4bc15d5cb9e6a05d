//! Local dynamics, coupling functions and network right-hand sides.
//!
//! States are flat, node-major vectors: node `i` owns `state[i*d .. (i+1)*d]`
//! with `d = ModelKind::node_dim()`. Per-node component order is `(x, y, z)`
//! for Hindmarsh–Rose, `(θ)` for Kuramoto and `(x, y)` for Hénon.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    HrDiffusive,
    HrElectrochemical,
    Kuramoto,
    Henon,
}

impl ModelKind {
    pub fn node_dim(self) -> usize {
        match self {
            ModelKind::HrDiffusive | ModelKind::HrElectrochemical => 3,
            ModelKind::Kuramoto => 1,
            ModelKind::Henon => 2,
        }
    }

    pub fn is_continuous(self) -> bool {
        !matches!(self, ModelKind::Henon)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::HrDiffusive => "hr-diffusive",
            ModelKind::HrElectrochemical => "hr-electrochemical",
            ModelKind::Kuramoto => "kuramoto",
            ModelKind::Henon => "henon",
        }
    }
}

/// Hindmarsh–Rose constants plus the network coupling strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HrParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub s: f64,
    pub r: f64,
    pub x_r: f64,
    /// External current `I`.
    pub i_ext: f64,
    pub sigma: f64,
}

impl HrParams {
    /// Electrochemically coupled regime used on the 83-region network.
    pub fn full_model() -> Self {
        HrParams {
            a: 1.0,
            b: 3.0,
            c: 1.0,
            d: 5.0,
            s: 4.0,
            r: 0.005,
            x_r: -1.6,
            i_ext: 3.25,
            sigma: 0.5,
        }
    }

    /// Diffusively coupled small-network regime.
    pub fn small_network() -> Self {
        HrParams {
            x_r: -0.5 * (1.0 + 5f64.sqrt()),
            i_ext: 3.27,
            r: 0.017,
            sigma: 0.0004,
            ..Self::full_model()
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.a, self.b, self.c, self.d, self.s, self.r, self.x_r, self.i_ext, self.sigma,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("HR parameters must be finite".into()));
        }
        if self.r <= 0.0 {
            return Err(Error::Validation(format!("HR r must be > 0, got {}", self.r)));
        }
        if self.sigma < 0.0 {
            return Err(Error::Validation(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChemicalParams {
    pub alpha: f64,
    pub v_syn: f64,
    pub theta_syn: f64,
    pub lambda: f64,
}

impl Default for ChemicalParams {
    fn default() -> Self {
        ChemicalParams {
            alpha: 0.03,
            v_syn: 2.0,
            theta_syn: -0.25,
            lambda: 10.0,
        }
    }
}

impl ChemicalParams {
    fn validate(&self) -> Result<()> {
        if [self.alpha, self.v_syn, self.theta_syn, self.lambda]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::Validation("chemical parameters must be finite".into()));
        }
        if self.lambda <= 0.0 {
            return Err(Error::Validation(format!("lambda must be > 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Synaptic activation `[1 + exp(-λ(x - θ_syn))]^{-1}`.
    #[inline]
    pub fn activation(&self, x_pre: f64) -> f64 {
        1.0 / (1.0 + (-self.lambda * (x_pre - self.theta_syn)).exp())
    }
}

/// Identical phase oscillators with frustration `α = π/2 − γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KuramotoParams {
    pub sigma: f64,
    pub gamma: f64,
}

impl Default for KuramotoParams {
    fn default() -> Self {
        KuramotoParams {
            sigma: 1.0,
            gamma: 0.025,
        }
    }
}

impl KuramotoParams {
    pub fn alpha(&self) -> f64 {
        FRAC_PI_2 - self.gamma
    }

    fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || !self.gamma.is_finite() || self.sigma < 0.0 {
            return Err(Error::Validation(
                "Kuramoto sigma must be finite and >= 0, gamma finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HenonParams {
    pub p: f64,
    /// Hénon `b` (unrelated to the Hindmarsh–Rose `b`).
    pub b: f64,
    pub sigma: f64,
}

impl Default for HenonParams {
    fn default() -> Self {
        HenonParams {
            p: 1.44,
            b: 0.164,
            sigma: 0.8,
        }
    }
}

impl HenonParams {
    #[inline]
    pub fn fx(&self, x: f64, y: f64) -> f64 {
        1.0 - self.p * x * x + y
    }

    #[inline]
    pub fn fy(&self, x: f64) -> f64 {
        self.b * x
    }

    fn validate(&self) -> Result<()> {
        if [self.p, self.b, self.sigma].iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("Hénon parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Which system runs on the network, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Dynamics {
    HrDiffusive { hr: HrParams },
    HrElectrochemical { hr: HrParams, chemical: ChemicalParams },
    Kuramoto { kuramoto: KuramotoParams },
    Henon { henon: HenonParams },
}

impl Dynamics {
    pub fn kind(&self) -> ModelKind {
        match self {
            Dynamics::HrDiffusive { .. } => ModelKind::HrDiffusive,
            Dynamics::HrElectrochemical { .. } => ModelKind::HrElectrochemical,
            Dynamics::Kuramoto { .. } => ModelKind::Kuramoto,
            Dynamics::Henon { .. } => ModelKind::Henon,
        }
    }

    /// Default parameters for each kind.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::HrDiffusive => Dynamics::HrDiffusive {
                hr: HrParams::small_network(),
            },
            ModelKind::HrElectrochemical => Dynamics::HrElectrochemical {
                hr: HrParams::full_model(),
                chemical: ChemicalParams::default(),
            },
            ModelKind::Kuramoto => Dynamics::Kuramoto {
                kuramoto: KuramotoParams::default(),
            },
            ModelKind::Henon => Dynamics::Henon {
                henon: HenonParams::default(),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Dynamics::HrDiffusive { hr } => hr.validate(),
            Dynamics::HrElectrochemical { hr, chemical } => {
                hr.validate()?;
                chemical.validate()
            }
            Dynamics::Kuramoto { kuramoto } => kuramoto.validate(),
            Dynamics::Henon { henon } => henon.validate(),
        }
    }
}

/// Compressed rows of the adjacency matrix (nonzero entries only, column order kept).
#[derive(Debug, Clone)]
struct SparseRows {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseRows {
    fn new(net: &Network) -> Self {
        let mut offsets = Vec::with_capacity(net.n_nodes() + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for i in 0..net.n_nodes() {
            for (j, w) in net.neighbors(i) {
                cols.push(j);
                weights.push(w);
            }
            offsets.push(cols.len());
        }
        SparseRows {
            offsets,
            cols,
            weights,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }
}

/// A networked system: dynamics plus the (shared, immutable) coupling graph.
#[derive(Debug, Clone)]
pub struct SystemModel {
    dynamics: Dynamics,
    network: Arc<Network>,
    rows: SparseRows,
}

impl SystemModel {
    pub fn new(dynamics: Dynamics, network: Arc<Network>) -> Result<Self> {
        dynamics.validate()?;
        let rows = SparseRows::new(&network);
        Ok(SystemModel {
            dynamics,
            network,
            rows,
        })
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn kind(&self) -> ModelKind {
        self.dynamics.kind()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn n_nodes(&self) -> usize {
        self.network.n_nodes()
    }

    pub fn node_dim(&self) -> usize {
        self.kind().node_dim()
    }

    pub fn state_len(&self) -> usize {
        self.n_nodes() * self.node_dim()
    }

    pub(crate) fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_len() {
            return Err(Error::Argument(format!(
                "state has {} entries, model expects {} ({} nodes x {})",
                state.len(),
                self.state_len(),
                self.n_nodes(),
                self.node_dim()
            )));
        }
        Ok(())
    }

    /// Writes the time derivative of `state` into `out` (continuous kinds only).
    pub fn vector_field_into(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.kind().is_continuous() {
            return Err(Error::WrongSystem("a Hénon map", "vector field"));
        }
        self.check_state(state)?;
        self.check_state(out)?;
        self.rhs(state, out);
        Ok(())
    }

    /// Unchecked right-hand side; callers guarantee kind and lengths.
    pub(crate) fn rhs(&self, state: &[f64], out: &mut [f64]) {
        let n = self.n_nodes();
        match &self.dynamics {
            Dynamics::HrDiffusive { hr } => {
                for i in 0..n {
                    let xi = [state[3 * i], state[3 * i + 1], state[3 * i + 2]];
                    let f = hr_local_field(&xi, hr);
                    let mut acc = [0.0; 3];
                    for (j, w) in self.rows.row(i) {
                        acc[0] += w * (state[3 * j] - xi[0]);
                        acc[1] += w * (state[3 * j + 1] - xi[1]);
                        acc[2] += w * (state[3 * j + 2] - xi[2]);
                    }
                    out[3 * i] = f[0] + hr.sigma * acc[0];
                    out[3 * i + 1] = f[1] + hr.sigma * acc[1];
                    out[3 * i + 2] = f[2] + hr.sigma * acc[2];
                }
            }
            Dynamics::HrElectrochemical { hr, chemical } => {
                for i in 0..n {
                    let xi = [state[3 * i], state[3 * i + 1], state[3 * i + 2]];
                    let f = hr_local_field(&xi, hr);
                    let drive = -chemical.alpha * (xi[0] - chemical.v_syn);
                    let mut acc = [0.0; 2];
                    for (j, w) in self.rows.row(i) {
                        acc[0] += w * (drive * chemical.activation(state[3 * j]));
                        acc[1] += w * (state[3 * j + 1] - xi[1]);
                    }
                    out[3 * i] = f[0] + hr.sigma * acc[0];
                    out[3 * i + 1] = f[1] + hr.sigma * acc[1];
                    out[3 * i + 2] = f[2];
                }
            }
            Dynamics::Kuramoto { kuramoto } => {
                // sin(θj − θi − α) expanded through per-node sin/cos so each
                // evaluation costs N transcendental calls instead of one per edge.
                let (sin_a, cos_a) = kuramoto.alpha().sin_cos();
                let mut trig = Vec::with_capacity(n);
                trig.extend(state.iter().map(|th| th.sin_cos()));
                for i in 0..n {
                    let (si, ci) = trig[i];
                    let mut acc = 0.0;
                    for (j, w) in self.rows.row(i) {
                        let (sj, cj) = trig[j];
                        let sin_d = sj * ci - cj * si;
                        let cos_d = cj * ci + sj * si;
                        acc += w * (sin_d * cos_a - cos_d * sin_a);
                    }
                    out[i] = kuramoto.sigma * acc;
                }
            }
            Dynamics::Henon { .. } => unreachable!("maps have no vector field"),
        }
    }

    /// One iterate of the coupled Hénon network.
    pub fn henon_step_into(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        if self.kind() != ModelKind::Henon {
            return Err(Error::WrongSystem("a continuous-time model", "map step"));
        }
        self.check_state(state)?;
        self.check_state(out)?;
        let mut fx = vec![0.0; self.n_nodes()];
        self.map_step(state, out, &mut fx);
        Ok(())
    }

    /// Unchecked Hénon step; `fx` is scratch of length `n_nodes`.
    pub(crate) fn map_step(&self, state: &[f64], out: &mut [f64], fx: &mut [f64]) {
        let Dynamics::Henon { henon } = &self.dynamics else {
            unreachable!("map_step on a continuous model")
        };
        let n = self.n_nodes();
        for i in 0..n {
            fx[i] = henon.fx(state[2 * i], state[2 * i + 1]);
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (j, w) in self.rows.row(i) {
                acc += w * (fx[j] - fx[i]);
            }
            out[2 * i] = fx[i] + henon.sigma * acc;
            out[2 * i + 1] = henon.fy(state[2 * i]);
        }
    }
}

/// Hindmarsh–Rose single-neuron vector field at `(x, y, z)`.
#[inline]
pub fn hr_local_field(node: &[f64; 3], p: &HrParams) -> [f64; 3] {
    let [x, y, z] = *node;
    let x2 = x * x;
    [
        y - p.a * x2 * x + p.b * x2 - z + p.i_ext,
        p.c - p.d * x2 - y,
        p.r * (p.s * (x - p.x_r) - z),
    ]
}

/// Diffusive coupling `x_j − x_i`, componentwise.
pub fn diffusive_coupling(state_i: &[f64], state_j: &[f64]) -> Result<Vec<f64>> {
    if state_i.len() != state_j.len() {
        return Err(Error::Argument(format!(
            "coupled states differ in length ({} vs {})",
            state_i.len(),
            state_j.len()
        )));
    }
    Ok(state_i.iter().zip(state_j).map(|(a, b)| b - a).collect())
}

/// Electrical coupling through `y` plus sigmoidal chemical synapse into `x`.
pub fn electrochemical_coupling(
    state_i: &[f64; 3],
    state_j: &[f64; 3],
    c: &ChemicalParams,
) -> [f64; 3] {
    [
        -c.alpha * (state_i[0] - c.v_syn) * c.activation(state_j[0]),
        state_j[1] - state_i[1],
        0.0,
    ]
}

pub fn network_vector_field(model: &SystemModel, state: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.len()];
    model.vector_field_into(state, &mut out)?;
    Ok(out)
}

pub fn henon_network_step(model: &SystemModel, state: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.len()];
    model.henon_step_into(state, &mut out)?;
    Ok(out)
}
