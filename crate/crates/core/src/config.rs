//! Pipeline configuration.
//!
//! A run is described by one JSON document. Normalization fills in every
//! default explicitly (model-dependent defaults included), resolves paths and
//! checks ranges, reporting each problem with a dotted path into the document.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::basinmap::{KMeansOptions, SliceAxis, SliceSpec};
use crate::dynsys::{Dynamics, ModelKind, SystemModel};
use crate::error::{Error, Result};
use crate::fractal::default_scales;
use crate::integrate::{IntegrationConfig, ObservableKind, MIN_STORED_SAMPLES};
use crate::netgraph::{
    generate_modular, generate_two_population, load_network, LoadOptions, ModularSpec, Network, NetworkFormat,
    TwoPopulationSpec,
};
use crate::util::sha256_hex;
use crate::vps::VpsConfig;

/// Environment variable overriding `workers`.
pub const ENV_WORKERS: &str = "VPSBASIN_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetworkSource {
    File {
        path: PathBuf,
        #[serde(default = "default_format")]
        format: NetworkFormat,
        #[serde(default)]
        symmetrize: bool,
    },
    TwoPopulation(TwoPopulationSpec),
    Modular(ModularSpec),
}

fn default_format() -> NetworkFormat {
    NetworkFormat::EdgeList
}

impl NetworkSource {
    pub fn build(&self) -> Result<Network> {
        match self {
            NetworkSource::File {
                path,
                format,
                symmetrize,
            } => load_network(path, *format, LoadOptions { symmetrize: *symmetrize }),
            NetworkSource::TwoPopulation(spec) => generate_two_population(spec),
            NetworkSource::Modular(spec) => generate_modular(spec),
        }
    }
}

/// Initial values of the coordinates not on the slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseState {
    Fill { value: f64 },
    Values { values: Vec<f64> },
    /// Uniform draws from the `base` sub-seed.
    Random { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    /// Node numbering used by `axis1`/`axis2`: 0 or 1.
    pub index_base: usize,
    pub axis1: SliceAxis,
    pub axis2: SliceAxis,
    pub range1: (f64, f64),
    pub range2: (f64, f64),
    pub resolution: (usize, usize),
    pub base: BaseState,
}

impl SliceConfig {
    pub fn to_spec(&self, n_nodes: usize, node_dim: usize, base_seed: u64) -> Result<SliceSpec> {
        let len = n_nodes * node_dim;
        let base_state = match &self.base {
            BaseState::Fill { value } => vec![*value; len],
            BaseState::Values { values } => {
                if values.len() != len {
                    return Err(Error::Argument(format!(
                        "base values have {} entries, state has {len}",
                        values.len()
                    )));
                }
                values.clone()
            }
            BaseState::Random { low, high } => {
                let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
                (0..len).map(|_| low + (high - low) * rng.random::<f64>()).collect()
            }
        };
        let zero_based = |a: SliceAxis| SliceAxis {
            node: a.node.wrapping_sub(self.index_base),
            component: a.component,
        };
        let spec = SliceSpec {
            axis1: zero_based(self.axis1),
            axis2: zero_based(self.axis2),
            range1: self.range1,
            range2: self.range2,
            resolution: self.resolution,
            base_state,
        };
        spec.validate(node_dim)?;
        Ok(spec)
    }

    /// Slice extent of one cell along each axis.
    pub fn cell_size(&self) -> (f64, f64) {
        (
            (self.range1.1 - self.range1.0) / (self.resolution.0.max(2) - 1) as f64,
            (self.range2.1 - self.range2.0) / (self.resolution.1.max(2) - 1) as f64,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Fixed cluster count; mutually exclusive with `k_max`.
    pub k: Option<usize>,
    /// Upper end of the elbow scan.
    pub k_max: Option<usize>,
    pub restarts: usize,
    pub max_iter: usize,
}

impl ClusteringConfig {
    pub fn kmeans_options(&self) -> KMeansOptions {
        KMeansOptions {
            restarts: self.restarts,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub enabled: bool,
    /// Pair separations in slice units.
    pub epsilons: Vec<f64>,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractalConfig {
    /// Box sides in cells.
    pub scales: Vec<usize>,
    pub uncertainty: UncertaintyConfig,
}

/// Fully normalized run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub description: String,
    pub network: NetworkSource,
    pub model: Dynamics,
    pub integration: IntegrationConfig,
    pub vps: VpsConfig,
    pub observable: ObservableKind,
    pub slice: SliceConfig,
    pub clustering: ClusteringConfig,
    pub fractal: FractalConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Sweep threads; 0 uses every available core.
    pub workers: usize,
    /// Rows between checkpoint flushes.
    pub checkpoint_every: usize,
    pub palette_seed: u64,
}

/// Sub-seeds handed to each seeded stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub master: u64,
    pub base_state: u64,
    pub kmeans: u64,
    pub uncertainty: u64,
}

pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut bytes = master.to_le_bytes().to_vec();
    bytes.extend_from_slice(label.as_bytes());
    let hex = sha256_hex(&bytes);
    u64::from_str_radix(&hex[..16], 16).expect("hex digest")
}

impl PipelineConfig {
    pub fn seeds(&self) -> SeedSet {
        SeedSet {
            master: self.seed,
            base_state: derive_seed(self.seed, "base-state"),
            kmeans: derive_seed(self.seed, "kmeans"),
            uncertainty: derive_seed(self.seed, "uncertainty"),
        }
    }

    pub fn build_model(&self) -> Result<SystemModel> {
        SystemModel::new(self.model, Arc::new(self.network.build()?))
    }

    pub fn slice_spec(&self, model: &SystemModel) -> Result<SliceSpec> {
        self.slice
            .to_spec(model.n_nodes(), model.node_dim(), self.seeds().base_state)
    }

    /// Digest of everything that can change results; output location, worker
    /// count and checkpoint cadence are excluded.
    pub fn result_digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("object");
        for key in ["output_dir", "workers", "checkpoint_every", "description"] {
            obj.remove(key);
        }
        sha256_hex(v.to_string().as_bytes())
    }

    /// Worker count after the environment override.
    pub fn effective_workers(&self) -> Result<usize> {
        match std::env::var(ENV_WORKERS) {
            Ok(s) => s.trim().parse().map_err(|_| {
                Error::Config(format!("{ENV_WORKERS}: `{s}` is not a non-negative integer"))
            }),
            Err(_) => Ok(self.workers),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Diagnostics(Vec<Diagnostic>);

impl Diagnostics {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            path: path.into(),
            message: message.into(),
        });
    }

    fn into_result<T>(self, value: T) -> Result<T> {
        if self.0.is_empty() {
            Ok(value)
        } else {
            Err(Error::Config(
                self.0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"),
            ))
        }
    }
}

const TOP_LEVEL_KEYS: [&str; 14] = [
    "description",
    "network",
    "model",
    "integration",
    "vps",
    "observable",
    "slice",
    "clustering",
    "fractal",
    "output_dir",
    "seed",
    "workers",
    "checkpoint_every",
    "palette_seed",
];

/// Discriminator keys: when these differ, the user object replaces the default.
const TAG_KEYS: [&str; 3] = ["kind", "mode", "source"];

fn merge(base: &mut Value, over: &Value, path: &str, diags: &mut Diagnostics) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let retagged = TAG_KEYS
                .iter()
                .any(|t| matches!((b.get(*t), o.get(*t)), (Some(x), Some(y)) if x != y));
            if retagged {
                *b = o.clone();
                return;
            }
            for (k, v) in o {
                let sub = format!("{path}.{k}");
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, &sub, diags),
                    None => diags.push(sub, "unknown key"),
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn typed<T: DeserializeOwned>(value: Value, section: &str, diags: &mut Diagnostics) -> Option<T> {
    match serde_path_to_error::deserialize::<_, T>(value) {
        Ok(t) => Some(t),
        Err(e) => {
            let inner = e.path().to_string();
            let path = if inner == "." || inner.is_empty() {
                section.to_string()
            } else {
                format!("{section}.{inner}")
            };
            diags.push(path, e.inner().to_string());
            None
        }
    }
}

fn section<T: Serialize + DeserializeOwned>(
    doc: &Map<String, Value>,
    name: &str,
    default: &T,
    diags: &mut Diagnostics,
) -> Option<T> {
    let mut value = serde_json::to_value(default).expect("defaults serialize");
    if let Some(user) = doc.get(name) {
        if !user.is_object() && value.is_object() {
            diags.push(name, "expected an object");
            return None;
        }
        merge(&mut value, user, name, diags);
    }
    typed(value, name, diags)
}

fn resolve(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn default_slice(kind: ModelKind, index_base: usize) -> SliceConfig {
    let (range, base) = match kind {
        ModelKind::HrDiffusive | ModelKind::HrElectrochemical => {
            ((-2.5, 2.5), BaseState::Fill { value: -0.5 })
        }
        ModelKind::Kuramoto => (
            (0.0, std::f64::consts::TAU),
            BaseState::Random {
                low: 0.0,
                high: std::f64::consts::TAU,
            },
        ),
        ModelKind::Henon => ((-1.5, 1.5), BaseState::Random { low: -0.1, high: 0.1 }),
    };
    SliceConfig {
        index_base,
        axis1: SliceAxis {
            node: index_base,
            component: 0,
        },
        axis2: SliceAxis {
            node: index_base + 1,
            component: 0,
        },
        range1: range,
        range2: range,
        resolution: (100, 100),
        base,
    }
}

fn default_fractal(slice: &SliceConfig) -> FractalConfig {
    let (nx, ny) = slice.resolution;
    let (cx, cy) = slice.cell_size();
    let cell = cx.min(cy);
    let limit = (nx.min(ny) / 2) as f64;
    let epsilons: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|m| m * cell)
        .filter(|e| e / cx < limit && e / cy < limit)
        .collect();
    FractalConfig {
        scales: default_scales(nx, ny),
        uncertainty: UncertaintyConfig {
            enabled: epsilons.len() >= 2,
            epsilons,
            n_pairs: 2000,
        },
    }
}

/// Parses a configuration file's JSON.
pub fn read_config_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!(
            "{}:{}:{}: {}",
            path.display(),
            e.line(),
            e.column(),
            e
        ))
    })
}

/// Applies `dotted.path=value`; the value is read as JSON, or as a plain
/// string when it is not valid JSON.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` has an empty segment")));
    }
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            return Err(Error::Config(format!(
                "{}: cannot set a key inside a non-object",
                parts[..i].join(".")
            )));
        }
        let obj = node.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("loop returns on the last segment")
}

/// Reads, overrides and normalizes a configuration file.
pub fn validate_config(path: &Path, overrides: &[String]) -> Result<PipelineConfig> {
    let mut doc = read_config_document(path)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let base_dir = path.parent().unwrap_or(Path::new("."));
    normalize_config(&doc, base_dir)
}

/// Fills defaults and checks every field. A relative network path is taken
/// against `base_dir`, a relative `output_dir` against the working directory.
/// Normalizing an already normalized document is a no-op.
pub fn normalize_config(doc: &Value, base_dir: &Path) -> Result<PipelineConfig> {
    let mut d = Diagnostics::default();
    let Some(doc) = doc.as_object() else {
        return Err(Error::Config("(root): expected a JSON object".into()));
    };
    for key in doc.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            d.push(key.clone(), "unknown key");
        }
    }

    let network = match doc.get("network") {
        None => {
            d.push("network", "required");
            None
        }
        Some(v) => typed::<NetworkSource>(v.clone(), "network", &mut d),
    }
    .map(|n| match n {
        NetworkSource::File {
            path,
            format,
            symmetrize,
        } => NetworkSource::File {
            path: resolve(base_dir, &path),
            format,
            symmetrize,
        },
        other => other,
    });
    let net = network.as_ref().and_then(|src| {
        if let NetworkSource::File { path, .. } = src {
            if !path.is_file() {
                d.push("network.path", format!("{} does not exist", path.display()));
                return None;
            }
        }
        match src.build() {
            Ok(n) => Some(n),
            Err(e) => {
                d.push("network", e.to_string());
                None
            }
        }
    });

    let kind = match doc.get("model").map(|m| m.get("kind")) {
        None => {
            d.push("model", "required");
            None
        }
        Some(None) => {
            d.push("model.kind", "required");
            None
        }
        Some(Some(k)) => typed::<ModelKind>(k.clone(), "model.kind", &mut d),
    };
    let Some(kind) = kind else {
        return Err(d.into_result(()).expect_err("kind failed to parse"));
    };

    let model = section(doc, "model", &Dynamics::default_for(kind), &mut d);
    let integration = section(doc, "integration", &IntegrationConfig::default_for(kind), &mut d);
    let vps = section(doc, "vps", &VpsConfig::default(), &mut d);
    let observable = match doc.get("observable") {
        Some(v) => typed(v.clone(), "observable", &mut d),
        None => Some(ObservableKind::default_for(kind)),
    };
    let index_base = doc
        .get("slice")
        .and_then(|s| s.get("index_base"))
        .and_then(Value::as_u64)
        .unwrap_or(0) as usize;
    let slice = section(doc, "slice", &default_slice(kind, index_base), &mut d);
    let user_k = doc
        .get("clustering")
        .and_then(|c| c.get("k"))
        .is_some_and(|k| !k.is_null());
    let clustering_default = ClusteringConfig {
        k: None,
        k_max: if user_k { None } else { Some(8) },
        restarts: 5,
        max_iter: 300,
    };
    let clustering = section(doc, "clustering", &clustering_default, &mut d);
    let fractal = slice
        .as_ref()
        .and_then(|s| section(doc, "fractal", &default_fractal(s), &mut d));
    let get = |name: &str, default: Value| doc.get(name).cloned().unwrap_or(default);
    let seed: Option<u64> = typed(get("seed", Value::from(0u64)), "seed", &mut d);
    let description: Option<String> = typed(get("description", Value::from("")), "description", &mut d);
    let workers: Option<usize> = typed(get("workers", Value::from(0u64)), "workers", &mut d);
    let checkpoint_every: Option<usize> =
        typed(get("checkpoint_every", Value::from(256u64)), "checkpoint_every", &mut d);
    let palette_seed: Option<u64> = match doc.get("palette_seed") {
        Some(v) => typed(v.clone(), "palette_seed", &mut d),
        None => seed,
    };
    let output_dir: Option<PathBuf> =
        typed::<PathBuf>(get("output_dir", Value::from("output")), "output_dir", &mut d).map(|p| {
            // outputs land relative to where the tool runs, inputs relative to the document
            let cwd = std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."));
            resolve(&cwd, &p)
        });

    if let Some(ic) = &integration {
        check_integration(ic, kind, &mut d);
        if let (Some(v), Ok(n)) = (&vps, ic.stored_samples(kind)) {
            check_vps(v, n, &mut d);
        }
    }
    if let (Some(m), Some(net)) = (&model, &net) {
        if let Err(e) = SystemModel::new(*m, Arc::new(net.clone())) {
            d.push("model", e.to_string());
        }
    }
    if let Some(s) = &slice {
        check_slice(s, net.as_ref().map(|n| n.n_nodes()), kind.node_dim(), &mut d);
    }
    if let Some(c) = &clustering {
        check_clustering(c, &mut d);
    }
    if let (Some(f), Some(s)) = (&fractal, &slice) {
        check_fractal(f, s, &mut d);
    }
    if checkpoint_every == Some(0) {
        d.push("checkpoint_every", "must be >= 1");
    }

    let assembled = (|| {
        Some(PipelineConfig {
            description: description?,
            network: network?,
            model: model?,
            integration: integration?,
            vps: vps?,
            observable: observable?,
            slice: slice?,
            clustering: clustering?,
            fractal: fractal?,
            output_dir: output_dir?,
            seed: seed?,
            workers: workers?,
            checkpoint_every: checkpoint_every?,
            palette_seed: palette_seed?,
        })
    })();
    d.into_result(assembled).map(|c| c.expect("no diagnostics implies every section parsed"))
}

fn check_integration(ic: &IntegrationConfig, kind: ModelKind, d: &mut Diagnostics) {
    if ic.sample_stride == 0 {
        d.push("integration.sample_stride", "must be >= 1");
        return;
    }
    if kind.is_continuous() {
        if !(ic.dt > 0.0 && ic.dt.is_finite()) {
            d.push("integration.dt", format!("must be > 0, got {}", ic.dt));
            return;
        }
        if !(ic.transient_time >= 0.0) {
            d.push("integration.transient_time", format!("must be >= 0, got {}", ic.transient_time));
        }
        if !(ic.window_time > 0.0) {
            d.push("integration.window_time", format!("must be > 0, got {}", ic.window_time));
        }
        for (name, span) in [("transient_time", ic.transient_time), ("window_time", ic.window_time)] {
            let n = (span / ic.dt).round();
            if span >= 0.0 && (n * ic.dt - span).abs() > 1e-9 * span.max(ic.dt) {
                d.push(
                    format!("integration.{name}"),
                    format!("{span} is not a whole number of dt = {} steps", ic.dt),
                );
            }
        }
    }
    if let Ok((_, window)) = ic.step_counts(kind) {
        if ((window / ic.sample_stride as u64) as usize) < MIN_STORED_SAMPLES {
            let field = if kind.is_continuous() { "window_time" } else { "window_steps" };
            d.push(
                format!("integration.{field}"),
                format!("window must store at least {MIN_STORED_SAMPLES} samples"),
            );
        }
    }
}

fn check_vps(v: &VpsConfig, n_samples: usize, d: &mut Diagnostics) {
    if !(v.beta >= 0.0 && v.beta.is_finite()) {
        d.push("vps.beta", format!("must be >= 0, got {}", v.beta));
    } else if let Err(e) = v.validate_for(n_samples) {
        d.push("vps.max_lag", e.to_string());
    }
}

fn check_slice(s: &SliceConfig, n_nodes: Option<usize>, node_dim: usize, d: &mut Diagnostics) {
    if s.index_base > 1 {
        d.push("slice.index_base", "must be 0 or 1");
        return;
    }
    for (name, axis) in [("axis1", s.axis1), ("axis2", s.axis2)] {
        if let Some(n) = n_nodes {
            if axis.node < s.index_base || axis.node - s.index_base >= n {
                d.push(
                    format!("slice.{name}.node"),
                    format!(
                        "node {} outside {}..={} for a {n}-node network",
                        axis.node,
                        s.index_base,
                        n - 1 + s.index_base
                    ),
                );
            }
        }
        if axis.component >= node_dim {
            d.push(
                format!("slice.{name}.component"),
                format!("component {} outside a {node_dim}-dimensional node", axis.component),
            );
        }
    }
    if s.axis1 == s.axis2 {
        d.push("slice.axis2", "must differ from axis1");
    }
    for (name, (lo, hi)) in [("range1", s.range1), ("range2", s.range2)] {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            d.push(format!("slice.{name}"), format!("needs finite min < max, got [{lo}, {hi}]"));
        }
    }
    if s.resolution.0 < 2 || s.resolution.1 < 2 {
        d.push("slice.resolution", "both entries must be >= 2");
    }
    match &s.base {
        BaseState::Fill { value } if !value.is_finite() => d.push("slice.base.value", "must be finite"),
        BaseState::Values { values } => {
            if let Some(n) = n_nodes {
                if values.len() != n * node_dim {
                    d.push(
                        "slice.base.values",
                        format!("{} entries, state has {}", values.len(), n * node_dim),
                    );
                }
            }
            if values.iter().any(|v| !v.is_finite()) {
                d.push("slice.base.values", "entries must be finite");
            }
        }
        BaseState::Random { low, high } if !(low < high && low.is_finite() && high.is_finite()) => {
            d.push("slice.base", format!("needs finite low < high, got [{low}, {high}]"))
        }
        _ => {}
    }
}

fn check_clustering(c: &ClusteringConfig, d: &mut Diagnostics) {
    match (c.k, c.k_max) {
        (Some(_), Some(_)) => d.push("clustering", "`k` (fixed) and `k_max` (elbow) are both set; choose one"),
        (None, None) => d.push("clustering", "set either `k` or `k_max`"),
        (Some(0), None) => d.push("clustering.k", "must be >= 1"),
        (None, Some(m)) if m < 3 => d.push("clustering.k_max", format!("must be >= 3, got {m}")),
        _ => {}
    }
    if c.restarts == 0 {
        d.push("clustering.restarts", "must be >= 1");
    }
    if c.max_iter == 0 {
        d.push("clustering.max_iter", "must be >= 1");
    }
}

fn check_fractal(f: &FractalConfig, s: &SliceConfig, d: &mut Diagnostics) {
    let limit = (s.resolution.0.min(s.resolution.1) / 2).max(1);
    if f.scales.is_empty() {
        d.push("fractal.scales", "must not be empty");
    }
    if let Some(bad) = f.scales.iter().find(|&&e| e == 0 || e > limit) {
        d.push("fractal.scales", format!("box size {bad} outside [1, {limit}]"));
    }
    let u = &f.uncertainty;
    if u.enabled {
        if u.n_pairs < 1000 {
            d.push("fractal.uncertainty.n_pairs", format!("must be >= 1000, got {}", u.n_pairs));
        }
        let (cx, cy) = s.cell_size();
        for e in &u.epsilons {
            if !(*e > 0.0) || e / cx >= s.resolution.0 as f64 || e / cy >= s.resolution.1 as f64 {
                d.push(
                    "fractal.uncertainty.epsilons",
                    format!("separation {e} must be positive and inside the slice"),
                );
            }
        }
        if u.epsilons.len() < 2 {
            d.push("fractal.uncertainty.epsilons", "at least two separations are needed");
        }
    }
}
