//! Weighted coupling networks: loading, generation, validation and summaries.
//!
//! Two text formats are understood:
//!
//! * **dense**: `N` lines of `N` whitespace-separated reals. Dense matrices
//!   are always undirected and must be exactly symmetric unless the loader is
//!   asked to symmetrize them.
//! * **edge-list**: one `i j w` triple per line, 0-indexed. `#` starts a
//!   comment. A `directed` line switches to directed semantics and an optional
//!   `nodes N` line fixes the node count (so trailing isolated nodes survive a
//!   round trip).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkFormat {
    Dense,
    EdgeList,
}

impl FromStr for NetworkFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" | "dense-matrix" => Ok(NetworkFormat::Dense),
            "edge-list" | "edges" => Ok(NetworkFormat::EdgeList),
            other => Err(Error::Argument(format!("unknown network format `{other}`"))),
        }
    }
}

/// An immutable weighted adjacency over `n_nodes` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    name: String,
    n_nodes: usize,
    directed: bool,
    /// Row-major `n_nodes × n_nodes`; entry `[i * n + j]` couples node `j` into node `i`.
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub name: String,
    pub n_nodes: usize,
    pub directed: bool,
    pub degree_per_node: Vec<f64>,
    pub is_symmetric: bool,
    pub edge_count: usize,
    pub min_weight: f64,
    pub max_weight: f64,
}

impl Network {
    /// Builds a network from a row-major weight matrix, checking every invariant.
    pub fn from_dense(
        name: impl Into<String>,
        n_nodes: usize,
        weights: Vec<f64>,
        directed: bool,
    ) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::Validation(format!(
                "a network needs at least 2 nodes, got {n_nodes}"
            )));
        }
        if weights.len() != n_nodes * n_nodes {
            return Err(Error::Shape(format!(
                "{} weights do not form a {n_nodes}x{n_nodes} matrix",
                weights.len()
            )));
        }
        for i in 0..n_nodes {
            for j in 0..n_nodes {
                let w = weights[i * n_nodes + j];
                if !w.is_finite() {
                    return Err(Error::Validation(format!("weight ({i},{j}) is not finite")));
                }
                if w < 0.0 {
                    return Err(Error::Validation(format!("weight ({i},{j}) = {w} is negative")));
                }
                if i == j && w != 0.0 {
                    return Err(Error::Validation(format!("self-loop on node {i} (weight {w})")));
                }
            }
        }
        let net = Network {
            name: name.into(),
            n_nodes,
            directed,
            weights,
        };
        if !directed {
            if let Some((i, j)) = net.first_asymmetry() {
                return Err(Error::Validation(format!(
                    "undirected network has A[{i}][{j}] = {} but A[{j}][{i}] = {}",
                    net.weight(i, j),
                    net.weight(j, i)
                )));
            }
        }
        Ok(net)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_nodes + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_nodes..(i + 1) * self.n_nodes]
    }

    /// Nonzero entries of row `i`, in increasing column order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(j, &w)| (j, w))
    }

    pub fn is_symmetric(&self) -> bool {
        self.first_asymmetry().is_none()
    }

    fn first_asymmetry(&self) -> Option<(usize, usize)> {
        let n = self.n_nodes;
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .find(|&(i, j)| self.weight(i, j) != self.weight(j, i))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

pub fn network_info(net: &Network) -> NetworkSummary {
    let n = net.n_nodes;
    let degree_per_node = (0..n).map(|i| net.row(i).iter().sum()).collect();
    let mut edge_count = 0;
    let mut min_weight = f64::INFINITY;
    let mut max_weight = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let w = net.weight(i, j);
            if w == 0.0 || (!net.directed && j < i) {
                continue;
            }
            edge_count += 1;
            min_weight = min_weight.min(w);
            max_weight = max_weight.max(w);
        }
    }
    if edge_count == 0 {
        min_weight = 0.0;
        max_weight = 0.0;
    }
    NetworkSummary {
        name: net.name.clone(),
        n_nodes: n,
        directed: net.directed,
        degree_per_node,
        is_symmetric: net.is_symmetric(),
        edge_count,
        min_weight,
        max_weight,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Replace an asymmetric dense matrix by `(A + Aᵀ) / 2` instead of rejecting it.
    pub symmetrize: bool,
}

pub fn load_network(path: &Path, format: NetworkFormat, opts: LoadOptions) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "network".to_string());
    let net = match format {
        NetworkFormat::Dense => parse_dense(&text, path, opts)?,
        NetworkFormat::EdgeList => parse_edge_list(&text, path)?,
    };
    Ok(net.with_name(name))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        message: message.into(),
    }
}

fn parse_weight(token: &str, path: &Path, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("`{token}` is not a number")))
}

pub fn parse_dense(text: &str, path: &Path, opts: LoadOptions) -> Result<Network> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| parse_weight(tok, path, line_no))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Shape(format!(
                    "{}:{line_no}: row has {} entries, expected {}",
                    path.display(),
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(parse_err(path, 1, "empty matrix"));
    }
    if rows[0].len() != n {
        return Err(Error::Shape(format!(
            "{}: matrix is {n}x{} (not square)",
            path.display(),
            rows[0].len()
        )));
    }
    let mut weights: Vec<f64> = rows.into_iter().flatten().collect();
    if opts.symmetrize {
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (weights[i * n + j] + weights[j * n + i]);
                weights[i * n + j] = avg;
                weights[j * n + i] = avg;
            }
        }
    }
    Network::from_dense("network", n, weights, false)
}

pub fn parse_edge_list(text: &str, path: &Path) -> Result<Network> {
    let mut directed = false;
    let mut declared_nodes: Option<usize> = None;
    let mut edges: Vec<(usize, usize, f64, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["directed"] => {
                if !edges.is_empty() {
                    return Err(parse_err(path, line_no, "`directed` must precede all edges"));
                }
                directed = true;
            }
            ["undirected"] => directed = false,
            ["nodes", n] => {
                let n = n
                    .parse::<usize>()
                    .map_err(|_| parse_err(path, line_no, format!("bad node count `{n}`")))?;
                declared_nodes = Some(n);
            }
            [i, j, w] => {
                let i = i
                    .parse::<usize>()
                    .map_err(|_| parse_err(path, line_no, format!("bad node index `{i}`")))?;
                let j = j
                    .parse::<usize>()
                    .map_err(|_| parse_err(path, line_no, format!("bad node index `{j}`")))?;
                let w = parse_weight(w, path, line_no)?;
                edges.push((i, j, w, line_no));
            }
            _ => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected `i j w`, found `{line}`"),
                ))
            }
        }
    }
    let max_index = edges.iter().map(|&(i, j, _, _)| i.max(j) + 1).max().unwrap_or(0);
    let n = match declared_nodes {
        Some(n) if n < max_index => {
            return Err(Error::Validation(format!(
                "edge references node {} but `nodes {n}` was declared",
                max_index - 1
            )))
        }
        Some(n) => n,
        None => max_index,
    };
    if n < 2 {
        return Err(Error::Validation(format!(
            "a network needs at least 2 nodes, got {n}"
        )));
    }
    let mut weights = vec![0.0; n * n];
    let mut seen = vec![false; n * n];
    for (i, j, w, line_no) in edges {
        if i == j {
            return Err(Error::Validation(format!(
                "{}:{line_no}: self-loop on node {i}",
                path.display()
            )));
        }
        if w < 0.0 || !w.is_finite() {
            return Err(Error::Validation(format!(
                "{}:{line_no}: weight {w} must be finite and nonnegative",
                path.display()
            )));
        }
        let slots: &[(usize, usize)] = if directed { &[(i, j)] } else { &[(i, j), (j, i)] };
        if slots.iter().any(|&(a, b)| seen[a * n + b]) {
            return Err(parse_err(path, line_no, format!("duplicate edge {i} {j}")));
        }
        for &(a, b) in slots {
            seen[a * n + b] = true;
            weights[a * n + b] = w;
        }
    }
    Network::from_dense("network", n, weights, directed)
}

/// Writes `net` so that [`load_network`] reproduces its weights exactly.
pub fn save_network(net: &Network, path: &Path, format: NetworkFormat) -> Result<()> {
    let text = render_network(net, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn render_network(net: &Network, format: NetworkFormat) -> Result<String> {
    let n = net.n_nodes;
    let mut out = String::new();
    match format {
        NetworkFormat::Dense => {
            if net.directed && !net.is_symmetric() {
                return Err(Error::Validation(
                    "dense format only holds symmetric networks; use edge-list".into(),
                ));
            }
            for i in 0..n {
                let row: Vec<String> = net.row(i).iter().map(|w| format!("{w}")).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        NetworkFormat::EdgeList => {
            let _ = writeln!(out, "# {}", net.name);
            if net.directed {
                out.push_str("directed\n");
            }
            let _ = writeln!(out, "nodes {n}");
            for i in 0..n {
                for (j, w) in net.neighbors(i) {
                    if net.directed || i < j {
                        let _ = writeln!(out, "{i} {j} {w}");
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPopulationSpec {
    pub pop_size: usize,
    pub intra_weight: f64,
    pub inter_weight: f64,
    /// Seed for choosing the removed edge; `None` keeps the graph complete.
    pub drop_edge_seed: Option<u64>,
}

/// Two all-to-all populations with distinct intra/inter weights, optionally
/// with one uniformly chosen edge removed.
pub fn generate_two_population(spec: &TwoPopulationSpec) -> Result<Network> {
    let m = spec.pop_size;
    if m < 2 {
        return Err(Error::Argument(format!("pop_size must be >= 2, got {m}")));
    }
    for (label, w) in [("intra_weight", spec.intra_weight), ("inter_weight", spec.inter_weight)] {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Argument(format!("{label} must be finite and >= 0, got {w}")));
        }
    }
    let n = 2 * m;
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                weights[i * n + j] = if (i < m) == (j < m) {
                    spec.intra_weight
                } else {
                    spec.inter_weight
                };
            }
        }
    }
    let name = match spec.drop_edge_seed {
        Some(seed) => {
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| weights[i * n + j] != 0.0)
                .collect();
            if edges.is_empty() {
                return Err(Error::Argument("no edge available to drop".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pick = rng.random_range(0..edges.len() as u64) as usize;
            let (i, j) = edges[pick];
            weights[i * n + j] = 0.0;
            weights[j * n + i] = 0.0;
            format!("two-population-{m}-drop-{i}-{j}")
        }
        None => format!("two-population-{m}"),
    };
    Network::from_dense(name, n, weights, false)
}

/// Seeded modular random graph used as a stand-in when no measured
/// connectome is at hand. Weights are uniform in `[0.1, 1]` and then scaled so
/// the largest weighted degree is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModularSpec {
    pub n_nodes: usize,
    pub n_modules: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub seed: u64,
}

pub fn generate_modular(spec: &ModularSpec) -> Result<Network> {
    let n = spec.n_nodes;
    if n < 2 || spec.n_modules == 0 || spec.n_modules > n {
        return Err(Error::Argument(format!(
            "need n_nodes >= 2 and 1 <= n_modules <= n_nodes, got {n} and {}",
            spec.n_modules
        )));
    }
    for (label, p) in [("p_intra", spec.p_intra), ("p_inter", spec.p_inter)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("{label} must lie in [0, 1], got {p}")));
        }
    }
    let module = |i: usize| i * spec.n_modules / n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let p = if module(i) == module(j) { spec.p_intra } else { spec.p_inter };
            // both draws happen for every pair so the stream does not depend on p
            let (u, w) = (rng.random::<f64>(), 0.1 + 0.9 * rng.random::<f64>());
            if u < p {
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
        }
    }
    let max_degree = (0..n)
        .map(|i| weights[i * n..(i + 1) * n].iter().sum::<f64>())
        .fold(0.0, f64::max);
    if max_degree > 0.0 {
        weights.iter_mut().for_each(|w| *w /= max_degree);
    }
    Network::from_dense(format!("modular-{n}-seed-{}", spec.seed), n, weights, false)
}
