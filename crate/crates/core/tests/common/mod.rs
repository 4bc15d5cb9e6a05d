#![allow(dead_code)]

use std::path::Path;

use serde_json::{json, Value};
use vpsbasin::config::{normalize_config, PipelineConfig};

/// Six phase oscillators in two populations on a coarse grid; a few seconds per run.
pub fn small_kuramoto(out: &Path, resolution: usize) -> Value {
    json!({
        "network": {"source": "two-population", "pop_size": 3, "intra_weight": 0.6, "inter_weight": 0.4, "drop_edge_seed": 2},
        "model": {"kind": "kuramoto", "kuramoto": {"sigma": 1.0, "gamma": 0.025}},
        "integration": {"dt": 0.05, "transient_time": 20.0, "window_time": 20.0, "sample_stride": 2},
        "vps": {"max_lag": 10},
        "slice": {"axis1": {"node": 0, "component": 0}, "axis2": {"node": 3, "component": 0},
                  "resolution": [resolution, resolution]},
        "clustering": {"k_max": 4, "restarts": 2},
        "output_dir": out.to_str().unwrap(),
        "checkpoint_every": 16,
        "seed": 7
    })
}

pub fn config(doc: &Value) -> PipelineConfig {
    normalize_config(doc, Path::new(".")).expect("valid test config")
}

pub fn with(mut doc: Value, path: &str, value: Value) -> Value {
    let mut cur = &mut doc;
    let parts: Vec<&str> = path.split('.').collect();
    for p in &parts[..parts.len() - 1] {
        cur = cur.get_mut(*p).expect("path exists");
    }
    cur[parts[parts.len() - 1]] = value;
    doc
}
