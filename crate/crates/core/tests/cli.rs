mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

use common::small_kuramoto;

fn vpsbasin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpsbasin"))
        .args(args)
        .current_dir(cwd)
        .env_remove("VPSBASIN_WORKERS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, doc: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_echoes_normalized_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ok.json", &small_kuramoto(&tmp.path().join("out"), 4));
    let out = vpsbasin(&["validate", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let echoed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(echoed["clustering"]["max_iter"], 300);
    assert_eq!(echoed["vps"]["corr_mode"], "linear-valid");

    let out = vpsbasin(&["validate", &cfg, "--set", "integration.dt=0.1"], tmp.path());
    let echoed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(echoed["integration"]["dt"], 0.1);
}

#[test]
fn invalid_configs_exit_2_with_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cases = [
        (common::with(small_kuramoto(&out_dir, 4), "integration.dt", json!(-0.1)), "integration.dt"),
        (common::with(small_kuramoto(&out_dir, 4), "clustering.bogus", json!(1)), "clustering.bogus"),
        (common::with(small_kuramoto(&out_dir, 4), "clustering.k", json!(3)), "clustering"),
        (common::with(small_kuramoto(&out_dir, 4), "slice.resolution", json!([1, 4])), "slice.resolution"),
    ];
    for (i, (doc, path)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.json"), doc);
        for cmd in ["validate", "run"] {
            let out = vpsbasin(&[cmd, &cfg], tmp.path());
            assert_eq!(out.status.code(), Some(2), "case {i} {cmd}: {}", stderr(&out));
            assert!(stderr(&out).contains(path), "case {i}: {}", stderr(&out));
        }
    }
    assert!(!out_dir.exists(), "nothing is written for an invalid config");

    let out = vpsbasin(&["validate", "missing.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let bad_json = tmp.path().join("broken.json");
    std::fs::write(&bad_json, "{ not json").unwrap();
    let out = vpsbasin(&["validate", bad_json.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_1_and_run_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.json", &small_kuramoto(&tmp.path().join("out"), 6));
    let out = vpsbasin(&["basin", &cfg, "-q"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("run it first"), "{}", stderr(&out));

    for stage in ["sweep", "cluster", "basin", "fractal"] {
        let out = vpsbasin(&[stage, &cfg, "-q"], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{stage}: {}", stderr(&out));
    }
    let out = vpsbasin(&["run", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("sweep    Skipped") && err.contains("render   Ran"), "{err}");
    for f in ["provenance.json", "vps.bin", "labels.csv", "basin.ppm", "boundary.ppm", "fractal.json"] {
        assert!(tmp.path().join("out").join(f).exists(), "{f}");
    }

    let grid = tmp.path().join("out/labels.csv");
    let img = tmp.path().join("overlay.ppm");
    let out = vpsbasin(
        &["render", grid.to_str().unwrap(), "-o", img.to_str().unwrap(), "--boundary-overlay"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(std::fs::read(&img).unwrap().starts_with(b"P6\n6 6\n255\n"));
}

#[test]
fn network_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("two.edges");
    let out = vpsbasin(
        &["net", "generate", "two-population", "--pop-size", "4", "--intra", "0.6", "--inter", "0.4",
          "--drop-edge-seed", "3", "-o", edges.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = vpsbasin(&["net", "info", edges.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let info: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(info["n_nodes"], 8);
    // 28 pairs in K8, one dropped
    assert_eq!(info["edge_count"], 27);

    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/asym6.edges");
    let out = vpsbasin(&["net", "info", bundled.to_str().unwrap()], tmp.path());
    let info: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(info["n_nodes"], 6);
    assert_eq!(info["edge_count"], 6);

    let out = vpsbasin(&["net", "info", "nope.edges"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bundled_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let tmp = tempfile::tempdir().unwrap();
    for name in ["hr6-smallnet", "hr-dti-full", "kuramoto-2pop", "henon-dti"] {
        let path = dir.join(format!("{name}.json"));
        let out = vpsbasin(&["validate", path.to_str().unwrap()], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
    }
}
