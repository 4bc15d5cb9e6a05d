mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};
use vpsbasin::pipeline::{run_pipeline, run_stages, RunArtifacts, RunOptions, Stage, StageOutcome};
use vpsbasin::Error;

use common::{config, small_kuramoto, with};

fn read(path: &std::path::Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json_file(path: &std::path::Path) -> Value {
    serde_json::from_slice(&read(path)).unwrap()
}

#[test]
fn reruns_are_byte_identical_and_skip() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let art_a = run_pipeline(&config(&small_kuramoto(&a, 12)), &RunOptions::default()).unwrap();
    let art_b = run_pipeline(&config(&small_kuramoto(&b, 12)), &RunOptions::default()).unwrap();
    for (x, y) in [
        (&art_a.vps_matrix, &art_b.vps_matrix),
        (&art_a.label_grid, &art_b.label_grid),
        (&art_a.basin_image, &art_b.basin_image),
        (&art_a.dimension_report, &art_b.dimension_report),
    ] {
        assert_eq!(read(x), read(y), "{} differs", x.display());
    }

    let prov = json_file(&art_a.provenance);
    assert_eq!(prov["config"]["seed"], 7);
    assert!(prov["clustering"]["inertia_curve"].as_array().unwrap().len() >= 3);
    assert_eq!(prov["stage_digests"].as_object().unwrap().len(), 5);

    // nothing changed: every stage is current
    let (_, outcomes) = run_stages(&config(&small_kuramoto(&a, 12)), &Stage::ALL, &RunOptions::default()).unwrap();
    assert!(outcomes.values().all(|&o| o == StageOutcome::Skipped), "{outcomes:?}");

    // a clustering change keeps the sweep
    let doc = with(small_kuramoto(&a, 12), "clustering", json!({"k": 2}));
    let (_, outcomes) = run_stages(&config(&doc), &Stage::ALL, &RunOptions::default()).unwrap();
    assert_eq!(outcomes[&Stage::Sweep], StageOutcome::Skipped);
    assert_eq!(outcomes[&Stage::Cluster], StageOutcome::Ran);
    assert_eq!(json_file(&art_a.clustering)["k"], 2);
    assert_eq!(read(&art_a.vps_matrix), read(&art_b.vps_matrix));

    // --force reruns everything with identical output
    let forced = RunOptions {
        force: true,
        ..Default::default()
    };
    let (_, outcomes) = run_stages(&config(&small_kuramoto(&b, 12)), &Stage::ALL, &forced).unwrap();
    assert!(outcomes.values().all(|&o| o == StageOutcome::Ran));
    assert_eq!(read(&art_a.vps_matrix), read(&art_b.vps_matrix));
}

#[test]
fn interrupted_sweep_resumes_to_identical_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let cut = tmp.path().join("cut");
    run_stages(&config(&small_kuramoto(&full, 12)), &[Stage::Sweep], &RunOptions::default()).unwrap();

    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    let opts = RunOptions {
        cancel: Some(cancel.clone()),
        // request cancellation as soon as the third chunk has been flushed
        progress: Some(Arc::new(move |done, _| {
            if done >= 48 {
                flag.store(true, Ordering::SeqCst);
            }
        })),
        force: false,
    };
    let cfg = config(&small_kuramoto(&cut, 12));
    match run_stages(&cfg, &[Stage::Sweep], &opts) {
        Err(Error::Interrupted { completed, total }) => {
            assert_eq!((completed, total), (48, 144));
        }
        other => panic!("expected an interrupt, got {other:?}"),
    }
    let art = RunArtifacts::in_dir(&cut);
    assert!(!art.vps_matrix.exists());
    assert!(art.checkpoint_dir.join("status.bin").exists());
    assert!(art.provenance.exists(), "provenance is written on failure too");

    let resumed_from = Arc::new(std::sync::Mutex::new(Vec::new()));
    let log = resumed_from.clone();
    let opts = RunOptions {
        progress: Some(Arc::new(move |done, _| log.lock().unwrap().push(done))),
        ..Default::default()
    };
    run_stages(&cfg, &[Stage::Sweep], &opts).unwrap();
    assert_eq!(resumed_from.lock().unwrap().first(), Some(&64), "resume skips finished rows");
    assert_eq!(read(&art.vps_matrix), read(&RunArtifacts::in_dir(&full).vps_matrix));
}

#[test]
fn worker_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut grids = Vec::new();
    for workers in [1, 3] {
        let dir = tmp.path().join(format!("w{workers}"));
        let doc = with(small_kuramoto(&dir, 10), "workers", json!(workers));
        let art = run_pipeline(&config(&doc), &RunOptions::default()).unwrap();
        grids.push((read(&art.vps_matrix), read(&art.label_grid)));
    }
    assert_eq!(grids[0], grids[1]);
}

#[test]
fn stage_without_inputs_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("x");
    let cfg = config(&small_kuramoto(&dir, 6));
    let err = run_stages(&cfg, &[Stage::Basin], &RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("run it first"), "{err}");
    let prov = json_file(&RunArtifacts::in_dir(&dir).provenance);
    assert_eq!(prov["last_invocation"], json!({}));
}

#[test]
fn fractal_report_and_images() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("f");
    let art = run_pipeline(&config(&small_kuramoto(&dir, 16)), &RunOptions::default()).unwrap();
    let report = json_file(&art.dimension_report);
    assert_eq!(report["nx"], 16);
    assert_eq!(report["connectivity"], "4-neighbour");
    let frac = report["boundary_fraction"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&frac));
    // either a fit or a recorded reason for not having one
    assert!(report["box_counting"]["d_box"].is_number() || report["box_counting_error"].is_string());

    let ppm = read(&art.basin_image);
    assert!(ppm.starts_with(b"P6\n16 16\n255\n"));
    assert_eq!(ppm.len(), b"P6\n16 16\n255\n".len() + 3 * 256);
    let labels = std::fs::read_to_string(&art.label_grid).unwrap();
    assert_eq!(labels.lines().count(), 16);
}
