//! End-to-end run: sweep → cluster → basin → fractal → render.
//!
//! Each stage records a digest of its inputs in `stages.json`; a stage whose
//! digest and outputs are already present is skipped, so rerunning a
//! finished or interrupted run only redoes what changed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::basinmap::{
    build_basin_map, kmeans_cluster, select_k_elbow, sweep, sweep_fingerprint, BasinMap, Clustering, ProgressFn,
    SliceSpec, SweepOptions, VpsMatrix,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fractal::{box_count, extract_boundary, fit_box_dimension, uncertainty_exponent, BoxCountResult, UncertaintyResult};
use crate::render::{render_basin, render_boundary};
use crate::util::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Sweep,
    Cluster,
    Basin,
    Fractal,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Sweep, Stage::Cluster, Stage::Basin, Stage::Fractal, Stage::Render];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sweep => "sweep",
            Stage::Cluster => "cluster",
            Stage::Basin => "basin",
            Stage::Fractal => "fractal",
            Stage::Render => "render",
        }
    }
}

/// Artifact locations inside an output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub provenance: PathBuf,
    pub vps_matrix: PathBuf,
    pub vps_meta: PathBuf,
    pub clustering: PathBuf,
    pub label_grid: PathBuf,
    pub basin_image: PathBuf,
    pub boundary_image: PathBuf,
    pub dimension_report: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub stages: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        RunArtifacts {
            provenance: dir.join("provenance.json"),
            vps_matrix: dir.join("vps.bin"),
            vps_meta: dir.join("vps.json"),
            clustering: dir.join("clustering.json"),
            label_grid: dir.join("labels.csv"),
            basin_image: dir.join("basin.ppm"),
            boundary_image: dir.join("boundary.ppm"),
            dimension_report: dir.join("fractal.json"),
            checkpoint_dir: dir.join("checkpoints"),
            stages: dir.join("stages.json"),
        }
    }

    fn outputs(&self, stage: Stage) -> Vec<&Path> {
        match stage {
            Stage::Sweep => vec![&self.vps_matrix, &self.vps_meta],
            Stage::Cluster => vec![&self.clustering],
            Stage::Basin => vec![&self.label_grid],
            Stage::Fractal => vec![&self.dimension_report],
            Stage::Render => vec![&self.basin_image, &self.boundary_image],
        }
    }
}

#[derive(Default, Clone)]
pub struct RunOptions {
    pub cancel: Option<Arc<AtomicBool>>,
    pub progress: Option<Arc<ProgressFn>>,
    /// Rerun stages even when their recorded digest matches.
    pub force: bool,
}

/// What happened to each requested stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageOutcome {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpsMeta {
    pub config_digest: String,
    pub stage_digest: String,
    pub slice: SliceSpec,
    pub n_rows: usize,
    pub row_len: usize,
    pub n_sentinel: usize,
    pub vps_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub config_digest: String,
    /// `fixed` or `elbow`.
    pub mode: String,
    pub k: usize,
    pub inertia: f64,
    /// Elbow scan `W(1..=k_max)`; empty for a fixed `k`.
    pub inertia_curve: Vec<f64>,
    pub warnings: Vec<String>,
    pub clustering: Clustering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractalReport {
    pub config_digest: String,
    pub nx: usize,
    pub ny: usize,
    pub connectivity: String,
    pub n_labels: usize,
    pub boundary_cells: usize,
    pub boundary_fraction: f64,
    pub box_counting: Option<BoxCountResult>,
    /// Why no dimension was fitted, when none was.
    pub box_counting_error: Option<String>,
    pub uncertainty: Option<UncertaintyResult>,
    pub uncertainty_error: Option<String>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn chain(parts: &[&str]) -> String {
    sha256_hex(parts.join("\n").as_bytes())
}

/// Per-stage input digests for a configuration.
fn stage_digests(cfg: &PipelineConfig, sweep_digest: &str) -> BTreeMap<Stage, String> {
    let seeds = cfg.seeds();
    let clustering = chain(&[
        sweep_digest,
        &serde_json::to_string(&cfg.clustering).expect("serializes"),
        &seeds.kmeans.to_string(),
    ]);
    let fractal = chain(&[
        &clustering,
        &serde_json::to_string(&cfg.fractal).expect("serializes"),
        &seeds.uncertainty.to_string(),
    ]);
    let render = chain(&[&clustering, &cfg.palette_seed.to_string()]);
    BTreeMap::from([
        (Stage::Sweep, sweep_digest.to_string()),
        (Stage::Cluster, clustering.clone()),
        (Stage::Basin, clustering),
        (Stage::Fractal, fractal),
        (Stage::Render, render),
    ])
}

/// State shared by the stages of one invocation.
struct Run<'a> {
    cfg: &'a PipelineConfig,
    opts: &'a RunOptions,
    art: RunArtifacts,
    digests: BTreeMap<Stage, String>,
    recorded: BTreeMap<Stage, String>,
    config_digest: String,
    model: crate::dynsys::SystemModel,
    spec: SliceSpec,
    matrix: Option<VpsMatrix>,
}

impl Run<'_> {
    fn up_to_date(&self, stage: Stage) -> bool {
        self.recorded.get(&stage) == self.digests.get(&stage)
            && self.art.outputs(stage).iter().all(|p| p.exists())
    }

    fn require(&self, stage: Stage, needed_by: Stage) -> Result<()> {
        if self.up_to_date(stage) {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "stage `{}` needs current `{}` output in {}; run it first",
                needed_by.name(),
                stage.name(),
                self.cfg.output_dir.display()
            )))
        }
    }

    fn mark(&mut self, stage: Stage) -> Result<()> {
        self.recorded.insert(stage, self.digests[&stage].clone());
        write_json(&self.art.stages, &self.recorded)
    }

    fn matrix(&mut self) -> Result<&VpsMatrix> {
        if self.matrix.is_none() {
            let meta: VpsMeta = read_json(&self.art.vps_meta)?;
            self.matrix = Some(VpsMatrix::read_binary(&self.art.vps_matrix, meta.slice)?);
        }
        Ok(self.matrix.as_ref().unwrap())
    }

    fn run_stage(&mut self, stage: Stage) -> Result<StageOutcome> {
        if !self.opts.force && self.up_to_date(stage) {
            return Ok(StageOutcome::Skipped);
        }
        match stage {
            Stage::Sweep => self.sweep()?,
            Stage::Cluster => self.cluster()?,
            Stage::Basin => self.basin()?,
            Stage::Fractal => self.fractal()?,
            Stage::Render => self.render()?,
        }
        self.mark(stage)?;
        Ok(StageOutcome::Ran)
    }

    fn sweep(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let sweep_opts = SweepOptions {
            workers: cfg.effective_workers()?,
            checkpoint_dir: Some(self.art.checkpoint_dir.clone()),
            checkpoint_every: cfg.checkpoint_every,
            cancel: self.opts.cancel.clone(),
            progress: self.opts.progress.clone(),
        };
        let vm = sweep(&self.model, &self.spec, &cfg.integration, &cfg.vps, cfg.observable, &sweep_opts)?;
        vm.write_binary(&self.art.vps_matrix)?;
        let meta = VpsMeta {
            config_digest: self.config_digest.clone(),
            stage_digest: self.digests[&Stage::Sweep].clone(),
            slice: self.spec.clone(),
            n_rows: vm.n_rows(),
            row_len: vm.row_len,
            n_sentinel: vm.n_sentinel(),
            vps_sha256: vm.digest(),
        };
        write_json(&self.art.vps_meta, &meta)?;
        self.matrix = Some(vm);
        Ok(())
    }

    fn cluster(&mut self) -> Result<()> {
        self.require(Stage::Sweep, Stage::Cluster)?;
        let c = self.cfg.clustering.clone();
        let seed = self.cfg.seeds().kmeans;
        let config_digest = self.config_digest.clone();
        let vm = self.matrix()?;
        let report = match (c.k, c.k_max) {
            (Some(k), _) => {
                let cl = kmeans_cluster(vm, k, seed, &c.kmeans_options())?;
                ClusteringReport {
                    config_digest,
                    mode: "fixed".into(),
                    k,
                    inertia: cl.inertia,
                    inertia_curve: Vec::new(),
                    warnings: Vec::new(),
                    clustering: cl,
                }
            }
            (None, Some(k_max)) => {
                let elbow = select_k_elbow(vm, k_max, seed, &c.kmeans_options())?;
                let cl = elbow.clustering.expect("elbow keeps the chosen fit");
                ClusteringReport {
                    config_digest,
                    mode: "elbow".into(),
                    k: elbow.k,
                    inertia: cl.inertia,
                    inertia_curve: elbow.inertia_curve,
                    warnings: elbow.warnings,
                    clustering: cl,
                }
            }
            (None, None) => return Err(Error::Config("clustering: set either `k` or `k_max`".into())),
        };
        write_json(&self.art.clustering, &report)
    }

    fn basin(&mut self) -> Result<()> {
        self.require(Stage::Cluster, Stage::Basin)?;
        let report: ClusteringReport = read_json(&self.art.clustering)?;
        let cl = &report.clustering;
        build_basin_map(&cl.labels, self.spec.nx(), self.spec.ny(), cl.k)?.write_csv(&self.art.label_grid)
    }

    fn fractal(&mut self) -> Result<()> {
        self.require(Stage::Basin, Stage::Fractal)?;
        let bm = BasinMap::read_csv(&self.art.label_grid)?;
        let fcfg = &self.cfg.fractal;
        let bg = extract_boundary(&bm);
        let (box_counting, box_counting_error) =
            match box_count(&bg, &fcfg.scales).map(|counts| match fit_box_dimension(counts.clone()) {
                Ok(fit) => (fit, None),
                Err(e) => (counts, Some(e.to_string())),
            }) {
                Ok((r, err)) => (Some(r), err),
                Err(e) => (None, Some(e.to_string())),
            };
        let (uncertainty, uncertainty_error) = if fcfg.uncertainty.enabled {
            match uncertainty_exponent(
                &bm,
                self.cfg.slice.cell_size(),
                &fcfg.uncertainty.epsilons,
                fcfg.uncertainty.n_pairs,
                self.cfg.seeds().uncertainty,
            ) {
                Ok(u) => (Some(u), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, None)
        };
        let report = FractalReport {
            config_digest: self.config_digest.clone(),
            nx: bm.nx,
            ny: bm.ny,
            connectivity: "4-neighbour".into(),
            n_labels: bm.n_labels(),
            boundary_cells: bg.count(),
            boundary_fraction: bg.fraction(),
            box_counting,
            box_counting_error,
            uncertainty,
            uncertainty_error,
        };
        write_json(&self.art.dimension_report, &report)
    }

    fn render(&mut self) -> Result<()> {
        self.require(Stage::Basin, Stage::Render)?;
        let bm = BasinMap::read_csv(&self.art.label_grid)?;
        let bg = extract_boundary(&bm);
        render_basin(&bm, self.cfg.palette_seed, None).write_ppm(&self.art.basin_image)?;
        render_boundary(&bm, &bg).write_ppm(&self.art.boundary_image)
    }

    fn write_provenance(&self, outcomes: &BTreeMap<Stage, StageOutcome>) -> Result<()> {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let optional = |p: &Path| -> Option<Value> { read_json::<Value>(p).ok() };
        let sweep = optional(&self.art.vps_meta).map(|m| {
            json!({
                "n_rows": m["n_rows"],
                "row_len": m["row_len"],
                "n_sentinel": m["n_sentinel"],
                "vps_sha256": m["vps_sha256"],
            })
        });
        let clustering = optional(&self.art.clustering).map(|c| {
            json!({
                "mode": c["mode"],
                "k": c["k"],
                "inertia": c["inertia"],
                "inertia_curve": c["inertia_curve"],
                "warnings": c["warnings"],
            })
        });
        let fractal = optional(&self.art.dimension_report).map(|f| {
            json!({
                "boundary_fraction": f["boundary_fraction"],
                "d_box": f["box_counting"]["d_box"],
                "fit_r2": f["box_counting"]["fit_r2"],
                "alpha": f["uncertainty"]["alpha"],
            })
        });
        let doc = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "created_unix": created,
            "config": self.cfg,
            "config_digest": self.config_digest,
            "seeds": self.cfg.seeds(),
            "network": crate::netgraph::network_info(self.model.network()),
            "stage_digests": self.recorded,
            "last_invocation": outcomes,
            "sweep": sweep,
            "clustering": clustering,
            "fractal": fractal,
            "artifacts": self.art,
        });
        write_json(&self.art.provenance, &doc)
    }
}

fn prepare<'a>(cfg: &'a PipelineConfig, opts: &'a RunOptions) -> Result<Run<'a>> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let model = cfg.build_model()?;
    let spec = cfg.slice_spec(&model)?;
    let sweep_digest = sweep_fingerprint(&model, &spec, &cfg.integration, &cfg.vps, cfg.observable);
    let art = RunArtifacts::in_dir(&cfg.output_dir);
    let recorded = if art.stages.exists() {
        read_json(&art.stages)?
    } else {
        BTreeMap::new()
    };
    Ok(Run {
        cfg,
        opts,
        digests: stage_digests(cfg, &sweep_digest),
        art,
        recorded,
        config_digest: cfg.result_digest(),
        model,
        spec,
        matrix: None,
    })
}

/// Runs the listed stages in order and refreshes `provenance.json`, also
/// when a stage fails.
pub fn run_stages(
    cfg: &PipelineConfig,
    stages: &[Stage],
    opts: &RunOptions,
) -> Result<(RunArtifacts, BTreeMap<Stage, StageOutcome>)> {
    let mut run = prepare(cfg, opts)?;
    let mut outcomes = BTreeMap::new();
    let mut failure = None;
    for &stage in stages {
        match run.run_stage(stage) {
            Ok(o) => {
                outcomes.insert(stage, o);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    run.write_provenance(&outcomes)?;
    match failure {
        Some(e) => Err(e),
        None => Ok((run.art, outcomes)),
    }
}

/// Every stage, skipping those already current.
pub fn run_pipeline(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunArtifacts> {
    run_stages(cfg, &Stage::ALL, opts).map(|(a, _)| a)
}
