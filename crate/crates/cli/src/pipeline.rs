//! Staged pipeline: autoencoder, unconditional model with common-feature
//! tracking, conditioned model, detection, evaluation.
//!
//! Every stage writes its artifact into one run directory. With `resume`,
//! stages whose artifact already exists are loaded instead of retrained,
//! provided the recorded config hash matches.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use diffgad::autoencoder::{train_ae, GraphAutoencoder};
use diffgad::common::{init_common, CommonFeature};
use diffgad::detector::{Component, Detector, ScoreReport};
use diffgad::diffusion::{train_dm, train_dm_with_common, DiffusionModel};
use diffgad::graph::{
    load_graph_with, normalize_adjacency, AttributedGraph, LoadOptions, EDGES_FILE, FEATURES_FILE, LABELS_FILE,
};
use diffgad::metrics::MetricSummary;
use diffgad::nn::tensor::Matrix;
use diffgad::nn::Checkpoint;

use crate::config::{hex, RunConfig};

pub const AE_CKPT: &str = "ae.ckpt";
pub const DM_UNCOND_CKPT: &str = "dm_uncond.ckpt";
pub const DM_COND_CKPT: &str = "dm_cond.ckpt";
pub const SCORES_FILE: &str = "scores.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const METRICS_CSV: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Everything detection needs, trained or loaded.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub ae: GraphAutoencoder,
    pub uncond: DiffusionModel,
    pub cond: DiffusionModel,
    pub common: CommonFeature,
}

impl TrainedModels {
    pub fn detector(&self) -> diffgad::Result<Detector<'_>> {
        Detector::new(&self.ae, &self.uncond, &self.cond, &self.common)
    }
}

/// Trains the unconditional model (refining `c` each epoch), freezes `c`,
/// then trains the conditioned model.
pub fn train_diffusion(z: &Matrix, cfg: &RunConfig) -> Result<(DiffusionModel, DiffusionModel, CommonFeature)> {
    let mut common = init_common(z, cfg.tau()?)?;
    let uncond = train_dm_with_common(z, &cfg.dm_config(false)?, &mut common).context("stage train_dm (unconditional)")?;
    common.freeze();
    let cond = train_dm(z, &cfg.dm_config(true)?, Some(&common)).context("stage train_dm (conditioned)")?;
    Ok((uncond.model, cond.model, common))
}

/// All training stages in memory. `g` should carry no labels.
pub fn train_models(g: &AttributedGraph, cfg: &RunConfig) -> Result<TrainedModels> {
    let adj = normalize_adjacency(g);
    let ae = train_ae(g, &adj, &cfg.ae_config()?).context("stage train_ae")?;
    let (uncond, cond, common) = train_diffusion(&ae.embedding.z, cfg)?;
    Ok(TrainedModels {
        ae: ae.model,
        uncond,
        cond,
        common,
    })
}

/// Stores `common` next to the conditioned model's weights.
pub fn cond_checkpoint(model: &DiffusionModel, common: &CommonFeature) -> Checkpoint {
    let mut ck = model.to_checkpoint();
    ck.set_hyper("common.tau", common.tau());
    ck.set_hyper("common.frozen", common.is_frozen());
    ck.buffers.insert("common.c".into(), Matrix::row_vector(common.c()));
    ck.buffers.insert("common.history".into(), common.history_matrix());
    ck
}

pub fn load_cond_checkpoint(ck: &Checkpoint) -> Result<(DiffusionModel, CommonFeature)> {
    let model = DiffusionModel::from_checkpoint(ck)?;
    let history = ck.buffer("common.history")?;
    let common = CommonFeature::from_parts(
        ck.buffer("common.c")?.as_slice().to_vec(),
        ck.hyper("common.tau")?,
        history.iter_rows().map(<[f64]>::to_vec).collect(),
        ck.hyper("common.frozen")?,
    )?;
    Ok((model, common))
}

pub fn save_models(dir: &Path, m: &TrainedModels) -> Result<()> {
    m.ae.to_checkpoint().save(dir.join(AE_CKPT))?;
    m.uncond.to_checkpoint().save(dir.join(DM_UNCOND_CKPT))?;
    cond_checkpoint(&m.cond, &m.common).save(dir.join(DM_COND_CKPT))?;
    Ok(())
}

pub fn load_models(dir: &Path) -> Result<TrainedModels> {
    let ae = GraphAutoencoder::from_checkpoint(&Checkpoint::load(dir.join(AE_CKPT))?)
        .with_context(|| format!("loading {}", dir.join(AE_CKPT).display()))?;
    let uncond = DiffusionModel::from_checkpoint(&Checkpoint::load(dir.join(DM_UNCOND_CKPT))?)
        .with_context(|| format!("loading {}", dir.join(DM_UNCOND_CKPT).display()))?;
    let (cond, common) = load_cond_checkpoint(&Checkpoint::load(dir.join(DM_COND_CKPT))?)
        .with_context(|| format!("loading {}", dir.join(DM_COND_CKPT).display()))?;
    Ok(TrainedModels { ae, uncond, cond, common })
}

/// Loads the dataset without labels; the label file is read only by
/// [`load_labels`].
pub fn load_unlabeled(data: &Path, cfg: &RunConfig) -> Result<AttributedGraph> {
    let g = load_graph_with(data, LoadOptions { standardize: cfg.standardize()? })
        .with_context(|| format!("loading dataset {}", data.display()))?;
    Ok(g.without_labels())
}

pub fn load_labels(data: &Path) -> Result<Option<Vec<u8>>> {
    let path = data.join(LABELS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let g = load_graph_with(data, LoadOptions { standardize: false })?;
    Ok(g.labels().map(<[u8]>::to_vec))
}

/// Git-style object hash (`blob <len>\0<content>`, SHA-256).
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub name: String,
    pub status: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub data: PathBuf,
    pub run_dir: PathBuf,
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: ScoreReport,
    pub summary: Option<MetricSummary>,
    pub stages: Vec<StageRecord>,
}

fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    Ok(crate::config::parse_pairs(&text)?.into_iter().collect())
}

fn timed<T>(stages: &mut Vec<StageRecord>, name: &str, reuse: bool, f: impl FnOnce(bool) -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f(reuse).with_context(|| format!("stage {name} failed"))?;
    let seconds = start.elapsed().as_secs_f64();
    log::info!("stage {name}: {} in {seconds:.3}s", if reuse { "reused" } else { "done" });
    stages.push(StageRecord {
        name: name.to_string(),
        status: match (reuse, name.starts_with("train")) {
            (true, _) => "reused",
            (false, true) => "trained",
            (false, false) => "ran",
        },
        seconds,
    });
    Ok(out)
}

/// Runs every stage into `opts.run_dir`.
pub fn run_pipeline(cfg: &RunConfig, opts: &PipelineOptions) -> Result<PipelineOutcome> {
    let dir = &opts.run_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating run dir {}", dir.display()))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    if opts.resume && manifest_path.exists() {
        let old = read_manifest(&manifest_path)?;
        if old.get("training_hash") != Some(&cfg.training_hash()) {
            bail!(
                "training config differs from the one recorded in {}; rerun without --resume",
                manifest_path.display()
            );
        }
    }
    fs::write(dir.join(CONFIG_FILE), cfg.to_annotated_text())?;

    let mut inputs = Vec::new();
    for name in [EDGES_FILE, FEATURES_FILE] {
        let bytes = fs::read(opts.data.join(name)).with_context(|| format!("reading {}", opts.data.join(name).display()))?;
        inputs.push((name, content_hash(&bytes)));
    }

    let mut stages = Vec::new();
    let g = load_unlabeled(&opts.data, cfg)?;
    let adj = normalize_adjacency(&g);
    let have = |f: &str| opts.resume && dir.join(f).exists();

    let ae = timed(&mut stages, "train_ae", have(AE_CKPT), |reuse| {
        if reuse {
            return Ok(GraphAutoencoder::from_checkpoint(&Checkpoint::load(dir.join(AE_CKPT))?)?);
        }
        let trained = train_ae(&g, &adj, &cfg.ae_config()?)?;
        trained.model.to_checkpoint().save(dir.join(AE_CKPT))?;
        Ok(trained.model)
    })?;
    let z = ae.encode(&g, &adj)?.z;

    let (uncond, cond, common) = timed(
        &mut stages,
        "train_dm",
        have(DM_UNCOND_CKPT) && have(DM_COND_CKPT),
        |reuse| {
            if reuse {
                let uncond = DiffusionModel::from_checkpoint(&Checkpoint::load(dir.join(DM_UNCOND_CKPT))?)?;
                let (cond, common) = load_cond_checkpoint(&Checkpoint::load(dir.join(DM_COND_CKPT))?)?;
                return Ok((uncond, cond, common));
            }
            let (uncond, cond, common) = train_diffusion(&z, cfg)?;
            uncond.to_checkpoint().save(dir.join(DM_UNCOND_CKPT))?;
            cond_checkpoint(&cond, &common).save(dir.join(DM_COND_CKPT))?;
            Ok((uncond, cond, common))
        },
    )?;

    let models = TrainedModels { ae, uncond, cond, common };
    let component: Component = cfg.component()?;
    let report = timed(&mut stages, "detect", false, |_| {
        let report = models.detector()?.detect(&g, &adj, &cfg.detect_config()?, component)?;
        fs::write(dir.join(SCORES_FILE), report.to_csv())?;
        Ok(report)
    })?;

    // first and only place labels are read
    let mut report = report;
    let summary = timed(&mut stages, "eval", false, |_| {
        let Some(labels) = load_labels(&opts.data)? else {
            log::warn!("no labels in {}; skipping metrics", opts.data.display());
            return Ok(None);
        };
        let summary = report.evaluate(&labels)?;
        fs::write(dir.join(METRICS_FILE), summary.to_key_values())?;
        let dataset = opts.data.file_name().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
        fs::write(
            dir.join(METRICS_CSV),
            format!("{}\n{}\n", MetricSummary::CSV_HEADER, summary.csv_row(&dataset, &component.to_string(), cfg.seed()?)),
        )?;
        Ok(Some(summary))
    })?;

    let mut manifest = format!("config_hash = {}\ntraining_hash = {}\n", cfg.hash(), cfg.training_hash());
    for (name, hash) in &inputs {
        manifest.push_str(&format!("input.{name} = {hash}\n"));
    }
    for s in &stages {
        manifest.push_str(&format!("stage.{}.status = {}\n", s.name, s.status));
        manifest.push_str(&format!("stage.{}.seconds = {:.6}\n", s.name, s.seconds));
    }
    fs::write(&manifest_path, manifest)?;

    Ok(PipelineOutcome { report, summary, stages })
}
