//! Argument definitions and subcommand bodies.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use diffgad::autoencoder::{train_ae, GraphAutoencoder};
use diffgad::detector::{ablate, ablation_csv, AblationGrid};
use diffgad::graph::{
    inject_outliers, normalize_adjacency, save_graph, synthetic_graph, AttributedGraph, OutlierSpec, SyntheticSpec,
};
use diffgad::metrics::{summarize, LabeledScores, MetricSummary};
use diffgad::nn::Checkpoint;

use crate::bench::{run_bench, BenchOptions};
use crate::config::{RunConfig, KEYS};
use crate::pipeline::{
    cond_checkpoint, load_labels, load_models, load_unlabeled, run_pipeline, train_diffusion, PipelineOptions,
    AE_CKPT, CONFIG_FILE, DM_COND_CKPT, DM_UNCOND_CKPT, METRICS_CSV, METRICS_FILE, SCORES_FILE,
};

#[derive(Debug, Parser)]
#[command(name = "diffgad", version, about = "Graph anomaly detection with guided latent diffusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic attributed graph with injected outliers.
    Gen(GenArgs),
    /// Train the graph autoencoder into a run directory.
    TrainAe(StageArgs),
    /// Train both diffusion models on the saved autoencoder's embeddings.
    TrainDm(StageArgs),
    /// Score nodes with the saved models and write scores.csv.
    Detect(StageArgs),
    /// Compute metrics for a run's scores.csv against the dataset labels.
    Eval(EvalArgs),
    /// Component, λ and t sweeps over saved (or freshly trained) models.
    Ablate(StageArgs),
    /// Time every stage over a ladder of generated graph sizes.
    Bench(BenchArgs),
    /// Run every stage end to end.
    Pipeline(PipelineArgs),
    /// List configuration keys with their defaults.
    Keys,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub nodes: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub communities: usize,
    #[arg(long, default_value_t = 6.0)]
    pub avg_degree: f64,
    /// Fraction of edges inside a community.
    #[arg(long, default_value_t = 0.9)]
    pub intra: f64,
    /// Centroid spread relative to unit feature noise.
    #[arg(long, default_value_t = 1.5)]
    pub separation: f64,
    /// Number of injected cliques.
    #[arg(long = "struct", default_value_t = 0)]
    pub n_struct: usize,
    #[arg(long, default_value_t = 10)]
    pub clique: usize,
    /// Number of contextual outliers.
    #[arg(long, default_value_t = 0)]
    pub ctx: usize,
    /// Candidates drawn per contextual outlier.
    #[arg(long, default_value_t = 50)]
    pub pool: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl GenArgs {
    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            nodes: self.nodes,
            dim: self.dim,
            communities: self.communities,
            avg_degree: self.avg_degree,
            intra_fraction: self.intra,
            separation: self.separation,
            seed: self.seed,
        }
    }

    pub fn outlier_spec(&self) -> OutlierSpec {
        OutlierSpec {
            n_struct: self.n_struct,
            n_ctx: self.ctx,
            clique_size: self.clique,
            swap_pool: self.pool,
            // separate stream from the base graph
            seed: diffgad::rng::derive_seed(self.seed, 0x6e),
        }
    }

    pub fn generate(&self) -> Result<AttributedGraph> {
        let base = synthetic_graph(&self.synthetic_spec())?;
        Ok(inject_outliers(&base, &self.outlier_spec())?)
    }
}

/// Configuration layers shared by every model-touching command.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-dataset defaults: weibo, reddit, disney, books, enron, dgraph.
    #[arg(long)]
    pub preset: Option<String>,
    /// Any config key, e.g. `--set dm.depth=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Autoencoder epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Autoencoder learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub dm_epochs: Option<usize>,
    #[arg(long)]
    pub dm_hidden: Option<usize>,
    #[arg(long)]
    pub t_steps: Option<usize>,
    /// interp | edm_additive
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub sample_steps: Option<usize>,
    /// ode | sde
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub t_detect: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// ae | diff | cond-diff | diffgad
    #[arg(long)]
    pub component: Option<String>,
    /// Keep raw node features instead of z-scoring them.
    #[arg(long)]
    pub no_standardize: bool,
}

impl RunArgs {
    /// Command-line layer as `(key, value)` pairs; `--set` first, then flags.
    pub fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for s in &self.set {
            let Some((k, v)) = s.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{s}`");
            };
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut flag = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((key.to_string(), v));
            }
        };
        flag("seed", self.seed.map(|v| v.to_string()));
        flag("ae.alpha", self.alpha.map(|v| v.to_string()));
        flag("ae.latent_dim", self.latent_dim.map(|v| v.to_string()));
        flag("ae.epochs", self.epochs.map(|v| v.to_string()));
        flag("ae.lr", self.lr.map(|v| v.to_string()));
        flag("ae.dropout", self.dropout.map(|v| v.to_string()));
        flag("dm.epochs", self.dm_epochs.map(|v| v.to_string()));
        flag("dm.hidden", self.dm_hidden.map(|v| v.to_string()));
        flag("dm.t_steps", self.t_steps.map(|v| v.to_string()));
        flag("dm.kernel", self.kernel.clone());
        flag("detect.sample_steps", self.sample_steps.map(|v| v.to_string()));
        flag("detect.mode", self.mode.clone());
        flag("dm.tau", self.tau.map(|v| v.to_string()));
        flag("detect.lambda", self.lambda.map(|v| v.to_string()));
        flag("detect.t_detect", self.t_detect.map(|v| v.to_string()));
        flag("detect.trials", self.trials.map(|v| v.to_string()));
        flag("detect.component", self.component.clone());
        if self.no_standardize {
            flag("data.standardize", Some("false".into()));
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.preset.as_deref(), self.config.as_deref(), &self.overrides()?)
    }

    /// Like [`RunArgs::resolve`], falling back to the run directory's
    /// `config.txt` when no `--config` is given.
    pub fn resolve_in(&self, run_dir: &Path) -> Result<RunConfig> {
        let saved = run_dir.join(CONFIG_FILE);
        if self.config.is_none() && saved.exists() {
            let mut with_file = self.clone();
            with_file.config = Some(saved);
            return with_file.resolve();
        }
        self.resolve()
    }
}

#[derive(Debug, Clone, Args)]
pub struct StageArgs {
    /// Dataset directory (edges.tsv, features.csv, optional labels.csv).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub run_dir: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Method name written to metrics.csv.
    #[arg(long, default_value = "diffgad")]
    pub method: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', default_values_t = vec![100, 500, 1000, 5000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub ae_epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub dm_epochs_fixed: usize,
    /// Write the timing table here as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Reuse checkpoints already in the run directory.
    #[arg(long)]
    pub resume: bool,
    /// Run this many consecutive seeds, each in its own `seed-<s>` subdirectory.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a).map(|line| println!("{line}")),
        Command::TrainAe(a) => cmd_train_ae(&a),
        Command::TrainDm(a) => cmd_train_dm(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Eval(a) => cmd_eval(&a).map(|s| print!("{}", s.to_key_values())),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
        Command::Keys => {
            for k in KEYS {
                println!("{:<22} {:<8} {}", k.key, k.default, k.doc);
            }
            Ok(())
        }
    }
}

/// Writes the dataset and returns the summary line.
pub fn cmd_gen(a: &GenArgs) -> Result<String> {
    let g = a.generate()?;
    save_graph(&a.out, &g)?;
    let outliers = g.labels().map_or(0, |l| l.iter().filter(|&&x| x == 1).count());
    let meta = format!(
        "seed={}\nnodes={}\ndim={}\ncommunities={}\navg_degree={}\nintra={}\nseparation={}\nstruct={}\nclique={}\nctx={}\npool={}\nedges={}\noutliers={}\n",
        a.seed,
        a.nodes,
        a.dim,
        a.communities,
        a.avg_degree,
        a.intra,
        a.separation,
        a.n_struct,
        a.clique,
        a.ctx,
        a.pool,
        g.num_edges(),
        outliers
    );
    fs::write(a.out.join("gen_meta.txt"), meta)?;
    Ok(format!(
        "n={} m={} d={} outliers={} ratio={:.4}",
        g.num_nodes(),
        g.num_edges(),
        g.feature_dim(),
        outliers,
        outliers as f64 / g.num_nodes() as f64
    ))
}

fn stage_setup(a: &StageArgs) -> Result<(RunConfig, AttributedGraph)> {
    let cfg = a.run.resolve_in(&a.run_dir)?;
    fs::create_dir_all(&a.run_dir).with_context(|| format!("creating {}", a.run_dir.display()))?;
    fs::write(a.run_dir.join(CONFIG_FILE), cfg.to_annotated_text())?;
    let g = load_unlabeled(&a.data, &cfg)?;
    Ok((cfg, g))
}

pub fn cmd_train_ae(a: &StageArgs) -> Result<()> {
    let (cfg, g) = stage_setup(a)?;
    let adj = normalize_adjacency(&g);
    let trained = train_ae(&g, &adj, &cfg.ae_config()?).context("stage train_ae")?;
    trained.model.to_checkpoint().save(a.run_dir.join(AE_CKPT))?;
    log::info!("final autoencoder loss {:?}", trained.loss_history.last());
    Ok(())
}

pub fn cmd_train_dm(a: &StageArgs) -> Result<()> {
    let (cfg, g) = stage_setup(a)?;
    let adj = normalize_adjacency(&g);
    let ae = GraphAutoencoder::from_checkpoint(&Checkpoint::load(a.run_dir.join(AE_CKPT))?)
        .context("train-dm needs ae.ckpt; run train-ae first")?;
    let z = ae.encode(&g, &adj)?.z;
    let (uncond, cond, common) = train_diffusion(&z, &cfg)?;
    uncond.to_checkpoint().save(a.run_dir.join(DM_UNCOND_CKPT))?;
    cond_checkpoint(&cond, &common).save(a.run_dir.join(DM_COND_CKPT))?;
    Ok(())
}

pub fn cmd_detect(a: &StageArgs) -> Result<()> {
    let (cfg, g) = stage_setup(a)?;
    let adj = normalize_adjacency(&g);
    let models = load_models(&a.run_dir).context("detect needs trained models in the run directory")?;
    let report = models.detector()?.detect(&g, &adj, &cfg.detect_config()?, cfg.component()?)?;
    fs::write(a.run_dir.join(SCORES_FILE), report.to_csv())?;
    Ok(())
}

/// Parses a `node_id,score,rank` file back into scores indexed by node.
pub fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut cols = line.split(',');
        let (Some(id), Some(score)) = (cols.next(), cols.next()) else {
            bail!("{}:{}: expected node_id,score,rank", path.display(), i + 1);
        };
        pairs.push((id.trim().parse::<usize>()?, score.trim().parse::<f64>()?));
    }
    let mut scores = vec![f64::NAN; pairs.len()];
    for (id, s) in pairs {
        *scores
            .get_mut(id)
            .with_context(|| format!("{}: node id {id} out of range", path.display()))? = s;
    }
    if scores.iter().any(|s| s.is_nan()) {
        bail!("{}: node ids are not a permutation of 0..n", path.display());
    }
    Ok(scores)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<MetricSummary> {
    let scores = read_scores(&a.run_dir.join(SCORES_FILE))?;
    let labels = load_labels(&a.data)?.with_context(|| format!("no labels.csv in {}", a.data.display()))?;
    let summary = summarize(&LabeledScores::new(scores, labels)?)?;
    fs::write(a.run_dir.join(METRICS_FILE), summary.to_key_values())?;
    let dataset = a.data.file_name().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
    fs::write(
        a.run_dir.join(METRICS_CSV),
        format!("{}\n{}\n", MetricSummary::CSV_HEADER, summary.csv_row(&dataset, &a.method, a.seed)),
    )?;
    Ok(summary)
}

pub fn cmd_ablate(a: &StageArgs) -> Result<()> {
    let (cfg, g) = stage_setup(a)?;
    let adj = normalize_adjacency(&g);
    let models = if a.run_dir.join(DM_COND_CKPT).exists() {
        load_models(&a.run_dir)?
    } else {
        let m = crate::pipeline::train_models(&g, &cfg)?;
        crate::pipeline::save_models(&a.run_dir, &m)?;
        m
    };
    let detector = models.detector()?;
    let labels = load_labels(&a.data)?.with_context(|| format!("ablation needs labels in {}", a.data.display()))?;
    let grid = AblationGrid::standard(detector.t_steps());
    let rows = ablate(&detector, &g, &adj, &cfg.detect_config()?, &grid, &labels)?;
    let path = a.run_dir.join("ablation.csv");
    fs::write(&path, ablation_csv(&rows))?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let opts = BenchOptions {
        sizes: a.sizes.clone(),
        dim: a.dim,
        ae_epochs: a.ae_epochs,
        dm_epochs: a.dm_epochs_fixed,
        seed: cfg.seed()?,
    };
    let report = run_bench(&cfg, &opts)?;
    let csv = report.to_csv();
    if let Some(out) = &a.out {
        fs::write(out, &csv)?;
    }
    print!("{csv}{}", report.summary());
    Ok(())
}

pub fn cmd_pipeline(a: &PipelineArgs) -> Result<()> {
    if a.seeds == 0 {
        bail!("--seeds must be >= 1");
    }
    let base = a.run.resolve()?;
    if a.seeds == 1 {
        let out = run_pipeline(&base, &PipelineOptions { data: a.data.clone(), run_dir: a.run_dir.clone(), resume: a.resume })?;
        report_outcome(&out);
        return Ok(());
    }
    let first = base.seed()?;
    let results = diffgad::par::map_jobs(a.seeds as usize, |i| -> Result<(u64, Option<MetricSummary>)> {
        let seed = first + i as u64;
        let mut cfg = base.clone();
        cfg.set("seed", &seed.to_string(), crate::config::Source::Cli)?;
        let opts = PipelineOptions {
            data: a.data.clone(),
            run_dir: a.run_dir.join(format!("seed-{seed}")),
            resume: a.resume,
        };
        Ok((seed, run_pipeline(&cfg, &opts)?.summary))
    });
    let component = base.component()?.to_string();
    let dataset = a.data.file_name().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
    let mut csv = format!("{}\n", MetricSummary::CSV_HEADER);
    let mut aucs = Vec::new();
    for r in results {
        let (seed, summary) = r?;
        if let Some(s) = summary {
            csv.push_str(&s.csv_row(&dataset, &component, seed));
            csv.push('\n');
            aucs.push(s.roc_auc);
        }
    }
    fs::create_dir_all(&a.run_dir)?;
    fs::write(a.run_dir.join("metrics_all.csv"), csv)?;
    if !aucs.is_empty() {
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        let sd = (aucs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / aucs.len() as f64).sqrt();
        println!("roc_auc mean={mean:.4} std={sd:.4} over {} seeds", aucs.len());
    }
    Ok(())
}

fn report_outcome(out: &crate::pipeline::PipelineOutcome) {
    for s in &out.stages {
        println!("stage {} {} {:.3}s", s.name, s.status, s.seconds);
    }
    if let Some(s) = &out.summary {
        print!("{}", s.to_key_values());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_map_to_keys() {
        let cli = Cli::try_parse_from([
            "diffgad", "pipeline", "--data", "d", "--run-dir", "r", "--lambda", "-1", "--set", "dm.depth=3", "--alpha",
            "1",
        ])
        .unwrap();
        let Command::Pipeline(p) = cli.command else { panic!() };
        let cfg = p.run.resolve().unwrap();
        assert_eq!(cfg.raw("detect.lambda").unwrap(), "-1");
        assert_eq!(cfg.raw("dm.depth").unwrap(), "3");
        assert_eq!(cfg.raw("ae.alpha").unwrap(), "1");
    }

    #[test]
    fn bad_set_rejected() {
        let args = RunArgs { set: vec!["nokey".into()], ..RunArgs::default() };
        assert!(args.resolve().is_err());
        let args = RunArgs { set: vec!["ae.nope=1".into()], ..RunArgs::default() };
        assert!(args.resolve().is_err());
    }
}
