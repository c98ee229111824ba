//! Guided detection and its ablations.
//!
//! Each node embedding is noised to `t_detect`, denoised under the guided
//! noise estimate `(1 + λ)·ε_u − λ·ε_c`, decoded, and scored by its
//! reconstruction error. Scores are averaged over independent noise trials.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autoencoder::GraphAutoencoder;
use crate::common::CommonFeature;
use crate::diffusion::{reverse_sample, Conditioned, DiffusionModel, EpsPredictor, SamplerConfig, Unconditional};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NormalizedAdjacency};
use crate::metrics::{descending_order, summarize, LabeledScores, MetricSummary};
use crate::nn::tensor::Matrix;
use crate::par;
use crate::rng::{derive_seed, node_rng};

const FORWARD_TAG: u64 = 0x21;
const SDE_TAG: u64 = 0x22;

/// Which noise estimate drives the reverse process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    /// Autoencoder reconstruction of the clean embedding; no diffusion.
    Ae,
    /// Unconditional model only.
    Diff,
    /// Conditioned model only.
    CondDiff,
    /// Guided combination of both.
    DiffGad,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Ae, Component::Diff, Component::CondDiff, Component::DiffGad];
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::Ae => "ae",
            Component::Diff => "diff",
            Component::CondDiff => "cond-diff",
            Component::DiffGad => "diffgad",
        })
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ae" => Ok(Component::Ae),
            "diff" => Ok(Component::Diff),
            "cond-diff" => Ok(Component::CondDiff),
            "diffgad" => Ok(Component::DiffGad),
            other => Err(Error::InvalidArgument(format!("unknown component `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    pub lambda: f64,
    /// Corruption step; `None` means `T / 5`.
    pub t_detect: Option<usize>,
    pub sampler: SamplerConfig,
    pub seed: u64,
    pub trials: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            lambda: 2.0,
            t_detect: None,
            sampler: SamplerConfig::default(),
            seed: 0,
            trials: 20,
        }
    }
}

impl DetectConfig {
    pub fn t_detect_for(&self, t_steps: usize) -> usize {
        self.t_detect.unwrap_or(t_steps / 5)
    }
}

/// Element-wise `(1 + λ)·ε_u − λ·ε_c`.
pub fn guided_eps(eps_u: &Matrix, eps_c: &Matrix, lambda: f64) -> Result<Matrix> {
    eps_u.check_same_shape(eps_c, "guided_eps")?;
    Ok(eps_u.zip_map(eps_c, |u, c| (1.0 + lambda) * u - lambda * c))
}

/// Guided predictor over an unconditional and a conditioned model.
pub struct Guided<'a> {
    pub uncond: Unconditional<'a>,
    pub cond: Conditioned<'a>,
    pub lambda: f64,
}

impl EpsPredictor for Guided<'_> {
    fn latent_dim(&self) -> usize {
        self.uncond.latent_dim()
    }

    fn predict_eps(&self, z_t: &Matrix, t: f64) -> Result<Matrix> {
        let u = self.uncond.predict_eps(z_t, t)?;
        let c = self.cond.predict_eps(z_t, t)?;
        guided_eps(&u, &c, self.lambda)
    }
}

/// Per-node scores with their ranking and trial breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub component: Component,
    pub scores: Vec<f64>,
    /// Node ids by descending score.
    pub ranking: Vec<usize>,
    pub per_trial: Vec<Vec<f64>>,
    pub summary: Option<MetricSummary>,
}

impl ScoreReport {
    fn new(component: Component, per_trial: Vec<Vec<f64>>) -> Result<Self> {
        let n = per_trial.first().map_or(0, Vec::len);
        let mut scores = vec![0.0; n];
        for trial in &per_trial {
            for (s, &v) in scores.iter_mut().zip(trial) {
                *s += v;
            }
        }
        let count = per_trial.len() as f64;
        scores.iter_mut().for_each(|s| *s /= count);
        if let Some(v) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("anomaly score of node {v}"),
            });
        }
        Ok(ScoreReport {
            component,
            ranking: descending_order(&scores),
            scores,
            per_trial,
            summary: None,
        })
    }

    /// Fills in the metric summary. Labels are only ever read here.
    pub fn evaluate(&mut self, labels: &[u8]) -> Result<MetricSummary> {
        let summary = summarize(&LabeledScores::new(self.scores.clone(), labels.to_vec())?)?;
        self.summary = Some(summary);
        Ok(summary)
    }

    /// `node_id,score,rank` with rank 1 the most anomalous.
    pub fn to_csv(&self) -> String {
        let mut rank = vec![0; self.scores.len()];
        for (r, &v) in self.ranking.iter().enumerate() {
            rank[v] = r + 1;
        }
        let mut out = String::from("node_id,score,rank\n");
        for (v, s) in self.scores.iter().enumerate() {
            out.push_str(&format!("{v},{s},{}\n", rank[v]));
        }
        out
    }
}

/// The trained pieces detection needs.
#[derive(Debug, Clone, Copy)]
pub struct Detector<'a> {
    ae: &'a GraphAutoencoder,
    uncond: &'a DiffusionModel,
    cond: &'a DiffusionModel,
    common: &'a CommonFeature,
}

impl<'a> Detector<'a> {
    pub fn new(
        ae: &'a GraphAutoencoder,
        uncond: &'a DiffusionModel,
        cond: &'a DiffusionModel,
        common: &'a CommonFeature,
    ) -> Result<Self> {
        if uncond.is_conditioned() || !cond.is_conditioned() {
            return Err(Error::InvalidArgument("need one unconditional and one conditioned model".into()));
        }
        if uncond.schedule() != cond.schedule() {
            return Err(Error::InvalidArgument("diffusion models use different schedules".into()));
        }
        if uncond.standardizer() != cond.standardizer() {
            return Err(Error::InvalidArgument("diffusion models were fit to different latents".into()));
        }
        let k = ae.latent_dim();
        if uncond.latent_dim() != k || cond.latent_dim() != k || common.dim() != k {
            return Err(Error::shape("detector", format!("latent dim {k}"), uncond.latent_dim()));
        }
        if !common.is_frozen() {
            return Err(Error::InvalidArgument("common feature must be frozen before detection".into()));
        }
        Ok(Detector { ae, uncond, cond, common })
    }

    pub fn t_steps(&self) -> usize {
        self.uncond.schedule().steps
    }

    fn predictor(&self, component: Component, lambda: f64) -> Result<Box<dyn EpsPredictor + 'a>> {
        Ok(match component {
            Component::Ae => return Err(Error::InvalidArgument("the AE component does not sample".into())),
            Component::Diff => Box::new(self.uncond.unconditional()?),
            Component::CondDiff => Box::new(self.cond.conditioned_on(self.common)?),
            Component::DiffGad => Box::new(Guided {
                uncond: self.uncond.unconditional()?,
                cond: self.cond.conditioned_on(self.common)?,
                lambda,
            }),
        })
    }

    /// Standard-normal forward noise, row `v` from node `v`'s own stream.
    pub fn forward_noise(&self, n: usize, trial_seed: u64) -> Matrix {
        let k = self.ae.latent_dim();
        let seed = derive_seed(trial_seed, FORWARD_TAG);
        let rows = par::map_indices(n, |v| {
            let mut rng = node_rng(seed, v);
            (0..k).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>()
        });
        Matrix::from_rows(&rows)
    }

    /// Scores of one trial given its forward noise.
    #[allow(clippy::too_many_arguments)]
    pub fn score_trial(
        &self,
        g: &AttributedGraph,
        adj: &NormalizedAdjacency,
        z: &Matrix,
        component: Component,
        cfg: &DetectConfig,
        noise: &Matrix,
        trial_seed: u64,
    ) -> Result<Vec<f64>> {
        let t = cfg.t_detect_for(self.t_steps());
        if component == Component::Ae || t == 0 {
            return self.ae.node_scores(g, adj, z);
        }
        let sched = self.uncond.schedule();
        let std = self.uncond.standardizer();
        let (a, b) = sched.mixing(t as f64);
        let z_t = std.apply(z).zip_map(noise, |x, e| a * x + b * e);
        let predictor = self.predictor(component, cfg.lambda)?;
        let z0 = reverse_sample(
            &z_t,
            t as f64,
            predictor.as_ref(),
            sched,
            &cfg.sampler,
            derive_seed(trial_seed, SDE_TAG),
        )?;
        self.ae.node_scores(g, adj, &std.invert(&z0))
    }

    /// Full detection on `g`. Never reads `g`'s labels.
    pub fn detect(
        &self,
        g: &AttributedGraph,
        adj: &NormalizedAdjacency,
        cfg: &DetectConfig,
        component: Component,
    ) -> Result<ScoreReport> {
        if cfg.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if cfg.sampler.steps == 0 {
            return Err(Error::InvalidArgument("sample steps must be >= 1".into()));
        }
        let t = cfg.t_detect_for(self.t_steps());
        if t > self.t_steps() {
            return Err(Error::InvalidArgument(format!("t_detect {t} outside [0, {}]", self.t_steps())));
        }
        let z = self.ae.encode(g, adj)?.z;
        if component == Component::Ae || t == 0 {
            let scores = self.ae.node_scores(g, adj, &z)?;
            return ScoreReport::new(component, vec![scores; cfg.trials]);
        }
        let n = g.num_nodes();
        let per_trial = par::map_jobs(cfg.trials, |trial| {
            let trial_seed = derive_seed(cfg.seed, trial as u64);
            let noise = self.forward_noise(n, trial_seed);
            self.score_trial(g, adj, &z, component, cfg, &noise, trial_seed)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        ScoreReport::new(component, per_trial)
    }
}

/// Which ablation a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Component,
    Lambda,
    TDetect,
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sweep::Component => "component",
            Sweep::Lambda => "lambda",
            Sweep::TDetect => "t_detect",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    pub lambdas: Vec<f64>,
    pub t_values: Vec<usize>,
    pub components: bool,
}

impl AblationGrid {
    /// λ ∈ {−1, 0, 0.2, …, 2.0}; t at 1 and every tenth of the schedule.
    pub fn standard(t_steps: usize) -> Self {
        let mut lambdas = vec![-1.0, 0.0];
        lambdas.extend((1..=10).map(|i| i as f64 / 5.0));
        let mut t_values = vec![1];
        t_values.extend((1..=10).map(|i| i * t_steps / 10));
        t_values.dedup();
        AblationGrid {
            lambdas,
            t_values,
            components: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub sweep: Sweep,
    pub component: Component,
    pub lambda: f64,
    pub t_detect: usize,
    pub summary: MetricSummary,
    pub scores: Vec<f64>,
}

/// Runs every grid point; labels are used only for the metrics.
pub fn ablate(
    detector: &Detector<'_>,
    g: &AttributedGraph,
    adj: &NormalizedAdjacency,
    base: &DetectConfig,
    grid: &AblationGrid,
    labels: &[u8],
) -> Result<Vec<AblationRow>> {
    let t_base = base.t_detect_for(detector.t_steps());
    let mut points = Vec::new();
    if grid.components {
        for c in Component::ALL {
            points.push((Sweep::Component, c, base.lambda, t_base));
        }
    }
    for &l in &grid.lambdas {
        points.push((Sweep::Lambda, Component::DiffGad, l, t_base));
    }
    for &t in &grid.t_values {
        points.push((Sweep::TDetect, Component::DiffGad, base.lambda, t));
    }
    let mut rows = Vec::with_capacity(points.len());
    for (sweep, component, lambda, t) in points {
        let cfg = DetectConfig {
            lambda,
            t_detect: Some(t),
            ..*base
        };
        let mut report = detector.detect(g, adj, &cfg, component)?;
        let summary = report.evaluate(labels)?;
        log::info!("ablation {sweep} {component} lambda={lambda} t={t} auc={:.4}", summary.roc_auc);
        rows.push(AblationRow {
            sweep,
            component,
            lambda,
            t_detect: t,
            summary,
            scores: report.scores,
        });
    }
    Ok(rows)
}

pub const ABLATION_CSV_HEADER: &str = "sweep,component,lambda,t_detect,roc_auc,average_precision,recall_at_k,auprc";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.sweep,
            r.component,
            r.lambda,
            r.t_detect,
            r.summary.roc_auc,
            r.summary.average_precision,
            r.summary.recall_at_k,
            r.summary.auprc
        ));
    }
    out
}
