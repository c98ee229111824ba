//! Wall-clock and memory ladder over generated graphs of growing size.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Result;

use diffgad::autoencoder::train_ae;
use diffgad::common::init_common;
use diffgad::detector::{Component, Detector, Guided};
use diffgad::diffusion::{forward_noise, reverse_sample, train_dm, train_dm_with_common};
use diffgad::rng::rng_from;
use diffgad::graph::{inject_outliers, normalize_adjacency, synthetic_graph, OutlierSpec, SyntheticSpec};

use crate::config::RunConfig;

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub sizes: Vec<usize>,
    pub dim: usize,
    pub ae_epochs: usize,
    pub dm_epochs: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            sizes: vec![100, 500, 1000, 5000],
            dim: 16,
            ae_epochs: 20,
            dm_epochs: 50,
            seed: 0,
        }
    }
}

/// Timings for one graph size, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub nodes: usize,
    pub edges: usize,
    /// AE training with the configured α (structure decoder on unless α = 1).
    pub ae_train: f64,
    /// AE training with α = 1, which drops the structure decoder.
    pub ae_train_alpha1: f64,
    /// Both diffusion models, fixed epoch count.
    pub dm_train: f64,
    pub dm_epoch: f64,
    /// One guided reverse pass over all nodes.
    pub sample: f64,
    /// One full detection trial: encode, corrupt, sample, decode, score.
    pub detect: f64,
    /// Peak resident set so far, in KiB (0 where unavailable).
    pub peak_rss_kib: u64,
}

impl BenchRow {
    /// The dense n × n part of autoencoder training.
    pub fn structure_term(&self) -> f64 {
        (self.ae_train - self.ae_train_alpha1).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

impl BenchReport {
    /// Exponent `p` in `time ∝ n^p` for diffusion training plus sampling.
    pub fn dm_exponent(&self) -> Option<f64> {
        loglog_slope(&self.rows.iter().map(|r| (r.nodes as f64, r.dm_train + r.sample)).collect::<Vec<_>>())
    }

    pub fn structure_exponent(&self) -> Option<f64> {
        loglog_slope(&self.rows.iter().map(|r| (r.nodes as f64, r.structure_term())).collect::<Vec<_>>())
    }

    /// Per-epoch DM time ratio for every pair of sizes where one is twice the other.
    pub fn doubling_ratios(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for a in &self.rows {
            if let Some(b) = self.rows.iter().find(|b| b.nodes == 2 * a.nodes) {
                out.push((a.nodes, b.dm_epoch / a.dm_epoch));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("nodes,edges,ae_train,ae_train_alpha1,structure_term,dm_train,dm_epoch,sample,detect,peak_rss_kib\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                r.nodes,
                r.edges,
                r.ae_train,
                r.ae_train_alpha1,
                r.structure_term(),
                r.dm_train,
                r.dm_epoch,
                r.sample,
                r.detect,
                r.peak_rss_kib
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let fmt = |p: Option<f64>| p.map_or("n/a".to_string(), |p| format!("{p:.3}"));
        let mut s = format!(
            "dm_exponent={}\nstructure_exponent={}\n",
            fmt(self.dm_exponent()),
            fmt(self.structure_exponent())
        );
        for (n, ratio) in self.doubling_ratios() {
            let _ = writeln!(s, "dm_epoch_ratio_{n}_to_{}={ratio:.3}", 2 * n);
        }
        s
    }
}

/// `VmHWM` from `/proc/self/status`.
pub fn peak_rss_kib() -> u64 {
    std::fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("VmHWM:"))
                .and_then(|l| l.split_whitespace().nth(1).and_then(|v| v.parse().ok()))
        })
        .unwrap_or(0)
}

fn secs<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Times one size. The DM early stop is disabled so every size runs the same
/// number of epochs.
pub fn bench_size(cfg: &RunConfig, nodes: usize, opts: &BenchOptions) -> Result<BenchRow> {
    let base = synthetic_graph(&SyntheticSpec {
        nodes,
        dim: opts.dim,
        seed: opts.seed,
        ..SyntheticSpec::default()
    })?;
    let g = inject_outliers(
        &base,
        &OutlierSpec {
            n_struct: nodes / 100,
            n_ctx: nodes / 20,
            clique_size: 5,
            seed: opts.seed,
            ..OutlierSpec::default()
        },
    )?
    .without_labels();
    let adj = normalize_adjacency(&g);

    let mut ae_cfg = cfg.ae_config()?;
    ae_cfg.epochs = opts.ae_epochs;
    if ae_cfg.alpha >= 1.0 {
        ae_cfg.alpha = 0.5;
    }
    let (ae, ae_train) = secs(|| Ok(train_ae(&g, &adj, &ae_cfg)?))?;
    let alpha1 = diffgad::autoencoder::AeConfig { alpha: 1.0, ..ae_cfg.clone() };
    let (_, ae_train_alpha1) = secs(|| Ok(train_ae(&g, &adj, &alpha1)?))?;

    let z = &ae.embedding.z;
    let mut dm_u = cfg.dm_config(false)?;
    let mut dm_c = cfg.dm_config(true)?;
    for c in [&mut dm_u, &mut dm_c] {
        c.epochs = opts.dm_epochs;
        c.patience = 0;
    }
    let ((uncond, cond, common), dm_train) = secs(|| {
        let mut common = init_common(z, cfg.tau()?)?;
        let uncond = train_dm_with_common(z, &dm_u, &mut common)?;
        common.freeze();
        let cond = train_dm(z, &dm_c, Some(&common))?;
        Ok((uncond.model, cond.model, common))
    })?;

    let mut det = cfg.detect_config()?;
    det.trials = 1;
    let sched = uncond.schedule();
    let t = det.t_detect_for(sched.steps);
    let (z_t, _) = forward_noise(&uncond.standardizer().apply(z), t, sched, &mut rng_from(opts.seed))?;
    let guided = Guided {
        uncond: uncond.unconditional()?,
        cond: cond.conditioned_on(&common)?,
        lambda: det.lambda,
    };
    let (_, sample) = secs(|| Ok(reverse_sample(&z_t, t as f64, &guided, sched, &det.sampler, opts.seed)?))?;

    let detector = Detector::new(&ae.model, &uncond, &cond, &common)?;
    let (_, detect) = secs(|| Ok(detector.detect(&g, &adj, &det, Component::DiffGad)?))?;

    Ok(BenchRow {
        nodes,
        edges: g.num_edges(),
        ae_train,
        ae_train_alpha1,
        dm_train,
        dm_epoch: dm_train / (2 * opts.dm_epochs) as f64,
        sample,
        detect,
        peak_rss_kib: peak_rss_kib(),
    })
}

pub fn run_bench(cfg: &RunConfig, opts: &BenchOptions) -> Result<BenchReport> {
    let mut rows = Vec::with_capacity(opts.sizes.len());
    for &n in &opts.sizes {
        let row = bench_size(cfg, n, opts)?;
        log::info!(
            "bench n={n}: ae={:.3}s ae(alpha=1)={:.3}s dm={:.3}s sample={:.3}s detect={:.3}s",
            row.ae_train,
            row.ae_train_alpha1,
            row.dm_train,
            row.sample,
            row.detect
        );
        rows.push(row);
    }
    Ok(BenchReport { rows })
}
