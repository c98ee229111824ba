//! Acceptance harness. Prints one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=3,7` runs a subset. `ACCEPTANCE_STRICT=1` exits non-zero
//! when any criterion fails; by default the harness reports and exits 0 so
//! that a known, documented failure does not hide the other results.

use std::fmt::Write as _;
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{ensure, Result};
use clap::Parser;
use diffgad::autoencoder::{AeConfig, AeMasks, GraphAutoencoder};
use diffgad::common::{compute_weights, init_common};
use diffgad::detector::{Component, DetectConfig};
use diffgad::diffusion::{
    eps_loss_and_gradients, forward_noise, reverse_sample, train_dm, Denoiser, DenoiserConfig, DmConfig, Kernel,
    NoiseSchedule, SampleMode, SamplerConfig, Standardizer,
};
use diffgad::graph::{normalize_adjacency, AttributedGraph, NormalizedAdjacency};
use diffgad::metrics::{auprc, average_precision, recall_at_k, roc_auc, LabeledScores};
use diffgad::nn::gradcheck::{max_relative_error, numeric_gradients, relative_error};
use diffgad::nn::layers::{affine, affine_backward, gcn_backward, gcn_layer};
use diffgad::nn::{Activation, Matrix, ParamStore};
use diffgad_cli::bench::{run_bench, BenchOptions};
use diffgad_cli::cli::{Cli, Command, GenArgs};
use diffgad_cli::config::RunConfig;
use diffgad_cli::pipeline::{run_pipeline, train_models, PipelineOptions, SCORES_FILE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

/// Criterion 7 feeds criterion 8.
static SUITE_PASSED: Mutex<Option<bool>> = Mutex::new(None);

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- gradients

const FD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;

fn random_graph(n: usize, d: usize, rng: &mut ChaCha8Rng) -> (AttributedGraph, NormalizedAdjacency) {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.4 {
                edges.push((u, v));
            }
        }
    }
    let g = AttributedGraph::new(gaussian(n, d, rng), edges, None).expect("valid graph");
    let adj = normalize_adjacency(&g);
    (g, adj)
}

fn dropout_mask(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < 0.3 { 0.0 } else { 1.0 / 0.7 })
}

/// Zero biases leave dead ReLU units exactly on the kink, where central
/// differences are meaningless; move every parameter to a generic point.
fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for (_, p) in store.iter_mut() {
        for v in p.value.as_mut_slice() {
            *v = 0.7 * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

fn inner(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn fd(x: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        out.as_mut_slice()[i] = (up - down) / (2.0 * FD_STEP);
    }
    out
}

fn ae_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, d, k, hidden) = (rng.random_range(3..8), rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..5));
    let (g, adj) = random_graph(n, d, rng);
    let cfg = AeConfig {
        latent_dim: k,
        hidden_dim: Some(hidden),
        alpha: [0.0, 0.3, 0.5, 1.0][rng.random_range(0..4)],
        squared_norm: rng.random(),
        seed: rng.random(),
        ..AeConfig::default()
    };
    let mut ae = GraphAutoencoder::new(d, &cfg)?;
    randomize(ae.params_mut(), rng);
    let masks = AeMasks { encoder: dropout_mask(n, hidden, rng), decoder: dropout_mask(n, hidden, rng) };
    let (_, analytic) = ae.loss_and_gradients(&g, &adj, &masks)?;
    let numeric = numeric_gradients(
        &mut ae,
        |m| m.params_mut(),
        |m| m.loss_and_gradients(&g, &adj, &masks).expect("loss").0.total,
        FD_STEP,
    );
    Ok(max_relative_error(&analytic, &numeric))
}

fn denoiser_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.random_range(1..6);
    let cfg = DenoiserConfig {
        latent_dim: rng.random_range(1..4),
        hidden: rng.random_range(1..7),
        depth: rng.random_range(2..5),
        conditioned: rng.random(),
    };
    let mut net = Denoiser::new(cfg, rng.random())?;
    randomize(net.params_mut(), rng);
    let input = gaussian(n, cfg.input_dim(), rng);
    let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let eps = gaussian(n, cfg.latent_dim, rng);
    let (_, analytic) = eps_loss_and_gradients(&net, &input, &u, &eps)?;
    let numeric = numeric_gradients(
        &mut net,
        |m| m.params_mut(),
        |m| eps_loss_and_gradients(m, &input, &u, &eps).expect("loss").0,
        FD_STEP,
    );
    let params = max_relative_error(&analytic, &numeric);
    let r = gaussian(n, cfg.latent_dim, rng);
    let (_, cache) = net.forward_train(&input, &u)?;
    let (_, d_input) = net.backward(&cache, &r);
    let numeric_input = fd(&input, |x| inner(&net.forward(x, &u).expect("forward"), &r));
    Ok(params.max(relative_error(&d_input, &numeric_input)))
}

fn layer_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, fan_in, fan_out) = (rng.random_range(2..7), rng.random_range(1..5), rng.random_range(1..5));
    let act = [Activation::Relu, Activation::Silu, Activation::None][rng.random_range(0..3)];
    let (_, adj) = random_graph(n, 1, rng);
    let h = gaussian(n, fan_in, rng);
    let w = gaussian(fan_in, fan_out, rng);
    let b = Matrix::row_vector(&(0..fan_out).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>());
    let r = gaussian(n, fan_out, rng);
    let mut worst: f64 = 0.0;
    for gcn in [false, true] {
        let pre = |h: &Matrix, w: &Matrix, b: &Matrix| {
            if gcn {
                gcn_layer(&adj, h, w, Some(b.as_slice())).expect("gcn")
            } else {
                affine(h, w, Some(b.as_slice())).expect("affine")
            }
        };
        let loss = |h: &Matrix, w: &Matrix, b: &Matrix| inner(&act.apply(&pre(h, w, b)), &r);
        let dpre = act.backward(&pre(&h, &w, &b), &r);
        let (dh, dw, db) = if gcn { gcn_backward(&adj, &h, &w, &dpre) } else { affine_backward(&h, &w, &dpre) };
        worst = worst
            .max(relative_error(&dh, &fd(&h, |x| loss(x, &w, &b))))
            .max(relative_error(&dw, &fd(&w, |x| loss(&h, x, &b))))
            .max(relative_error(&Matrix::row_vector(&db), &fd(&b, |x| loss(&h, &w, x))));
    }
    Ok(worst)
}

fn gradient_correctness() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let per_kind = 40;
    let mut worst = [0.0f64; 3];
    for _ in 0..per_kind {
        worst[0] = worst[0].max(ae_case(&mut rng)?);
        worst[1] = worst[1].max(denoiser_case(&mut rng)?);
        worst[2] = worst[2].max(layer_case(&mut rng)?);
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    Ok(Outcome::new(
        max <= GRAD_TOL,
        format!(
            "{} shapes, max rel err ae={:.1e} denoiser={:.1e} layers={:.1e} (tol {GRAD_TOL:.0e})",
            3 * per_kind,
            worst[0],
            worst[1],
            worst[2]
        ),
    ))
}

// ------------------------------------------------------------------ kernel

fn kernel_moments() -> Result<Outcome> {
    let sched = NoiseSchedule::new(500, Kernel::EdmAdditive)?;
    let draws = 100_000;
    let z0 = Matrix::from_fn(draws, 1, |i, _| (i % 7) as f64 - 3.0);
    let mut worst_z: f64 = 0.0;
    for (i, step) in [1usize, 50, 125, 250, 500].into_iter().enumerate() {
        let (z_t, _) = forward_noise(&z0, step, &sched, &mut ChaCha8Rng::seed_from_u64(20 + i as u64))?;
        let d: Vec<f64> = z_t.as_slice().iter().zip(z0.as_slice()).map(|(x, z)| x - z).collect();
        let m = mean(&d);
        let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let target = sched.sigma(step as f64).powi(2);
        let se = target * (2.0 / (draws - 1) as f64).sqrt();
        worst_z = worst_z.max((var - target).abs() / se);
    }
    Ok(Outcome::new(worst_z <= 3.0, format!("5 steps, 1e5 draws each, worst |var - sigma^2| = {worst_z:.2} SE")))
}

// ------------------------------------------------------------ score oracle

fn score_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 4000;
    let raw = gaussian(n, 1, &mut rng);
    // exactly standard data, so model and data coordinates coincide
    let z = Standardizer::fit(&raw).apply(&raw);
    // The ODE integrates ε̂ over [0, σ_max], so any denoiser bias is scaled by
    // σ_max. For Gaussian data N(0, 1 + σ_max²) is the exact prior at every
    // σ_max; a small one keeps that bias out of the sampled moments.
    let cfg = DmConfig {
        kernel: Kernel::EdmAdditive,
        sigma_max: 5.0,
        epochs: 3000,
        patience: 0,
        lr: 0.005,
        seed: 3,
        ..DmConfig::default()
    };
    let dm = train_dm(&z, &cfg, None)?.model;
    let st = dm.standardizer();
    ensure!((st.mean[0]).abs() < 1e-9 && (st.std[0] - 1.0).abs() < 1e-9, "data not exactly standardised");
    let sched = dm.schedule();

    let grid: Vec<f64> = (0..=40).map(|i| -2.0 + 0.1 * i as f64).collect();
    let t1 = sched.time_for_sigma(1.0);
    let eps = dm.predict(&Matrix::from_vec(grid.len(), 1, grid.clone())?, &vec![t1; grid.len()], None)?;
    let mae = grid.iter().zip(eps.as_slice()).map(|(x, e)| (-e / 1.0 + x / 2.0).abs()).sum::<f64>() / grid.len() as f64;

    let t_max = sched.t_max();
    let sigma_t = sched.sigma(t_max);
    let start = gaussian(n, 1, &mut rng).map(|x| x * (1.0 + sigma_t * sigma_t).sqrt());
    let out = reverse_sample(&start, t_max, &dm.unconditional()?, sched, &SamplerConfig::default(), 3)?;
    let (m_out, s_out) = mean_std(out.as_slice());
    let (m_data, s_data) = mean_std(z.as_slice());
    let mean_ok = (m_out - m_data).abs() <= 0.05 * s_data;
    let std_ok = (s_out / s_data - 1.0).abs() <= 0.05;
    Ok(Outcome::new(
        mae <= 0.1 && mean_ok && std_ok,
        format!("score MAE at sigma=1: {mae:.4} (<= 0.1); sampled mean {m_out:+.4} vs {m_data:+.4}, std {s_out:.4} vs {s_data:.4}"),
    ))
}

// -------------------------------------------------------- guidance identities

fn gen_args(extra: &[&str]) -> GenArgs {
    let mut args = vec!["diffgad", "gen", "--out", "unused"];
    args.extend_from_slice(extra);
    match Cli::try_parse_from(args).expect("valid gen arguments").command {
        Command::Gen(g) => g,
        _ => unreachable!(),
    }
}

/// The generated graph with standardised features and no labels, plus labels.
fn dataset(args: &GenArgs) -> Result<(AttributedGraph, Vec<u8>)> {
    let mut g = args.generate()?;
    let labels = g.labels().expect("generator labels nodes").to_vec();
    g.standardize_features();
    Ok((g.without_labels(), labels))
}

fn config(pairs: &[(&str, String)]) -> Result<RunConfig> {
    let pairs: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    RunConfig::resolve(None, None, &pairs)
}

fn guidance_identities() -> Result<Outcome> {
    let (g, _) = dataset(&gen_args(&["--nodes", "200", "--struct", "2", "--clique", "5", "--ctx", "6", "--seed", "4"]))?;
    let cfg = config(&[("ae.epochs", "60".into()), ("dm.epochs", "100".into()), ("seed", "4".into())])?;
    let models = train_models(&g, &cfg)?;
    let det = models.detector()?;
    let adj = normalize_adjacency(&g);
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for mode in [SampleMode::Ode, SampleMode::Sde] {
        for t in [None, Some(40), Some(250)] {
            let base = DetectConfig {
                trials: 3,
                t_detect: t,
                sampler: SamplerConfig { mode, ..SamplerConfig::default() },
                seed: 11,
                ..DetectConfig::default()
            };
            let run = |lambda: f64, c| det.detect(&g, &adj, &DetectConfig { lambda, ..base }, c).map(|r| r.scores);
            for (lambda, reference) in [(0.0, Component::Diff), (-1.0, Component::CondDiff)] {
                checked += 1;
                if run(lambda, Component::DiffGad)? != run(2.0, reference)? {
                    mismatches.push(format!("{mode:?} t={t:?} lambda={lambda}"));
                }
            }
        }
    }
    Ok(Outcome::new(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{checked} configurations bit-identical (ode/sde, three corruption steps)")
        } else {
            format!("mismatch: {}", mismatches.join(", "))
        },
    ))
}

// ---------------------------------------------------------- common feature

fn common_feature() -> Result<Outcome> {
    let w = compute_weights(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]), &[1.0, 0.0], 1.0)?;
    let two_node = (w.omega[0] - 0.7311).abs() < 1e-4 && (w.omega[1] - 0.2689).abs() < 1e-4 && {
        let e = std::f64::consts::E;
        (w.omega[0] - e / (e + 1.0)).abs() <= 1e-6
    };

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let instances = 1000;
    let (mut hull_fail, mut weight_fail) = (0, 0);
    for _ in 0..instances {
        let (n, k) = (rng.random_range(1..12), rng.random_range(1..6));
        let tau = rng.random_range(0.05..5.0);
        let z = Matrix::from_fn(n, k, |_, _| rng.random_range(-5.0..5.0));
        let mut cf = init_common(&z, tau)?;
        let w = cf.update(&z)?;
        let hull = (0..k).all(|j| {
            let col: Vec<f64> = z.iter_rows().map(|r| r[j]).collect();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo - 1e-12..=hi + 1e-12).contains(&cf.c()[j])
        });
        let simplex = (w.omega.iter().sum::<f64>() - 1.0).abs() < 1e-12 && w.omega.iter().all(|&x| x >= 0.0);
        if !(hull && simplex) {
            hull_fail += 1;
        }

        // a bulk along one direction plus a single node pointing the other way
        let k = rng.random_range(2..6);
        let inliers = rng.random_range(3..10);
        let dir: Vec<f64> = loop {
            let d: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.3 {
                break d.iter().map(|x| x / norm).collect();
            }
        };
        let scale = rng.random_range(0.5..3.0);
        let mut rows = Vec::new();
        for _ in 0..inliers {
            rows.extend(dir.iter().map(|u| scale * (u + rng.random_range(-0.2..0.2))));
        }
        rows.extend(dir.iter().map(|u| -scale * u));
        let z = Matrix::from_vec(inliers + 1, k, rows)?;
        let tau = rng.random_range(0.1..2.0);
        let cf = init_common(&z, tau)?;
        let w = compute_weights(&z, cf.c(), tau)?;
        let out = w.omega[inliers];
        let min_inlier = w.omega[..inliers].iter().copied().fold(f64::INFINITY, f64::min);
        if !(out < min_inlier && out < 1.0 / (inliers + 1) as f64) {
            weight_fail += 1;
        }
    }
    Ok(Outcome::new(
        two_node && hull_fail == 0 && weight_fail == 0,
        format!(
            "two-node omega = ({:.4}, {:.4}); {instances} instances: hull violations {hull_fail}, outlier not down-weighted {weight_fail}",
            w.omega[0], w.omega[1]
        ),
    ))
}

// ----------------------------------------------------------------- metrics

/// Nodes ranked strictly before `v` (score desc, id asc).
fn rank(s: &[f64], v: usize) -> usize {
    (0..s.len()).filter(|&u| s[u] > s[v] || (s[u] == s[v] && u < v)).count()
}

fn oracle_auc(s: &[f64], l: &[u8]) -> f64 {
    let (mut half, mut p, mut n) = (0u64, 0u64, 0u64);
    for i in 0..s.len() {
        if l[i] == 1 {
            p += 1;
        } else {
            n += 1;
        }
        for j in 0..s.len() {
            if l[i] == 1 && l[j] == 0 {
                half += if s[i] > s[j] { 2 } else if s[i] == s[j] { 1 } else { 0 };
            }
        }
    }
    half as f64 / 2.0 / (p as f64 * n as f64)
}

fn oracle_ap(s: &[f64], l: &[u8]) -> f64 {
    let mut hits: Vec<(usize, usize)> = (0..s.len())
        .filter(|&v| l[v] == 1)
        .map(|v| {
            let r = rank(s, v);
            (r, (0..s.len()).filter(|&u| l[u] == 1 && rank(s, u) <= r).count())
        })
        .collect();
    hits.sort();
    hits.iter().map(|&(r, tp)| tp as f64 / (r + 1) as f64).sum::<f64>() / hits.len() as f64
}

fn oracle_recall(s: &[f64], l: &[u8], k: usize) -> f64 {
    let p = l.iter().filter(|&&x| x == 1).count();
    (0..s.len()).filter(|&v| l[v] == 1 && rank(s, v) < k).count() as f64 / p as f64
}

/// Trapezoid over distinct thresholds, anchored at recall 0 with the best
/// precision.
fn oracle_auprc(s: &[f64], l: &[u8]) -> f64 {
    let p = l.iter().filter(|&&x| x == 1).count() as f64;
    let mut thresholds = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let above = (0..s.len()).filter(|&v| s[v] >= t).count() as f64;
            let tp = (0..s.len()).filter(|&v| s[v] >= t && l[v] == 1).count() as f64;
            (tp / p, tp / above)
        })
        .collect();
    let mut prev = (0.0, points.iter().map(|q| q.1).fold(0.0, f64::max));
    let mut area = 0.0;
    for &(r, q) in &points {
        if r > 0.0 {
            area += (r - prev.0) * (q + prev.1) / 2.0;
            prev = (r, q);
        }
    }
    area
}

fn metric_oracles() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let instances = 1000;
    let mut failures = [0usize; 4];
    let mut done = 0;
    while done < instances {
        let n = rng.random_range(2..=50);
        let tied: bool = rng.random();
        let s: Vec<f64> = (0..n)
            .map(|_| if tied { rng.random_range(0..5) as f64 * 0.25 } else { rng.random_range(-1e3..1e3) })
            .collect();
        let l: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        if !(l.contains(&0) && l.contains(&1)) {
            continue;
        }
        done += 1;
        let ls = LabeledScores::new(s.clone(), l.clone())?;
        let k = rng.random_range(1..=n);
        let checks = [
            roc_auc(&ls)? == oracle_auc(&s, &l),
            average_precision(&ls)? == oracle_ap(&s, &l),
            recall_at_k(&ls, Some(k))? == oracle_recall(&s, &l, k) && recall_at_k(&ls, None)? == oracle_recall(&s, &l, ls.n_pos()),
            auprc(&ls)? == oracle_auprc(&s, &l),
        ];
        for (f, ok) in failures.iter_mut().zip(checks) {
            *f += usize::from(!ok);
        }
    }
    Ok(Outcome::new(
        failures.iter().all(|&f| f == 0),
        format!(
            "{instances} instances, n <= 50, exact mismatches auc={} ap={} recall@k={} auprc={}",
            failures[0], failures[1], failures[2], failures[3]
        ),
    ))
}

// ---------------------------------------------------------- synthetic suite

const SUITE_GRAPHS: u64 = 5;
const SUITE_SEEDS: u64 = 20;

/// The generator example: 1000 nodes, three 10-cliques, 20 contextual outliers.
fn suite_graph(i: u64, intra: f64) -> Result<(AttributedGraph, Vec<u8>)> {
    let seed = (100 + i).to_string();
    let intra = intra.to_string();
    dataset(&gen_args(&["--nodes", "1000", "--struct", "3", "--clique", "10", "--ctx", "20", "--intra", &intra, "--seed", &seed]))
}

fn auc(scores: Vec<f64>, labels: &[u8]) -> Result<f64> {
    Ok(roc_auc(&LabeledScores::new(scores, labels.to_vec())?)?)
}

fn component_ordering() -> Result<Outcome> {
    let start = Instant::now();
    let mut aucs = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for i in 0..SUITE_GRAPHS {
        let (g, labels) = suite_graph(i, 0.9)?;
        let adj = normalize_adjacency(&g);
        for seed in 0..SUITE_SEEDS {
            let cfg = config(&[("seed", seed.to_string())])?;
            let models = train_models(&g, &cfg)?;
            let det = models.detector()?;
            let base = cfg.detect_config()?;
            for (slot, c) in aucs.iter_mut().zip(Component::ALL) {
                slot.push(auc(det.detect(&g, &adj, &base, c)?.scores, &labels)?);
            }
        }
        eprintln!("  suite graph {i}: {:.0}s elapsed", start.elapsed().as_secs_f64());
    }
    let means: Vec<f64> = aucs.iter().map(|a| mean(a)).collect();
    let (ae, diff, cond, diffgad) = (means[0], means[1], means[2], means[3]);
    let others = ae.max(diff).max(cond);
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let wins = (0..aucs[3].len()).filter(|&r| aucs[3][r] > aucs[0][r].max(aucs[1][r]).max(aucs[2][r])).count();
    let pass = diffgad > others && minutes < 30.0;
    *SUITE_PASSED.lock().expect("lock") = Some(pass);
    let mut detail = format!(
        "{} runs, mean AUC ae={ae:.4} diff={diff:.4} cond-diff={cond:.4} diffgad={diffgad:.4} (margin {:+.4}); ",
        aucs[3].len(),
        diffgad - others
    );
    let _ = write!(detail, "diffgad best in {wins}/{} runs; {minutes:.1} min", aucs[3].len());
    Ok(Outcome::new(pass, detail))
}

// ------------------------------------------------------------ sweep shape

const HETERO_GRAPHS: u64 = 5;
const HETERO_SEEDS: u64 = 4;

fn sweep_shape() -> Result<Outcome> {
    let suite = *SUITE_PASSED.lock().expect("lock");
    let t_fracs = [(1usize, 10usize), (1, 5), (1, 2), (1, 1)];
    let mut lam0 = Vec::new();
    let mut lam2 = Vec::new();
    let mut by_t: Vec<Vec<f64>> = vec![Vec::new(); t_fracs.len()];
    for i in 0..HETERO_GRAPHS {
        let (g, labels) = suite_graph(i, 0.2)?;
        let adj = normalize_adjacency(&g);
        for seed in 0..HETERO_SEEDS {
            let cfg = config(&[("seed", seed.to_string())])?;
            let models = train_models(&g, &cfg)?;
            let det = models.detector()?;
            let base = cfg.detect_config()?;
            let t_steps = det.t_steps();
            lam0.push(auc(det.detect(&g, &adj, &DetectConfig { lambda: 0.0, ..base }, Component::DiffGad)?.scores, &labels)?);
            for (slot, (num, den)) in by_t.iter_mut().zip(t_fracs) {
                let t = t_steps * num / den;
                let cfg = DetectConfig { lambda: 2.0, t_detect: Some(t), ..base };
                let a = auc(det.detect(&g, &adj, &cfg, Component::DiffGad)?.scores, &labels)?;
                if t == base.t_detect_for(t_steps) {
                    lam2.push(a);
                }
                slot.push(a);
            }
        }
    }
    ensure!(lam2.len() == lam0.len(), "default corruption step missing from the t sweep");
    let (m0, m2) = (mean(&lam0), mean(&lam2));
    let t_means: Vec<f64> = by_t.iter().map(|v| mean(v)).collect();
    let full = *t_means.last().expect("t = T present");
    let some_t_beats_full = t_means[..t_means.len() - 1].iter().any(|&m| m > full);
    let lambda_ok = m2 > m0;
    let suite_text = match suite {
        Some(true) => "criterion 7 passed",
        Some(false) => "criterion 7 failed",
        None => "criterion 7 not run",
    };
    let t_text: Vec<String> = t_fracs.iter().zip(&t_means).map(|((n, d), m)| format!("T*{n}/{d}={m:.4}")).collect();
    Ok(Outcome::new(
        suite == Some(true) && lambda_ok && some_t_beats_full,
        format!(
            "Books/Disney unavailable, fallback: {suite_text}; heterophilic suite lambda=2 {m2:.4} vs lambda=0 {m0:.4}; t sweep {}",
            t_text.join(" ")
        ),
    ))
}

// ----------------------------------------------------------------- scaling

fn scaling() -> Result<Outcome> {
    let report = run_bench(&RunConfig::default(), &BenchOptions::default())?;
    let p = report.dm_exponent().unwrap_or(f64::INFINITY);
    let at_1000 = report.rows.iter().find(|r| r.nodes == 1000).map_or(f64::INFINITY, |r| r.sample);

    let (g, _) = random_graph(20, 3, &mut ChaCha8Rng::seed_from_u64(9));
    let adj = normalize_adjacency(&g);
    let ae = GraphAutoencoder::new(3, &AeConfig { alpha: 1.0, ..AeConfig::default() })?;
    let z = ae.encode(&g, &adj)?.z;
    let skips = !ae.has_structure_decoder() && ae.structure_embedding(&z, &adj)?.is_none();
    let largest = report.rows.last().expect("bench rows");
    let faster = largest.ae_train_alpha1 < largest.ae_train;

    let pass = p <= 1.2 && at_1000 < 2.0 && skips && faster;
    let times: Vec<String> = report.rows.iter().map(|r| format!("n={}:{:.2}s", r.nodes, r.dm_train + r.sample)).collect();
    Ok(Outcome::new(
        pass,
        format!(
            "dm train+sample exponent {p:.3} ({}); 50-step sampling at n=1000 {at_1000:.3}s; alpha=1 has no structure decoder: {skips}, AE at n={} {:.2}s vs {:.2}s with alpha=0.5",
            times.join(" "),
            largest.nodes,
            largest.ae_train_alpha1,
            largest.ae_train
        ),
    ))
}

// ------------------------------------------------------------- determinism

fn determinism() -> Result<Outcome> {
    let tmp = tempfile::tempdir()?;
    let data = tmp.path().join("data");
    let mut g = gen_args(&["--nodes", "300", "--struct", "2", "--clique", "8", "--ctx", "10", "--seed", "10"]);
    g.out = data.clone();
    diffgad_cli::cli::cmd_gen(&g)?;
    let cfg = config(&[("seed", "10".into())])?;
    let run = |name: &str| -> Result<Vec<u8>> {
        let dir = tmp.path().join(name);
        run_pipeline(&cfg, &PipelineOptions { data: data.clone(), run_dir: dir.clone(), resume: false })?;
        Ok(std::fs::read(dir.join(SCORES_FILE))?)
    };
    let (a, b) = (run("a")?, run("b")?);
    Ok(Outcome::new(a == b && !a.is_empty(), format!("two full pipeline runs, scores.csv {} bytes, identical: {}", a.len(), a == b)))
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>);

const CRITERIA: &[Criterion] = &[
    (1, "gradient correctness", gradient_correctness),
    (2, "diffusion kernel moments", kernel_moments),
    (3, "analytic score oracle", score_oracle),
    (4, "guidance identities", guidance_identities),
    (5, "common-feature mechanics", common_feature),
    (6, "metric oracles", metric_oracles),
    (7, "component ordering on the synthetic suite", component_ordering),
    (8, "lambda and t sweep shape", sweep_shape),
    (9, "performance and scaling", scaling),
    (10, "determinism", determinism),
];

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = 0;
    for &(id, name, run) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome::new(false, format!("error: {e:#}")));
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.pass);
        println!("[{tag}] {id} {name}: {} ({:.1}s)", outcome.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {failed} failing");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
