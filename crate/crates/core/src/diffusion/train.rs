//! Denoising score matching on latent rows.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::common::CommonFeature;
use crate::error::{Error, Result};
use crate::nn::tensor::Matrix;
use crate::nn::{adam_step, AdamConfig, Gradients};
use crate::rng::{derive_seed, rng_from};

use super::denoiser::{Denoiser, DenoiserConfig};
use super::model::{DiffusionModel, Standardizer};
use super::schedule::{Kernel, NoiseSchedule, SIGMA_CAP};

const INIT_TAG: u64 = 0x11;
const NOISE_TAG: u64 = 0x12;
const TRACK_TAG: u64 = 0x13;

#[derive(Debug, Clone, PartialEq)]
pub struct DmConfig {
    pub hidden: usize,
    pub depth: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Stop after this many epochs without a `min_delta` improvement of the
    /// best training loss. `0` disables early stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub t_steps: usize,
    pub kernel: Kernel,
    pub sigma_max: f64,
    pub seed: u64,
}

impl Default for DmConfig {
    fn default() -> Self {
        DmConfig {
            hidden: 16,
            depth: 4,
            epochs: 800,
            lr: 0.005,
            patience: 50,
            min_delta: 1e-4,
            t_steps: 500,
            kernel: Kernel::Interp,
            sigma_max: SIGMA_CAP,
            seed: 0,
        }
    }
}

impl DmConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::new(self.t_steps, self.kernel)?.with_sigma_max(self.sigma_max))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("dm epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !(self.sigma_max > 0.0) {
            return Err(Error::InvalidArgument("dm lr and sigma_max must be positive".into()));
        }
        self.schedule().map(|_| ())
    }
}

/// One corrupted batch: rows of `z0` noised to uniformly drawn steps `1..=T`.
#[derive(Debug, Clone)]
pub struct NoisyBatch {
    pub z_t: Matrix,
    pub eps: Matrix,
    pub t: Vec<f64>,
}

impl NoisyBatch {
    pub fn sample(z0: &Matrix, sched: &NoiseSchedule, rng: &mut impl Rng) -> Self {
        let t: Vec<f64> = (0..z0.rows()).map(|_| rng.random_range(1..=sched.steps) as f64).collect();
        let eps = Matrix::from_fn(z0.rows(), z0.cols(), |_, _| rng.sample(StandardNormal));
        let z_t = Matrix::from_fn(z0.rows(), z0.cols(), |i, j| {
            let (a, b) = sched.mixing(t[i]);
            a * z0.get(i, j) + b * eps.get(i, j)
        });
        NoisyBatch { z_t, eps, t }
    }
}

/// Mean over rows of `‖predict(z_t, t) − ε‖²` for one noisy batch.
pub fn score_matching_loss<F>(z0: &Matrix, sched: &NoiseSchedule, rng: &mut impl Rng, predict: F) -> Result<f64>
where
    F: Fn(&NoisyBatch) -> Result<Matrix>,
{
    if z0.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let batch = NoisyBatch::sample(z0, sched, rng);
    let eps_hat = predict(&batch)?;
    batch.eps.check_same_shape(&eps_hat, "dm_loss")?;
    Ok(eps_hat.sub(&batch.eps).sum_squares() / z0.rows() as f64)
}

/// Score-matching loss of `model` on raw latent rows `z`.
pub fn dm_loss(model: &DiffusionModel, z: &Matrix, c: Option<&CommonFeature>, seed: u64) -> Result<f64> {
    let z0 = model.standardizer().apply(z);
    let c = c.map(|cf| model.standardizer().apply_vec(cf.c()));
    let mut rng = rng_from(seed);
    score_matching_loss(&z0, model.schedule(), &mut rng, |b| model.predict(&b.z_t, &b.t, c.as_deref()))
}

#[derive(Debug, Clone)]
pub struct TrainedDm {
    pub model: DiffusionModel,
    pub loss_history: Vec<f64>,
    pub stopped_early: bool,
}

/// Trains an unconditional model, or a conditioned one when `cond` is given.
pub fn train_dm(z: &Matrix, cfg: &DmConfig, cond: Option<&CommonFeature>) -> Result<TrainedDm> {
    fit(z, cfg, cond, None)
}

/// Trains an unconditional model and refines `cf` once per epoch from
/// one-shot reconstructions at the middle of the schedule.
pub fn train_dm_with_common(z: &Matrix, cfg: &DmConfig, cf: &mut CommonFeature) -> Result<TrainedDm> {
    fit(z, cfg, None, Some(cf))
}

/// `ẑ0 = (z_t − b·ε̂) / a` at step `t`, in standardised coordinates.
pub fn one_shot_denoise(
    model: &DiffusionModel,
    z0: &Matrix,
    t: f64,
    c: Option<&[f64]>,
    rng: &mut impl Rng,
) -> Result<Matrix> {
    let sched = model.schedule();
    let (a, b) = sched.mixing(t);
    if a == 0.0 {
        return Err(Error::InvalidArgument("one-shot denoising needs t < T".into()));
    }
    let eps = Matrix::from_fn(z0.rows(), z0.cols(), |_, _| rng.sample(StandardNormal));
    let z_t = z0.zip_map(&eps, |z, e| a * z + b * e);
    let eps_hat = model.predict(&z_t, &vec![t; z0.rows()], c)?;
    Ok(z_t.zip_map(&eps_hat, |z, e| (z - b * e) / a))
}

/// Mean squared ε error over rows and its parameter gradients.
pub fn eps_loss_and_gradients(net: &Denoiser, input: &Matrix, u: &[f64], eps: &Matrix) -> Result<(f64, Gradients)> {
    let (out, cache) = net.forward_train(input, u)?;
    out.check_same_shape(eps, "eps_loss")?;
    let n = out.rows() as f64;
    let resid = out.sub(eps);
    let (grads, _) = net.backward(&cache, &resid.scale(2.0 / n));
    Ok((resid.sum_squares() / n, grads))
}

fn fit(
    z: &Matrix,
    cfg: &DmConfig,
    cond: Option<&CommonFeature>,
    mut tracker: Option<&mut CommonFeature>,
) -> Result<TrainedDm> {
    cfg.validate()?;
    if z.rows() == 0 || z.cols() == 0 {
        return Err(Error::InvalidArgument("empty latent embedding".into()));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite {
            context: "latent embedding given to diffusion training".into(),
        });
    }
    let schedule = cfg.schedule()?;
    let standardizer = Standardizer::fit(z);
    let z0 = standardizer.apply(z);
    let net_cfg = DenoiserConfig {
        latent_dim: z.cols(),
        hidden: cfg.hidden,
        depth: cfg.depth,
        conditioned: cond.is_some(),
    };
    let net = Denoiser::new(net_cfg, derive_seed(cfg.seed, INIT_TAG))?;
    let mut model = DiffusionModel::new(net, schedule, standardizer)?;
    let c_std = match cond {
        Some(cf) if cf.dim() != z.cols() => {
            return Err(Error::shape("common feature", format!("{} entries", z.cols()), cf.dim()))
        }
        Some(cf) => Some(model.standardizer().apply_vec(cf.c())),
        None => None,
    };
    let mut rng = rng_from(derive_seed(cfg.seed, NOISE_TAG));
    let mut track_rng = rng_from(derive_seed(cfg.seed, TRACK_TAG));
    let adam = AdamConfig::with_lr(cfg.lr);
    let t_mid = (cfg.t_steps / 2) as f64;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        let batch = NoisyBatch::sample(&z0, &schedule, &mut rng);
        let (input, u) = model.network_input(&batch.z_t, &batch.t, c_std.as_deref())?;
        let (loss, grads) = eps_loss_and_gradients(model.net(), &input, &u, &batch.eps)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: format!("diffusion loss at epoch {}", epoch + 1),
            });
        }
        adam_step(model.net_mut().params_mut(), &grads, &adam)?;
        history.push(loss);
        log::debug!("dm epoch {:>4} loss {:.6}", epoch + 1, loss);

        if let Some(cf) = tracker.as_deref_mut() {
            let z_hat = one_shot_denoise(&model, &z0, t_mid, None, &mut track_rng)?;
            cf.update(&model.standardizer().invert(&z_hat))?;
        }

        if loss < best - cfg.min_delta {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                log::debug!("dm early stop after {} epochs", epoch + 1);
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainedDm {
        model,
        loss_history: history,
        stopped_early,
    })
}
