//! A trained denoiser bundled with its schedule and latent standardisation,
//! plus the [`EpsPredictor`] interface the samplers consume.

use crate::common::CommonFeature;
use crate::error::{Error, Result};
use crate::nn::tensor::Matrix;
use crate::nn::Checkpoint;

use super::denoiser::{Denoiser, DenoiserConfig};
use super::schedule::{Kernel, NoiseSchedule};

/// Per-dimension affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant columns keep a unit scale.
    pub fn fit(z: &Matrix) -> Self {
        let mean = z.col_means();
        let n = z.rows().max(1) as f64;
        let mut var = vec![0.0; z.cols()];
        for row in z.iter_rows() {
            for ((acc, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, z: &Matrix) -> Matrix {
        Matrix::from_fn(z.rows(), z.cols(), |i, j| (z.get(i, j) - self.mean[j]) / self.std[j])
    }

    pub fn invert(&self, z: &Matrix) -> Matrix {
        Matrix::from_fn(z.rows(), z.cols(), |i, j| z.get(i, j) * self.std[j] + self.mean[j])
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }

    pub fn invert_vec(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&x, (&m, &s))| x * s + m)
            .collect()
    }
}

/// Anything that predicts the injected noise for a batch of noisy rows at
/// one (possibly fractional) step. Implementations must be deterministic.
pub trait EpsPredictor: Sync {
    fn latent_dim(&self) -> usize;
    fn predict_eps(&self, z_t: &Matrix, t: f64) -> Result<Matrix>;
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy)]
pub struct ZeroEps(pub usize);

impl EpsPredictor for ZeroEps {
    fn latent_dim(&self) -> usize {
        self.0
    }

    fn predict_eps(&self, z_t: &Matrix, _t: f64) -> Result<Matrix> {
        Ok(Matrix::zeros(z_t.rows(), z_t.cols()))
    }
}

/// Wraps a closure as a predictor.
pub struct FnEps<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> EpsPredictor for FnEps<F>
where
    F: Fn(&Matrix, f64) -> Result<Matrix> + Sync,
{
    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn predict_eps(&self, z_t: &Matrix, t: f64) -> Result<Matrix> {
        (self.f)(z_t, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel {
    net: Denoiser,
    schedule: NoiseSchedule,
    standardizer: Standardizer,
}

impl DiffusionModel {
    pub fn new(net: Denoiser, schedule: NoiseSchedule, standardizer: Standardizer) -> Result<Self> {
        if standardizer.dim() != net.config().latent_dim {
            return Err(Error::shape("diffusion model", format!("{} latent dims", net.config().latent_dim), standardizer.dim()));
        }
        Ok(DiffusionModel {
            net,
            schedule,
            standardizer,
        })
    }

    pub fn net(&self) -> &Denoiser {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut Denoiser {
        &mut self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn latent_dim(&self) -> usize {
        self.net.config().latent_dim
    }

    pub fn is_conditioned(&self) -> bool {
        self.net.config().conditioned
    }

    /// Network input for standardised `z_t` at per-row steps `t`: rows are
    /// scaled by `1 / √(a² + b²)` so their variance stays near one across
    /// the schedule, and `c` (standardised) is appended when conditioned.
    pub(crate) fn network_input(&self, z_t: &Matrix, t: &[f64], c: Option<&[f64]>) -> Result<(Matrix, Vec<f64>)> {
        let k = self.latent_dim();
        if z_t.cols() != k {
            return Err(Error::shape("diffusion model", format!("{k} columns"), z_t.cols()));
        }
        if t.len() != z_t.rows() {
            return Err(Error::shape("diffusion model", format!("{} times", z_t.rows()), t.len()));
        }
        match (self.is_conditioned(), c) {
            (true, None) => return Err(Error::InvalidArgument("conditioned model needs a common feature".into())),
            (false, Some(_)) => return Err(Error::InvalidArgument("unconditional model takes no common feature".into())),
            (true, Some(c)) if c.len() != k => {
                return Err(Error::shape("common feature", format!("{k} entries"), c.len()))
            }
            _ => {}
        }
        let width = self.net.config().input_dim();
        let t_max = self.schedule.t_max();
        let mut input = Matrix::zeros(z_t.rows(), width);
        for (i, row) in input.as_mut_slice().chunks_mut(width).enumerate() {
            let (a, b) = self.schedule.mixing(t[i]);
            let scale = (a * a + b * b).sqrt();
            for (o, z) in row.iter_mut().zip(z_t.row(i)) {
                *o = z / scale;
            }
            if let Some(c) = c {
                row[k..].copy_from_slice(c);
            }
        }
        Ok((input, t.iter().map(|s| s / t_max).collect()))
    }

    /// ε̂ for standardised `z_t` at per-row steps `t`.
    pub fn predict(&self, z_t: &Matrix, t: &[f64], c: Option<&[f64]>) -> Result<Matrix> {
        let (input, u) = self.network_input(z_t, t, c)?;
        self.net.forward(&input, &u)
    }

    pub fn unconditional(&self) -> Result<Unconditional<'_>> {
        if self.is_conditioned() {
            return Err(Error::InvalidArgument("model is conditioned".into()));
        }
        Ok(Unconditional(self))
    }

    /// Binds a common feature given in raw latent coordinates.
    pub fn conditioned_on(&self, cf: &CommonFeature) -> Result<Conditioned<'_>> {
        if !self.is_conditioned() {
            return Err(Error::InvalidArgument("model is unconditional".into()));
        }
        if cf.dim() != self.latent_dim() {
            return Err(Error::shape("common feature", format!("{} entries", self.latent_dim()), cf.dim()));
        }
        Ok(Conditioned {
            model: self,
            c: self.standardizer.apply_vec(cf.c()),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let cfg = self.net.config();
        let mut ck = Checkpoint::new(self.net.params().clone());
        ck.set_hyper("model", "denoiser");
        ck.set_hyper("dm.latent_dim", cfg.latent_dim);
        ck.set_hyper("dm.hidden", cfg.hidden);
        ck.set_hyper("dm.depth", cfg.depth);
        ck.set_hyper("dm.conditioned", cfg.conditioned);
        ck.set_hyper("dm.t_steps", self.schedule.steps);
        ck.set_hyper("dm.kernel", self.schedule.kernel);
        ck.set_hyper("dm.sigma_max", self.schedule.sigma_max);
        ck.buffers.insert("standardizer.mean".into(), Matrix::row_vector(&self.standardizer.mean));
        ck.buffers.insert("standardizer.std".into(), Matrix::row_vector(&self.standardizer.std));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model: String = ck.hyper("model")?;
        if model != "denoiser" {
            return Err(Error::Checkpoint(format!("expected denoiser, found {model}")));
        }
        let cfg = DenoiserConfig {
            latent_dim: ck.hyper("dm.latent_dim")?,
            hidden: ck.hyper("dm.hidden")?,
            depth: ck.hyper("dm.depth")?,
            conditioned: ck.hyper("dm.conditioned")?,
        };
        let kernel: Kernel = ck
            .hyper::<String>("dm.kernel")?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("{e}")))?;
        let schedule = NoiseSchedule::new(ck.hyper("dm.t_steps")?, kernel)?.with_sigma_max(ck.hyper("dm.sigma_max")?);
        let standardizer = Standardizer {
            mean: ck.buffer("standardizer.mean")?.as_slice().to_vec(),
            std: ck.buffer("standardizer.std")?.as_slice().to_vec(),
        };
        let net = Denoiser::from_parts(cfg, ck.params.clone())?;
        DiffusionModel::new(net, schedule, standardizer)
    }
}

/// Unconditional model viewed as an [`EpsPredictor`].
#[derive(Debug, Clone, Copy)]
pub struct Unconditional<'a>(&'a DiffusionModel);

impl EpsPredictor for Unconditional<'_> {
    fn latent_dim(&self) -> usize {
        self.0.latent_dim()
    }

    fn predict_eps(&self, z_t: &Matrix, t: f64) -> Result<Matrix> {
        self.0.predict(z_t, &vec![t; z_t.rows()], None)
    }
}

/// Conditioned model with its common feature bound.
#[derive(Debug, Clone)]
pub struct Conditioned<'a> {
    model: &'a DiffusionModel,
    c: Vec<f64>,
}

impl EpsPredictor for Conditioned<'_> {
    fn latent_dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn predict_eps(&self, z_t: &Matrix, t: f64) -> Result<Matrix> {
        self.model.predict(z_t, &vec![t; z_t.rows()], Some(&self.c))
    }
}
