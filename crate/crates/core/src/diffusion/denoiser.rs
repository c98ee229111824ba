//! ε-prediction MLP.
//!
//! `depth` affine layers with SiLU between them. A sinusoidal embedding of
//! the normalised time `u = t / T` is added to the first layer's
//! pre-activation. A conditioned network takes `[z_t | c]` as input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{affine, affine_backward, Activation};
use crate::nn::tensor::Matrix;
use crate::nn::{Gradients, ParamStore};

/// Highest angular frequency of the time embedding, in units of `u`.
pub const MAX_FREQUENCY: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    /// Number of affine layers, at least 2.
    pub depth: usize,
    pub conditioned: bool,
}

impl DenoiserConfig {
    pub fn input_dim(&self) -> usize {
        if self.conditioned {
            2 * self.latent_dim
        } else {
            self.latent_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("denoiser widths must be >= 1".into()));
        }
        if self.depth < 2 {
            return Err(Error::InvalidArgument("denoiser depth must be >= 2".into()));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let fan_in = if l == 0 { self.input_dim() } else { self.hidden };
                let fan_out = if l + 1 == self.depth { self.latent_dim } else { self.hidden };
                (fan_in, fan_out)
            })
            .collect()
    }
}

/// `[sin(ω_i u) …, cos(ω_i u) …]` with `ω_i` geometric from 1 to
/// [`MAX_FREQUENCY`]. Odd widths get a trailing zero column.
pub fn time_embedding(u: &[f64], width: usize) -> Matrix {
    let half = width / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|i| {
            if half == 1 {
                1.0
            } else {
                MAX_FREQUENCY.powf(i as f64 / (half - 1) as f64)
            }
        })
        .collect();
    let mut out = Matrix::zeros(u.len(), width);
    for (r, &ur) in u.iter().enumerate() {
        // sampling queries every row at one time; reuse the previous row
        if r > 0 && u[r - 1] == ur {
            let (done, rest) = out.as_mut_slice().split_at_mut(r * width);
            rest[..width].copy_from_slice(&done[(r - 1) * width..]);
            continue;
        }
        let row = &mut out.as_mut_slice()[r * width..(r + 1) * width];
        for (j, f) in freqs.iter().enumerate() {
            row[j] = (f * ur).sin();
            row[half + j] = (f * ur).cos();
        }
    }
    out
}

pub(crate) fn weight(l: usize) -> String {
    format!("mlp{l}.w")
}

pub(crate) fn bias(l: usize) -> String {
    format!("mlp{l}.b")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    cfg: DenoiserConfig,
    params: ParamStore,
}

/// Intermediate values kept by [`Denoiser::forward_train`].
#[derive(Debug, Clone)]
pub struct DenoiserCache {
    /// Input of each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Matrix>,
}

impl Denoiser {
    pub fn new(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new(seed);
        for (l, (fan_in, fan_out)) in cfg.widths().into_iter().enumerate() {
            params.insert_glorot(weight(l), fan_in, fan_out, &mut rng);
            params.insert(bias(l), Matrix::zeros(1, fan_out));
        }
        Ok(Denoiser { cfg, params })
    }

    pub(crate) fn from_parts(cfg: DenoiserConfig, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        for (l, (fan_in, fan_out)) in cfg.widths().into_iter().enumerate() {
            let w = params.try_value(&weight(l))?;
            if w.shape() != (fan_in, fan_out) {
                return Err(Error::shape("denoiser weight", format!("{fan_in}x{fan_out}"), format!("{:?}", w.shape())));
            }
            params.try_value(&bias(l))?;
        }
        Ok(Denoiser { cfg, params })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_input(&self, input: &Matrix, u: &[f64]) -> Result<()> {
        if input.cols() != self.cfg.input_dim() {
            return Err(Error::shape("denoiser", format!("input width {}", self.cfg.input_dim()), input.cols()));
        }
        if u.len() != input.rows() {
            return Err(Error::shape("denoiser", format!("{} times", input.rows()), u.len()));
        }
        Ok(())
    }

    /// ε̂ for each row of `input`, at normalised times `u` (one per row).
    pub fn forward(&self, input: &Matrix, u: &[f64]) -> Result<Matrix> {
        Ok(self.forward_train(input, u)?.0)
    }

    pub fn forward_train(&self, input: &Matrix, u: &[f64]) -> Result<(Matrix, DenoiserCache)> {
        self.check_input(input, u)?;
        let depth = self.cfg.depth;
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth - 1);
        let mut h = input.clone();
        for l in 0..depth {
            let mut p = affine(&h, self.params.value(&weight(l)), Some(self.params.value(&bias(l)).as_slice()))?;
            if l == 0 {
                p.add_assign(&time_embedding(u, self.cfg.hidden));
            }
            inputs.push(h);
            if l + 1 == depth {
                return Ok((p, DenoiserCache { inputs, pre }));
            }
            h = Activation::Silu.apply(&p);
            pre.push(p);
        }
        unreachable!("depth >= 2 is validated")
    }

    /// Parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &DenoiserCache, dout: &Matrix) -> (Gradients, Matrix) {
        let mut grads = Gradients::new();
        let mut d = dout.clone();
        for l in (0..self.cfg.depth).rev() {
            if l + 1 < self.cfg.depth {
                d = Activation::Silu.backward(&cache.pre[l], &d);
            }
            let (dh, dw, db) = affine_backward(&cache.inputs[l], self.params.value(&weight(l)), &d);
            grads.insert(weight(l), dw);
            grads.insert(bias(l), Matrix::row_vector(&db));
            d = dh;
        }
        (grads, d)
    }
}
