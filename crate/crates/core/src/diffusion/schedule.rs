//! Noise schedules and forward corruption.
//!
//! Both kernels are written as `z_t = a(t)·z0 + b(t)·ε`:
//!
//! - `EdmAdditive`: `a = 1`, `b = σ(t) = σ_max · t / T`;
//! - `Interp`: `a = 1 − t/T`, `b = t/T`, so `t = T` is pure noise.
//!
//! Dividing by `a` puts either kernel in the form `x = z0 + σ_eff·ε` with
//! `σ_eff = b / a`, which is what the samplers integrate over.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::tensor::Matrix;

/// Largest effective noise level the samplers start from. The interpolation
/// kernel reaches infinite `σ_eff` at `t = T`; it is clamped here.
pub const SIGMA_CAP: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    EdmAdditive,
    Interp,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::EdmAdditive => "edm_additive",
            Kernel::Interp => "interp",
        })
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edm_additive" | "edm" => Ok(Kernel::EdmAdditive),
            "interp" => Ok(Kernel::Interp),
            other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    /// Number of discrete noise scales `T`.
    pub steps: usize,
    pub kernel: Kernel,
    /// `σ(T)` of the additive kernel, in standardised latent units.
    pub sigma_max: f64,
}

impl NoiseSchedule {
    pub fn new(steps: usize, kernel: Kernel) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        Ok(NoiseSchedule {
            steps,
            kernel,
            sigma_max: SIGMA_CAP,
        })
    }

    pub fn with_sigma_max(mut self, sigma_max: f64) -> Self {
        self.sigma_max = sigma_max;
        self
    }

    pub fn t_max(&self) -> f64 {
        self.steps as f64
    }

    /// `(a, b)` such that `z_t = a·z0 + b·ε`. `t` may be fractional.
    pub fn mixing(&self, t: f64) -> (f64, f64) {
        let u = t / self.t_max();
        match self.kernel {
            Kernel::EdmAdditive => (1.0, self.sigma_max * u),
            Kernel::Interp => (1.0 - u, u),
        }
    }

    /// Effective noise level `b / a`; infinite at `t = T` for `Interp`.
    pub fn sigma(&self, t: f64) -> f64 {
        let (a, b) = self.mixing(t);
        if a == 0.0 {
            f64::INFINITY
        } else {
            b / a
        }
    }

    pub fn sigma_at(&self, step: usize) -> f64 {
        self.sigma(step as f64)
    }

    /// Inverse of [`NoiseSchedule::sigma`].
    pub fn time_for_sigma(&self, sigma: f64) -> f64 {
        match self.kernel {
            Kernel::EdmAdditive => sigma / self.sigma_max * self.t_max(),
            Kernel::Interp => sigma / (1.0 + sigma) * self.t_max(),
        }
    }

    /// Starting noise level the samplers can handle.
    pub fn sigma_ceiling(&self) -> f64 {
        match self.kernel {
            Kernel::EdmAdditive => self.sigma_max,
            Kernel::Interp => SIGMA_CAP,
        }
    }

    pub fn check_step(&self, step: usize) -> Result<()> {
        if step > self.steps {
            return Err(Error::InvalidArgument(format!(
                "step {step} outside [0, {}]",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Corrupts every row of `z0` to `step`, returning `(z_t, ε)`.
pub fn forward_noise(
    z0: &Matrix,
    step: usize,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<(Matrix, Matrix)> {
    sched.check_step(step)?;
    let eps = Matrix::from_fn(z0.rows(), z0.cols(), |_, _| rng.sample(StandardNormal));
    let z_t = forward_noise_with(z0, step as f64, sched, &eps)?;
    Ok((z_t, eps))
}

/// `a(t)·z0 + b(t)·ε` for a supplied noise matrix.
pub fn forward_noise_with(z0: &Matrix, t: f64, sched: &NoiseSchedule, eps: &Matrix) -> Result<Matrix> {
    z0.check_same_shape(eps, "forward_noise")?;
    if !(0.0..=sched.t_max()).contains(&t) {
        return Err(Error::InvalidArgument(format!("step {t} outside [0, {}]", sched.steps)));
    }
    let (a, b) = sched.mixing(t);
    Ok(z0.zip_map(eps, |z, e| a * z + b * e))
}
