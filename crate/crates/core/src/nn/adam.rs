use crate::error::{Error, Result};
use crate::nn::params::{Gradients, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter in `store`.
///
/// Parameters without an entry in `grads` see a zero gradient. If any
/// gradient is non-finite or misshapen, nothing is updated.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = store
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("gradient for unknown parameter `{name}`")))?;
        if p.value.shape() != g.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("{name} {:?}", p.value.shape()),
                format!("{:?}", g.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }

    for (name, p) in store.iter_mut() {
        p.step += 1;
        let t = p.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let Some(g) = grads.get(name) else {
            // zero gradient: moments decay, value moves by m̂ / (sqrt(v̂) + eps)
            for ((w, m), v) in p
                .value
                .as_mut_slice()
                .iter_mut()
                .zip(p.m.as_mut_slice())
                .zip(p.v.as_mut_slice())
            {
                *m *= cfg.beta1;
                *v *= cfg.beta2;
                *w -= cfg.lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
            }
            continue;
        };
        for (((w, m), v), &gi) in p
            .value
            .as_mut_slice()
            .iter_mut()
            .zip(p.m.as_mut_slice())
            .zip(p.v.as_mut_slice())
            .zip(g.as_slice())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            *w -= cfg.lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}
