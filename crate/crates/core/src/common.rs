//! The common-feature conditioning vector.
//!
//! `c` starts as the mean latent embedding and is refined into a
//! cosine-softmax weighted mean of reconstructed embeddings, so rows that
//! point away from the bulk of the data pull on it less.

use crate::error::{Error, Result};
use crate::nn::tensor::{dot, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CommonFeature {
    c: Vec<f64>,
    tau: f64,
    history: Vec<Vec<f64>>,
    frozen: bool,
}

/// Outcome of one [`compute_weights`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// Probability vector over rows.
    pub omega: Vec<f64>,
    /// Rows whose cosine was defined as 0 because a norm vanished.
    pub degenerate: Vec<usize>,
}

/// `c₀` = column mean of `z`.
pub fn init_common(z: &Matrix, tau: f64) -> Result<CommonFeature> {
    if z.rows() == 0 || z.cols() == 0 {
        return Err(Error::InvalidArgument("cannot initialise common feature from an empty embedding".into()));
    }
    check_tau(tau)?;
    let c = z.col_means();
    Ok(CommonFeature {
        history: vec![c.clone()],
        c,
        tau,
        frozen: false,
    })
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive and finite")));
    }
    Ok(())
}

/// `ω = softmax(cos(ẑ_v, c) / τ)`.
pub fn compute_weights(z_hat: &Matrix, c: &[f64], tau: f64) -> Result<Weights> {
    check_tau(tau)?;
    if z_hat.cols() != c.len() {
        return Err(Error::shape("compute_weights", format!("{} columns", c.len()), z_hat.cols()));
    }
    if z_hat.rows() == 0 {
        return Err(Error::InvalidArgument("no rows to weight".into()));
    }
    let c_norm = dot(c, c).sqrt();
    let mut degenerate = Vec::new();
    let logits: Vec<f64> = z_hat
        .iter_rows()
        .enumerate()
        .map(|(v, row)| {
            let r_norm = dot(row, row).sqrt();
            if r_norm == 0.0 || c_norm == 0.0 {
                degenerate.push(v);
                0.0
            } else {
                dot(row, c) / (r_norm * c_norm) / tau
            }
        })
        .collect();
    if !degenerate.is_empty() {
        log::debug!("{} rows with zero norm given cosine 0", degenerate.len());
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(Weights {
        omega: exp.into_iter().map(|e| e / total).collect(),
        degenerate,
    })
}

impl CommonFeature {
    /// A fixed vector, for loading from checkpoints and for tests.
    pub fn from_parts(c: Vec<f64>, tau: f64, history: Vec<Vec<f64>>, frozen: bool) -> Result<Self> {
        check_tau(tau)?;
        if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("common feature must be non-empty and finite".into()));
        }
        if history.iter().any(|h| h.len() != c.len()) {
            return Err(Error::InvalidArgument("history entries must match the feature width".into()));
        }
        Ok(CommonFeature { c, tau, history, frozen })
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn history(&self) -> &[Vec<f64>] {
        &self.history
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// `c ← Σ_v ω_v ẑ_v`. Returns the weights used.
    pub fn update(&mut self, z_hat: &Matrix) -> Result<Weights> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let weights = compute_weights(z_hat, &self.c, self.tau)?;
        let mut next = vec![0.0; self.c.len()];
        for (row, &w) in z_hat.iter_rows().zip(&weights.omega) {
            for (acc, &x) in next.iter_mut().zip(row) {
                *acc += w * x;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "common feature update".into(),
            });
        }
        self.history.push(next.clone());
        self.c = next;
        Ok(weights)
    }

    /// Idempotent.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// History as a `len × k` matrix, for checkpoints.
    pub fn history_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.history)
    }
}

/// Functional form of [`CommonFeature::update`].
pub fn update_common(cf: &CommonFeature, z_hat: &Matrix) -> Result<CommonFeature> {
    let mut next = cf.clone();
    next.update(z_hat)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_column_mean() {
        let cf = init_common(&Matrix::from_rows(&[[1.0, 1.0], [3.0, 3.0]]), 1.0).unwrap();
        assert_eq!(cf.c(), &[2.0, 2.0]);
        let single = init_common(&Matrix::from_rows(&[[0.5, -4.0]]), 1.0).unwrap();
        assert_eq!(single.c(), &[0.5, -4.0]);
        let sym = init_common(&Matrix::from_rows(&[[1.0, -2.0], [-1.0, 2.0]]), 1.0).unwrap();
        assert_eq!(sym.c(), &[0.0, 0.0]);
        assert!(init_common(&Matrix::zeros(0, 2), 1.0).is_err());
    }

    #[test]
    fn two_node_softmax() {
        let z = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let w = compute_weights(&z, &[1.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((w.omega[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((w.omega[1] - 1.0 / (e + 1.0)).abs() < 1e-12);

        let mut cf = CommonFeature::from_parts(vec![1.0, 0.0], 1.0, vec![], false).unwrap();
        cf.update(&z).unwrap();
        assert!((cf.c()[0] - 0.7311).abs() < 1e-4 && (cf.c()[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn identical_rows_and_flat_temperature_give_uniform_weights() {
        let z = Matrix::filled(4, 3, 0.7);
        let w = compute_weights(&z, &[1.0, -1.0, 2.0], 0.3).unwrap();
        assert!(w.omega.iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let z = Matrix::from_fn(5, 2, |i, j| (i as f64 - 2.0) * (j as f64 + 1.0) + 0.1 * j as f64);
        let w = compute_weights(&z, &[1.0, 2.0], 1e6).unwrap();
        assert!(w.omega.iter().all(|&p| (p - 0.2).abs() < 1e-5));

        let mut cf = CommonFeature::from_parts(vec![1.0, 0.0], 1.0, vec![], false).unwrap();
        cf.update(&Matrix::filled(3, 2, 4.0)).unwrap();
        assert_eq!(cf.c(), &[4.0, 4.0]);
    }

    #[test]
    fn zero_norms_are_reported_and_tau_validated() {
        let z = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]);
        let w = compute_weights(&z, &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(w.degenerate, vec![0]);
        let w = compute_weights(&z, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(w.degenerate, vec![0, 1]);
        assert!(compute_weights(&z, &[1.0, 0.0], 0.0).is_err());
        assert!(compute_weights(&z, &[1.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn freeze_contract() {
        let mut cf = init_common(&Matrix::from_rows(&[[1.0, 2.0], [3.0, 0.0]]), 1.0).unwrap();
        cf.update(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
        cf.freeze();
        cf.freeze();
        assert!(cf.is_frozen());
        assert_eq!(cf.c(), cf.history().last().unwrap().as_slice());
        assert!(matches!(cf.update(&Matrix::filled(1, 2, 1.0)), Err(Error::Frozen)));
        assert!(update_common(&cf, &Matrix::filled(1, 2, 1.0)).is_err());
    }
}
