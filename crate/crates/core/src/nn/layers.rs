//! Layer primitives and their backward passes.
//!
//! Each forward returns the pre-activation so callers can keep it for the
//! backward pass; models compose these by hand.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::nn::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    None,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    pub fn apply(self, pre: &Matrix) -> Matrix {
        match self {
            Activation::Relu => pre.map(|x| x.max(0.0)),
            Activation::Silu => pre.map(|x| x * sigmoid(x)),
            Activation::None => pre.clone(),
        }
    }

    /// Gradient with respect to the pre-activation.
    pub fn backward(self, pre: &Matrix, upstream: &Matrix) -> Matrix {
        match self {
            Activation::Relu => pre.zip_map(upstream, |x, g| if x > 0.0 { g } else { 0.0 }),
            Activation::Silu => pre.zip_map(upstream, |x, g| {
                let s = sigmoid(x);
                g * s * (1.0 + x * (1.0 - s))
            }),
            Activation::None => upstream.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Gcn,
    Affine,
}

/// Static description of one layer of a stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    /// Inverted dropout applied to this layer's activated output in training.
    pub dropout_rate: f64,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        LayerSpec {
            kind,
            fan_in,
            fan_out,
            activation,
            dropout_rate: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.fan_in == 0 || self.fan_out == 0 {
            return Err(Error::InvalidArgument("layer fan_in/fan_out must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

fn check_weight(op: &'static str, h: &Matrix, w: &Matrix, b: Option<&[f64]>) -> Result<()> {
    if h.cols() != w.rows() {
        return Err(Error::shape(
            op,
            format!("input width {}", w.rows()),
            h.cols(),
        ));
    }
    if let Some(b) = b {
        if b.len() != w.cols() {
            return Err(Error::shape(op, format!("bias width {}", w.cols()), b.len()));
        }
    }
    Ok(())
}

/// `h · w + b`.
pub fn affine(h: &Matrix, w: &Matrix, b: Option<&[f64]>) -> Result<Matrix> {
    check_weight("affine", h, w, b)?;
    let mut out = h.matmul(w);
    if let Some(b) = b {
        out.add_row_broadcast(b);
    }
    Ok(out)
}

/// Returns `(dh, dw, db)` for `pre = h · w + b`.
pub fn affine_backward(h: &Matrix, w: &Matrix, dpre: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
    let dw = h.t_matmul(dpre);
    let dh = dpre.matmul_t(w);
    (dh, dw, dpre.col_sums())
}

/// `Ã · (h · w) + b`, multiplying the dense factor first so propagation costs
/// `O(nnz · fan_out)`.
pub fn gcn_layer(
    adj: &NormalizedAdjacency,
    h: &Matrix,
    w: &Matrix,
    b: Option<&[f64]>,
) -> Result<Matrix> {
    check_weight("gcn", h, w, b)?;
    if adj.n() != h.rows() {
        return Err(Error::shape("gcn", format!("{} nodes", adj.n()), h.rows()));
    }
    let mut out = adj.spmm(&h.matmul(w));
    if let Some(b) = b {
        out.add_row_broadcast(b);
    }
    Ok(out)
}

/// `activation(Ã · h · w)`.
pub fn gcn_forward(
    adj: &NormalizedAdjacency,
    h: &Matrix,
    w: &Matrix,
    activation: Activation,
) -> Result<Matrix> {
    Ok(activation.apply(&gcn_layer(adj, h, w, None)?))
}

/// Returns `(dh, dw, db)` for `pre = Ã · h · w + b`. Uses `Ãᵀ = Ã`.
pub fn gcn_backward(
    adj: &NormalizedAdjacency,
    h: &Matrix,
    w: &Matrix,
    dpre: &Matrix,
) -> (Matrix, Matrix, Vec<f64>) {
    let propagated = adj.spmm(dpre);
    let dw = h.t_matmul(&propagated);
    let dh = propagated.matmul_t(w);
    (dh, dw, dpre.col_sums())
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`. All ones when not training or when `rate == 0`.
pub fn dropout_mask(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut impl Rng,
    training: bool,
) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(Matrix::filled(rows, cols, 1.0));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Matrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}
