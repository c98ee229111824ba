//! Central finite differences against analytic gradients.

use crate::nn::params::{Gradients, ParamStore};
use crate::nn::tensor::Matrix;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both are zero.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        return 0.0;
    }
    a.sub(b).frobenius_norm() / scale
}

/// Central-difference gradient of `loss` with respect to every parameter in
/// the store reached through `store`.
pub fn numeric_gradients<M>(
    model: &mut M,
    store: impl Fn(&mut M) -> &mut ParamStore,
    loss: impl Fn(&M) -> f64,
    h: f64,
) -> Gradients {
    let names: Vec<String> = store(model).iter().map(|(k, _)| k.clone()).collect();
    let mut out = Gradients::new();
    for name in names {
        let len = store(model).value(&name).len();
        let (rows, cols) = store(model).value(&name).shape();
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = store(model).value(&name).as_slice()[i];
            store(model).value_mut(&name).as_mut_slice()[i] = orig + h;
            let up = loss(model);
            store(model).value_mut(&name).as_mut_slice()[i] = orig - h;
            let down = loss(model);
            store(model).value_mut(&name).as_mut_slice()[i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.insert(name, Matrix::from_vec(rows, cols, g).expect("shape matches"));
    }
    out
}

/// Worst per-tensor relative error; a tensor missing on either side counts
/// as infinitely wrong.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, n) in numeric.iter() {
        let e = analytic.get(name).map_or(f64::INFINITY, |a| {
            if a.shape() == n.shape() {
                relative_error(a, n)
            } else {
                f64::INFINITY
            }
        });
        worst = worst.max(e);
    }
    if analytic.len() != numeric.len() {
        return f64::INFINITY;
    }
    worst
}
