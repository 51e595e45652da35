//! Finite-difference gradient verification.
//!
//! The tape's backward rules are compared against central differences
//! with a relative-error convention that floors the denominator, so
//! near-zero gradients are judged on absolute error:
//! `err = |a - n| / max(|a|, |n|, 0.01)`. The full-stack check drives a
//! miniature copy of the real model (two conv blocks, projector,
//! bilinear head, InfoNCE) and reports the worst error over every
//! parameter and the input.

use rand::Rng;

use super::graph::Tape;
use super::model::{Model, ModelConfig};
use super::tensor::Tensor;
use crate::corpus::derive_rng;

/// Central finite differences of a scalar function at `x`.
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let hi = f(&x);
        x[i] = orig - eps;
        let lo = f(&x);
        x[i] = orig;
        out.push((hi - lo) / (2.0 * eps));
    }
    out
}

/// Worst relative error between analytic and numeric gradients.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-2))
        .fold(0.0, f64::max)
}

/// Run the whole contrastive forward/backward on a tiny model and return
/// the maximum relative gradient error across all parameters and both
/// input views, using central differences with step `eps`. Deterministic
/// in `seed`.
pub fn full_stack_max_rel_err(seed: u64, eps: f64) -> f64 {
    let cfg = ModelConfig {
        conv_channels: [2, 3],
        d_e: 6,
        d_p: 4,
    };
    let model = Model::new(&cfg, seed);
    let mut rng = derive_rng(seed, &["gradcheck-input"]);
    let shape = [3usize, 1, 8, 10];
    let n: usize = shape.iter().product();
    let u = Tensor::from_vec(&shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect());
    let v = Tensor::from_vec(&shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect());

    let loss_with = |params: &Model, u: &Tensor, v: &Tensor| -> f64 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let un = tape.leaf(u.clone());
        let vn = tape.leaf(v.clone());
        let ue = bound.encode(&mut tape, un);
        let ve = bound.encode(&mut tape, vn);
        let up = bound.project(&mut tape, ue);
        let vp = bound.project(&mut tape, ve);
        let s = bound.similarity(&mut tape, up, vp);
        let loss = tape.infonce(s);
        tape.value(loss).item()
    };

    // Analytic gradients.
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let un = tape.leaf(u.clone());
    let vn = tape.leaf(v.clone());
    let ue = bound.encode(&mut tape, un);
    let ve = bound.encode(&mut tape, vn);
    let up = bound.project(&mut tape, ue);
    let vp = bound.project(&mut tape, ve);
    let s = bound.similarity(&mut tape, up, vp);
    let loss = tape.infonce(s);
    let grads = tape.backward(loss).expect("finite gradients");

    let mut worst = 0.0f64;

    // Every named parameter.
    for (name, node) in bound.named() {
        let analytic = grads[node.0]
            .as_ref()
            .unwrap_or_else(|| panic!("no gradient reached {name}"))
            .data
            .clone();
        let base = model.params.get(name).clone();
        let numeric = finite_diff(
            |vals| {
                let mut m = model.clone();
                *m.params.get_mut(name) = Tensor::from_vec(&base.shape, vals.to_vec());
                loss_with(&m, &u, &v)
            },
            &base.data,
            eps,
        );
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }

    // Both input views.
    for (node, tensor) in [(un, &u), (vn, &v)] {
        let analytic = grads[node.0].as_ref().unwrap().data.clone();
        let numeric = finite_diff(
            |vals| {
                let t = Tensor::from_vec(&shape, vals.to_vec());
                if node == un {
                    loss_with(&model, &t, &v)
                } else {
                    loss_with(&model, &u, &t)
                }
            },
            &tensor.data,
            eps,
        );
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }

    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_matches_quadratic() {
        // f(x) = sum x_i^2 -> grad = 2x.
        let x = vec![1.0, -2.0, 0.5];
        let g = finite_diff(|v| v.iter().map(|a| a * a).sum(), &x, 1e-6);
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - 2.0 * xi).abs() < 1e-8);
        }
    }

    #[test]
    fn rel_err_floors_small_denominators() {
        // Tiny absolute differences on near-zero gradients stay small.
        assert!(max_rel_err(&[1e-9], &[2e-9]) < 1e-6);
        assert!(max_rel_err(&[1.0], &[1.001]) > 9e-4);
    }

    #[test]
    fn full_stack_gradients_survive_fine_differencing() {
        let err = full_stack_max_rel_err(1, 1e-5);
        assert!(err < 1e-5, "max rel err {err}");
    }
}
