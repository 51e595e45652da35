//! A small tape-based reverse-mode autodiff engine.
//!
//! Each forward op appends a node holding its value and enough context
//! to run its backward rule; [`Tape::backward`] walks the tape in
//! reverse and accumulates gradients. The op set is exactly what the
//! contrastive model and the probes need: 3x3 strided convolution, ReLU,
//! global mean pooling, affine layers, two matmul flavors for the
//! bilinear similarity, and four scalar losses.
//!
//! Every backward rule is validated against central finite differences
//! (see `grad_check`); the full-stack check is part of the acceptance
//! suite.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef(pub usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// 3x3 convolution, NCHW. parents: [x, w, b].
    Conv2d { stride: usize, pad: usize },
    /// parents: [x]
    Relu,
    /// NCHW -> NC. parents: [x]
    GlobalMeanPool,
    /// y = x W^T + b with x [N,D], w [K,D], b [K]. parents: [x, w, b]
    Linear,
    /// C = A B with A [N,D], B [D,M]. parents: [a, b]
    MatMul,
    /// C = A B^T with A [N,D], B [M,D]. parents: [a, b]
    MatMulBt,
    /// InfoNCE over an NxN similarity matrix. parents: [s]
    InfoNce,
    /// Mean cross-entropy of row-softmax vs class targets. parents: [logits]
    SoftmaxCe { targets: Vec<usize> },
    /// Mean elementwise binary cross-entropy on logits. parents: [logits]
    SigmoidBce { targets: Vec<f64> },
    /// Mean squared error. parents: [pred]
    Mse { targets: Vec<f64> },
}

struct Node {
    op: Op,
    parents: Vec<NodeRef>,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn value(&self, r: NodeRef) -> &Tensor {
        &self.nodes[r.0].value
    }

    fn push(&mut self, op: Op, parents: Vec<NodeRef>, value: Tensor) -> NodeRef {
        self.nodes.push(Node { op, parents, value });
        NodeRef(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeRef {
        self.push(Op::Leaf, vec![], value)
    }

    pub fn conv2d(&mut self, x: NodeRef, w: NodeRef, b: NodeRef, stride: usize, pad: usize) -> NodeRef {
        let (xv, wv, bv) = (&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value);
        assert_eq!(xv.rank(), 4, "conv input must be NCHW");
        assert_eq!(wv.rank(), 4, "conv weight must be OCKK");
        let (n, c, h, wdt) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
        let (o, wc, kh, kw) = (wv.shape[0], wv.shape[1], wv.shape[2], wv.shape[3]);
        assert_eq!(c, wc, "channel mismatch");
        assert_eq!(bv.shape, vec![o], "bias shape");
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wdt + 2 * pad - kw) / stride + 1;

        let mut out = Tensor::zeros(&[n, o, ho, wo]);
        for ni in 0..n {
            for oi in 0..o {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = bv.data[oi];
                        for ci in 0..c {
                            for di in 0..kh {
                                let hi = (i * stride + di) as isize - pad as isize;
                                if hi < 0 || hi >= h as isize {
                                    continue;
                                }
                                for dj in 0..kw {
                                    let wi = (j * stride + dj) as isize - pad as isize;
                                    if wi < 0 || wi >= wdt as isize {
                                        continue;
                                    }
                                    let xi = ((ni * c + ci) * h + hi as usize) * wdt + wi as usize;
                                    let ki = ((oi * c + ci) * kh + di) * kw + dj;
                                    acc += xv.data[xi] * wv.data[ki];
                                }
                            }
                        }
                        out.data[((ni * o + oi) * ho + i) * wo + j] = acc;
                    }
                }
            }
        }
        self.push(Op::Conv2d { stride, pad }, vec![x, w, b], out)
    }

    pub fn relu(&mut self, x: NodeRef) -> NodeRef {
        let v = &self.nodes[x.0].value;
        let out = Tensor::from_vec(&v.shape, v.data.iter().map(|&a| a.max(0.0)).collect());
        self.push(Op::Relu, vec![x], out)
    }

    pub fn global_mean_pool(&mut self, x: NodeRef) -> NodeRef {
        let v = &self.nodes[x.0].value;
        assert_eq!(v.rank(), 4, "pool input must be NCHW");
        let (n, c, h, w) = (v.shape[0], v.shape[1], v.shape[2], v.shape[3]);
        let area = (h * w) as f64;
        let mut out = Tensor::zeros(&[n, c]);
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * h * w;
                out.data[ni * c + ci] =
                    v.data[base..base + h * w].iter().sum::<f64>() / area;
            }
        }
        self.push(Op::GlobalMeanPool, vec![x], out)
    }

    pub fn linear(&mut self, x: NodeRef, w: NodeRef, b: NodeRef) -> NodeRef {
        let (xv, wv, bv) = (&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value);
        assert_eq!(xv.rank(), 2);
        assert_eq!(wv.rank(), 2);
        let (n, d) = (xv.shape[0], xv.shape[1]);
        let (k, wd) = (wv.shape[0], wv.shape[1]);
        assert_eq!(d, wd, "linear dims: x [{n},{d}] vs w [{k},{wd}]");
        assert_eq!(bv.shape, vec![k]);
        let mut out = Tensor::zeros(&[n, k]);
        for i in 0..n {
            for j in 0..k {
                let mut acc = bv.data[j];
                for t in 0..d {
                    acc += xv.data[i * d + t] * wv.data[j * d + t];
                }
                out.data[i * k + j] = acc;
            }
        }
        self.push(Op::Linear, vec![x, w, b], out)
    }

    pub fn matmul(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (n, d) = (av.shape[0], av.shape[1]);
        let (bd, m) = (bv.shape[0], bv.shape[1]);
        assert_eq!(d, bd, "matmul dims");
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..n {
            for t in 0..d {
                let x = av.data[i * d + t];
                for j in 0..m {
                    out.data[i * m + j] += x * bv.data[t * m + j];
                }
            }
        }
        self.push(Op::MatMul, vec![a, b], out)
    }

    pub fn matmul_bt(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (n, d) = (av.shape[0], av.shape[1]);
        let (m, bd) = (bv.shape[0], bv.shape[1]);
        assert_eq!(d, bd, "matmul_bt dims");
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..n {
            for j in 0..m {
                let mut acc = 0.0;
                for t in 0..d {
                    acc += av.data[i * d + t] * bv.data[j * d + t];
                }
                out.data[i * m + j] = acc;
            }
        }
        self.push(Op::MatMulBt, vec![a, b], out)
    }

    /// InfoNCE over a square similarity matrix `s`:
    /// `L = -(1/N) sum_i [ s_ii - ln sum_j exp(s_ij) ]`,
    /// computed with the usual max-subtraction for stability.
    pub fn infonce(&mut self, s: NodeRef) -> NodeRef {
        let sv = &self.nodes[s.0].value;
        assert_eq!(sv.rank(), 2);
        let n = sv.shape[0];
        assert_eq!(sv.shape[1], n, "similarity matrix must be square");
        let mut loss = 0.0;
        for i in 0..n {
            let row = sv.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[i];
        }
        self.push(Op::InfoNce, vec![s], Tensor::scalar(loss / n as f64))
    }

    pub fn softmax_ce(&mut self, logits: NodeRef, targets: Vec<usize>) -> NodeRef {
        let lv = &self.nodes[logits.0].value;
        let (n, k) = (lv.shape[0], lv.shape[1]);
        assert_eq!(targets.len(), n);
        assert!(targets.iter().all(|&t| t < k), "target class out of range");
        let mut loss = 0.0;
        for i in 0..n {
            let row = lv.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[targets[i]];
        }
        self.push(
            Op::SoftmaxCe { targets },
            vec![logits],
            Tensor::scalar(loss / n as f64),
        )
    }

    pub fn sigmoid_bce(&mut self, logits: NodeRef, targets: Vec<f64>) -> NodeRef {
        let lv = &self.nodes[logits.0].value;
        assert_eq!(lv.numel(), targets.len());
        let mut loss = 0.0;
        for (&l, &t) in lv.data.iter().zip(&targets) {
            // max(l,0) - l*t + ln(1 + exp(-|l|))
            loss += l.max(0.0) - l * t + (-l.abs()).exp().ln_1p();
        }
        let n = targets.len() as f64;
        self.push(
            Op::SigmoidBce { targets },
            vec![logits],
            Tensor::scalar(loss / n),
        )
    }

    pub fn mse(&mut self, pred: NodeRef, targets: Vec<f64>) -> NodeRef {
        let pv = &self.nodes[pred.0].value;
        assert_eq!(pv.numel(), targets.len());
        let loss: f64 = pv
            .data
            .iter()
            .zip(&targets)
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum::<f64>()
            / targets.len() as f64;
        self.push(Op::Mse { targets }, vec![pred], Tensor::scalar(loss))
    }

    /// Reverse pass from a scalar node. Returns one gradient slot per
    /// tape node (None where no gradient flows). Fails if the loss or
    /// any gradient is non-finite.
    pub fn backward(&self, from: NodeRef) -> Result<Vec<Option<Tensor>>> {
        let root = &self.nodes[from.0].value;
        assert_eq!(root.numel(), 1, "backward starts from a scalar");
        if !root.is_finite() {
            return Err(Error::numeric("loss is not finite"));
        }

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[from.0] = Some(Tensor::scalar(1.0));

        for id in (0..=from.0).rev() {
            let Some(gy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.accumulate(node, &gy, &mut grads);
            grads[id] = Some(gy);
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::numeric("gradient is not finite"));
            }
        }
        Ok(grads)
    }

    fn accumulate(&self, node: &Node, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut add = |r: NodeRef, g: Tensor| {
            match &mut grads[r.0] {
                Some(acc) => {
                    for (a, b) in acc.data.iter_mut().zip(&g.data) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(g),
            };
        };

        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { stride, pad } => {
                let (x, w, b) = (node.parents[0], node.parents[1], node.parents[2]);
                let xv = &self.nodes[x.0].value;
                let wv = &self.nodes[w.0].value;
                let (n, c, h, wdt) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
                let (o, _, kh, kw) = (wv.shape[0], wv.shape[1], wv.shape[2], wv.shape[3]);
                let (ho, wo) = (node.value.shape[2], node.value.shape[3]);
                let mut gx = Tensor::zeros(&xv.shape);
                let mut gw = Tensor::zeros(&wv.shape);
                let mut gb = Tensor::zeros(&[o]);
                for ni in 0..n {
                    for oi in 0..o {
                        for i in 0..ho {
                            for j in 0..wo {
                                let g = gy.data[((ni * o + oi) * ho + i) * wo + j];
                                if g == 0.0 {
                                    continue;
                                }
                                gb.data[oi] += g;
                                for ci in 0..c {
                                    for di in 0..kh {
                                        let hi = (i * stride + di) as isize - *pad as isize;
                                        if hi < 0 || hi >= h as isize {
                                            continue;
                                        }
                                        for dj in 0..kw {
                                            let wi = (j * stride + dj) as isize - *pad as isize;
                                            if wi < 0 || wi >= wdt as isize {
                                                continue;
                                            }
                                            let xi = ((ni * c + ci) * h + hi as usize) * wdt
                                                + wi as usize;
                                            let ki = ((oi * c + ci) * kh + di) * kw + dj;
                                            gx.data[xi] += g * wv.data[ki];
                                            gw.data[ki] += g * xv.data[xi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                add(x, gx);
                add(w, gw);
                add(b, gb);
            }
            Op::Relu => {
                let x = node.parents[0];
                let xv = &self.nodes[x.0].value;
                let g = Tensor::from_vec(
                    &xv.shape,
                    xv.data
                        .iter()
                        .zip(&gy.data)
                        .map(|(&a, &g)| if a > 0.0 { g } else { 0.0 })
                        .collect(),
                );
                add(x, g);
            }
            Op::GlobalMeanPool => {
                let x = node.parents[0];
                let xv = &self.nodes[x.0].value;
                let (n, c, h, w) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
                let area = (h * w) as f64;
                let mut gx = Tensor::zeros(&xv.shape);
                for ni in 0..n {
                    for ci in 0..c {
                        let g = gy.data[ni * c + ci] / area;
                        let base = (ni * c + ci) * h * w;
                        for t in 0..h * w {
                            gx.data[base + t] = g;
                        }
                    }
                }
                add(x, gx);
            }
            Op::Linear => {
                let (x, w, b) = (node.parents[0], node.parents[1], node.parents[2]);
                let xv = &self.nodes[x.0].value;
                let wv = &self.nodes[w.0].value;
                let (n, d) = (xv.shape[0], xv.shape[1]);
                let k = wv.shape[0];
                let mut gx = Tensor::zeros(&xv.shape);
                let mut gw = Tensor::zeros(&wv.shape);
                let mut gb = Tensor::zeros(&[k]);
                for i in 0..n {
                    for j in 0..k {
                        let g = gy.data[i * k + j];
                        gb.data[j] += g;
                        for t in 0..d {
                            gx.data[i * d + t] += g * wv.data[j * d + t];
                            gw.data[j * d + t] += g * xv.data[i * d + t];
                        }
                    }
                }
                add(x, gx);
                add(w, gw);
                add(b, gb);
            }
            Op::MatMul => {
                let (a, b) = (node.parents[0], node.parents[1]);
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (n, d) = (av.shape[0], av.shape[1]);
                let m = bv.shape[1];
                let mut ga = Tensor::zeros(&av.shape);
                let mut gb = Tensor::zeros(&bv.shape);
                for i in 0..n {
                    for j in 0..m {
                        let g = gy.data[i * m + j];
                        for t in 0..d {
                            ga.data[i * d + t] += g * bv.data[t * m + j];
                            gb.data[t * m + j] += g * av.data[i * d + t];
                        }
                    }
                }
                add(a, ga);
                add(b, gb);
            }
            Op::MatMulBt => {
                let (a, b) = (node.parents[0], node.parents[1]);
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (n, d) = (av.shape[0], av.shape[1]);
                let m = bv.shape[0];
                let mut ga = Tensor::zeros(&av.shape);
                let mut gb = Tensor::zeros(&bv.shape);
                for i in 0..n {
                    for j in 0..m {
                        let g = gy.data[i * m + j];
                        for t in 0..d {
                            ga.data[i * d + t] += g * bv.data[j * d + t];
                            gb.data[j * d + t] += g * av.data[i * d + t];
                        }
                    }
                }
                add(a, ga);
                add(b, gb);
            }
            Op::InfoNce => {
                let s = node.parents[0];
                let sv = &self.nodes[s.0].value;
                let n = sv.shape[0];
                let scale = gy.item() / n as f64;
                let mut gs = Tensor::zeros(&sv.shape);
                for i in 0..n {
                    let row = sv.row(i);
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for j in 0..n {
                        let softmax = exps[j] / z;
                        let indicator = if i == j { 1.0 } else { 0.0 };
                        gs.data[i * n + j] = scale * (softmax - indicator);
                    }
                }
                add(s, gs);
            }
            Op::SoftmaxCe { targets } => {
                let l = node.parents[0];
                let lv = &self.nodes[l.0].value;
                let (n, k) = (lv.shape[0], lv.shape[1]);
                let scale = gy.item() / n as f64;
                let mut gl = Tensor::zeros(&lv.shape);
                for i in 0..n {
                    let row = lv.row(i);
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for j in 0..k {
                        let indicator = if j == targets[i] { 1.0 } else { 0.0 };
                        gl.data[i * k + j] = scale * (exps[j] / z - indicator);
                    }
                }
                add(l, gl);
            }
            Op::SigmoidBce { targets } => {
                let l = node.parents[0];
                let lv = &self.nodes[l.0].value;
                let scale = gy.item() / targets.len() as f64;
                let g = Tensor::from_vec(
                    &lv.shape,
                    lv.data
                        .iter()
                        .zip(targets)
                        .map(|(&l, &t)| scale * (1.0 / (1.0 + (-l).exp()) - t))
                        .collect(),
                );
                add(l, g);
            }
            Op::Mse { targets } => {
                let p = node.parents[0];
                let pv = &self.nodes[p.0].value;
                let scale = 2.0 * gy.item() / targets.len() as f64;
                let g = Tensor::from_vec(
                    &pv.shape,
                    pv.data
                        .iter()
                        .zip(targets)
                        .map(|(&p, &t)| scale * (p - t))
                        .collect(),
                );
                add(p, g);
            }
        }
    }
}

/// Fraction of rows whose diagonal entry strictly dominates the row —
/// the instance-discrimination accuracy of a similarity matrix.
pub fn diagonal_accuracy(s: &Tensor) -> f64 {
    assert_eq!(s.rank(), 2);
    let n = s.shape[0];
    let mut hits = 0usize;
    for i in 0..n {
        let row = s.row(i);
        if (0..n).all(|j| j == i || row[j] < row[i]) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::super::grad_check::{finite_diff, max_rel_err};
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Check d(loss)/d(parent p) for a graph built by `build`.
    fn check_input_grad<F>(shape: &[usize], build: F, seed: u64)
    where
        F: Fn(&mut Tape, NodeRef) -> NodeRef,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = randn(shape, &mut rng);

        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let loss = build(&mut tape, x);
        let grads = tape.backward(loss).unwrap();
        let analytic = grads[x.0].as_ref().unwrap().data.clone();

        let numeric = finite_diff(
            |v| {
                let mut t = Tape::new();
                let x = t.leaf(Tensor::from_vec(shape, v.to_vec()));
                let l = build(&mut t, x);
                t.value(l).item()
            },
            &x0.data,
            1e-5,
        );
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-6, "gradient mismatch: {err:e}");
    }

    #[test]
    fn infonce_matches_hand_computation() {
        // 2x2 similarity [[2, 0], [1, 3]]:
        // row 0: lse = ln(e^2 + e^0), loss = lse - 2
        // row 1: lse = ln(e^1 + e^3), loss = lse - 3
        let mut tape = Tape::new();
        let s = tape.leaf(Tensor::from_vec(&[2, 2], vec![2.0, 0.0, 1.0, 3.0]));
        let loss = tape.infonce(s);
        let expected = (((2f64).exp() + 1.0).ln() - 2.0 + ((1f64).exp() + (3f64).exp()).ln() - 3.0) / 2.0;
        assert!((tape.value(loss).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn infonce_gradient_checks() {
        check_input_grad(&[4, 4], |t, x| t.infonce(x), 1);
    }

    #[test]
    fn conv_relu_pool_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w0 = randn(&[2, 1, 3, 3], &mut rng);
        let b0 = randn(&[2], &mut rng);
        check_input_grad(
            &[2, 1, 5, 6],
            move |t, x| {
                let w = t.leaf(w0.clone());
                let b = t.leaf(b0.clone());
                let y = t.conv2d(x, w, b, 2, 1);
                let r = t.relu(y);
                let p = t.global_mean_pool(r);
                t.mse(p, vec![0.3, -0.2, 0.7, 0.1])
            },
            3,
        );
    }

    #[test]
    fn conv_weight_and_bias_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x0 = randn(&[1, 2, 4, 4], &mut rng);
        let b0 = randn(&[3], &mut rng);
        let x0c = x0.clone();
        let b0c = b0.clone();
        // Gradient w.r.t. the *weight* this time.
        check_input_grad(
            &[3, 2, 3, 3],
            move |t, w| {
                let x = t.leaf(x0c.clone());
                let b = t.leaf(b0c.clone());
                let y = t.conv2d(x, w, b, 2, 1);
                let p = t.global_mean_pool(y);
                t.mse(p, vec![0.1, 0.2, 0.3])
            },
            5,
        );
    }

    #[test]
    fn linear_and_matmul_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w0 = randn(&[3, 4], &mut rng);
        let b0 = randn(&[3], &mut rng);
        let other = randn(&[5, 3], &mut rng);
        check_input_grad(
            &[5, 4],
            move |t, x| {
                let w = t.leaf(w0.clone());
                let b = t.leaf(b0.clone());
                let y = t.linear(x, w, b); // [5,3]
                let o = t.leaf(other.clone()); // [5,3]
                let s = t.matmul_bt(y, o); // [5,5]
                t.infonce(s)
            },
            7,
        );

        let m0 = randn(&[4, 4], &mut rng);
        check_input_grad(
            &[3, 4],
            move |t, a| {
                let m = t.leaf(m0.clone());
                let p = t.matmul(a, m); // [3,4]
                let s = t.matmul_bt(p, a); // vs itself: [3,3]
                t.infonce(s)
            },
            8,
        );
    }

    #[test]
    fn classification_loss_gradient_checks() {
        check_input_grad(&[4, 3], |t, x| t.softmax_ce(x, vec![0, 2, 1, 2]), 9);
        check_input_grad(
            &[3, 4],
            |t, x| {
                t.sigmoid_bce(
                    x,
                    vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0],
                )
            },
            10,
        );
    }

    #[test]
    fn softmax_ce_matches_hand_value() {
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::from_vec(&[1, 2], vec![0.0, 0.0]));
        let loss = tape.softmax_ce(l, vec![1]);
        assert!((tape.value(loss).item() - (2f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_accumulate_across_shared_use() {
        // x used twice: loss = mse(x) + via relu; checks the += path.
        check_input_grad(
            &[2, 2],
            |t, x| {
                let r = t.relu(x);
                let s = t.matmul_bt(r, x); // reuses x
                t.infonce(s)
            },
            11,
        );
    }

    #[test]
    fn diagonal_accuracy_requires_strict_dominance() {
        let s = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 0.0, 2.0]);
        // Row 0 ties -> not a hit; row 1 diagonal wins.
        assert_eq!(diagonal_accuracy(&s), 0.5);
        let t = Tensor::from_vec(&[2, 2], vec![3.0, 1.0, 0.0, 2.0]);
        assert_eq!(diagonal_accuracy(&t), 1.0);
    }

    #[test]
    fn backward_rejects_nonfinite_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(f64::INFINITY));
        assert!(tape.backward(x).is_err());
    }
}
