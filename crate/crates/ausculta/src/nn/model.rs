//! The contrastive model: a small convolutional encoder `f`, a linear
//! projector `g`, and a bilinear similarity head
//! `s(x, x') = g(f(x))^T W g(f(x'))`.
//!
//! The encoder is two 3x3 stride-2 conv+ReLU blocks over the `[N, 1,
//! frames, mels]` spectrogram, global mean pooling, and a dense layer to
//! the embedding dimension. Downstream probes consume the embedding
//! `f(x)`; the projector and bilinear head exist only for pretraining.

use rand::Rng;

use super::graph::{NodeRef, Tape};
use super::tensor::Tensor;
use crate::corpus::derive_rng;
use crate::error::{Error, Result};
use crate::featurize::LogMelSpectrogram;

/// Desk-scale defaults: 8/16 conv channels, 128-d embeddings, 32-d
/// projections. `full_scale` is the full-size configuration
/// used for serious training runs.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub conv_channels: [usize; 2],
    pub d_e: usize,
    pub d_p: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_channels: [8, 16],
            d_e: 128,
            d_p: 32,
        }
    }
}

impl ModelConfig {
    pub fn full_scale() -> Self {
        ModelConfig {
            conv_channels: [32, 64],
            d_e: 512,
            d_p: 512,
        }
    }
}

/// Named parameter tensors in a fixed order (the checkpoint order).
#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new(entries: Vec<(String, Tensor)>) -> ParamStore {
        ParamStore { entries }
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self
            .entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
}

impl Model {
    /// Fresh model: Kaiming-uniform weights, zero biases, and the
    /// bilinear head initialized to `0.1 * I` so early similarities are
    /// a damped dot product.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Model {
        let [c1, c2] = cfg.conv_channels;
        let mut entries = Vec::new();
        let init = |name: &str, shape: &[usize], fan_in: usize| {
            let mut rng = derive_rng(seed, &["init", name]);
            (name.to_string(), kaiming_uniform(shape, fan_in, &mut rng))
        };
        entries.push(init("encoder.conv1.w", &[c1, 1, 3, 3], 9));
        entries.push(("encoder.conv1.b".into(), Tensor::zeros(&[c1])));
        entries.push(init("encoder.conv2.w", &[c2, c1, 3, 3], c1 * 9));
        entries.push(("encoder.conv2.b".into(), Tensor::zeros(&[c2])));
        entries.push(init("encoder.fc.w", &[cfg.d_e, c2], c2));
        entries.push(("encoder.fc.b".into(), Tensor::zeros(&[cfg.d_e])));
        entries.push(init("projector.w", &[cfg.d_p, cfg.d_e], cfg.d_e));
        entries.push(("projector.b".into(), Tensor::zeros(&[cfg.d_p])));

        let mut bilinear = Tensor::zeros(&[cfg.d_p, cfg.d_p]);
        for i in 0..cfg.d_p {
            bilinear.data[i * cfg.d_p + i] = 0.1;
        }
        entries.push(("bilinear.w".into(), bilinear));

        Model {
            cfg: cfg.clone(),
            params: ParamStore::new(entries),
        }
    }

    /// Rebuild a model from checkpointed parameters, recovering the
    /// configuration from tensor shapes.
    pub fn from_params(params: ParamStore) -> Result<Model> {
        let need = |name: &str| -> Result<&Tensor> {
            params
                .entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::data(format!("checkpoint missing tensor {name}")))
        };
        let conv1 = need("encoder.conv1.w")?;
        let conv2 = need("encoder.conv2.w")?;
        let fc = need("encoder.fc.w")?;
        let proj = need("projector.w")?;
        let bilinear = need("bilinear.w")?;
        let cfg = ModelConfig {
            conv_channels: [conv1.shape[0], conv2.shape[0]],
            d_e: fc.shape[0],
            d_p: proj.shape[0],
        };
        if conv2.shape[1] != cfg.conv_channels[0]
            || fc.shape[1] != cfg.conv_channels[1]
            || proj.shape[1] != cfg.d_e
            || bilinear.shape != vec![cfg.d_p, cfg.d_p]
        {
            return Err(Error::data("checkpoint tensor shapes are inconsistent"));
        }
        Ok(Model { cfg, params })
    }

    /// Load all parameters onto a tape as leaves, returning handles the
    /// forward passes (and the optimizer, via [`BoundModel::named`]) use.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let mut leaf = |name: &str| tape.leaf(self.params.get(name).clone());
        BoundModel {
            conv1_w: leaf("encoder.conv1.w"),
            conv1_b: leaf("encoder.conv1.b"),
            conv2_w: leaf("encoder.conv2.w"),
            conv2_b: leaf("encoder.conv2.b"),
            fc_w: leaf("encoder.fc.w"),
            fc_b: leaf("encoder.fc.b"),
            proj_w: leaf("projector.w"),
            proj_b: leaf("projector.b"),
            bilinear: leaf("bilinear.w"),
        }
    }

    /// Embed full spectrograms outside any training loop.
    pub fn embed(&self, specs: &[&LogMelSpectrogram]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(specs.len());
        for spec in specs {
            let mut tape = Tape::new();
            let bound = self.bind(&mut tape);
            let x = tape.leaf(batch_input(&[(*spec).clone()]));
            let e = bound.encode(&mut tape, x);
            let v = tape.value(e);
            if !v.is_finite() {
                return Err(Error::numeric("non-finite embedding"));
            }
            out.push(v.data.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundModel {
    pub conv1_w: NodeRef,
    pub conv1_b: NodeRef,
    pub conv2_w: NodeRef,
    pub conv2_b: NodeRef,
    pub fc_w: NodeRef,
    pub fc_b: NodeRef,
    pub proj_w: NodeRef,
    pub proj_b: NodeRef,
    pub bilinear: NodeRef,
}

impl BoundModel {
    /// Parameter handles in checkpoint order, for gradient collection.
    pub fn named(&self) -> Vec<(&'static str, NodeRef)> {
        vec![
            ("encoder.conv1.w", self.conv1_w),
            ("encoder.conv1.b", self.conv1_b),
            ("encoder.conv2.w", self.conv2_w),
            ("encoder.conv2.b", self.conv2_b),
            ("encoder.fc.w", self.fc_w),
            ("encoder.fc.b", self.fc_b),
            ("projector.w", self.proj_w),
            ("projector.b", self.proj_b),
            ("bilinear.w", self.bilinear),
        ]
    }

    /// Encoder-only handles (what a full fine-tuning probe updates).
    pub fn encoder_named(&self) -> Vec<(&'static str, NodeRef)> {
        self.named()
            .into_iter()
            .filter(|(n, _)| n.starts_with("encoder."))
            .collect()
    }

    /// `f(x)`: `[N,1,F,M]` spectrograms to `[N, d_e]` embeddings.
    pub fn encode(&self, tape: &mut Tape, x: NodeRef) -> NodeRef {
        let c1 = tape.conv2d(x, self.conv1_w, self.conv1_b, 2, 1);
        let r1 = tape.relu(c1);
        let c2 = tape.conv2d(r1, self.conv2_w, self.conv2_b, 2, 1);
        let r2 = tape.relu(c2);
        let pooled = tape.global_mean_pool(r2);
        tape.linear(pooled, self.fc_w, self.fc_b)
    }

    /// `g(e)`: affine projection to `[N, d_p]`.
    pub fn project(&self, tape: &mut Tape, e: NodeRef) -> NodeRef {
        tape.linear(e, self.proj_w, self.proj_b)
    }

    /// Bilinear similarity matrix `S = U W V^T` of two projected batches.
    pub fn similarity(&self, tape: &mut Tape, u: NodeRef, v: NodeRef) -> NodeRef {
        let p = tape.matmul(u, self.bilinear);
        tape.matmul_bt(p, v)
    }
}

/// Stack equal-shape spectrograms into a `[N, 1, frames, mels]` tensor.
pub fn batch_input(crops: &[LogMelSpectrogram]) -> Tensor {
    assert!(!crops.is_empty());
    let (f, m) = (crops[0].n_frames, crops[0].n_mels);
    let mut data = Vec::with_capacity(crops.len() * f * m);
    for c in crops {
        assert_eq!((c.n_frames, c.n_mels), (f, m), "ragged batch");
        data.extend_from_slice(&c.values);
    }
    Tensor::from_vec(&[crops.len(), 1, f, m], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::diagonal_accuracy;

    #[test]
    fn init_is_deterministic_and_bilinear_is_scaled_identity() {
        let cfg = ModelConfig::default();
        let a = Model::new(&cfg, 7);
        let b = Model::new(&cfg, 7);
        let c = Model::new(&cfg, 8);
        for ((na, ta), (nb, tb)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data, tb.data);
        }
        assert!(a
            .params
            .iter()
            .zip(c.params.iter())
            .any(|((_, ta), (_, tc))| ta.data != tc.data));

        let w = a.params.get("bilinear.w");
        for i in 0..cfg.d_p {
            for j in 0..cfg.d_p {
                let expect = if i == j { 0.1 } else { 0.0 };
                assert_eq!(w.data[i * cfg.d_p + j], expect);
            }
        }
        assert_eq!(a.params.get("encoder.conv1.b").data, vec![0.0; 8]);
    }

    #[test]
    fn shapes_flow_through_the_stack() {
        let cfg = ModelConfig {
            conv_channels: [4, 6],
            d_e: 16,
            d_p: 8,
        };
        let model = Model::new(&cfg, 1);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        // 20-frame, 64-mel crops, batch of 3.
        let x = tape.leaf(Tensor::zeros(&[3, 1, 20, 64]));
        let e = bound.encode(&mut tape, x);
        assert_eq!(tape.value(e).shape, vec![3, 16]);
        let p = bound.project(&mut tape, e);
        assert_eq!(tape.value(p).shape, vec![3, 8]);
        let s = bound.similarity(&mut tape, p, p);
        assert_eq!(tape.value(s).shape, vec![3, 3]);
    }

    #[test]
    fn identity_bilinear_puts_equal_norm_self_pairs_on_top() {
        // With u == v and W = 0.1 I, S = 0.1 U U^T. For *equal-norm* rows
        // Cauchy-Schwarz makes the diagonal strict row maxima (a longer
        // row could otherwise beat a shorter one's self-similarity), so
        // the freshly initialized bilinear head already ranks each view
        // against itself first.
        let cfg = ModelConfig {
            conv_channels: [2, 3],
            d_e: 8,
            d_p: 4,
        };
        let model = Model::new(&cfg, 3);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let mut rng = derive_rng(5, &["x"]);
        let mut rows: Vec<f64> = Vec::new();
        for _ in 0..4 {
            let row: Vec<f64> = (0..cfg.d_p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            rows.extend(row.iter().map(|v| v / norm));
        }
        let p = tape.leaf(Tensor::from_vec(&[4, cfg.d_p], rows));
        let s = bound.similarity(&mut tape, p, p);
        assert_eq!(diagonal_accuracy(tape.value(s)), 1.0);
    }

    #[test]
    fn embed_handles_variable_length_spectrograms() {
        let model = Model::new(&ModelConfig::default(), 2);
        let short = LogMelSpectrogram {
            values: vec![0.3; 5 * 64],
            n_frames: 5,
            n_mels: 64,
        };
        let long = LogMelSpectrogram {
            values: vec![0.3; 50 * 64],
            n_frames: 50,
            n_mels: 64,
        };
        let embs = model.embed(&[&short, &long]).unwrap();
        assert_eq!(embs.len(), 2);
        assert!(embs.iter().all(|e| e.len() == 128));
    }

    #[test]
    fn from_params_validates_shapes() {
        let model = Model::new(&ModelConfig::default(), 1);
        let rebuilt = Model::from_params(model.params.clone()).unwrap();
        assert_eq!(rebuilt.cfg, model.cfg);

        let mut broken = model.params.clone();
        *broken.get_mut("projector.w") = Tensor::zeros(&[32, 100]);
        assert!(Model::from_params(broken).is_err());
    }
}
