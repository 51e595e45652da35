//! Downstream probing of a pretrained encoder.
//!
//! Recordings are chunked into fixed-length segments (the task's
//! `chunk_secs`, zero-padding the remainder so every recording yields at
//! least one segment), each segment is featurized and embedded with the
//! frozen encoder `f`, and a linear head maps embeddings to task
//! outputs. Segments inherit their recording's label for training; at
//! prediction time segment logits are averaged per recording before the
//! output activation.
//!
//! Two modes: `linear` trains only the head on precomputed embeddings —
//! the encoder provably cannot move — while `full` backpropagates into
//! the encoder as well (the projector and bilinear head are pretraining
//! machinery and stay untouched either way).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::audio;
use crate::config::{ProbeConfig, ProbeMode};
use crate::corpus::{self, LabelValue, Record, Split};
use crate::error::{Error, Result};
use crate::featurize::{self, LogMelSpectrogram};
use crate::metrics::{self, EvalReport, Prediction};
use crate::nn::{batch_input, checkpoint, Adam, Model, ParamStore, Tape, Tensor};
use crate::tasks::{self, TaskKind, TaskSpec};

#[derive(Debug, Clone)]
pub struct HeadTrainOpts {
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for HeadTrainOpts {
    fn default() -> Self {
        HeadTrainOpts {
            epochs: 64,
            lr: 1e-4,
            lr_decay: 0.99,
            batch_size: 16,
            seed: 42,
        }
    }
}

/// Split a standardized clip into `chunk_secs`-second segments,
/// zero-padding the tail so even a short clip produces one full segment.
pub fn chunk_samples(samples: &[f64], sample_rate: u32, chunk_secs: u32) -> Vec<Vec<f64>> {
    let len = (sample_rate as usize) * chunk_secs as usize;
    assert!(len > 0);
    if samples.is_empty() {
        return vec![vec![0.0; len]];
    }
    samples
        .chunks(len)
        .map(|c| {
            let mut seg = c.to_vec();
            seg.resize(len, 0.0);
            seg
        })
        .collect()
}

fn head_names(task: &TaskSpec) -> (String, String) {
    (format!("probe.{}.w", task.id), format!("probe.{}.b", task.id))
}

fn new_head(task: &TaskSpec, d_e: usize) -> ParamStore {
    let (w, b) = head_names(task);
    ParamStore::new(vec![
        (w, Tensor::zeros(&[task.head_dim(), d_e])),
        (b, Tensor::zeros(&[task.head_dim()])),
    ])
}

enum Targets {
    Classes(Vec<usize>),
    MultiHot(Vec<f64>),
    Counts(Vec<f64>),
}

fn targets_of(task: &TaskSpec, labels: &[&LabelValue]) -> Result<Targets> {
    let k = task.head_dim();
    match task.kind {
        TaskKind::Bc | TaskKind::Mc => {
            let mut out = Vec::with_capacity(labels.len());
            for l in labels {
                let v = l
                    .as_scalar()
                    .ok_or_else(|| Error::data(format!("{}: scalar label required", task.id)))?;
                if v.fract() != 0.0 || v < 0.0 || v as usize >= k {
                    return Err(Error::data(format!(
                        "{}: label {v} outside 0..{k}",
                        task.id
                    )));
                }
                out.push(v as usize);
            }
            Ok(Targets::Classes(out))
        }
        TaskKind::Ml => {
            let mut out = Vec::with_capacity(labels.len() * k);
            for l in labels {
                let v = l
                    .as_vector()
                    .ok_or_else(|| Error::data(format!("{}: vector label required", task.id)))?;
                if v.len() != k {
                    return Err(Error::data(format!("{}: label width != {k}", task.id)));
                }
                out.extend(v.iter().map(|&x| if x >= 0.5 { 1.0 } else { 0.0 }));
            }
            Ok(Targets::MultiHot(out))
        }
        TaskKind::R => {
            let mut out = Vec::with_capacity(labels.len());
            for l in labels {
                let v = l
                    .as_scalar()
                    .ok_or_else(|| Error::data(format!("{}: scalar label required", task.id)))?;
                out.push(v);
            }
            Ok(Targets::Counts(out))
        }
    }
}

fn attach_loss(tape: &mut Tape, logits: crate::nn::NodeRef, targets: &Targets) -> crate::nn::NodeRef {
    match targets {
        Targets::Classes(t) => tape.softmax_ce(logits, t.clone()),
        Targets::MultiHot(t) => tape.sigmoid_bce(logits, t.clone()),
        Targets::Counts(t) => tape.mse(logits, t.clone()),
    }
}

/// Train a linear head on (embedding, label) examples. Returns the head
/// parameters and the per-epoch mean loss. The encoder is not involved:
/// this is the frozen-embedding path.
pub fn train_head(
    task: &TaskSpec,
    examples: &[(Vec<f64>, LabelValue)],
    opts: &HeadTrainOpts,
) -> Result<(ParamStore, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::data(format!("{}: no training examples", task.id)));
    }
    let d_e = examples[0].0.len();
    if examples.iter().any(|(e, _)| e.len() != d_e) {
        return Err(Error::data("ragged embedding widths"));
    }
    let mut head = new_head(task, d_e);
    let (w_name, b_name) = head_names(task);
    let mut adam = Adam::new();
    let mut epoch_loss = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        let lr = Adam::lr_at(opts.lr, opts.lr_decay, epoch);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = corpus::derive_rng(opts.seed, &["head", task.id, &epoch.to_string()]);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let labels: Vec<&LabelValue> = chunk.iter().map(|&i| &examples[i].1).collect();
            let targets = targets_of(task, &labels)?;
            let mut data = Vec::with_capacity(chunk.len() * d_e);
            for &i in chunk {
                data.extend_from_slice(&examples[i].0);
            }
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::from_vec(&[chunk.len(), d_e], data));
            let w = tape.leaf(head.get(&w_name).clone());
            let b = tape.leaf(head.get(&b_name).clone());
            let logits = tape.linear(x, w, b);
            let loss = attach_loss(&mut tape, logits, &targets);
            loss_sum += tape.value(loss).item() * chunk.len() as f64;

            let grads = tape.backward(loss)?;
            let mut named = BTreeMap::new();
            named.insert(w_name.clone(), grads[w.0].clone().unwrap());
            named.insert(b_name.clone(), grads[b.0].clone().unwrap());
            adam.step(&mut head, &named, lr)?;
        }
        epoch_loss.push(loss_sum / examples.len() as f64);
    }
    Ok((head, epoch_loss))
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

fn head_logits(head: &ParamStore, task: &TaskSpec, emb: &[f64]) -> Vec<f64> {
    let (w_name, b_name) = head_names(task);
    let w = head.get(&w_name);
    let b = head.get(&b_name);
    let (k, d) = (w.shape[0], w.shape[1]);
    assert_eq!(emb.len(), d, "embedding width mismatch");
    (0..k)
        .map(|j| b.data[j] + (0..d).map(|t| emb[t] * w.data[j * d + t]).sum::<f64>())
        .collect()
}

/// Record-level predictions: mean segment logits, then the task's output
/// activation (softmax for single-label, sigmoid for multi-label,
/// clamped identity for counts).
pub fn predict_with_head(
    task: &TaskSpec,
    head: &ParamStore,
    records: &[(String, Vec<Vec<f64>>, LabelValue)],
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(records.len());
    for (record_id, segments, label) in records {
        if segments.is_empty() {
            return Err(Error::data(format!("record {record_id} has no segments")));
        }
        let k = task.head_dim();
        let mut mean = vec![0.0; k];
        for seg in segments {
            for (m, l) in mean.iter_mut().zip(head_logits(head, task, seg)) {
                *m += l;
            }
        }
        for m in mean.iter_mut() {
            *m /= segments.len() as f64;
        }
        let output = match task.kind {
            TaskKind::Bc | TaskKind::Mc => softmax(&mean),
            TaskKind::Ml => mean.iter().map(|&l| 1.0 / (1.0 + (-l).exp())).collect(),
            TaskKind::R => vec![mean[0].max(0.0)],
        };
        out.push(Prediction {
            record_id: record_id.clone(),
            output,
            label: label.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct ProbeOutcome {
    pub task_id: String,
    pub mode: ProbeMode,
    pub n_train_records: usize,
    pub n_train_segments: usize,
    pub train_loss: Vec<f64>,
    pub report: EvalReport,
    #[serde(skip)]
    pub head: ParamStore,
    #[serde(skip)]
    pub model: Model,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
}

struct TaskData {
    train_specs: Vec<(usize, LogMelSpectrogram)>, // (train record idx, segment)
    train_labels: Vec<LabelValue>,
    eval_specs: Vec<(String, Vec<LogMelSpectrogram>, LabelValue)>,
}

/// Chunk and featurize every labeled record for the task, split into
/// train and eval sides. Eval is the test split when the task has one,
/// else the validation split (held out from pretraining).
fn load_task_data(
    task: &TaskSpec,
    records: &[Record],
    data_dir: &Path,
    chunk_secs: u32,
) -> Result<TaskData> {
    let labeled: Vec<&Record> = records
        .iter()
        .filter(|r| r.labels.contains_key(task.id))
        .collect();
    if labeled.is_empty() {
        return Err(Error::data(format!(
            "no records carry a {} label",
            task.id
        )));
    }
    let has_test = labeled.iter().any(|r| r.split == Split::Test);
    let eval_split = if has_test { Split::Test } else { Split::Validation };

    let mut data = TaskData {
        train_specs: Vec::new(),
        train_labels: Vec::new(),
        eval_specs: Vec::new(),
    };
    for rec in labeled {
        let clip = audio::read_abau(&data_dir.join("audio").join(format!("{}.abau", rec.record_id)))?;
        let segments: Vec<LogMelSpectrogram> = chunk_samples(&clip.samples, clip.sample_rate, chunk_secs)
            .iter()
            .map(|seg| featurize::featurize(seg, clip.sample_rate))
            .collect::<Result<_>>()?;
        let label = rec.labels[task.id].clone();
        if rec.split == Split::Train {
            let idx = data.train_labels.len();
            data.train_labels.push(label);
            for seg in segments {
                data.train_specs.push((idx, seg));
            }
        } else if rec.split == eval_split {
            data.eval_specs.push((rec.record_id.clone(), segments, label));
        }
    }
    if data.train_labels.is_empty() {
        return Err(Error::data(format!("{}: no training records", task.id)));
    }
    if data.eval_specs.is_empty() {
        return Err(Error::data(format!(
            "{}: no {} records to evaluate on",
            task.id,
            if has_test { "test" } else { "validation" }
        )));
    }
    Ok(data)
}

/// Full fine-tuning: backprop through the encoder and the head together.
fn train_full(
    task: &TaskSpec,
    model: &mut Model,
    data: &TaskData,
    opts: &HeadTrainOpts,
) -> Result<(ParamStore, Vec<f64>)> {
    let mut head = new_head(task, model.cfg.d_e);
    let (w_name, b_name) = head_names(task);
    let mut adam = Adam::new();
    let mut epoch_loss = Vec::with_capacity(opts.epochs);
    let n = data.train_specs.len();

    for epoch in 0..opts.epochs {
        let lr = Adam::lr_at(opts.lr, opts.lr_decay, epoch);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = corpus::derive_rng(opts.seed, &["full", task.id, &epoch.to_string()]);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let specs: Vec<LogMelSpectrogram> = chunk
                .iter()
                .map(|&i| data.train_specs[i].1.clone())
                .collect();
            let labels: Vec<&LabelValue> = chunk
                .iter()
                .map(|&i| &data.train_labels[data.train_specs[i].0])
                .collect();
            let targets = targets_of(task, &labels)?;

            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let x = tape.leaf(batch_input(&specs));
            let emb = bound.encode(&mut tape, x);
            let w = tape.leaf(head.get(&w_name).clone());
            let b = tape.leaf(head.get(&b_name).clone());
            let logits = tape.linear(emb, w, b);
            let loss = attach_loss(&mut tape, logits, &targets);
            loss_sum += tape.value(loss).item() * chunk.len() as f64;

            let grads = tape.backward(loss)?;
            let mut head_grads = BTreeMap::new();
            head_grads.insert(w_name.clone(), grads[w.0].clone().unwrap());
            head_grads.insert(b_name.clone(), grads[b.0].clone().unwrap());
            adam.step(&mut head, &head_grads, lr)?;

            let mut enc_grads = BTreeMap::new();
            for (name, node) in bound.encoder_named() {
                if let Some(g) = &grads[node.0] {
                    enc_grads.insert(name.to_string(), g.clone());
                }
            }
            adam.step(&mut model.params, &enc_grads, lr)?;
        }
        epoch_loss.push(loss_sum / n as f64);
    }
    Ok((head, epoch_loss))
}

/// End-to-end probe run driven by a [`ProbeConfig`]: loads the
/// checkpoint, builds segments, trains in the configured mode, predicts
/// on the eval split, scores, and writes `head_<task>.abcp`,
/// `predictions.jsonl`, and `eval.json` under `out_dir`.
pub fn run_probe(cfg: &ProbeConfig) -> Result<ProbeOutcome> {
    cfg.validate()?;
    let task = tasks::find(&cfg.task)?;
    let mut records = corpus::load_manifest(&cfg.manifest)?;
    corpus::split_validation(&mut records, cfg.seed);

    let chunk_secs = cfg.chunk_secs.unwrap_or(task.chunk_secs);
    let data = load_task_data(task, &records, &cfg.data_dir, chunk_secs)?;

    let mut model = Model::from_params(checkpoint::load(&cfg.checkpoint)?)?;
    let opts = HeadTrainOpts {
        epochs: cfg.epochs,
        lr: cfg.lr,
        lr_decay: cfg.lr_decay,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };

    let (head, train_loss) = match cfg.mode {
        ProbeMode::Linear => {
            // Precompute frozen embeddings once; only the head trains.
            let spec_refs: Vec<&LogMelSpectrogram> =
                data.train_specs.iter().map(|(_, s)| s).collect();
            let embs = model.embed(&spec_refs)?;
            let examples: Vec<(Vec<f64>, LabelValue)> = embs
                .into_iter()
                .zip(&data.train_specs)
                .map(|(e, (rec_idx, _))| (e, data.train_labels[*rec_idx].clone()))
                .collect();
            train_head(task, &examples, &opts)?
        }
        ProbeMode::Full => train_full(task, &mut model, &data, &opts)?,
    };

    // Embed eval segments with the (possibly updated) encoder.
    let mut eval_records = Vec::with_capacity(data.eval_specs.len());
    for (record_id, segments, label) in &data.eval_specs {
        let refs: Vec<&LogMelSpectrogram> = segments.iter().collect();
        let embs = model.embed(&refs)?;
        eval_records.push((record_id.clone(), embs, label.clone()));
    }
    let predictions = predict_with_head(task, &head, &eval_records)?;
    let report = metrics::evaluate(task, &predictions)?;

    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    checkpoint::save(&cfg.out_dir.join(format!("head_{}.abcp", task.id)), &head)?;
    let mut lines = String::new();
    for p in &predictions {
        lines.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        lines.push('\n');
    }
    audio::atomic_write(&cfg.out_dir.join("predictions.jsonl"), lines.as_bytes())?;
    let report_json = serde_json::to_vec_pretty(&report).expect("report serializes");
    audio::atomic_write(&cfg.out_dir.join("eval.json"), &report_json)?;

    Ok(ProbeOutcome {
        task_id: task.id.to_string(),
        mode: cfg.mode,
        n_train_records: data.train_labels.len(),
        n_train_segments: data.train_specs.len(),
        train_loss,
        report,
        head,
        model,
        predictions,
    })
}
