//! Contrastive instance-discrimination pretraining.
//!
//! Each batch holds `N` recordings from one dataset. Two augmented crops
//! (`u_i`, `v_i`) of every recording are encoded, projected, and scored
//! pairwise with the bilinear head, giving an `NxN` similarity matrix
//! whose diagonal holds the positive pairs. The InfoNCE loss pushes each
//! `s_ii` above its row. Validation uses fixed near-center crops without
//! masking, so with the learning rate at zero the validation loss is
//! identical across epochs — a property the tests rely on.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment;
use crate::config::TrainConfig;
use crate::corpus::{self, Batch, Record, Split};
use crate::error::{Error, Result};
use crate::featurize::{self, LogMelSpectrogram};
use crate::nn::{self, batch_input, checkpoint, diagonal_accuracy, Adam, Model, Tape, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetVal {
    pub loss: f64,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_by_dataset: BTreeMap<String, DatasetVal>,
}

pub struct TrainOutcome {
    pub model: Model,
    pub stats: Vec<EpochStats>,
}

/// Load every record's feature matrix from `data_dir/features/`.
pub fn load_feature_map(
    data_dir: &Path,
    records: &[Record],
) -> Result<BTreeMap<String, LogMelSpectrogram>> {
    let mut map = BTreeMap::new();
    for rec in records {
        let path = data_dir.join("features").join(format!("{}.abft", rec.record_id));
        map.insert(rec.record_id.clone(), featurize::read_abft(&path)?);
    }
    Ok(map)
}

fn views_for_batch(
    batch: &Batch,
    features: &BTreeMap<String, LogMelSpectrogram>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(Tensor, Tensor)> {
    let crop = augment::crop_frames(batch.crop_ms);
    let epoch_label = epoch.to_string();
    let mut us = Vec::with_capacity(batch.record_ids.len());
    let mut vs = Vec::with_capacity(batch.record_ids.len());
    for id in &batch.record_ids {
        let spec = features
            .get(id)
            .ok_or_else(|| Error::data(format!("no features for record {id}")))?;
        let mut rng_u = corpus::derive_rng(cfg.seed, &["view-u", id, &epoch_label]);
        let mut rng_v = corpus::derive_rng(cfg.seed, &["view-v", id, &epoch_label]);
        us.push(augment::make_view(spec, crop, &cfg.augment, &mut rng_u));
        vs.push(augment::make_view(spec, crop, &cfg.augment, &mut rng_v));
    }
    Ok((batch_input(&us), batch_input(&vs)))
}

/// Validation views: two crops per record drawn from the middle half of
/// the valid offsets with a seed that does not involve the epoch, and no
/// masking. The same record always yields the same pair.
fn val_views_for_batch(
    batch: &Batch,
    features: &BTreeMap<String, LogMelSpectrogram>,
    seed: u64,
) -> Result<(Tensor, Tensor)> {
    let crop = augment::crop_frames(batch.crop_ms);
    let mut us = Vec::new();
    let mut vs = Vec::new();
    for id in &batch.record_ids {
        let spec = features
            .get(id)
            .ok_or_else(|| Error::data(format!("no features for record {id}")))?;
        let centered = |label: &str| -> LogMelSpectrogram {
            let slack = spec.n_frames.saturating_sub(crop);
            let mut rng = corpus::derive_rng(seed, &[label, id]);
            let start = slack / 4 + rng.gen_range(0..=slack.div_ceil(2));
            augment::crop_at(spec, start.min(slack), crop)
        };
        us.push(centered("val-u"));
        vs.push(centered("val-v"));
    }
    Ok((batch_input(&us), batch_input(&vs)))
}

struct StepResult {
    loss: f64,
    accuracy: f64,
    grads: Option<BTreeMap<String, Tensor>>,
}

fn contrastive_step(model: &Model, u: Tensor, v: Tensor, train: bool) -> Result<StepResult> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let un = tape.leaf(u);
    let vn = tape.leaf(v);
    let ue = bound.encode(&mut tape, un);
    let ve = bound.encode(&mut tape, vn);
    let up = bound.project(&mut tape, ue);
    let vp = bound.project(&mut tape, ve);
    let s = bound.similarity(&mut tape, up, vp);
    let loss = tape.infonce(s);

    let loss_val = tape.value(loss).item();
    if !loss_val.is_finite() {
        return Err(Error::numeric("contrastive loss is not finite"));
    }
    let accuracy = diagonal_accuracy(tape.value(s));

    let grads = if train {
        let all = tape.backward(loss)?;
        let mut named = BTreeMap::new();
        for (name, node) in bound.named() {
            if let Some(g) = &all[node.0] {
                named.insert(name.to_string(), g.clone());
            }
        }
        Some(named)
    } else {
        None
    };

    Ok(StepResult {
        loss: loss_val,
        accuracy,
        grads,
    })
}

/// Run the pretraining loop described by `cfg`. Writes
/// `checkpoint.abcp` and `training_log.jsonl` into `cfg.out_dir` and
/// returns the trained model with per-epoch statistics.
pub fn run_pretraining(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut records = corpus::load_manifest(&cfg.manifest)?;
    corpus::split_validation(&mut records, cfg.seed);

    let n_train = records.iter().filter(|r| r.split == Split::Train).count();
    if n_train < cfg.batch_size {
        return Err(Error::data(format!(
            "only {n_train} training records for batch_size {}",
            cfg.batch_size
        )));
    }

    let features = load_feature_map(&cfg.data_dir, &records)?;
    let mut model = Model::new(&cfg.model, cfg.seed);
    let mut adam = Adam::new();
    let val_batches = corpus::plan_validation_batches(&records, &cfg.crop_table, cfg.batch_size);

    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = Adam::lr_at(cfg.lr, cfg.lr_decay, epoch);
        let batches = corpus::plan_batches(&records, &cfg.crop_table, cfg.batch_size, cfg.seed, epoch)?;
        if batches.is_empty() {
            return Err(Error::data("no full training batches; lower batch_size"));
        }

        let mut train_loss = 0.0;
        let mut train_acc = 0.0;
        for batch in &batches {
            let (u, v) = views_for_batch(batch, &features, cfg, epoch)?;
            let step = contrastive_step(&model, u, v, true)?;
            adam.step(&mut model.params, &step.grads.unwrap(), lr)?;
            train_loss += step.loss;
            train_acc += step.accuracy;
        }
        train_loss /= batches.len() as f64;
        train_acc /= batches.len() as f64;

        let mut val_by_dataset: BTreeMap<String, DatasetVal> = BTreeMap::new();
        let mut val_loss_sum = 0.0;
        let mut val_acc_sum = 0.0;
        let mut val_n = 0usize;
        for batch in &val_batches {
            let (u, v) = val_views_for_batch(batch, &features, cfg.seed)?;
            let step = contrastive_step(&model, u, v, false)?;
            let n = batch.record_ids.len();
            val_loss_sum += step.loss * n as f64;
            val_acc_sum += step.accuracy * n as f64;
            val_n += n;
            let e = val_by_dataset
                .entry(batch.dataset_id.clone())
                .or_insert(DatasetVal {
                    loss: 0.0,
                    accuracy: 0.0,
                    n: 0,
                });
            e.loss += step.loss * n as f64;
            e.accuracy += step.accuracy * n as f64;
            e.n += n;
        }
        for v in val_by_dataset.values_mut() {
            if v.n > 0 {
                v.loss /= v.n as f64;
                v.accuracy /= v.n as f64;
            }
        }

        stats.push(EpochStats {
            epoch,
            lr,
            train_loss,
            train_accuracy: train_acc,
            val_loss: if val_n > 0 { val_loss_sum / val_n as f64 } else { f64::NAN },
            val_accuracy: if val_n > 0 { val_acc_sum / val_n as f64 } else { f64::NAN },
            val_by_dataset,
        });
    }

    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    checkpoint::save(&cfg.out_dir.join("checkpoint.abcp"), &model.params)?;
    let mut log = String::new();
    for s in &stats {
        log.push_str(&serde_json::to_string(s).expect("stats serialize"));
        log.push('\n');
    }
    crate::audio::atomic_write(&cfg.out_dir.join("training_log.jsonl"), log.as_bytes())?;

    Ok(TrainOutcome { model, stats })
}

/// Embed every record's full spectrogram and write the table as an ABCP
/// file (one `[d_e]` tensor per record, named by record id, manifest
/// order).
pub fn export_embeddings(
    model: &Model,
    records: &[Record],
    features: &BTreeMap<String, LogMelSpectrogram>,
    out_path: &Path,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut entries = Vec::new();
    let mut map = BTreeMap::new();
    for rec in records {
        let spec = features
            .get(&rec.record_id)
            .ok_or_else(|| Error::data(format!("no features for record {}", rec.record_id)))?;
        let emb = model.embed(&[spec])?.pop().unwrap();
        entries.push((
            rec.record_id.clone(),
            Tensor::from_vec(&[emb.len()], emb.clone()),
        ));
        map.insert(rec.record_id.clone(), emb);
    }
    checkpoint::save(out_path, &nn::ParamStore::new(entries))?;
    Ok(map)
}

/// Trailing moving average with the given window (shorter at the start).
pub fn trailing_mean(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0);
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(window - 1);
            let span = &xs[lo..=i];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_fixture, preprocess, FixtureSpec};

    fn fixture_training(dir: &Path, epochs: usize, lr: f64, seed: u64) -> TrainConfig {
        let spec = FixtureSpec::default();
        let records = make_fixture(dir, &spec).unwrap();
        let pre = dir.join("pre");
        preprocess(&records, dir, &pre, -60.0, true, 2).unwrap();
        let mut cfg = TrainConfig::new(dir.join("manifest.jsonl"), pre, dir.join("run"));
        cfg.epochs = epochs;
        cfg.lr = lr;
        cfg.seed = seed;
        cfg.model = nn::ModelConfig {
            conv_channels: [4, 8],
            d_e: 32,
            d_p: 16,
        };
        cfg
    }

    #[test]
    fn zero_learning_rate_freezes_validation_loss() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fixture_training(dir.path(), 3, 1e-3, 7);
        cfg.lr = 1e-30; // effectively zero; lr = 0 would fail validation
        let outcome = run_pretraining(&cfg).unwrap();
        let v0 = outcome.stats[0].val_loss;
        for s in &outcome.stats {
            assert!(
                (s.val_loss - v0).abs() < 1e-9,
                "validation drifted: {} vs {v0}",
                s.val_loss
            );
        }
    }

    #[test]
    fn training_artifacts_are_written_and_loadable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixture_training(dir.path(), 2, 1e-3, 3);
        let outcome = run_pretraining(&cfg).unwrap();
        assert_eq!(outcome.stats.len(), 2);

        let params = checkpoint::load(&cfg.out_dir.join("checkpoint.abcp")).unwrap();
        let model = Model::from_params(params).unwrap();
        assert_eq!(model.cfg.d_e, 32);

        let log = fs::read_to_string(cfg.out_dir.join("training_log.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 2);
        let first: EpochStats = serde_json::from_str(log.lines().next().unwrap()).unwrap();
        assert_eq!(first.epoch, 0);
        assert!(first.val_accuracy.is_finite());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg_a = fixture_training(dir_a.path(), 3, 1e-3, 11);
        let cfg_b = fixture_training(dir_b.path(), 3, 1e-3, 11);
        run_pretraining(&cfg_a).unwrap();
        run_pretraining(&cfg_b).unwrap();
        for file in ["checkpoint.abcp", "training_log.jsonl"] {
            let a = fs::read(cfg_a.out_dir.join(file)).unwrap();
            let b = fs::read(cfg_b.out_dir.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs");
        }
    }

    #[test]
    fn different_seeds_give_different_models() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg_a = fixture_training(dir_a.path(), 2, 1e-3, 1);
        let cfg_b = fixture_training(dir_b.path(), 2, 1e-3, 2);
        run_pretraining(&cfg_a).unwrap();
        run_pretraining(&cfg_b).unwrap();
        let a = fs::read(cfg_a.out_dir.join("checkpoint.abcp")).unwrap();
        let b = fs::read(cfg_b.out_dir.join("checkpoint.abcp")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn export_embeddings_roundtrips_through_abcp() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixture_training(dir.path(), 1, 1e-3, 5);
        let outcome = run_pretraining(&cfg).unwrap();
        let records = corpus::load_manifest(&cfg.manifest).unwrap();
        let features = load_feature_map(&cfg.data_dir, &records).unwrap();
        let out = dir.path().join("embeddings.abcp");
        let map = export_embeddings(&outcome.model, &records, &features, &out).unwrap();
        assert_eq!(map.len(), 16);

        let table = checkpoint::load(&out).unwrap();
        assert_eq!(table.len(), 16);
        for (id, emb) in &map {
            let stored = table.get(id);
            assert_eq!(stored.shape, vec![32]);
            for (a, b) in emb.iter().zip(&stored.data) {
                assert!((a - b).abs() < 1e-6); // f32 storage
            }
        }
    }

    #[test]
    fn trailing_mean_smooths_head_correctly() {
        let xs = [4.0, 2.0, 3.0, 1.0];
        let sm = trailing_mean(&xs, 3);
        assert_eq!(sm[0], 4.0);
        assert_eq!(sm[1], 3.0);
        assert!((sm[2] - 3.0).abs() < 1e-12);
        assert!((sm[3] - 2.0).abs() < 1e-12);
    }
}
