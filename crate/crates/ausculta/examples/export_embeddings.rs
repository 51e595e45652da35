//! Export per-record encoder embeddings to JSONL and measure how much
//! class structure contrastive pretraining puts into them: mean cosine
//! similarity within each timbral class versus across classes, before
//! and after training.
//!
//! Run with: `cargo run --example export_embeddings`

use std::collections::BTreeMap;

use ausculta::audio::TRIM_DB_DEFAULT;
use ausculta::augment::AugmentConfig;
use ausculta::config::TrainConfig;
use ausculta::corpus::{self, FixtureSpec};
use ausculta::nn::{Model, ModelConfig};
use ausculta::pretrain;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-12)
}

/// Mean pairwise cosine of mean-centered embeddings, within
/// matching-class pairs and across classes. Centering removes the shared
/// all-positive direction that ReLU features carry, which would
/// otherwise push every cosine toward 1 and hide the structure.
fn class_structure(
    embeddings: &BTreeMap<String, Vec<f64>>,
    classes: &BTreeMap<String, f64>,
) -> (f64, f64) {
    let ids: Vec<&String> = embeddings.keys().collect();
    let dim = embeddings[ids[0]].len();
    let mut center = vec![0.0; dim];
    for id in &ids {
        for (c, v) in center.iter_mut().zip(&embeddings[*id]) {
            *c += v / ids.len() as f64;
        }
    }
    let centered: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| embeddings[*id].iter().zip(&center).map(|(v, c)| v - c).collect())
        .collect();

    let (mut within, mut across) = (vec![], vec![]);
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            let c = cosine(&centered[i], &centered[j]);
            if classes[ids[i]] == classes[ids[j]] {
                within.push(c);
            } else {
                across.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&within), mean(&across))
}

fn main() -> ausculta::Result<()> {
    let root = std::path::Path::new("target/embed-demo");
    let records = corpus::make_fixture(root, &FixtureSpec::default())?;
    let pre = root.join("pre");
    corpus::preprocess(&records, root, &pre, TRIM_DB_DEFAULT, true, 2)?;
    let features = pretrain::load_feature_map(&pre, &records)?;
    let classes: BTreeMap<String, f64> = records
        .iter()
        .map(|r| {
            let class = r.labels["T13"].as_scalar().expect("fixture labels are scalar");
            (r.record_id.clone(), class)
        })
        .collect();

    let model_cfg = ModelConfig {
        conv_channels: [8, 16],
        d_e: 128,
        d_p: 32,
    };

    // Untrained baseline.
    let untrained = Model::new(&model_cfg, 42);
    let raw = pretrain::export_embeddings(&untrained, &records, &features, &root.join("embeddings_untrained.jsonl"))?;
    let (w0, a0) = class_structure(&raw, &classes);

    // Contrastive pretraining, then export again.
    let mut cfg = TrainConfig::new(root.join("manifest.jsonl"), pre, root.join("train"));
    cfg.batch_size = 4;
    cfg.epochs = 150;
    cfg.lr = 2e-3;
    cfg.lr_decay = 0.997;
    cfg.augment = AugmentConfig {
        n_time_masks: 1,
        max_time_frames: 2,
        n_freq_masks: 1,
        max_freq_bands: 4,
    };
    cfg.model = model_cfg;
    cfg.seed = 44;
    let outcome = pretrain::run_pretraining(&cfg)?;
    let trained = pretrain::export_embeddings(
        &outcome.model,
        &records,
        &features,
        &root.join("embeddings_trained.jsonl"),
    )?;
    let (w1, a1) = class_structure(&trained, &classes);

    let dim = trained.values().next().map_or(0, Vec::len);
    println!("exported {} embeddings of dim {} to {}\n", trained.len(), dim, root.display());
    println!("mean pairwise cosine similarity:");
    println!("{:<22} {:>12} {:>12} {:>8}", "", "within-class", "across-class", "gap");
    println!("{:<22} {:>12.3} {:>12.3} {:>8.3}", "untrained encoder", w0, a0, w0 - a0);
    println!("{:<22} {:>12.3} {:>12.3} {:>8.3}", "after 150 epochs", w1, a1, w1 - a1);
    println!("\n(a larger within/across gap means the embedding space separates the two timbral classes)");
    Ok(())
}
