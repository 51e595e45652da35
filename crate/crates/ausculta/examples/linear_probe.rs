//! Linear probing: freeze a pretrained encoder, train only a linear
//! head on the heart normal/abnormal task, and score the held-out
//! split. Also verifies the freezing contract by comparing encoder
//! tensors before and after.
//!
//! Run with: `cargo run --example linear_probe`

use ausculta::audio::TRIM_DB_DEFAULT;
use ausculta::augment::AugmentConfig;
use ausculta::config::{ProbeConfig, ProbeMode, TrainConfig};
use ausculta::corpus::{self, FixtureSpec};
use ausculta::nn::{checkpoint, ModelConfig};
use ausculta::{pretrain, probe};

fn main() -> ausculta::Result<()> {
    let root = std::path::Path::new("target/probe-demo");
    // Two synthetic datasets (32 records) so the held-out split has 8.
    let spec = FixtureSpec {
        datasets: 2,
        ..FixtureSpec::default()
    };
    let records = corpus::make_fixture(root, &spec)?;
    let pre = root.join("pre");
    corpus::preprocess(&records, root, &pre, TRIM_DB_DEFAULT, true, 2)?;

    // Pretrain an encoder worth probing.
    let mut tcfg = TrainConfig::new(root.join("manifest.jsonl"), pre.clone(), root.join("train"));
    tcfg.batch_size = 4;
    tcfg.epochs = 150;
    tcfg.lr = 2e-3;
    tcfg.lr_decay = 0.997;
    tcfg.augment = AugmentConfig {
        n_time_masks: 1,
        max_time_frames: 2,
        n_freq_masks: 1,
        max_freq_bands: 4,
    };
    tcfg.model = ModelConfig {
        conv_channels: [8, 16],
        d_e: 128,
        d_p: 32,
    };
    tcfg.seed = 44;
    pretrain::run_pretraining(&tcfg)?;
    let ckpt = tcfg.out_dir.join("checkpoint.abcp");
    println!("pretrained encoder: {}", ckpt.display());

    let pcfg = ProbeConfig {
        manifest: root.join("manifest.jsonl"),
        data_dir: pre,
        checkpoint: ckpt.clone(),
        out_dir: root.join("probe"),
        task: "T13".into(),
        mode: ProbeMode::Linear,
        epochs: 256,
        lr: 2e-2,
        lr_decay: 0.995,
        batch_size: 16,
        chunk_secs: Some(2),
        seed: 42,
    };
    let outcome = probe::run_probe(&pcfg)?;

    println!(
        "\nprobe {} ({:?}): {} train records ({} segments), {} eval records",
        outcome.task_id,
        outcome.mode,
        outcome.n_train_records,
        outcome.n_train_segments,
        outcome.report.n_eval
    );
    for (metric, value) in &outcome.report.metrics {
        println!("  {metric:<12} {value:.4}");
    }
    if !outcome.report.per_class.is_empty() {
        println!("  per-class F1:");
        for c in &outcome.report.per_class {
            println!(
                "    {:<10} f1 {:.3} (tp {}, fp {}, fn {})",
                c.class, c.f1, c.tp, c.fp, c.fn_
            );
        }
    }

    // The probe must not have moved the encoder: byte-compare every
    // encoder tensor against the checkpoint it started from.
    let before = checkpoint::load(&ckpt)?;
    let frozen = before
        .iter()
        .filter(|(name, _)| name.starts_with("encoder."))
        .all(|(name, tensor)| outcome.model.params.get(name).data == tensor.data);
    println!("\nencoder untouched by linear probing: {frozen}");
    println!(
        "artifacts: {}, predictions.jsonl, eval.json",
        pcfg.out_dir.join("head_T13.abcp").display()
    );
    Ok(())
}
