//! Generate the deterministic synthetic corpus used throughout the
//! tests and the other examples: 16 short WAV recordings in two timbral
//! classes (harmonic combs vs. noise bands), with a JSONL manifest
//! carrying normal/abnormal labels and train/validation splits.
//!
//! Run with: `cargo run --example make_fixture`

use ausculta::corpus::{self, FixtureSpec, LabelValue};

fn main() -> ausculta::Result<()> {
    let out = std::path::Path::new("target/fixture-demo");
    let spec = FixtureSpec::default();
    let records = corpus::make_fixture(out, &spec)?;
    println!(
        "wrote {} records under {} (seed {}, {} Hz source rate)\n",
        records.len(),
        out.display(),
        spec.seed,
        spec.sample_rate
    );

    println!(
        "{:<22} {:<9} {:<6} {:<12} {}",
        "record", "dataset", "sound", "split", "label (T13)"
    );
    for rec in &records {
        let class = match rec.labels.get("T13").and_then(LabelValue::as_scalar) {
            Some(v) if v == 0.0 => "0 = Normal",
            Some(v) if v == 1.0 => "1 = Abnormal",
            _ => "?",
        };
        println!(
            "{:<22} {:<9} {:<6} {:<12} {}",
            rec.record_id,
            rec.dataset_id,
            format!("{:?}", rec.sound_type),
            format!("{:?}", rec.split),
            class
        );
    }

    println!(
        "\nreload it with corpus::load_manifest({:?})",
        out.join("manifest.jsonl")
    );
    println!("or preprocess it with: cargo run -- preprocess --manifest target/fixture-demo/manifest.jsonl --out target/fixture-demo/pre");
    Ok(())
}
