//! Walk a recording through every preprocessing stage, one call at a
//! time: WAV decode, mono downmix, polyphase resample to the canonical
//! 16 kHz, silence trimming, and 64-band log-mel featurization.
//!
//! Run with: `cargo run --example preprocess_pipeline`

use ausculta::audio::{self, AudioClip, CANONICAL_RATE, TRIM_DB_DEFAULT};
use ausculta::featurize;

fn describe(stage: &str, clip: &AudioClip) {
    println!(
        "{stage:<28} {} ch @ {:>6} Hz, {:>6} samples ({:.2}s)",
        clip.channels,
        clip.sample_rate,
        clip.samples.len(),
        clip.samples.len() as f64 / (clip.sample_rate as f64 * clip.channels as f64),
    );
}

fn main() -> ausculta::Result<()> {
    // A stereo source at 44.1 kHz: half a second of near-silence, then a
    // low thump plus a band of noise (left and right slightly different),
    // then near-silence again.
    let rate = 44_100usize;
    let mut interleaved = Vec::new();
    for i in 0..(2 * rate) {
        let t = i as f64 / rate as f64;
        let active = (0.5..1.5).contains(&t);
        let thump = (2.0 * std::f64::consts::PI * 64.0 * t).sin() * 0.4;
        let hiss = ((i * 2654435761 % 8191) as f64 / 8191.0 - 0.5) * 0.2;
        let level = if active { 1.0 } else { 0.001 };
        interleaved.push(level * (thump + hiss)); // left
        interleaved.push(level * (thump - hiss)); // right
    }
    let stereo = AudioClip {
        samples: interleaved,
        sample_rate: rate as u32,
        channels: 2,
    };

    // Round-trip through the WAV codec so the example starts from bytes,
    // the same way the preprocessing command does.
    let wav_bytes = audio::encode_wav_pcm16(&stereo);
    let decoded = audio::decode_wav(&wav_bytes)?;
    println!("decoded {} bytes of WAV:", wav_bytes.len());
    describe("  decode_wav", &decoded);

    let mono = audio::downmix_mono(&decoded);
    describe("  downmix_mono", &mono);

    let resampled = audio::resample(&mono, CANONICAL_RATE)?;
    describe("  resample -> 16 kHz", &resampled);

    let trimmed = audio::trim_silence(&resampled, TRIM_DB_DEFAULT);
    describe("  trim_silence @ -60 dB", &trimmed);

    // `standardize` is the one-call version of the three steps above.
    let standardized = audio::standardize(&decoded, CANONICAL_RATE, TRIM_DB_DEFAULT)?;
    assert_eq!(standardized.samples, trimmed.samples);
    println!("  (audio::standardize reproduces the staged result exactly)");

    let spec = featurize::featurize(&trimmed.samples, trimmed.sample_rate)?;
    println!(
        "\nlog-mel spectrogram: {} frames x {} bands, min-max normalized to [0,1]",
        spec.n_frames, spec.n_mels
    );

    // Coarse ASCII rendering: one column per frame, low bands at the
    // bottom.
    println!("\nband energy over time (one column per frame):");
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#'];
    for band in (0..spec.n_mels).rev().step_by(4) {
        let mut row = String::new();
        for frame in (0..spec.n_frames).step_by(1.max(spec.n_frames / 60)) {
            let v = spec.values[frame * spec.n_mels + band];
            row.push(shades[((v * (shades.len() - 1) as f64).round() as usize).min(shades.len() - 1)]);
        }
        println!("  band {band:>2} |{row}|");
    }
    Ok(())
}
