//! Augmentations used to build contrastive views: random time crops,
//! waveform loudness scaling, and SpecAugment-style masking.
//!
//! Crop lengths are expressed in milliseconds and divided by the 32 ms
//! hop, so a 640 ms crop is 20 frames and a 320 ms crop is 10. All
//! randomness comes from a caller-supplied RNG; the draw order inside
//! each function is fixed, which is what makes runs reproducible.

use rand::Rng;

use crate::featurize::{LogMelSpectrogram, HOP_MS};

/// SpecAugment parameters. Defaults: two time masks of at most 2 frames
/// (10% of a 20-frame crop) and two frequency masks of at most 8 bands.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub n_time_masks: usize,
    pub max_time_frames: usize,
    pub n_freq_masks: usize,
    pub max_freq_bands: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            n_time_masks: 2,
            max_time_frames: 2,
            n_freq_masks: 2,
            max_freq_bands: 8,
        }
    }
}

/// Number of frames corresponding to a crop length in milliseconds.
pub fn crop_frames(crop_ms: u32) -> usize {
    (crop_ms / HOP_MS) as usize
}

/// Take a contiguous window of `crop` frames, start drawn uniformly over
/// the valid offsets. Spectrograms shorter than the crop are zero-padded
/// on the right first (zero is the post-normalization silence value).
pub fn random_crop<R: Rng>(
    spec: &LogMelSpectrogram,
    crop: usize,
    rng: &mut R,
) -> LogMelSpectrogram {
    assert!(crop > 0, "crop must be at least one frame");
    let n_mels = spec.n_mels;
    if spec.n_frames < crop {
        let mut values = spec.values.clone();
        values.resize(crop * n_mels, 0.0);
        return LogMelSpectrogram {
            values,
            n_frames: crop,
            n_mels,
        };
    }
    let start = rng.gen_range(0..=spec.n_frames - crop);
    crop_at(spec, start, crop)
}

/// Deterministic crop at a fixed offset (used for validation views).
pub fn crop_at(spec: &LogMelSpectrogram, start: usize, crop: usize) -> LogMelSpectrogram {
    if spec.n_frames < crop {
        let mut values = spec.values.clone();
        values.resize(crop * spec.n_mels, 0.0);
        return LogMelSpectrogram {
            values,
            n_frames: crop,
            n_mels: spec.n_mels,
        };
    }
    let n_mels = spec.n_mels;
    let values = spec.values[start * n_mels..(start + crop) * n_mels].to_vec();
    LogMelSpectrogram {
        values,
        n_frames: crop,
        n_mels,
    }
}

/// Scale a waveform by a gain drawn uniformly from `[0.9, 1.1]`.
///
/// Note that per-spectrogram min-max normalization is invariant to a
/// constant gain (up to the log floor), so this augmentation only has an
/// effect when features are computed from the scaled waveform without
/// re-normalization; it is kept for waveform-domain pipelines.
pub fn loudness_scale<R: Rng>(samples: &[f64], rng: &mut R) -> Vec<f64> {
    let gain = rng.gen_range(0.9..=1.1);
    samples.iter().map(|s| s * gain).collect()
}

/// Mask `n_time_masks` frame spans and `n_freq_masks` band spans,
/// replacing masked cells with the pre-mask spectrogram mean. Widths are
/// drawn uniformly from `0..=max`, so a mask may be empty; positions are
/// uniform over offsets that keep the mask in bounds.
pub fn spec_augment<R: Rng>(spec: &mut LogMelSpectrogram, cfg: &AugmentConfig, rng: &mut R) {
    if spec.values.is_empty() {
        return;
    }
    let mean = spec.values.iter().sum::<f64>() / spec.values.len() as f64;
    let n_frames = spec.n_frames;
    let n_mels = spec.n_mels;

    for _ in 0..cfg.n_time_masks {
        let width = rng.gen_range(0..=cfg.max_time_frames.min(n_frames));
        let start = rng.gen_range(0..=n_frames - width);
        for f in start..start + width {
            for m in 0..n_mels {
                spec.values[f * n_mels + m] = mean;
            }
        }
    }
    for _ in 0..cfg.n_freq_masks {
        let width = rng.gen_range(0..=cfg.max_freq_bands.min(n_mels));
        let start = rng.gen_range(0..=n_mels - width);
        for f in 0..n_frames {
            for m in start..start + width {
                spec.values[f * n_mels + m] = mean;
            }
        }
    }
}

/// One contrastive training view: random crop, then SpecAugment masking.
pub fn make_view<R: Rng>(
    spec: &LogMelSpectrogram,
    crop: usize,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> LogMelSpectrogram {
    let mut view = random_crop(spec, crop, rng);
    spec_augment(&mut view, cfg, rng);
    view
}
