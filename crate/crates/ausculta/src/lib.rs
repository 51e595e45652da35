//! Self-supervised representation learning for body sounds (lung, heart,
//! bowel) with a linear-probe benchmark harness, sized so that every stage
//! runs on a desk machine in seconds to minutes.
//!
//! The pipeline, end to end:
//!
//! 1. [`audio`] — WAV decode, mono downmix, windowed-sinc resampling to a
//!    16 kHz canonical rate, and silence trimming.
//! 2. [`featurize`] — 64-band log-mel spectrograms (64 ms Hann window,
//!    32 ms hop) with per-spectrogram min-max normalization.
//! 3. [`augment`] — random crops, loudness scaling, and SpecAugment-style
//!    time/frequency masking for contrastive views.
//! 4. [`corpus`] — JSONL manifests, deterministic validation splits,
//!    single-dataset batch planning, and a synthetic fixture generator.
//! 5. [`nn`] — a small tape-based reverse-mode autodiff engine, the
//!    conv encoder / projector / bilinear-similarity model, Adam, and a
//!    binary checkpoint format.
//! 6. [`pretrain`] — contrastive instance discrimination: two augmented
//!    crops per recording, bilinear similarity logits, InfoNCE loss.
//! 7. [`tasks`] — the fixed 16-task downstream benchmark registry.
//! 8. [`probe`] — chunked inference and linear / full fine-tuning probes
//!    on frozen embeddings.
//! 9. [`metrics`] — Macro/Micro-F1, AUROC, regression accuracy, and
//!    class-wise score normalization.
//! 10. [`rank`] — reciprocal-rank and Borda aggregation of per-task scores
//!     into cross-model leaderboards.
//! 11. [`report`] — run manifests, score tables on disk, and static SVG
//!     charts.
//!
//! Every stage is deterministic given a seed: reruns with the same config
//! and seed produce byte-identical artifacts. The `ausculta` binary exposes
//! each stage as a subcommand; the `examples/` directory exercises each
//! major capability as a runnable program.

pub mod audio;
pub mod augment;
pub mod config;
pub mod corpus;
pub mod error;
pub mod featurize;
pub mod metrics;
pub mod nn;
pub mod pretrain;
pub mod probe;
pub mod rank;
pub mod report;
pub mod tasks;

pub use error::{Error, Result};
