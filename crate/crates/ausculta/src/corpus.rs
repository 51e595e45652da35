//! Corpus handling: JSONL manifests, deterministic validation splits,
//! single-dataset batch planning, preprocessing orchestration, and a
//! synthetic fixture generator for tests and demos.
//!
//! A manifest is one JSON object per line:
//!
//! ```json
//! {"v":1,"record_id":"r0001","dataset_id":"synth-a","sound_type":"L",
//!  "audio_path":"audio/r0001.wav","labels":{"T13":1},"split":"train"}
//! ```
//!
//! `labels` maps task ids to either a scalar (class index or count) or a
//! vector of 0/1 indicators for multi-label tasks. All sampling decisions
//! (split assignment, batch shuffles, augmentation draws) flow from a
//! single run seed through [`derive_rng`], so a rerun with the same seed
//! reproduces every artifact byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioClip};
use crate::error::{Error, Result};
use crate::featurize;

pub const MANIFEST_VERSION: u32 = 1;
pub const VALIDATION_FRACTION: f64 = 0.10;

/// Body-sound category of a dataset: lung, heart, or bowel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SoundType {
    L,
    H,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// A label value: a class index / count, or a multi-hot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl LabelValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            LabelValue::Scalar(v) => Some(*v),
            LabelValue::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            LabelValue::Vector(v) => Some(v),
            LabelValue::Scalar(_) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Record {
    pub v: u32,
    pub record_id: String,
    pub dataset_id: String,
    pub sound_type: SoundType,
    pub audio_path: String,
    #[serde(default)]
    pub labels: BTreeMap<String, LabelValue>,
    pub split: Split,
}

impl Record {
    /// Audio path resolved against the manifest's directory.
    pub fn resolve_audio(&self, manifest_dir: &Path) -> PathBuf {
        let p = Path::new(&self.audio_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_dir.join(p)
        }
    }

    /// Check every label against the task registry: known task id, and a
    /// value of the right shape and range for that task's type.
    pub fn validate_labels(&self) -> Result<()> {
        use crate::tasks::{self, TaskKind};
        for (key, value) in &self.labels {
            let task = tasks::find(key).map_err(|_| {
                Error::data(format!("{}: unknown task label {key:?}", self.record_id))
            })?;
            let fail = |why: &str| {
                Err(Error::data(format!(
                    "{}: label {key} {why}",
                    self.record_id
                )))
            };
            match task.kind {
                TaskKind::Bc | TaskKind::Mc => match value.as_scalar() {
                    Some(v) if v.fract() == 0.0 && v >= 0.0 && (v as usize) < task.classes.len() => {}
                    _ => {
                        return fail(&format!(
                            "must be an integer class index in 0..{}",
                            task.classes.len()
                        ))
                    }
                },
                TaskKind::Ml => match value.as_vector() {
                    Some(v)
                        if v.len() == task.classes.len()
                            && v.iter().all(|&x| x == 0.0 || x == 1.0) => {}
                    _ => {
                        return fail(&format!(
                            "must be a 0/1 vector of length {}",
                            task.classes.len()
                        ))
                    }
                },
                TaskKind::R => {
                    let (lo, hi) = task.count_range.expect("regression task has a range");
                    match value.as_scalar() {
                        Some(v)
                            if v.fract() == 0.0 && v >= lo as f64 && v <= hi as f64 => {}
                        _ => return fail(&format!("must be an integer count in {lo}..={hi}")),
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parse a JSONL manifest. Rejects duplicate record ids, unknown schema
/// versions, malformed lines (with the line number in the message), and
/// labels whose task id or value falls outside the task registry.
pub fn load_manifest(path: &Path) -> Result<Vec<Record>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if rec.v != MANIFEST_VERSION {
            return Err(Error::data(format!(
                "{}:{}: unsupported manifest version {}",
                path.display(),
                i + 1,
                rec.v
            )));
        }
        if !seen.insert(rec.record_id.clone()) {
            return Err(Error::data(format!(
                "duplicate record_id {:?}",
                rec.record_id
            )));
        }
        rec.validate_labels()
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::data(format!("{}: empty manifest", path.display())));
    }
    Ok(records)
}

/// Write a manifest atomically, one record per line.
pub fn write_manifest(path: &Path, records: &[Record]) -> Result<()> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("record serializes"));
        out.push('\n');
    }
    audio::atomic_write(path, out.as_bytes())
}

/// Derive an independent RNG stream from the run seed and a list of
/// context labels (dataset id, record id, epoch, ...). Uses FNV-1a over
/// the seed and labels, so streams are stable across platforms and runs.
pub fn derive_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes() {
        h = (h ^ b as u64).wrapping_mul(PRIME);
    }
    for part in parts {
        h = (h ^ 0xff).wrapping_mul(PRIME);
        for b in part.bytes() {
            h = (h ^ b as u64).wrapping_mul(PRIME);
        }
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// For every dataset that has no validation records, promote
/// `ceil(0.1 * n_train)` of its training records to validation. Datasets
/// that ship a predefined validation split are left untouched. Selection
/// is a seeded shuffle per dataset, so it is order-independent and
/// reproducible.
pub fn split_validation(records: &mut [Record], seed: u64) {
    let mut datasets: BTreeMap<String, (usize, bool)> = BTreeMap::new();
    for rec in records.iter() {
        let entry = datasets.entry(rec.dataset_id.clone()).or_insert((0, false));
        if rec.split == Split::Train {
            entry.0 += 1;
        }
        if rec.split == Split::Validation {
            entry.1 = true;
        }
    }

    for (dataset, (n_train, has_val)) in datasets {
        if has_val || n_train == 0 {
            continue;
        }
        let k = (VALIDATION_FRACTION * n_train as f64).ceil() as usize;
        let mut train_ids: Vec<&str> = records
            .iter()
            .filter(|r| r.dataset_id == dataset && r.split == Split::Train)
            .map(|r| r.record_id.as_str())
            .collect();
        train_ids.sort_unstable();
        let mut rng = derive_rng(seed, &["split", &dataset]);
        train_ids.shuffle(&mut rng);
        let chosen: BTreeSet<String> = train_ids[..k].iter().map(|s| s.to_string()).collect();
        for rec in records.iter_mut() {
            if rec.dataset_id == dataset && chosen.contains(&rec.record_id) {
                rec.split = Split::Validation;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Crop table and batch planning
// ---------------------------------------------------------------------------

/// Per-dataset crop lengths for contrastive views: 640 ms by default,
/// 320 ms for the short-event datasets (Korean heart sounds, bowel
/// sounds).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CropTable {
    pub default_ms: u32,
    pub overrides: BTreeMap<String, u32>,
}

impl Default for CropTable {
    fn default() -> Self {
        let mut overrides = BTreeMap::new();
        overrides.insert("Korean".to_string(), 320);
        overrides.insert("Bowel Sound".to_string(), 320);
        CropTable {
            default_ms: 640,
            overrides,
        }
    }
}

impl CropTable {
    pub fn crop_ms(&self, dataset_id: &str) -> u32 {
        *self.overrides.get(dataset_id).unwrap_or(&self.default_ms)
    }
}

/// One contrastive training batch: records from a single dataset plus
/// the crop length that dataset uses.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub dataset_id: String,
    pub record_ids: Vec<String>,
    pub crop_ms: u32,
}

/// Plan one epoch of training batches.
///
/// Each dataset's training records are shuffled with a seed derived from
/// `(seed, dataset, epoch)`, chunked into full batches of `batch_size`
/// (the remainder is dropped — it differs per epoch because the shuffle
/// does), and the resulting batch list is interleaved with a seeded
/// shuffle. Every batch is single-dataset by construction.
pub fn plan_batches(
    records: &[Record],
    crop_table: &CropTable,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::config(
            "batch_size must be at least 2 for contrastive training",
        ));
    }
    let mut by_dataset: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for rec in records.iter().filter(|r| r.split == Split::Train) {
        by_dataset
            .entry(rec.dataset_id.as_str())
            .or_default()
            .push(rec.record_id.as_str());
    }

    let epoch_label = epoch.to_string();
    let mut batches = Vec::new();
    for (dataset, mut ids) in by_dataset {
        ids.sort_unstable();
        let mut rng = derive_rng(seed, &["batches", dataset, &epoch_label]);
        ids.shuffle(&mut rng);
        for chunk in ids.chunks_exact(batch_size) {
            batches.push(Batch {
                dataset_id: dataset.to_string(),
                record_ids: chunk.iter().map(|s| s.to_string()).collect(),
                crop_ms: crop_table.crop_ms(dataset),
            });
        }
    }
    let mut rng = derive_rng(seed, &["order", &epoch_label]);
    batches.shuffle(&mut rng);
    Ok(batches)
}

/// Fixed validation batches: records sorted by id, chunked in order;
/// a trailing chunk is kept only if it still has at least two members
/// (a one-record contrastive batch has no negatives).
pub fn plan_validation_batches(
    records: &[Record],
    crop_table: &CropTable,
    batch_size: usize,
) -> Vec<Batch> {
    let mut by_dataset: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for rec in records.iter().filter(|r| r.split == Split::Validation) {
        by_dataset
            .entry(rec.dataset_id.as_str())
            .or_default()
            .push(rec.record_id.as_str());
    }
    let mut batches = Vec::new();
    for (dataset, mut ids) in by_dataset {
        ids.sort_unstable();
        for chunk in ids.chunks(batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            batches.push(Batch {
                dataset_id: dataset.to_string(),
                record_ids: chunk.iter().map(|s| s.to_string()).collect(),
                crop_ms: crop_table.crop_ms(dataset),
            });
        }
    }
    batches
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Serialize)]
pub struct PreprocessSummary {
    pub processed: usize,
    pub skipped: Vec<(String, String)>,
}

/// Decode, standardize, and featurize every record in the manifest.
///
/// Writes `audio/<record_id>.abau` (canonical mono 16 kHz audio) and
/// `features/<record_id>.abft` (normalized log-mel) under `out_dir`.
/// Records that fail to decode or trim to empty are skipped and listed
/// in the summary; with `strict` they abort the run instead. `jobs`
/// fans record work out across threads — outputs are per record, so
/// parallelism cannot affect the bytes written.
pub fn preprocess(
    records: &[Record],
    manifest_dir: &Path,
    out_dir: &Path,
    trim_db: f64,
    strict: bool,
    jobs: usize,
) -> Result<PreprocessSummary> {
    let audio_dir = out_dir.join("audio");
    let feat_dir = out_dir.join("features");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;

    let one = |rec: &Record| -> Result<()> {
        let wav_path = rec.resolve_audio(manifest_dir);
        let clip = audio::read_wav(&wav_path)?;
        let std = audio::standardize(&clip, audio::CANONICAL_RATE, trim_db)?;
        if std.is_empty() {
            return Err(Error::data(format!(
                "record {} trimmed to silence",
                rec.record_id
            )));
        }
        let spec = featurize::featurize(&std.samples, std.sample_rate)?;
        audio::write_abau(&audio_dir.join(format!("{}.abau", rec.record_id)), &std)?;
        featurize::write_abft(&feat_dir.join(format!("{}.abft", rec.record_id)), &spec)?;
        Ok(())
    };

    let jobs = jobs.max(1).min(records.len().max(1));
    let results: Vec<(usize, Result<()>)> = if jobs == 1 {
        records.iter().enumerate().map(|(i, r)| (i, one(r))).collect()
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results = std::sync::Mutex::new(Vec::with_capacity(records.len()));
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= records.len() {
                        break;
                    }
                    let r = one(&records[i]);
                    results.lock().unwrap().push((i, r));
                });
            }
        });
        let mut v = results.into_inner().unwrap();
        v.sort_by_key(|(i, _)| *i);
        v
    };

    let mut summary = PreprocessSummary::default();
    for (i, result) in results {
        match result {
            Ok(()) => summary.processed += 1,
            Err(e) if strict => {
                return Err(Error::data(format!(
                    "record {}: {e}",
                    records[i].record_id
                )))
            }
            Err(e) => {
                log::warn!("skipping record {}: {e}", records[i].record_id);
                summary.skipped.push((records[i].record_id.clone(), e.to_string()));
            }
        }
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Synthetic fixture
// ---------------------------------------------------------------------------

/// Parameters for the synthetic two-class corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    /// Independent synthetic datasets to emit (`synth-a`, `synth-b`, ...).
    pub datasets: usize,
    /// Recordings per class per dataset; total = `2 * records_per_class`.
    pub records_per_class: usize,
    /// WAV sample rate; 8 kHz by default so the resampler gets exercised.
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            datasets: 1,
            records_per_class: 8,
            sample_rate: 8000,
            seed: 42,
        }
    }
}

/// Generate a synthetic corpus under `dir`: WAVs in `audio/`, manifest at
/// `manifest.jsonl`.
///
/// The encoder this fixture feeds ends in a *global* mean pool, which is
/// translation-invariant along both the time and mel axes — spectral
/// position alone (pitch) is nearly invisible to it. Record identities
/// are therefore carved into channel *statistics* instead:
///
/// * class 0 records are harmonic combs (sharp spectral lines) whose
///   harmonic count steps through 1-4 and whose fundamental is
///   log-spaced across 150-480 Hz, so lit area and line density vary
///   per record;
/// * class 1 records are narrowband noise blobs (diffuse texture) whose
///   bandwidth steps through 30-1920 Hz around log-spaced centers in
///   800-2200 Hz;
/// * both alternate between shallow and deep amplitude modulation.
///
/// Comb-versus-blob texture separates the classes for a linear probe,
/// and the count/bandwidth/modulation grid plus spectral extent makes
/// every record individually recognizable, so contrastive instance
/// discrimination is learnable at desk scale. The last quarter of each
/// class is pre-assigned to the validation split; labels live under
/// task id `T13` (binary classification).
pub fn make_fixture(dir: &Path, spec: &FixtureSpec) -> Result<Vec<Record>> {
    let audio_dir = dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let tau = std::f64::consts::TAU;

    let mut records = Vec::new();
    for d in 0..spec.datasets {
        let dataset = format!("synth-{}", (b'a' + d as u8) as char);
        for class in 0..2usize {
            for k in 0..spec.records_per_class {
                let record_id = format!("{dataset}-c{class}-r{k:02}");
                let mut rng = derive_rng(spec.seed, &["fixture", &dataset, &record_id]);

                let step = if spec.records_per_class > 1 {
                    k as f64 / (spec.records_per_class - 1) as f64
                } else {
                    0.5
                };
                let am_rate = rng.gen_range(2.0..6.0);
                let am_phase = rng.gen_range(0.0..tau);
                let am_depth = if (k / 4) % 2 == 0 { 0.2 } else { 0.7 };
                let amp = rng.gen_range(0.4..0.6);
                let secs = rng.gen_range(1.2..2.0);

                // Partial sinusoids (freq, amplitude, phase) for this record.
                let mut partials: Vec<(f64, f64, f64)> = Vec::new();
                if class == 0 {
                    let f0 = 150.0 * (480.0_f64 / 150.0).powf(step)
                        * (1.0 + rng.gen_range(-0.03..=0.03));
                    let n_harmonics = 1 + (k % 4);
                    for h in 1..=n_harmonics {
                        partials.push((
                            f0 * h as f64,
                            0.7_f64.powi(h as i32 - 1),
                            rng.gen_range(0.0..tau),
                        ));
                    }
                } else {
                    let center = 800.0 * (2200.0_f64 / 800.0).powf(step);
                    let bandwidth = 30.0 * 4.0_f64.powi((k % 4) as i32);
                    let n_lines = 40;
                    for j in 0..n_lines {
                        let f = center - bandwidth / 2.0
                            + bandwidth * (j as f64 + 0.5) / n_lines as f64;
                        partials.push((
                            f.max(40.0),
                            1.0 / (n_lines as f64).sqrt(),
                            rng.gen_range(0.0..tau),
                        ));
                    }
                }
                let norm: f64 = partials.iter().map(|(_, a, _)| a * a).sum::<f64>().sqrt();

                let n = (spec.sample_rate as f64 * secs) as usize;
                let samples: Vec<f64> = (0..n)
                    .map(|i| {
                        let t = i as f64 / spec.sample_rate as f64;
                        let am = 1.0 - am_depth * (tau * am_rate * t + am_phase).sin();
                        let tone: f64 = partials
                            .iter()
                            .map(|&(f, a, ph)| a * (tau * f * t + ph).sin())
                            .sum::<f64>()
                            / norm;
                        let noise = rng.gen_range(-0.005..0.005);
                        amp * am * tone + noise
                    })
                    .collect();

                let clip = AudioClip::mono(samples, spec.sample_rate);
                let rel = format!("audio/{record_id}.wav");
                audio::write_wav_pcm16(&dir.join(&rel), &clip)?;

                // Last quarter of each class is held out for validation.
                let split = if k >= spec.records_per_class - spec.records_per_class / 4 {
                    Split::Validation
                } else {
                    Split::Train
                };
                let mut labels = BTreeMap::new();
                labels.insert("T13".to_string(), LabelValue::Scalar(class as f64));
                records.push(Record {
                    v: MANIFEST_VERSION,
                    record_id,
                    dataset_id: dataset.clone(),
                    sound_type: SoundType::H,
                    audio_path: rel,
                    labels,
                    split,
                });
            }
        }
    }
    write_manifest(&dir.join("manifest.jsonl"), &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_records(dataset: &str, n: usize) -> Vec<Record> {
        (0..n)
            .map(|i| Record {
                v: 1,
                record_id: format!("{dataset}-{i:03}"),
                dataset_id: dataset.to_string(),
                sound_type: SoundType::L,
                audio_path: format!("{i}.wav"),
                labels: BTreeMap::new(),
                split: Split::Train,
            })
            .collect()
    }

    #[test]
    fn manifest_roundtrip_and_duplicate_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut records = toy_records("a", 3);
        let multi_hot = vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        records[1]
            .labels
            .insert("T10".into(), LabelValue::Vector(multi_hot.clone()));
        write_manifest(&path, &records).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].labels["T10"].as_vector().unwrap(), &multi_hot[..]);

        records.push(records[0].clone());
        write_manifest(&path, &records).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn manifest_rejects_labels_outside_the_registry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");

        // Count above the T16 range.
        let mut records = toy_records("a", 2);
        records[0]
            .labels
            .insert("T16".into(), LabelValue::Scalar(44.0));
        write_manifest(&path, &records).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("0..=43"), "{err}");

        // Class index past the end of the inventory.
        let mut records = toy_records("b", 2);
        records[1]
            .labels
            .insert("T13".into(), LabelValue::Scalar(2.0));
        write_manifest(&path, &records).unwrap();
        assert!(load_manifest(&path).is_err());

        // Unknown task key.
        let mut records = toy_records("c", 2);
        records[0]
            .labels
            .insert("T99".into(), LabelValue::Scalar(0.0));
        write_manifest(&path, &records).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("unknown task"), "{err}");

        // Multi-label vector of the wrong width.
        let mut records = toy_records("d", 2);
        records[0]
            .labels
            .insert("T10".into(), LabelValue::Vector(vec![1.0; 3]));
        write_manifest(&path, &records).unwrap();
        assert!(load_manifest(&path).is_err());
    }

    #[test]
    fn validation_split_takes_ceil_ten_percent() {
        // 23 train records -> ceil(2.3) = 3 promoted.
        let mut records = toy_records("a", 23);
        split_validation(&mut records, 7);
        let n_val = records.iter().filter(|r| r.split == Split::Validation).count();
        assert_eq!(n_val, 3);

        // Same seed, same selection; different seed, (almost surely) different.
        let mut again = toy_records("a", 23);
        split_validation(&mut again, 7);
        let ids = |rs: &[Record]| -> Vec<String> {
            rs.iter()
                .filter(|r| r.split == Split::Validation)
                .map(|r| r.record_id.clone())
                .collect()
        };
        assert_eq!(ids(&records), ids(&again));
    }

    #[test]
    fn predefined_validation_is_left_alone() {
        let mut records = toy_records("a", 10);
        records[0].split = Split::Validation;
        let before: Vec<Split> = records.iter().map(|r| r.split).collect();
        split_validation(&mut records, 7);
        let after: Vec<Split> = records.iter().map(|r| r.split).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn split_is_order_invariant() {
        let mut a = toy_records("a", 17);
        let mut b = a.clone();
        b.reverse();
        split_validation(&mut a, 99);
        split_validation(&mut b, 99);
        let mut ids_a: Vec<_> = a
            .iter()
            .filter(|r| r.split == Split::Validation)
            .map(|r| r.record_id.clone())
            .collect();
        let mut ids_b: Vec<_> = b
            .iter()
            .filter(|r| r.split == Split::Validation)
            .map(|r| r.record_id.clone())
            .collect();
        ids_a.sort();
        ids_b.sort();
        assert_eq!(ids_a, ids_b);
    }

    #[test]
    fn batches_are_single_dataset_and_drop_remainder() {
        let mut records = toy_records("a", 11);
        records.extend(toy_records("b", 7));
        let table = CropTable::default();
        let batches = plan_batches(&records, &table, 4, 1, 0).unwrap();
        // floor(11/4) + floor(7/4) = 2 + 1.
        assert_eq!(batches.len(), 3);
        for b in &batches {
            assert_eq!(b.record_ids.len(), 4);
            let prefix = format!("{}-", b.dataset_id);
            assert!(b.record_ids.iter().all(|id| id.starts_with(&prefix)));
            assert_eq!(b.crop_ms, 640);
        }
        // No record appears twice within the epoch.
        let mut all: Vec<&String> = batches.iter().flat_map(|b| &b.record_ids).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 12);
    }

    #[test]
    fn epochs_reshuffle_but_reruns_match() {
        let records = toy_records("a", 16);
        let table = CropTable::default();
        let e0 = plan_batches(&records, &table, 4, 5, 0).unwrap();
        let e0_again = plan_batches(&records, &table, 4, 5, 0).unwrap();
        let e1 = plan_batches(&records, &table, 4, 5, 1).unwrap();
        assert_eq!(e0, e0_again);
        assert_ne!(e0, e1);
    }

    #[test]
    fn crop_table_has_short_event_overrides() {
        let table = CropTable::default();
        assert_eq!(table.crop_ms("Korean"), 320);
        assert_eq!(table.crop_ms("Bowel Sound"), 320);
        assert_eq!(table.crop_ms("SPRSound"), 640);
    }

    #[test]
    fn batch_size_one_is_rejected() {
        let records = toy_records("a", 8);
        let err = plan_batches(&records, &CropTable::default(), 1, 0, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn validation_batches_drop_singletons() {
        let mut records = toy_records("a", 9);
        for r in records.iter_mut().take(5) {
            r.split = Split::Validation;
        }
        let batches = plan_validation_batches(&records, &CropTable::default(), 4);
        // 5 validation records -> one batch of 4, singleton dropped.
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].record_ids.len(), 4);
    }

    #[test]
    fn fixture_is_deterministic_and_balanced() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let spec = FixtureSpec::default();
        let recs_a = make_fixture(dir_a.path(), &spec).unwrap();
        let recs_b = make_fixture(dir_b.path(), &spec).unwrap();
        assert_eq!(recs_a.len(), 16);
        let ids = |recs: &[Record]| -> Vec<String> {
            recs.iter().map(|r| r.record_id.clone()).collect()
        };
        assert_eq!(ids(&recs_a), ids(&recs_b));

        let n_val = recs_a.iter().filter(|r| r.split == Split::Validation).count();
        assert_eq!(n_val, 4);
        let n_pos = recs_a
            .iter()
            .filter(|r| r.labels["T13"] == LabelValue::Scalar(1.0))
            .count();
        assert_eq!(n_pos, 8);

        // Byte-identical across runs.
        for rec in &recs_a {
            let a = fs::read(dir_a.path().join(&rec.audio_path)).unwrap();
            let b = fs::read(dir_b.path().join(&rec.audio_path)).unwrap();
            assert_eq!(a, b, "fixture wav differs for {}", rec.record_id);
        }
        assert_eq!(
            fs::read(dir_a.path().join("manifest.jsonl")).unwrap(),
            fs::read(dir_b.path().join("manifest.jsonl")).unwrap()
        );
    }

    #[test]
    fn preprocess_writes_audio_and_features() {
        let dir = tempfile::tempdir().unwrap();
        let spec = FixtureSpec {
            records_per_class: 2,
            ..FixtureSpec::default()
        };
        let records = make_fixture(dir.path(), &spec).unwrap();
        let out = dir.path().join("pre");
        let summary = preprocess(&records, dir.path(), &out, -60.0, true, 2).unwrap();
        assert_eq!(summary.processed, 4);
        assert!(summary.skipped.is_empty());
        for rec in &records {
            let clip = audio::read_abau(&out.join(format!("audio/{}.abau", rec.record_id))).unwrap();
            assert_eq!(clip.sample_rate, audio::CANONICAL_RATE);
            let spec =
                featurize::read_abft(&out.join(format!("features/{}.abft", rec.record_id))).unwrap();
            assert_eq!(spec.n_mels, 64);
            assert!(spec.n_frames > 0);
        }
    }

    #[test]
    fn derive_rng_streams_are_independent_of_each_other() {
        let mut a = derive_rng(1, &["x"]);
        let mut b = derive_rng(1, &["y"]);
        let mut a2 = derive_rng(1, &["x"]);
        let va: Vec<u32> = (0..4).map(|_| a.gen()).collect();
        let vb: Vec<u32> = (0..4).map(|_| b.gen()).collect();
        let va2: Vec<u32> = (0..4).map(|_| a2.gen()).collect();
        assert_eq!(va, va2);
        assert_ne!(va, vb);
    }
}
