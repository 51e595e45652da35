//! Audio ingest: WAV decoding, mono downmix, sample-rate conversion, and
//! silence trimming.
//!
//! Everything downstream assumes the canonical form produced by
//! [`standardize`]: mono, 16 kHz, silence-trimmed, samples in `[-1, 1]`.
//! The resampler is a polyphase windowed-sinc design (Kaiser window,
//! 64 taps per phase) driven by an integer position accumulator, so
//! conversion is exact-rational and bit-reproducible across runs.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Canonical sample rate for the whole pipeline.
pub const CANONICAL_RATE: u32 = 16_000;

/// Default silence threshold in dBFS for [`trim_silence`].
pub const TRIM_DB_DEFAULT: f64 = -60.0;

/// Frame length in milliseconds used for silence detection.
pub const TRIM_FRAME_MS: u32 = 25;

/// A decoded audio clip. `samples` are interleaved when `channels == 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channels: u16,
}

impl AudioClip {
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioClip {
            samples,
            sample_rate,
            channels: 1,
        }
    }

    /// Number of sample frames (per channel).
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }
}

// ---------------------------------------------------------------------------
// WAV decode / encode
// ---------------------------------------------------------------------------

fn rd_u16(b: &[u8], off: usize) -> Option<u16> {
    b.get(off..off + 2).map(|s| u16::from_le_bytes([s[0], s[1]]))
}

fn rd_u32(b: &[u8], off: usize) -> Option<u32> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

/// Decode a RIFF/WAVE file into an [`AudioClip`].
///
/// Supported encodings: PCM integer at 8/16/24/32 bits and IEEE float32,
/// with 1 or 2 channels. Integer samples are scaled by `2^(bits-1)` so
/// full-scale negative maps to exactly -1.0 (the largest positive 24-bit
/// sample becomes `1 - 2^-23`). Stereo is kept interleaved for
/// [`downmix_mono`].
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    let err = |msg: &str| Error::data(format!("wav: {msg}"));
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(err("not a RIFF/WAVE file"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut off = 12usize;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = rd_u32(bytes, off + 4).ok_or_else(|| err("truncated chunk header"))? as usize;
        let body_end = off + 8 + size;
        if body_end > bytes.len() {
            return Err(err("chunk extends past end of file"));
        }
        let body = &bytes[off + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(err("fmt chunk too small"));
                }
                let format = rd_u16(body, 0).unwrap();
                let channels = rd_u16(body, 2).unwrap();
                let rate = rd_u32(body, 4).unwrap();
                let bits = rd_u16(body, 14).unwrap();
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {} // LIST, fact, cue, ... are irrelevant here
        }
        off = body_end + (size & 1); // chunks are word-aligned
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| err("missing fmt chunk"))?;
    let data = data.ok_or_else(|| err("missing data chunk"))?;
    if !(1..=2).contains(&channels) {
        return Err(err(&format!("unsupported channel count {channels}")));
    }
    if rate == 0 {
        return Err(err("zero sample rate"));
    }

    let samples: Vec<f64> = match (format, bits) {
        (1, 8) => data.iter().map(|&b| (b as f64 - 128.0) / 128.0).collect(),
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (1, 24) => data
            .chunks_exact(3)
            .map(|c| {
                let v = i32::from_le_bytes([0, c[0], c[1], c[2]]) >> 8;
                v as f64 / 8_388_608.0
            })
            .collect(),
        (1, 32) => data
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64 / 2_147_483_648.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        _ => {
            return Err(err(&format!(
                "unsupported encoding: format {format}, {bits} bits"
            )))
        }
    };
    if samples.len() % channels as usize != 0 {
        return Err(err("data chunk not a whole number of frames"));
    }

    Ok(AudioClip {
        samples,
        sample_rate: rate,
        channels,
    })
}

/// Read a WAV file from disk; see [`decode_wav`].
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Encode a clip as 16-bit PCM WAV. Samples are clamped to `[-1, 1]`
/// before quantization. Used by the synthetic-fixture generator.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let n_bytes = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + n_bytes);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + n_bytes as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&clip.channels.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    let block_align = clip.channels as u32 * 2;
    out.extend_from_slice(&(clip.sample_rate * block_align).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(n_bytes as u32).to_le_bytes());
    for &s in &clip.samples {
        // Symmetric with the decoder's /32768 so -1.0 survives exactly;
        // +1.0 saturates at 32767 as PCM16 requires.
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Write a clip to disk as 16-bit PCM WAV (atomically).
pub fn write_wav_pcm16(path: &Path, clip: &AudioClip) -> Result<()> {
    atomic_write(path, &encode_wav_pcm16(clip))
}

// ---------------------------------------------------------------------------
// Downmix
// ---------------------------------------------------------------------------

/// Average interleaved stereo down to mono; mono passes through unchanged.
pub fn downmix_mono(clip: &AudioClip) -> AudioClip {
    match clip.channels {
        1 => clip.clone(),
        _ => {
            let mono: Vec<f64> = clip
                .samples
                .chunks_exact(2)
                .map(|lr| (lr[0] + lr[1]) / 2.0)
                .collect();
            AudioClip::mono(mono, clip.sample_rate)
        }
    }
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// Zeroth-order modified Bessel function of the first kind, by power
/// series. Converges quickly for the argument range a Kaiser window uses.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-14 {
            break;
        }
    }
    sum
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

const TAPS_PER_PHASE: usize = 64;
const KAISER_BETA: f64 = 10.0;

/// Polyphase windowed-sinc resampler.
///
/// The ratio `to/from` is reduced to lowest terms `L/M`; the signal is
/// conceptually upsampled by `L`, filtered by a Kaiser-windowed sinc
/// lowpass at the narrower of the two Nyquist limits, and decimated by
/// `M`. Each of the `L` polyphase branches holds 64 taps and is
/// normalized to unit DC gain, so constant signals survive exactly and
/// there is no inter-phase amplitude ripple. Output positions advance by
/// an integer accumulator (`u += M` per output sample), never by float
/// phase, which keeps long files drift-free.
///
/// Equal input and output rates are an exact passthrough. Output length
/// is `ceil(n * L / M)`.
pub fn resample(clip: &AudioClip, to_rate: u32) -> Result<AudioClip> {
    if clip.channels != 1 {
        return Err(Error::config("resample expects mono input; downmix first"));
    }
    if to_rate == 0 || clip.sample_rate == 0 {
        return Err(Error::config("sample rates must be positive"));
    }
    if clip.sample_rate == to_rate {
        return Ok(clip.clone());
    }

    let g = gcd(clip.sample_rate, to_rate);
    let l = (to_rate / g) as usize; // upsample factor
    let m = (clip.sample_rate / g) as usize; // decimate factor

    // Prototype lowpass: N = 64 * L taps centered at (N-1)/2, cutoff at
    // the tighter of the input/output Nyquist frequencies (in cycles per
    // upsampled sample).
    let n_taps = TAPS_PER_PHASE * l;
    let fc = 0.5 / l.max(m) as f64;
    let center = (n_taps - 1) as f64 / 2.0;
    let i0_beta = bessel_i0(KAISER_BETA);
    let mut proto = vec![0.0f64; n_taps];
    for (i, tap) in proto.iter_mut().enumerate() {
        let t = i as f64 - center;
        let sinc = if t == 0.0 {
            2.0 * fc
        } else {
            (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
        };
        // Kaiser window
        let r = 2.0 * i as f64 / (n_taps - 1) as f64 - 1.0;
        let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
        *tap = sinc * w;
    }

    // Split into phases and normalize each to unit DC gain.
    let mut phases = vec![vec![0.0f64; TAPS_PER_PHASE]; l];
    for (p, phase) in phases.iter_mut().enumerate() {
        let mut s = 0.0;
        for (t, tap) in phase.iter_mut().enumerate() {
            *tap = proto[p + t * l];
            s += *tap;
        }
        for tap in phase.iter_mut() {
            *tap /= s;
        }
    }

    let n_in = clip.samples.len();
    let n_out = (n_in * l).div_ceil(m);
    // Offset by half the filter so output aligns with input (constant
    // group delay of 32 input samples is absorbed here).
    let delay = (TAPS_PER_PHASE / 2) * l;
    let mut out = Vec::with_capacity(n_out);
    let mut u = delay; // position in the upsampled stream
    for _ in 0..n_out {
        let i0 = u / l;
        let phase = &phases[u % l];
        let mut acc = 0.0;
        for (t, &tap) in phase.iter().enumerate() {
            if let Some(&x) = i0.checked_sub(t).and_then(|i| clip.samples.get(i)) {
                acc += tap * x;
            }
        }
        out.push(acc);
        u += m;
    }

    Ok(AudioClip::mono(out, to_rate))
}

// ---------------------------------------------------------------------------
// Silence trimming
// ---------------------------------------------------------------------------

/// Drop leading and trailing frames whose RMS falls below `threshold_db`
/// (dB relative to full scale 1.0), measured over non-overlapping
/// 25 ms frames. A clip that is silent throughout trims to empty; the
/// caller decides whether that is an error or a skip.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64) -> AudioClip {
    assert_eq!(clip.channels, 1, "trim_silence expects mono");
    let frame = (clip.sample_rate as usize * TRIM_FRAME_MS as usize) / 1000;
    let frame = frame.max(1);
    let n = clip.samples.len();
    if n == 0 {
        return clip.clone();
    }

    let active = |start: usize| -> bool {
        let end = (start + frame).min(n);
        let span = &clip.samples[start..end];
        let rms = (span.iter().map(|s| s * s).sum::<f64>() / span.len() as f64).sqrt();
        20.0 * rms.max(1e-30).log10() > threshold_db
    };

    let n_frames = n.div_ceil(frame);
    let first = (0..n_frames).find(|&i| active(i * frame));
    let first = match first {
        Some(i) => i,
        None => return AudioClip::mono(Vec::new(), clip.sample_rate),
    };
    let last = (0..n_frames).rev().find(|&i| active(i * frame)).unwrap();

    let start = first * frame;
    let end = ((last + 1) * frame).min(n);
    AudioClip::mono(clip.samples[start..end].to_vec(), clip.sample_rate)
}

/// Full ingest path: downmix, resample to `target_rate`, trim silence.
pub fn standardize(clip: &AudioClip, target_rate: u32, trim_db: f64) -> Result<AudioClip> {
    let mono = downmix_mono(clip);
    let resampled = resample(&mono, target_rate)?;
    Ok(trim_silence(&resampled, trim_db))
}

// ---------------------------------------------------------------------------
// ABAU container (preprocessed audio on disk)
// ---------------------------------------------------------------------------

const ABAU_MAGIC: &[u8; 4] = b"ABAU";
const ABAU_VERSION: u32 = 1;

/// Serialize a mono clip: magic `ABAU`, version, sample rate, sample
/// count, then little-endian f32 samples.
pub fn encode_abau(clip: &AudioClip) -> Vec<u8> {
    assert_eq!(clip.channels, 1, "ABAU stores mono audio");
    let mut out = Vec::with_capacity(16 + clip.samples.len() * 4);
    out.extend_from_slice(ABAU_MAGIC);
    out.extend_from_slice(&ABAU_VERSION.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.samples.len() as u32).to_le_bytes());
    for &s in &clip.samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out
}

pub fn decode_abau(bytes: &[u8]) -> Result<AudioClip> {
    let err = |msg: &str| Error::data(format!("abau: {msg}"));
    if bytes.len() < 16 || &bytes[0..4] != ABAU_MAGIC {
        return Err(err("bad magic"));
    }
    let version = rd_u32(bytes, 4).unwrap();
    if version != ABAU_VERSION {
        return Err(err(&format!("unsupported version {version}")));
    }
    let rate = rd_u32(bytes, 8).unwrap();
    let n = rd_u32(bytes, 12).unwrap() as usize;
    if bytes.len() != 16 + n * 4 {
        return Err(err("length mismatch"));
    }
    let samples = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(AudioClip::mono(samples, rate))
}

pub fn write_abau(path: &Path, clip: &AudioClip) -> Result<()> {
    atomic_write(path, &encode_abau(clip))
}

pub fn read_abau(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_abau(&bytes)
}

/// Write via a temp file in the same directory, then rename into place,
/// so readers never observe a half-written artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{stem}.tmp.{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}
