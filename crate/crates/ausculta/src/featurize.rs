//! Log-mel spectrogram front end.
//!
//! Canonical parameters: 16 kHz input, 64 ms Hann window (1024 samples),
//! 32 ms hop (512 samples), 1024-point FFT, 64 mel bands spanning
//! 0 Hz .. Nyquist, natural log with a 1e-10 floor, then per-spectrogram
//! min-max normalization to `[0, 1]`. Frame count follows
//! `1 + floor((n - win) / hop)`; trailing samples that do not fill a
//! window are dropped, and clips shorter than one window are zero-padded
//! up to a single frame.

use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::atomic_write;
use crate::error::{Error, Result};

pub const N_MELS: usize = 64;
pub const WIN_MS: u32 = 64;
pub const HOP_MS: u32 = 32;
pub const LOG_FLOOR: f64 = 1e-10;

/// How to map hertz onto the mel axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MelScale {
    /// `2595 * log10(1 + f/700)` everywhere.
    #[default]
    Htk,
    /// Linear below 1 kHz, logarithmic above.
    Slaney,
}

impl MelScale {
    pub fn hz_to_mel(self, hz: f64) -> f64 {
        match self {
            MelScale::Htk => 2595.0 * (1.0 + hz / 700.0).log10(),
            MelScale::Slaney => {
                const BREAK_HZ: f64 = 1000.0;
                const BREAK_MEL: f64 = 15.0;
                const LOGSTEP: f64 = 0.06875177742094912; // ln(6.4) / 27
                if hz < BREAK_HZ {
                    hz * 3.0 / 200.0
                } else {
                    BREAK_MEL + (hz / BREAK_HZ).ln() / LOGSTEP
                }
            }
        }
    }

    pub fn mel_to_hz(self, mel: f64) -> f64 {
        match self {
            MelScale::Htk => 700.0 * (10f64.powf(mel / 2595.0) - 1.0),
            MelScale::Slaney => {
                const BREAK_MEL: f64 = 15.0;
                const LOGSTEP: f64 = 0.06875177742094912;
                if mel < BREAK_MEL {
                    mel * 200.0 / 3.0
                } else {
                    1000.0 * (LOGSTEP * (mel - BREAK_MEL)).exp()
                }
            }
        }
    }
}

/// Triangular mel filterbank over the one-sided FFT bin grid.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Row-major `[n_mels][n_bins]` weights, peak 1 per triangle.
    pub weights: Vec<f64>,
    pub n_mels: usize,
    pub n_bins: usize,
}

/// Build a triangular filterbank: `n_mels + 2` points equally spaced on
/// the mel axis between 0 Hz and `sample_rate / 2`, one triangle per
/// interior point, evaluated at each FFT bin center.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize, scale: MelScale) -> MelFilterbank {
    let n_bins = n_fft / 2 + 1;
    let fmax = sample_rate as f64 / 2.0;
    let mel_max = scale.hz_to_mel(fmax);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| scale.mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut weights = vec![0.0f64; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, mid, hi) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f >= lo && f <= mid && mid > lo {
                (f - lo) / (mid - lo)
            } else if f > mid && f <= hi && hi > mid {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            weights[m * n_bins + k] = w;
        }
    }
    MelFilterbank {
        weights,
        n_mels,
        n_bins,
    }
}

/// A log-mel spectrogram: `values` is row-major `[n_frames][n_mels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_mels: usize,
}

impl LogMelSpectrogram {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_mels..(i + 1) * self.n_mels]
    }

    pub fn get(&self, frame: usize, mel: usize) -> f64 {
        self.values[frame * self.n_mels + mel]
    }
}

/// Short-time power spectrum: Hann window, hop and window in samples,
/// no padding — the final partial frame is dropped. Returns row-major
/// `[n_frames][n_fft/2 + 1]` power values.
pub fn power_stft(samples: &[f64], win: usize, hop: usize, n_fft: usize) -> Vec<f64> {
    assert!(win <= n_fft, "window longer than FFT size");
    let n = samples.len();
    if n < win {
        return Vec::new();
    }
    let n_frames = 1 + (n - win) / hop;
    let n_bins = n_fft / 2 + 1;

    let window: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos())
        .collect();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut out = Vec::with_capacity(n_frames * n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for f in 0..n_frames {
        let start = f * hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < win {
                Complex::new(samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        out.extend(buf[..n_bins].iter().map(|c| c.norm_sqr()));
    }
    out
}

/// Compute the canonical 64-band log-mel spectrogram of a mono 16 kHz
/// clip. Clips shorter than one window are zero-padded to exactly one
/// frame so no recording featurizes to nothing.
pub fn logmel(samples: &[f64], sample_rate: u32) -> Result<LogMelSpectrogram> {
    logmel_with(samples, sample_rate, N_MELS, MelScale::Htk)
}

pub fn logmel_with(
    samples: &[f64],
    sample_rate: u32,
    n_mels: usize,
    scale: MelScale,
) -> Result<LogMelSpectrogram> {
    if samples.is_empty() {
        return Err(Error::data("cannot featurize an empty clip"));
    }
    let win = (sample_rate as usize * WIN_MS as usize) / 1000;
    let hop = (sample_rate as usize * HOP_MS as usize) / 1000;
    let n_fft = win.next_power_of_two();

    let padded;
    let samples = if samples.len() < win {
        padded = {
            let mut v = samples.to_vec();
            v.resize(win, 0.0);
            v
        };
        &padded[..]
    } else {
        samples
    };

    let power = power_stft(samples, win, hop, n_fft);
    let n_bins = n_fft / 2 + 1;
    let n_frames = power.len() / n_bins;
    let fb = mel_filterbank(sample_rate, n_fft, n_mels, scale);

    let mut values = Vec::with_capacity(n_frames * n_mels);
    for f in 0..n_frames {
        let spec = &power[f * n_bins..(f + 1) * n_bins];
        for m in 0..n_mels {
            let row = &fb.weights[m * n_bins..(m + 1) * n_bins];
            let e: f64 = row.iter().zip(spec).map(|(w, p)| w * p).sum();
            values.push((e + LOG_FLOOR).ln());
        }
    }
    Ok(LogMelSpectrogram {
        values,
        n_frames,
        n_mels,
    })
}

/// Per-spectrogram min-max normalization into `[0, 1]`. A constant
/// spectrogram maps to all zeros rather than dividing by zero.
pub fn minmax_normalize(spec: &mut LogMelSpectrogram) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &spec.values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo <= 0.0 {
        spec.values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let span = hi - lo;
    for v in spec.values.iter_mut() {
        *v = (*v - lo) / span;
    }
}

/// End-to-end featurization of a standardized clip: log-mel + min-max.
pub fn featurize(samples: &[f64], sample_rate: u32) -> Result<LogMelSpectrogram> {
    let mut spec = logmel(samples, sample_rate)?;
    minmax_normalize(&mut spec);
    Ok(spec)
}

// ---------------------------------------------------------------------------
// ABFT container (feature matrices on disk)
// ---------------------------------------------------------------------------

const ABFT_MAGIC: &[u8; 4] = b"ABFT";
const ABFT_VERSION: u32 = 1;

/// Serialize: magic `ABFT`, version, n_frames, n_mels, then row-major
/// little-endian f32 values.
pub fn encode_abft(spec: &LogMelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + spec.values.len() * 4);
    out.extend_from_slice(ABFT_MAGIC);
    out.extend_from_slice(&ABFT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(spec.n_mels as u32).to_le_bytes());
    for &v in &spec.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_abft(bytes: &[u8]) -> Result<LogMelSpectrogram> {
    let err = |msg: &str| Error::data(format!("abft: {msg}"));
    if bytes.len() < 16 || &bytes[0..4] != ABFT_MAGIC {
        return Err(err("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != ABFT_VERSION {
        return Err(err(&format!("unsupported version {version}")));
    }
    let n_frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n_mels = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + n_frames * n_mels * 4 {
        return Err(err("length mismatch"));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(LogMelSpectrogram {
        values,
        n_frames,
        n_mels,
    })
}

pub fn write_abft(path: &Path, spec: &LogMelSpectrogram) -> Result<()> {
    atomic_write(path, &encode_abft(spec))
}

pub fn read_abft(path: &Path) -> Result<LogMelSpectrogram> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_abft(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn htk_mel_matches_closed_form() {
        // 2595 * log10(1 + 1000/700) = 999.9855...
        let m = MelScale::Htk.hz_to_mel(1000.0);
        assert!((m - 999.98552).abs() < 1e-4, "mel(1000) = {m}");
        let hz = MelScale::Htk.mel_to_hz(m);
        assert!((hz - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn slaney_mel_is_linear_below_1khz() {
        assert!((MelScale::Slaney.hz_to_mel(500.0) - 7.5).abs() < 1e-12);
        let hz = MelScale::Slaney.mel_to_hz(MelScale::Slaney.hz_to_mel(4000.0));
        assert!((hz - 4000.0).abs() < 1e-6);
    }

    #[test]
    fn filterbank_covers_spectrum_without_dead_bands() {
        let fb = mel_filterbank(16000, 1024, N_MELS, MelScale::Htk);
        // Every filter has positive mass.
        for m in 0..fb.n_mels {
            let row = &fb.weights[m * fb.n_bins..(m + 1) * fb.n_bins];
            assert!(row.iter().sum::<f64>() > 0.0, "filter {m} is empty");
        }
        // Every bin strictly inside the first/last triangle peaks is covered.
        let first_peak = MelScale::Htk.mel_to_hz(MelScale::Htk.hz_to_mel(8000.0) / 65.0);
        for k in 0..fb.n_bins {
            let f = k as f64 * 16000.0 / 1024.0;
            if f > first_peak && f < 8000.0 {
                let col: f64 = (0..fb.n_mels).map(|m| fb.weights[m * fb.n_bins + k]).sum();
                assert!(col > 0.0, "bin {k} ({f:.0} Hz) uncovered");
            }
        }
    }

    #[test]
    fn frame_count_follows_floor_formula() {
        // 10 s at 16 kHz: win 1024, hop 512 -> 1 + (160000-1024)/512 = 311.
        let samples = vec![0.1; 160_000];
        let spec = logmel(&samples, 16000).unwrap();
        assert_eq!(spec.n_frames, 311);
        assert_eq!(spec.n_mels, 64);

        // 0.64 s -> 10240 samples -> 1 + (10240-1024)/512 = 19 frames.
        let spec = logmel(&vec![0.1; 10_240], 16000).unwrap();
        assert_eq!(spec.n_frames, 19);

        // Shorter than one window: zero-padded to a single frame.
        let spec = logmel(&vec![0.1; 100], 16000).unwrap();
        assert_eq!(spec.n_frames, 1);
    }

    #[test]
    fn tone_energy_lands_in_expected_mel_band() {
        let rate = 16000u32;
        let freq = 2000.0;
        let samples: Vec<f64> = (0..32_000)
            .map(|i| 0.8 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        let spec = logmel(&samples, rate).unwrap();

        // Expected band: triangle peaks at mel-equally-spaced points.
        let mel_max = MelScale::Htk.hz_to_mel(8000.0);
        let target_mel = MelScale::Htk.hz_to_mel(freq);
        let expected = ((target_mel / mel_max) * 65.0).round() as isize - 1;

        // Average over frames, find the argmax band.
        let mut band_energy = vec![0.0f64; spec.n_mels];
        for f in 0..spec.n_frames {
            for (m, e) in band_energy.iter_mut().enumerate() {
                *e += spec.get(f, m);
            }
        }
        let peak = band_energy
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0 as isize;
        assert!(
            (peak - expected).abs() <= 1,
            "peak band {peak}, expected about {expected}"
        );
    }

    #[test]
    fn minmax_hits_exact_bounds_and_handles_constant() {
        let mut spec = LogMelSpectrogram {
            values: vec![-3.0, 0.0, 5.0, 1.0],
            n_frames: 2,
            n_mels: 2,
        };
        minmax_normalize(&mut spec);
        assert_eq!(spec.values[0], 0.0);
        assert_eq!(spec.values[2], 1.0);
        assert!(spec.values.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let mut flat = LogMelSpectrogram {
            values: vec![2.5; 6],
            n_frames: 3,
            n_mels: 2,
        };
        minmax_normalize(&mut flat);
        assert!(flat.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn abft_roundtrip_is_bit_exact() {
        let samples: Vec<f64> = (0..20_000).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let spec = featurize(&samples, 16000).unwrap();
        let bytes = encode_abft(&spec);
        let back = decode_abft(&bytes).unwrap();
        assert_eq!(encode_abft(&back), bytes);
        assert_eq!(back.n_frames, spec.n_frames);
    }

    #[test]
    fn loudness_scaling_is_erased_by_minmax() {
        // Gain multiplies every mel power, which the log turns into a
        // constant shift that min-max normalization removes. The signal
        // must be broadband (true noise, not a periodic comb): a band
        // whose power sits near the log floor (1e-10) no longer shifts
        // with gain, so the cancellation is only exact when every band
        // carries real energy.
        use rand::Rng;
        let mut rng = crate::corpus::derive_rng(11, &["loudness"]);
        let samples: Vec<f64> = (0..32_000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let scaled: Vec<f64> = samples.iter().map(|s| s * 1.1).collect();
        let a = featurize(&samples, 16000).unwrap();
        let b = featurize(&scaled, 16000).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
