//! Waveform -> log-Mel spectrogram frontend.
//!
//! Processing order: DC removal by mean subtraction, pre-emphasis filtering,
//! STFT power over 25 ms Hamming windows with 10 ms shift, then log energies
//! of 40 triangular Mel filter bands. Everything is a pure function of its
//! inputs, so identical clips produce bit-identical spectrograms.

mod cache;
mod wav;

pub use cache::{read_spectrogram_cache, write_spectrogram_cache};
pub use wav::{read_wav, write_wav};

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Default sample rate of the synthetic corpus and the WAV interface.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
/// Number of Mel filter bands of the standard frontend.
pub const MEL_BANDS: usize = 40;
/// Analysis window length in milliseconds.
pub const WINDOW_MS: f64 = 25.0;
/// Frame shift in milliseconds.
pub const HOP_MS: f64 = 10.0;
/// Pre-emphasis coefficient (standard ASR default; not dictated by the task).
pub const PRE_EMPHASIS: f64 = 0.97;
/// Energy floor applied before the log, far below any voiced-band energy.
pub const ENERGY_FLOOR: f64 = 1e-10;
/// Minimum spectrogram frames the speech encoder accepts.
pub const MIN_ENCODER_FRAMES: usize = 64;

/// Raw single-channel waveform with nominal amplitude range [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Log Mel-band energies, shape [bands, frames].
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Array2<f64>,
}

impl LogMelSpectrogram {
    pub fn bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    /// True once the spectrogram is long enough for the encoder's x64
    /// sequence shortening.
    pub fn encoder_ready(&self) -> bool {
        self.frames() >= MIN_ENCODER_FRAMES
    }
}

/// Subtract the arithmetic mean so the DC component vanishes.
pub fn remove_dc(clip: &AudioClip) -> Result<AudioClip> {
    if clip.samples.is_empty() {
        return Err(Error::invalid_input("remove_dc: empty clip"));
    }
    let mean = clip.samples.iter().sum::<f64>() / clip.samples.len() as f64;
    Ok(AudioClip {
        samples: clip.samples.iter().map(|s| s - mean).collect(),
        sample_rate: clip.sample_rate,
    })
}

/// First-order high-pass: y[0] = x[0], y[t] = x[t] - coef * x[t-1].
pub fn pre_emphasis(clip: &AudioClip, coef: f64) -> Result<AudioClip> {
    if !(0.0..1.0).contains(&coef) {
        return Err(Error::invalid_input(format!(
            "pre_emphasis: coefficient {coef} outside [0, 1)"
        )));
    }
    if clip.samples.is_empty() {
        return Err(Error::invalid_input("pre_emphasis: empty clip"));
    }
    let x = &clip.samples;
    let mut y = Vec::with_capacity(x.len());
    y.push(x[0]);
    for t in 1..x.len() {
        y.push(x[t] - coef * x[t - 1]);
    }
    Ok(AudioClip {
        samples: y,
        sample_rate: clip.sample_rate,
    })
}

fn window_samples(sample_rate: u32, ms: f64) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

/// Number of analysis frames for a clip of `n` samples: 1 + floor((n-w)/h).
pub fn frame_count(n: usize, window: usize, hop: usize) -> Option<usize> {
    if n < window || hop == 0 {
        return None;
    }
    Some(1 + (n - window) / hop)
}

/// Squared-magnitude STFT over Hamming windows. Output shape is
/// [window/2 + 1 bins, frames]; DFT length equals the window length.
pub fn stft_power(clip: &AudioClip, window_ms: f64, hop_ms: f64) -> Result<Array2<f64>> {
    if clip.sample_rate == 0 {
        return Err(Error::invalid_input("stft_power: zero sample rate"));
    }
    let w = window_samples(clip.sample_rate, window_ms);
    let h = window_samples(clip.sample_rate, hop_ms);
    if w < 2 || h == 0 {
        return Err(Error::invalid_input("stft_power: degenerate window or hop"));
    }
    let n = clip.samples.len();
    let frames = frame_count(n, w, h).ok_or_else(|| {
        Error::invalid_input(format!(
            "stft_power: clip of {n} samples shorter than one {w}-sample window"
        ))
    })?;

    let hamming: Vec<f64> = (0..w)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (w - 1) as f64).cos())
        .collect();

    let bins = w / 2 + 1;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(w);
    let mut out = Array2::<f64>::zeros((bins, frames));
    let mut buf = vec![Complex::new(0.0, 0.0); w];
    for f in 0..frames {
        let start = f * h;
        for i in 0..w {
            buf[i] = Complex::new(clip.samples[start + i] * hamming[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            out[[k, f]] = buf[k].norm_sqr();
        }
    }
    Ok(out)
}

/// Triangular Mel filterbank, rows normalized to unit area over the bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// [bands, bins]
    pub weights: Array2<f64>,
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl MelFilterbank {
    /// Build `bands` triangles spanning 0 .. sample_rate/2 evaluated at the
    /// `bins` DFT bin centre frequencies of an `n_fft`-point transform.
    pub fn new(bands: usize, n_fft: usize, sample_rate: u32) -> Result<Self> {
        if bands == 0 || n_fft < 2 || sample_rate == 0 {
            return Err(Error::InvalidConfig(
                "mel filterbank needs bands >= 1, n_fft >= 2, sample_rate > 0".into(),
            ));
        }
        let bins = n_fft / 2 + 1;
        let f_max = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(f_max);
        let edges: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (bands + 1) as f64))
            .collect();

        let mut weights = Array2::<f64>::zeros((bands, bins));
        for m in 0..bands {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * sample_rate as f64 / n_fft as f64;
                let rise = (f - lo) / (mid - lo);
                let fall = (hi - f) / (hi - mid);
                let v = rise.min(fall).max(0.0);
                weights[[m, k]] = v;
            }
            let area = weights.row(m).sum();
            if area <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "mel band {m} covers no DFT bin (bands too narrow for this n_fft)"
                )));
            }
            weights.row_mut(m).mapv_inplace(|v| v / area);
        }
        Ok(Self { weights })
    }
}

/// Apply an arbitrary filterbank to a power spectrum and log-compress with
/// the energy floor. Weights are used as given (no extra normalization).
pub fn apply_filterbank(power: &Array2<f64>, weights: &Array2<f64>) -> Result<LogMelSpectrogram> {
    if power.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid_input("apply_filterbank: negative power entry"));
    }
    if weights.ncols() != power.nrows() {
        return Err(Error::invalid_input(format!(
            "apply_filterbank: {} filter bins vs {} power bins",
            weights.ncols(),
            power.nrows()
        )));
    }
    let energies = weights.dot(power);
    Ok(LogMelSpectrogram {
        values: energies.mapv(|e| e.max(ENERGY_FLOOR).ln()),
    })
}

/// Mel-band energies before the log, for linearity checks and diagnostics.
pub fn mel_energies(power: &Array2<f64>, weights: &Array2<f64>) -> Result<Array2<f64>> {
    if power.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid_input("mel_energies: negative power entry"));
    }
    Ok(weights.dot(power))
}

/// Log Mel filterbank energies of a power spectrogram.
pub fn log_mel(power: &Array2<f64>, sample_rate: u32, bands: usize) -> Result<LogMelSpectrogram> {
    let n_fft = (power.nrows() - 1) * 2;
    let fb = MelFilterbank::new(bands, n_fft, sample_rate)?;
    apply_filterbank(power, &fb.weights)
}

/// Frontend parameters; defaults follow the standard configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SpectrogramParams {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub bands: usize,
    pub pre_emphasis: f64,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        Self {
            window_ms: WINDOW_MS,
            hop_ms: HOP_MS,
            bands: MEL_BANDS,
            pre_emphasis: PRE_EMPHASIS,
        }
    }
}

/// Full frontend: remove_dc -> pre_emphasis -> stft_power -> log_mel.
pub fn spectrogram_with(clip: &AudioClip, params: &SpectrogramParams) -> Result<LogMelSpectrogram> {
    let clip = remove_dc(clip)?;
    let clip = pre_emphasis(&clip, params.pre_emphasis)?;
    let power = stft_power(&clip, params.window_ms, params.hop_ms)?;
    log_mel(&power, clip.sample_rate, params.bands)
}

/// Full frontend with default parameters (40 bands, 25 ms / 10 ms).
pub fn spectrogram(clip: &AudioClip) -> Result<LogMelSpectrogram> {
    spectrogram_with(clip, &SpectrogramParams::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, DEFAULT_SAMPLE_RATE)
    }

    #[test]
    fn remove_dc_subtracts_mean() {
        let out = remove_dc(&clip(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.samples, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn remove_dc_zero_and_constant_cases() {
        let z = remove_dc(&clip(vec![0.0; 5])).unwrap();
        assert!(z.samples.iter().all(|&s| s == 0.0));
        let c = remove_dc(&clip(vec![5.0; 4])).unwrap();
        assert!(c.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn remove_dc_empty_clip_errors() {
        assert!(remove_dc(&clip(vec![])).is_err());
    }

    #[test]
    fn pre_emphasis_direct_substitution() {
        let y = pre_emphasis(&clip(vec![1.0, 1.0, 1.0]), 0.97).unwrap();
        assert!((y.samples[0] - 1.0).abs() < 1e-15);
        assert!((y.samples[1] - 0.03).abs() < 1e-12);
        assert!((y.samples[2] - 0.03).abs() < 1e-12);

        let y2 = pre_emphasis(&clip(vec![1.0, 0.0]), 0.97).unwrap();
        assert!((y2.samples[1] + 0.97).abs() < 1e-12);
    }

    #[test]
    fn pre_emphasis_zero_coef_is_identity() {
        let x = vec![0.3, -0.2, 0.9];
        let y = pre_emphasis(&clip(x.clone()), 0.0).unwrap();
        assert_eq!(y.samples, x);
    }

    #[test]
    fn pre_emphasis_rejects_bad_coef() {
        assert!(pre_emphasis(&clip(vec![1.0]), 1.0).is_err());
        assert!(pre_emphasis(&clip(vec![1.0]), -0.1).is_err());
    }

    #[test]
    fn stft_frame_arithmetic() {
        // 1 s at 16 kHz, 25 ms window (400), 10 ms hop (160): 98 frames
        let c = clip(vec![0.1; 16_000]);
        let p = stft_power(&c, WINDOW_MS, HOP_MS).unwrap();
        assert_eq!(p.dim(), (201, 98));

        // exactly one window -> one frame
        let one = stft_power(&clip(vec![0.1; 400]), WINDOW_MS, HOP_MS).unwrap();
        assert_eq!(one.ncols(), 1);
    }

    #[test]
    fn stft_zero_clip_gives_zero_power() {
        let p = stft_power(&clip(vec![0.0; 800]), WINDOW_MS, HOP_MS).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stft_short_clip_errors() {
        assert!(stft_power(&clip(vec![0.0; 399]), WINDOW_MS, HOP_MS).is_err());
    }

    #[test]
    fn stft_power_nonnegative_for_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let samples: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = stft_power(&clip(samples), WINDOW_MS, HOP_MS).unwrap();
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn log_mel_zero_power_hits_floor() {
        let power = Array2::<f64>::zeros((201, 5));
        let s = log_mel(&power, DEFAULT_SAMPLE_RATE, MEL_BANDS).unwrap();
        let want = ENERGY_FLOOR.ln();
        assert!(s.values.iter().all(|&v| (v - want).abs() < 1e-12));
    }

    #[test]
    fn log_mel_rejects_negative_power() {
        let mut power = Array2::<f64>::zeros((201, 2));
        power[[3, 1]] = -1.0;
        assert!(log_mel(&power, DEFAULT_SAMPLE_RATE, MEL_BANDS).is_err());
    }

    #[test]
    fn degenerate_single_filter_is_plain_log_energy() {
        let mut power = Array2::<f64>::zeros((4, 1));
        power[[0, 0]] = 1.5;
        power[[2, 0]] = 0.5;
        let weights = Array2::<f64>::ones((1, 4));
        let s = apply_filterbank(&power, &weights).unwrap();
        assert!((s.values[[0, 0]] - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn white_noise_full_pipeline_shape_and_finiteness() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let samples: Vec<f64> = (0..16_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = spectrogram(&clip(samples)).unwrap();
        assert_eq!((s.bands(), s.frames()), (40, 98));
        assert!(s.values.iter().all(|v| v.is_finite()));
        assert!(s.values.iter().all(|&v| v >= ENERGY_FLOOR.ln() - 1e-12));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let samples: Vec<f64> = (0..8000).map(|i| (i as f64 * 0.05).sin() * 0.4).collect();
        let a = spectrogram(&clip(samples.clone())).unwrap();
        let b = spectrogram(&clip(samples)).unwrap();
        assert_eq!(a.values, b.values); // bit-for-bit
    }

    #[test]
    fn scaled_clip_scales_mel_energy_quadratically() {
        let samples: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.11).sin() * 0.3).collect();
        let a = 2.5f64;
        let scaled: Vec<f64> = samples.iter().map(|s| a * s).collect();
        let fb = MelFilterbank::new(MEL_BANDS, 400, DEFAULT_SAMPLE_RATE).unwrap();
        let prep = |v: Vec<f64>| {
            let c = pre_emphasis(&remove_dc(&clip(v)).unwrap(), PRE_EMPHASIS).unwrap();
            stft_power(&c, WINDOW_MS, HOP_MS).unwrap()
        };
        let e1 = mel_energies(&prep(samples), &fb.weights).unwrap().sum();
        let e2 = mel_energies(&prep(scaled), &fb.weights).unwrap().sum();
        assert!((e2 / e1 - a * a).abs() < 1e-9, "ratio {}", e2 / e1);
    }

    #[test]
    fn mel_scale_roundtrip() {
        for hz in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-6);
        }
    }

    #[test]
    fn filterbank_rows_have_unit_area_and_nonnegative_weights() {
        let fb = MelFilterbank::new(MEL_BANDS, 400, DEFAULT_SAMPLE_RATE).unwrap();
        for m in 0..MEL_BANDS {
            let row = fb.weights.row(m);
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}
