//! Word-signature speech synthesis and the nearest-signature decoder.
//!
//! Every vocabulary word owns a fixed multi-tone signature: 2-3 sinusoid
//! partials at word-specific frequencies, 150-300 ms long. A rendered
//! description concatenates word signatures with 30 ms gaps; seeded jitter
//! perturbs duration and amplitude by up to 10%, so clips are continuous
//! and unaligned but remain decodable by frequency matching.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{seed_mix, ACCENT_PALETTE, FILL_PALETTE, SHAPES};
use crate::audio::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

const FUNCTION_WORDS: [&str; 5] = ["a", "the", "with", "has", "trim"];
const GAP_MS: f64 = 30.0;
const PEAK: f64 = 0.45;
/// Shortest clip that still yields the encoder's 64-frame minimum:
/// window + 63 hops at 16 kHz.
pub const MIN_CLIP_SAMPLES: usize = 400 + 63 * 160;

/// All 25 words: 4 shapes + 8 fill colors + 8 accent colors + 5 function words.
pub fn vocabulary() -> Vec<&'static str> {
    let mut v: Vec<&'static str> = SHAPES.iter().map(|s| s.word()).collect();
    v.extend(FILL_PALETTE.iter().map(|&(w, _)| w));
    v.extend(ACCENT_PALETTE.iter().map(|&(w, _)| w));
    v.extend(FUNCTION_WORDS);
    v
}

#[derive(Debug, Clone)]
struct WordSpec {
    freqs: Vec<f64>,
    amps: Vec<f64>,
    base_ms: f64,
}

fn word_seed(word: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in word.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed_mix(h, &[0x5eed])
}

fn word_spec(word: &str) -> WordSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(word_seed(word));
    let n = rng.gen_range(2..=3usize);
    let mut freqs = Vec::with_capacity(n);
    for _ in 0..n {
        // log-uniform over [250, 3200] Hz keeps partials well separated
        let lo = 250f64.ln();
        let hi = 3200f64.ln();
        freqs.push(rng.gen_range(lo..hi).exp());
    }
    let amps: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64) * rng.gen_range(0.8..1.0)).collect();
    let base_ms = rng.gen_range(150.0..300.0);
    WordSpec { freqs, amps, base_ms }
}

fn synth_word(spec: &WordSpec, dur_factor: f64, amp_factor: f64, sr: u32) -> Vec<f64> {
    let n = ((spec.base_ms * dur_factor / 1000.0) * sr as f64).round() as usize;
    let ramp = (0.010 * sr as f64) as usize; // 10 ms attack/release
    let mut out = vec![0.0f64; n];
    for (i, v) in out.iter_mut().enumerate() {
        let t = i as f64 / sr as f64;
        let mut s = 0.0;
        for (f, a) in spec.freqs.iter().zip(spec.amps.iter()) {
            s += a * (2.0 * std::f64::consts::PI * f * t).sin();
        }
        *v = s;
    }
    let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-12);
    let scale = PEAK * amp_factor / peak;
    for (i, v) in out.iter_mut().enumerate() {
        let env_in = ((i as f64 + 1.0) / ramp as f64).min(1.0);
        let env_out = ((n - i) as f64 / ramp as f64).min(1.0);
        *v *= scale * env_in.min(env_out);
    }
    out
}

/// The fixed (jitter-free) signature of a vocabulary word.
pub fn word_signature(word: &str) -> Result<AudioClip> {
    if !vocabulary().contains(&word) {
        return Err(Error::invalid_input(format!("unknown word: {word}")));
    }
    Ok(AudioClip::new(
        synth_word(&word_spec(word), 1.0, 1.0, DEFAULT_SAMPLE_RATE),
        DEFAULT_SAMPLE_RATE,
    ))
}

/// Render a word sequence as a continuous clip. `jitter_seed` enables the
/// +-10% duration/amplitude jitter; `None` reproduces the stored signatures
/// exactly. Clips shorter than [`MIN_CLIP_SAMPLES`] are padded with trailing
/// silence so the spectrogram always has at least 64 frames.
pub fn render_speech<S: AsRef<str>>(words: &[S], jitter_seed: Option<u64>) -> Result<AudioClip> {
    if words.is_empty() {
        return Err(Error::invalid_input("render_speech: empty word sequence"));
    }
    let vocab = vocabulary();
    let sr = DEFAULT_SAMPLE_RATE;
    let gap = ((GAP_MS / 1000.0) * sr as f64) as usize;
    let mut rng = jitter_seed.map(ChaCha8Rng::seed_from_u64);

    let mut samples: Vec<f64> = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let w = w.as_ref();
        if !vocab.contains(&w) {
            return Err(Error::invalid_input(format!("unknown word: {w}")));
        }
        let (df, af) = match rng.as_mut() {
            Some(r) => (r.gen_range(0.9..=1.1), r.gen_range(0.9..=1.1)),
            None => (1.0, 1.0),
        };
        if i > 0 {
            samples.extend(std::iter::repeat(0.0).take(gap));
        }
        samples.extend(synth_word(&word_spec(w), df, af, sr));
    }
    if samples.len() < MIN_CLIP_SAMPLES {
        samples.resize(MIN_CLIP_SAMPLES, 0.0);
    }
    Ok(AudioClip::new(samples, sr))
}

/// Goertzel power of `x` at frequency `f` (fraction of total energy).
fn goertzel_power(x: &[f64], f: f64, sr: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f / sr;
    let coeff = 2.0 * w.cos();
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for &v in x {
        let s0 = v + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    s1 * s1 + s2 * s2 - coeff * s1 * s2
}

/// Nearest-signature decoder: segment on silence gaps, then match each
/// segment's energy at every word's partial frequencies.
pub fn decode_words(clip: &AudioClip) -> Vec<&'static str> {
    let sr = clip.sample_rate as f64;
    let block = (0.005 * sr) as usize; // 5 ms blocks
    if block == 0 || clip.samples.is_empty() {
        return Vec::new();
    }
    let n_blocks = clip.samples.len() / block;
    let rms: Vec<f64> = (0..n_blocks)
        .map(|b| {
            let s = &clip.samples[b * block..(b + 1) * block];
            (s.iter().map(|v| v * v).sum::<f64>() / block as f64).sqrt()
        })
        .collect();
    let thresh = 0.02;

    // group active blocks, closing holes of up to 2 blocks (10 ms)
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    let mut silent_run = 0usize;
    for (b, &e) in rms.iter().enumerate() {
        if e > thresh {
            if start.is_none() {
                start = Some(b);
            }
            silent_run = 0;
        } else if let Some(s) = start {
            silent_run += 1;
            if silent_run > 2 {
                segments.push((s, b - silent_run + 1));
                start = None;
                silent_run = 0;
            }
        }
    }
    if let Some(s) = start {
        segments.push((s, n_blocks));
    }

    let vocab = vocabulary();
    let specs: Vec<WordSpec> = vocab.iter().map(|w| word_spec(w)).collect();
    let mut out = Vec::new();
    for (s, e) in segments {
        let seg = &clip.samples[s * block..(e * block).min(clip.samples.len())];
        if seg.len() < (0.05 * sr) as usize {
            continue; // too short to be a word
        }
        let total: f64 = seg.iter().map(|v| v * v).sum::<f64>().max(1e-12);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, spec) in specs.iter().enumerate() {
            let score: f64 = spec
                .freqs
                .iter()
                .map(|&f| goertzel_power(seg, f, sr))
                .sum::<f64>()
                / (total * spec.freqs.len() as f64);
            if score > best.0 {
                best = (score, i);
            }
        }
        out.push(vocab[best.1]);
    }
    out
}
