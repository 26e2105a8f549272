//! Speech encoder: a sequence-shortening CNN followed by a GRU.
//!
//! The convolution stack downsamples the spectrogram's time axis by a total
//! factor of 64, the GRU consumes the shortened sequence, and its final
//! hidden state (optionally projected) is the embedding. Inputs are
//! normalized per frequency band with statistics fitted on the training set.
//!
//! Variable-length batches are right-padded; every layer re-zeroes padded
//! positions and the GRU reads each sequence's state at its own last valid
//! step, so batched encodings equal unbatched ones in inference mode.

use ndarray::{s, Array1, Array2, Array3, ArrayViewMutD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{LogMelSpectrogram, MIN_ENCODER_FRAMES};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv1d, Dense, Gru, Params, Relu};

/// Embeddings are plain f64 vectors of the configured dimension.
pub type Embedding = Array1<f64>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConvSpec {
    pub channels: usize,
    pub stride: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpeechEncoderConfig {
    pub bands: usize,
    pub conv: Vec<ConvSpec>,
    pub rnn_hidden: usize,
    pub embed_dim: usize,
}

impl Default for SpeechEncoderConfig {
    fn default() -> Self {
        Self {
            bands: 40,
            conv: vec![
                ConvSpec { channels: 32, stride: 4, kernel: 5 },
                ConvSpec { channels: 64, stride: 4, kernel: 5 },
                ConvSpec { channels: 128, stride: 2, kernel: 5 },
                ConvSpec { channels: 128, stride: 2, kernel: 5 },
            ],
            rnn_hidden: 128,
            embed_dim: 128,
        }
    }
}

impl SpeechEncoderConfig {
    /// Minimal configuration for gradient checking: one conv of stride 64,
    /// hidden size 8, embedding dim 8.
    pub fn tiny() -> Self {
        Self {
            bands: 40,
            conv: vec![ConvSpec { channels: 4, stride: 64, kernel: 5 }],
            rnn_hidden: 8,
            embed_dim: 8,
        }
    }

    pub fn total_stride(&self) -> usize {
        self.conv.iter().map(|c| c.stride).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_stride() != 64 {
            return Err(Error::InvalidConfig(format!(
                "conv strides multiply to {}, the encoder requires 64",
                self.total_stride()
            )));
        }
        if self.conv.is_empty() || self.bands == 0 || self.rnn_hidden == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidConfig("encoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Per-band affine normalization statistics, fitted on training data.
#[derive(Debug, Clone)]
pub struct FreqNorm {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

/// Fit per-band mean/std over all frames of the given spectrograms.
pub fn fit_freq_norm(specs: &[Array2<f64>]) -> Result<FreqNorm> {
    let bands = specs.first().map(|s| s.nrows()).ok_or_else(|| {
        Error::invalid_input("fit_freq_norm: no spectrograms")
    })?;
    let mut mean = Array1::<f64>::zeros(bands);
    let mut count = 0.0f64;
    for sp in specs {
        for b in 0..bands {
            mean[b] += sp.row(b).sum();
        }
        count += sp.ncols() as f64;
    }
    mean.mapv_inplace(|v| v / count);
    let mut var = Array1::<f64>::zeros(bands);
    for sp in specs {
        for b in 0..bands {
            var[b] += sp.row(b).mapv(|v| (v - mean[b]).powi(2)).sum();
        }
    }
    var.mapv_inplace(|v| (v / count).sqrt().max(1e-6));
    Ok(FreqNorm { mean, std: var })
}

#[derive(Debug)]
pub struct SpeechEncoder {
    pub cfg: SpeechEncoderConfig,
    pub freq_norm: FreqNorm,
    convs: Vec<Conv1d>,
    bns: Vec<BatchNorm>,
    relus: Vec<Relu>,
    gru: Gru,
    proj: Option<Dense>,
    cache: Option<FwdCache>,
}

#[derive(Debug)]
struct FwdCache {
    masks: Vec<Array2<f64>>, // per layer, [batch, t_out]
}

impl SpeechEncoder {
    pub fn new<R: Rng>(rng: &mut R, cfg: SpeechEncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        let mut relus = Vec::new();
        let mut in_ch = cfg.bands;
        for spec in &cfg.conv {
            convs.push(Conv1d::new(rng, in_ch, spec.channels, spec.kernel, spec.stride));
            bns.push(BatchNorm::new(spec.channels));
            relus.push(Relu::new());
            in_ch = spec.channels;
        }
        let gru = Gru::new(rng, in_ch, cfg.rnn_hidden);
        let proj = (cfg.rnn_hidden != cfg.embed_dim)
            .then(|| Dense::new(rng, cfg.rnn_hidden, cfg.embed_dim));
        Ok(Self {
            freq_norm: FreqNorm {
                mean: Array1::zeros(cfg.bands),
                std: Array1::ones(cfg.bands),
            },
            cfg,
            convs,
            bns,
            relus,
            gru,
            proj,
            cache: None,
        })
    }

    pub fn set_freq_norm(&mut self, norm: FreqNorm) {
        self.freq_norm = norm;
    }

    /// Temporal length after the full conv stack.
    pub fn shortened_len(&self, frames: usize) -> usize {
        self.cfg
            .conv
            .iter()
            .fold(frames, |t, c| t.div_ceil(c.stride))
    }

    fn check_lengths(specs: &[Array2<f64>], bands: usize) -> Result<Vec<usize>> {
        if specs.is_empty() {
            return Err(Error::invalid_input("encode_batch: empty batch"));
        }
        let mut lengths = Vec::with_capacity(specs.len());
        for (i, sp) in specs.iter().enumerate() {
            if sp.nrows() != bands {
                return Err(Error::invalid_input(format!(
                    "spectrogram {i} has {} bands, encoder expects {bands}",
                    sp.nrows()
                )));
            }
            if sp.ncols() < MIN_ENCODER_FRAMES {
                return Err(Error::invalid_input(format!(
                    "spectrogram {i} has {} frames, encoder needs at least {MIN_ENCODER_FRAMES}",
                    sp.ncols()
                )));
            }
            lengths.push(sp.ncols());
        }
        Ok(lengths)
    }

    /// Encode a batch of spectrograms into [batch, embed_dim].
    pub fn forward_batch(&mut self, specs: &[Array2<f64>], train: bool) -> Result<Array2<f64>> {
        let lengths = Self::check_lengths(specs, self.cfg.bands)?;
        let batch = specs.len();
        let t_max = *lengths.iter().max().expect("non-empty");

        // per-band normalization, zero in the padded tail
        let mut x = Array3::<f64>::zeros((batch, self.cfg.bands, t_max));
        for (i, sp) in specs.iter().enumerate() {
            for b in 0..self.cfg.bands {
                let (m, s) = (self.freq_norm.mean[b], self.freq_norm.std[b]);
                let mut dst = x.slice_mut(s![i, b, ..sp.ncols()]);
                dst.assign(&sp.row(b).mapv(|v| (v - m) / s));
            }
        }

        let mut cur_lens = lengths.clone();
        let mut masks = Vec::with_capacity(self.convs.len());
        for li in 0..self.convs.len() {
            let y = self.convs[li].forward(&x, train);
            cur_lens = cur_lens
                .iter()
                .map(|&l| l.div_ceil(self.cfg.conv[li].stride))
                .collect();
            let t_out = y.dim().2;
            let mut mask = Array2::<f64>::zeros((batch, t_out));
            for (i, &l) in cur_lens.iter().enumerate() {
                mask.slice_mut(s![i, ..l]).fill(1.0);
            }
            let y = self.bns[li].forward_masked(&y, Some(&mask), train);
            let y = self.relus[li]
                .forward(&y.into_dyn(), train)
                .into_dimensionality::<ndarray::Ix3>()
                .expect("rank-3");
            // re-zero the padded tail so the next layer sees clean padding
            let mut y = y;
            for (i, &l) in cur_lens.iter().enumerate() {
                y.slice_mut(s![i, .., l..]).fill(0.0);
            }
            masks.push(mask);
            x = y;
        }

        let h = self.gru.forward(&x, &cur_lens, train);
        let out = match self.proj.as_mut() {
            Some(p) => p.forward(&h, train),
            None => h,
        };
        if train {
            self.cache = Some(FwdCache { masks });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("encoder produced non-finite embedding".into()));
        }
        Ok(out)
    }

    /// Accumulate parameter gradients from embedding gradients.
    pub fn backward(&mut self, g_emb: &Array2<f64>) {
        let cache = self.cache.take().expect("forward_batch(train) before backward");
        let g_h = match self.proj.as_mut() {
            Some(p) => p.backward(g_emb),
            None => g_emb.clone(),
        };
        let mut g = self.gru.backward(&g_h);
        for li in (0..self.convs.len()).rev() {
            // padded positions were forced to zero in the forward pass
            let mask = &cache.masks[li];
            for (i, mut row) in g.outer_iter_mut().enumerate() {
                for t in 0..row.dim().1 {
                    if mask[[i, t]] == 0.0 {
                        row.slice_mut(s![.., t]).fill(0.0);
                    }
                }
            }
            let gd = self.relus[li].backward(&g.into_dyn());
            let g3 = gd.into_dimensionality::<ndarray::Ix3>().expect("rank-3");
            let g3 = self.bns[li].backward(&g3);
            g = self.convs[li].backward(&g3);
        }
    }

    /// Encode a single spectrogram in inference mode.
    pub fn encode(&mut self, spec: &LogMelSpectrogram) -> Result<Embedding> {
        let out = self.forward_batch(std::slice::from_ref(&spec.values), false)?;
        Ok(out.row(0).to_owned())
    }

    /// Encode many spectrograms in inference mode; row i equals
    /// `encode(specs[i])`.
    pub fn encode_batch(&mut self, specs: &[Array2<f64>]) -> Result<Array2<f64>> {
        self.forward_batch(specs, false)
    }

    pub fn save(&mut self, path: &std::path::Path) -> Result<()> {
        let config = serde_json::to_string(&self.cfg)
            .map_err(|e| Error::Format(format!("encoder config: {e}")))?;
        let mut ck = Checkpoint::from_model("speech_encoder", &config, self);
        ck.tensors
            .insert("freq_norm.mean".into(), self.freq_norm.mean.clone().into_dyn());
        ck.tensors
            .insert("freq_norm.std".into(), self.freq_norm.std.clone().into_dyn());
        ck.save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        ck.expect_kind("speech_encoder")?;
        let cfg: SpeechEncoderConfig = serde_json::from_str(&ck.config_json)
            .map_err(|e| Error::Format(format!("encoder config: {e}")))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let mut enc = Self::new(&mut rng, cfg)?;
        ck.apply_to(&mut enc)?;
        let get = |name: &str| -> Result<Array1<f64>> {
            ck.tensors
                .get(name)
                .ok_or_else(|| Error::Format(format!("checkpoint missing {name}")))?
                .clone()
                .into_dimensionality::<ndarray::Ix1>()
                .map_err(|_| Error::Format(format!("{name} has wrong rank")))
        };
        enc.freq_norm = FreqNorm {
            mean: get("freq_norm.mean")?,
            std: get("freq_norm.std")?,
        };
        Ok(enc)
    }
}

impl Params for SpeechEncoder {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<f64>, ArrayViewMutD<f64>)) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.visit(&format!("conv{i}"), f);
        }
        for (i, b) in self.bns.iter_mut().enumerate() {
            b.visit(&format!("bn{i}"), f);
        }
        self.gru.visit("gru", f);
        if let Some(p) = self.proj.as_mut() {
            p.visit("proj", f);
        }
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<f64>)) {
        for (i, b) in self.bns.iter_mut().enumerate() {
            b.visit_state(&format!("bn{i}"), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec_of(frames: usize, salt: f64) -> Array2<f64> {
        Array2::from_shape_fn((40, frames), |(b, t)| ((b * 3 + t) as f64 * 0.17 + salt).sin())
    }

    fn encoder() -> SpeechEncoder {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        SpeechEncoder::new(&mut rng, SpeechEncoderConfig::default()).unwrap()
    }

    #[test]
    fn shortens_by_64() {
        let enc = encoder();
        assert_eq!(enc.shortened_len(640), 10);
        assert_eq!(enc.shortened_len(64), 1);
        assert_eq!(enc.cfg.total_stride(), 64);
    }

    #[test]
    fn encode_640_and_64_frames() {
        let mut enc = encoder();
        let e1 = enc.encode(&LogMelSpectrogram { values: spec_of(640, 0.0) }).unwrap();
        let e2 = enc.encode(&LogMelSpectrogram { values: spec_of(64, 1.0) }).unwrap();
        assert_eq!(e1.len(), 128);
        assert_eq!(e2.len(), 128);
    }

    #[test]
    fn too_few_frames_error() {
        let mut enc = encoder();
        let err = enc.encode(&LogMelSpectrogram { values: spec_of(63, 0.0) });
        assert!(err.is_err());
    }

    #[test]
    fn empty_batch_error() {
        let mut enc = encoder();
        assert!(enc.encode_batch(&[]).is_err());
    }

    #[test]
    fn batch_matches_unbatched() {
        let mut enc = encoder();
        let specs = vec![spec_of(64, 0.3), spec_of(640, 0.9), spec_of(200, 2.1)];
        let batched = enc.encode_batch(&specs).unwrap();
        for (i, sp) in specs.iter().enumerate() {
            let single = enc
                .encode(&LogMelSpectrogram { values: sp.clone() })
                .unwrap();
            for (a, b) in batched.row(i).iter().zip(single.iter()) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
                assert!(rel <= 1e-6, "row {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn batch_of_one_equals_single() {
        let mut enc = encoder();
        let sp = spec_of(128, 0.5);
        let batched = enc.encode_batch(std::slice::from_ref(&sp)).unwrap();
        let single = enc.encode(&LogMelSpectrogram { values: sp }).unwrap();
        assert_eq!(batched.row(0).to_owned(), single);
    }

    #[test]
    fn appended_silence_changes_but_stays_finite() {
        let mut enc = encoder();
        let base = spec_of(128, 0.0);
        let mut longer = Array2::zeros((40, 192));
        longer.slice_mut(s![.., ..128]).assign(&base);
        let e1 = enc.encode(&LogMelSpectrogram { values: base }).unwrap();
        let e2 = enc.encode(&LogMelSpectrogram { values: longer }).unwrap();
        assert!(e2.iter().all(|v| v.is_finite()));
        let diff: f64 = e1.iter().zip(e2.iter()).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 0.0);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_encodings() {
        let mut enc = encoder();
        enc.set_freq_norm(FreqNorm {
            mean: Array1::from_elem(40, 0.2),
            std: Array1::from_elem(40, 1.3),
        });
        let sp = spec_of(100, 0.7);
        let before = enc.encode(&LogMelSpectrogram { values: sp.clone() }).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        enc.save(&path).unwrap();
        let mut loaded = SpeechEncoder::load(&path).unwrap();
        let after = loaded.encode(&LogMelSpectrogram { values: sp }).unwrap();
        assert_eq!(before, after);
    }
}
