//! Procedural paired (image, speech, class) corpus with disjoint
//! train/test class sets, plus a CSV manifest loader for external data.
//!
//! A class is a (shape, fill color, accent color) triple together with a
//! word sequence describing it. Images render the attributes with seeded
//! nuisance variation (background, position, size); speech renders the word
//! sequence as concatenated multi-tone word signatures with seeded jitter.

mod manifest;
mod render;
mod speech;

pub use manifest::{load_manifest, write_corpus, ManifestReport};
pub use render::{attribute_probe, render_image, render_image_f32, ProbeResult};
pub use speech::{decode_words, render_speech, vocabulary, word_signature, MIN_CLIP_SAMPLES};

use std::collections::BTreeSet;

use ndarray::{Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{spectrogram, AudioClip};
use crate::error::{Error, Result};

/// Object shapes drawable by the renderer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Cross,
}

pub const SHAPES: [ShapeKind; 4] = [
    ShapeKind::Circle,
    ShapeKind::Square,
    ShapeKind::Triangle,
    ShapeKind::Cross,
];

impl ShapeKind {
    pub fn word(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Cross => "cross",
        }
    }
}

/// Saturated fill colors (word, RGB).
pub const FILL_PALETTE: [(&str, [u8; 3]); 8] = [
    ("red", [230, 40, 40]),
    ("green", [40, 200, 60]),
    ("blue", [40, 80, 230]),
    ("yellow", [235, 220, 50]),
    ("orange", [240, 140, 30]),
    ("purple", [150, 50, 200]),
    ("cyan", [40, 210, 210]),
    ("magenta", [220, 50, 180]),
];

/// Accent (border) colors, disjoint word set from the fills.
pub const ACCENT_PALETTE: [(&str, [u8; 3]); 8] = [
    ("white", [245, 245, 245]),
    ("black", [15, 15, 15]),
    ("gray", [128, 128, 128]),
    ("pink", [250, 170, 190]),
    ("teal", [0, 130, 120]),
    ("lime", [170, 240, 70]),
    ("brown", [140, 90, 40]),
    ("navy", [25, 30, 95]),
];

/// One semantic class: unique attribute triple plus its word sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub class_id: usize,
    pub shape: ShapeKind,
    pub fill: usize,
    pub accent: usize,
    /// Canonical description; per-sample descriptions rotate templates.
    pub words: Vec<String>,
}

/// Description templates (4-7 words each).
fn describe(shape: ShapeKind, fill: usize, accent: usize, template: usize) -> Vec<String> {
    let f = FILL_PALETTE[fill].0;
    let a = ACCENT_PALETTE[accent].0;
    let s = shape.word();
    let t: Vec<&str> = match template % 4 {
        0 => vec!["a", f, s, "with", a, "trim"],
        1 => vec![f, s, a, "trim"],
        2 => vec!["the", f, s, "has", "a", a, "trim"],
        _ => vec![f, s, "with", a, "trim"],
    };
    t.into_iter().map(str::to_owned).collect()
}

/// Zero-shot class split: train and test class id sets are disjoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_classes: BTreeSet<usize>,
    pub test_classes: BTreeSet<usize>,
    pub per_class: usize,
}

/// Split `n_classes` class ids into disjoint train/test sets,
/// deterministically under `seed`.
pub fn build_splits(
    n_classes: usize,
    train_fraction: f64,
    per_class: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if n_classes < 4 {
        return Err(Error::invalid_input("build_splits: need at least 4 classes"));
    }
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::invalid_input("build_splits: train_fraction must be in (0, 1)"));
    }
    let n_train = ((n_classes as f64) * train_fraction).floor() as usize;
    if n_train == 0 || n_train >= n_classes {
        return Err(Error::invalid_input(format!(
            "build_splits: split {n_train}/{} leaves an empty side",
            n_classes - n_train
        )));
    }
    let mut ids: Vec<usize> = (0..n_classes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    Ok(DatasetSplit {
        train_classes: ids[..n_train].iter().copied().collect(),
        test_classes: ids[n_train..].iter().copied().collect(),
        per_class,
    })
}

/// Corpus generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub train_fraction: f64,
    pub per_class: usize,
    /// k speech descriptions per image.
    pub descriptions_per_image: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_classes: 40,
            train_fraction: 0.75,
            per_class: 200,
            descriptions_per_image: 2,
            image_size: 64,
            seed: 7,
        }
    }
}

/// A single paired training example in tensor form.
#[derive(Debug, Clone)]
pub struct PairedSample {
    /// [3, H, W] in [-1, 1]
    pub image: Array3<f64>,
    pub clip: AudioClip,
    pub label: usize,
}

/// Stored image (f32 to keep big corpora in memory).
#[derive(Debug, Clone)]
pub struct ImageEntry {
    pub class_id: usize,
    pub pixels: Array3<f32>,
}

/// Stored (image, description) pairing with a precomputed spectrogram.
#[derive(Debug, Clone)]
pub struct Item {
    pub image_idx: usize,
    pub class_id: usize,
    /// [bands, frames]
    pub spec: Array2<f32>,
    pub words: Vec<String>,
}

/// In-memory corpus. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub classes: Vec<ClassSpec>,
    pub split: DatasetSplit,
    pub image_size: usize,
    pub images: Vec<ImageEntry>,
    pub items: Vec<Item>,
    pub train_items: Vec<usize>,
    pub test_items: Vec<usize>,
    pub train_images: Vec<usize>,
    pub test_images: Vec<usize>,
}

/// Cheap deterministic seed derivation for per-sample randomness.
pub fn seed_mix(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 27;
    }
    h
}

/// Enumerate the unique (shape, fill, accent) triples and keep `n` of them,
/// shuffled under `seed`.
pub fn make_classes(n: usize, seed: u64) -> Result<Vec<ClassSpec>> {
    let max = SHAPES.len() * FILL_PALETTE.len() * ACCENT_PALETTE.len();
    if n > max {
        return Err(Error::invalid_input(format!(
            "make_classes: {n} classes requested, only {max} unique attribute triples exist"
        )));
    }
    let mut combos: Vec<(ShapeKind, usize, usize)> = Vec::with_capacity(max);
    for &s in &SHAPES {
        for f in 0..FILL_PALETTE.len() {
            for a in 0..ACCENT_PALETTE.len() {
                combos.push((s, f, a));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed_mix(seed, &[1]));
    combos.shuffle(&mut rng);
    Ok(combos[..n]
        .iter()
        .enumerate()
        .map(|(class_id, &(shape, fill, accent))| ClassSpec {
            class_id,
            shape,
            fill,
            accent,
            words: describe(shape, fill, accent, 0),
        })
        .collect())
}

/// Render one class sample's clip for a given image index / description slot,
/// identically to what [`generate`] stores as a spectrogram.
pub fn sample_clip(cfg: &SyntheticConfig, class: &ClassSpec, img_i: usize, desc_j: usize) -> Result<(Vec<String>, AudioClip)> {
    let words = describe(
        class.shape,
        class.fill,
        class.accent,
        img_i * cfg.descriptions_per_image + desc_j,
    );
    let jitter = seed_mix(cfg.seed, &[3, class.class_id as u64, img_i as u64, desc_j as u64]);
    let clip = render_speech(&words, Some(jitter))?;
    Ok((words, clip))
}

/// Generate the full corpus deterministically from the config.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.per_class == 0 || cfg.descriptions_per_image == 0 {
        return Err(Error::InvalidConfig("per_class and descriptions_per_image must be >= 1".into()));
    }
    if cfg.image_size < 16 || !cfg.image_size.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "image_size {} must be a power of two >= 16",
            cfg.image_size
        )));
    }
    let classes = make_classes(cfg.n_classes, cfg.seed)?;
    let split = build_splits(cfg.n_classes, cfg.train_fraction, cfg.per_class, seed_mix(cfg.seed, &[2]))?;

    let image_jobs: Vec<(usize, usize)> = classes
        .iter()
        .flat_map(|c| (0..cfg.per_class).map(move |i| (c.class_id, i)))
        .collect();
    let images: Vec<ImageEntry> = image_jobs
        .par_iter()
        .map(|&(class_id, i)| {
            let nuisance = seed_mix(cfg.seed, &[4, class_id as u64, i as u64]);
            ImageEntry {
                class_id,
                pixels: render_image_f32(&classes[class_id], nuisance, cfg.image_size),
            }
        })
        .collect();

    let item_jobs: Vec<(usize, usize, usize)> = image_jobs
        .iter()
        .enumerate()
        .flat_map(|(img_idx, &(class_id, i))| {
            (0..cfg.descriptions_per_image).map(move |j| (img_idx, class_id, i * cfg.descriptions_per_image + j))
        })
        .collect();
    let items: Vec<Item> = item_jobs
        .par_iter()
        .map(|&(img_idx, class_id, slot)| {
            let i = slot / cfg.descriptions_per_image;
            let j = slot % cfg.descriptions_per_image;
            let (words, clip) = sample_clip(cfg, &classes[class_id], i, j)?;
            let spec = spectrogram(&clip)?;
            Ok(Item {
                image_idx: img_idx,
                class_id,
                spec: spec.values.mapv(|v| v as f32),
                words,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let in_train = |cid: usize| split.train_classes.contains(&cid);
    let train_items = items
        .iter()
        .enumerate()
        .filter(|(_, it)| in_train(it.class_id))
        .map(|(i, _)| i)
        .collect();
    let test_items = items
        .iter()
        .enumerate()
        .filter(|(_, it)| !in_train(it.class_id))
        .map(|(i, _)| i)
        .collect();
    let train_images = images
        .iter()
        .enumerate()
        .filter(|(_, im)| in_train(im.class_id))
        .map(|(i, _)| i)
        .collect();
    let test_images = images
        .iter()
        .enumerate()
        .filter(|(_, im)| !in_train(im.class_id))
        .map(|(i, _)| i)
        .collect();

    Ok(Dataset {
        classes,
        split,
        image_size: cfg.image_size,
        images,
        items,
        train_items,
        test_items,
        train_images,
        test_images,
    })
}

impl Dataset {
    /// Assemble an image batch [B, 3, H, W] in f64.
    pub fn image_batch(&self, image_ids: &[usize]) -> Array4<f64> {
        let s = self.image_size;
        let mut out = Array4::<f64>::zeros((image_ids.len(), 3, s, s));
        for (b, &id) in image_ids.iter().enumerate() {
            let px = &self.images[id].pixels;
            out.index_axis_mut(ndarray::Axis(0), b)
                .assign(&px.mapv(|v| v as f64));
        }
        out
    }

    /// Spectrogram of one item in f64.
    pub fn item_spec(&self, item_id: usize) -> Array2<f64> {
        self.items[item_id].spec.mapv(|v| v as f64)
    }

    pub fn item_label(&self, item_id: usize) -> usize {
        self.items[item_id].class_id
    }

    /// Confirms no test-class sample can reach a training batch.
    pub fn audit_zero_shot(&self) -> Result<()> {
        for &i in &self.train_items {
            if self.split.test_classes.contains(&self.items[i].class_id) {
                return Err(Error::Numerical(format!(
                    "zero-shot violation: item {i} of test class {} listed as train",
                    self.items[i].class_id
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_deterministic_and_disjoint() {
        let a = build_splits(40, 0.75, 10, 5).unwrap();
        let b = build_splits(40, 0.75, 10, 5).unwrap();
        assert_eq!(a.train_classes, b.train_classes);
        assert_eq!(a.train_classes.len(), 30);
        assert_eq!(a.test_classes.len(), 10);
        assert!(a.train_classes.is_disjoint(&a.test_classes));
    }

    #[test]
    fn paper_shaped_split() {
        let s = build_splits(200, 0.75, 1, 0).unwrap();
        assert_eq!(s.train_classes.len(), 150);
        assert_eq!(s.test_classes.len(), 50);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        assert!(build_splits(3, 0.5, 1, 0).is_err());
        assert!(build_splits(10, 0.0, 1, 0).is_err());
        assert!(build_splits(10, 1.0, 1, 0).is_err());
        // fraction so low no train class remains
        assert!(build_splits(10, 0.05, 1, 0).is_err());
    }

    #[test]
    fn classes_are_unique_triples() {
        let classes = make_classes(40, 3).unwrap();
        let mut seen = std::collections::HashSet::new();
        for c in &classes {
            assert!(seen.insert((c.shape, c.fill, c.accent)));
            let n = c.words.len();
            assert!((4..=7).contains(&n), "description length {n}");
        }
        assert!(make_classes(300, 3).is_err());
    }

    #[test]
    fn generate_small_corpus_and_audit() {
        let cfg = SyntheticConfig {
            n_classes: 6,
            train_fraction: 0.67,
            per_class: 2,
            descriptions_per_image: 2,
            image_size: 32,
            seed: 9,
        };
        let ds = generate(&cfg).unwrap();
        assert_eq!(ds.images.len(), 12);
        assert_eq!(ds.items.len(), 24);
        ds.audit_zero_shot().unwrap();
        assert_eq!(ds.train_items.len() + ds.test_items.len(), 24);
        // every spectrogram long enough for the encoder
        for it in &ds.items {
            assert!(it.spec.ncols() >= crate::audio::MIN_ENCODER_FRAMES);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            n_classes: 4,
            train_fraction: 0.5,
            per_class: 1,
            descriptions_per_image: 1,
            image_size: 16,
            seed: 11,
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.images[0].pixels, b.images[0].pixels);
        assert_eq!(a.items[0].spec, b.items[0].spec);
    }
}
