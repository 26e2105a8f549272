//! Corpus export and the CSV manifest loader for external paired data.
//!
//! Manifest format: UTF-8 CSV `wav_path,image_path,class_id`, paths
//! relative to the manifest file. A header row is optional.

use std::path::{Path, PathBuf};

use ndarray::Array3;

use super::{sample_clip, ClassSpec, PairedSample, SyntheticConfig};
use crate::audio::{read_wav, write_wav};
use crate::dataset::{make_classes, render_image, seed_mix};
use crate::error::{Error, Result};

/// Per-row outcome record from [`load_manifest`].
#[derive(Debug, Clone, Default)]
pub struct ManifestReport {
    pub rows: usize,
    pub loaded: usize,
    /// (1-based row number, reason)
    pub skipped: Vec<(usize, String)>,
}

fn load_image(path: &Path) -> Result<Array3<f64>> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut out = Array3::<f64>::zeros((3, h as usize, w as usize));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[c, y as usize, x as usize]] = p.0[c] as f64 / 255.0 * 2.0 - 1.0;
        }
    }
    Ok(out)
}

fn save_image(path: &Path, img: &Array3<f64>) -> Result<()> {
    let (_, h, w) = img.dim();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = |c: usize| (((img[[c, y, x]] + 1.0) / 2.0).clamp(0.0, 1.0) * 255.0).round() as u8;
            buf.put_pixel(x as u32, y as u32, image::Rgb([px(0), px(1), px(2)]));
        }
    }
    buf.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Load paired samples from a manifest. Rows referencing missing or
/// malformed files are skipped and reported; an empty result is an error.
/// When `expected_rate` is set, WAVs at any other sample rate are skipped
/// (resampling is out of scope).
pub fn load_manifest(path: &Path, expected_rate: Option<u32>) -> Result<(Vec<PairedSample>, ManifestReport)> {
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;

    let mut report = ManifestReport::default();
    let mut samples = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let rowno = i + 1;
        let rec = match row {
            Ok(r) => r,
            Err(e) => {
                report.skipped.push((rowno, format!("csv parse: {e}")));
                continue;
            }
        };
        if i == 0 && rec.get(2).is_some_and(|f| f.trim() == "class_id") {
            continue; // header row
        }
        report.rows += 1;
        let mut load = || -> std::result::Result<PairedSample, String> {
            let wav = rec.get(0).ok_or("missing wav_path field")?.trim();
            let img = rec.get(1).ok_or("missing image_path field")?.trim();
            let label: usize = rec
                .get(2)
                .ok_or("missing class_id field")?
                .trim()
                .parse()
                .map_err(|e| format!("bad class_id: {e}"))?;
            let clip = read_wav(&base.join(wav)).map_err(|e| e.to_string())?;
            if let Some(rate) = expected_rate {
                if clip.sample_rate != rate {
                    return Err(format!(
                        "sample rate {} does not match required {rate} (resampling unsupported)",
                        clip.sample_rate
                    ));
                }
            }
            let image = load_image(&base.join(img)).map_err(|e| e.to_string())?;
            Ok(PairedSample { image, clip, label })
        };
        match load() {
            Ok(s) => {
                report.loaded += 1;
                samples.push(s);
            }
            Err(reason) => report.skipped.push((rowno, reason)),
        }
    }
    if samples.is_empty() {
        return Err(Error::invalid_input(format!(
            "manifest {} produced no usable samples ({} rows skipped)",
            path.display(),
            report.skipped.len()
        )));
    }
    Ok((samples, report))
}

/// Materialize a corpus directory: `images/`, `audio/`, `manifest.csv`,
/// `classes.json`. Contents are bit-deterministic under the config seed and
/// pair up with [`super::generate`] for the same config.
pub fn write_corpus(cfg: &SyntheticConfig, out_dir: &Path) -> Result<PathBuf> {
    let classes = make_classes(cfg.n_classes, cfg.seed)?;
    let img_dir = out_dir.join("images");
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&img_dir)?;
    std::fs::create_dir_all(&audio_dir)?;

    let mut manifest = String::from("wav_path,image_path,class_id\n");
    for class in &classes {
        for i in 0..cfg.per_class {
            let nuisance = seed_mix(cfg.seed, &[4, class.class_id as u64, i as u64]);
            let img = render_image(class, nuisance, cfg.image_size);
            let img_name = format!("images/cls{:03}_img{:04}.png", class.class_id, i);
            save_image(&out_dir.join(&img_name), &img)?;
            for j in 0..cfg.descriptions_per_image {
                let (_, clip) = sample_clip(cfg, class, i, j)?;
                let wav_name = format!("audio/cls{:03}_img{:04}_d{j}.wav", class.class_id, i);
                write_wav(&out_dir.join(&wav_name), &clip)?;
                manifest.push_str(&format!("{wav_name},{img_name},{}\n", class.class_id));
            }
        }
    }
    let manifest_path = out_dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest)?;

    let classes_json = serde_json::to_string_pretty(&classes)
        .map_err(|e| Error::Format(format!("classes.json: {e}")))?;
    std::fs::write(out_dir.join("classes.json"), classes_json)?;
    Ok(manifest_path)
}

/// Export a single class list, used by tests and tooling.
pub fn classes_snapshot(classes: &[ClassSpec]) -> serde_json::Value {
    serde_json::to_value(classes).expect("classes serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SyntheticConfig {
        SyntheticConfig {
            n_classes: 4,
            train_fraction: 0.5,
            per_class: 1,
            descriptions_per_image: 1,
            image_size: 32,
            seed: 13,
        }
    }

    #[test]
    fn corpus_roundtrip_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(&tiny_cfg(), dir.path()).unwrap();
        assert!(dir.path().join("classes.json").exists());
        let (samples, report) = load_manifest(&manifest, Some(16_000)).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(report.loaded, 4);
        assert!(report.skipped.is_empty());
        assert_eq!(samples[0].image.dim(), (3, 32, 32));
    }

    #[test]
    fn bad_rows_are_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(&tiny_cfg(), dir.path()).unwrap();
        let mut text = std::fs::read_to_string(&manifest).unwrap();
        text.push_str("missing.wav,missing.png,2\n");
        text.push_str("audio/cls000_img0000_d0.wav,images/cls000_img0000.png,notanumber\n");
        std::fs::write(&manifest, text).unwrap();
        let (samples, report) = load_manifest(&manifest, Some(16_000)).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(report.skipped.len(), 2);
    }

    #[test]
    fn empty_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        std::fs::write(&path, "wav_path,image_path,class_id\n").unwrap();
        assert!(load_manifest(&path, None).is_err());
    }
}
