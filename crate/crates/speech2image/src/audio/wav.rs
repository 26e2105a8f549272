//! Single-channel 16-bit PCM WAV IO.

use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

/// Read a mono 16-bit PCM WAV file. Samples are scaled to [-1, 1).
/// Any sample rate is accepted here; rate mismatches are rejected by the
/// consumers that require a specific rate.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "{}: expected mono, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Format(format!(
            "{}: expected 16-bit PCM, got {:?}/{} bits",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.into_samples::<i16>().collect();
    let samples = samples.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(AudioClip {
        samples: samples.iter().map(|&s| s as f64 / 32768.0).collect(),
        sample_rate: spec.sample_rate,
    })
}

/// Write a clip as mono 16-bit PCM, clamping amplitudes to [-1, 1].
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer
            .write_sample(v)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    writer
        .finalize()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let clip = AudioClip::new(
            (0..500).map(|i| ((i as f64) * 0.07).sin() * 0.8).collect(),
            16_000,
        );
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.samples.len(), clip.samples.len());
        // scale asymmetry (write x32767, read /32768) plus half-step rounding
        for (a, b) in clip.samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }

    #[test]
    fn missing_file_is_format_error() {
        assert!(read_wav(Path::new("/nonexistent/x.wav")).is_err());
    }
}
