//! Spectrogram cache file: little-endian header {bands: u32, frames: u32}
//! followed by bands*frames f32 values in band-major order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::LogMelSpectrogram;
use crate::error::{Error, Result};

pub fn write_spectrogram_cache(path: &Path, spec: &LogMelSpectrogram) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&(spec.bands() as u32).to_le_bytes())?;
    f.write_all(&(spec.frames() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(spec.values.len() * 4);
    for &v in spec.values.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_spectrogram_cache(path: &Path) -> Result<LogMelSpectrogram> {
    let mut f = std::fs::File::open(path)?;
    let mut hdr = [0u8; 8];
    f.read_exact(&mut hdr)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let bands = u32::from_le_bytes(hdr[0..4].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(hdr[4..8].try_into().unwrap()) as usize;
    let mut data = Vec::new();
    f.read_to_end(&mut data)?;
    if data.len() != bands * frames * 4 {
        return Err(Error::Format(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            bands * frames * 4,
            data.len()
        )));
    }
    let mut values = Array2::<f64>::zeros((bands, frames));
    for (i, v) in values.iter_mut().enumerate() {
        let b: [u8; 4] = data[i * 4..i * 4 + 4].try_into().unwrap();
        *v = f32::from_le_bytes(b) as f64;
    }
    Ok(LogMelSpectrogram { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_roundtrip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.bin");
        let values = Array2::from_shape_fn((40, 7), |(b, f)| -((b * 7 + f) as f64) * 0.123);
        let spec = LogMelSpectrogram { values };
        write_spectrogram_cache(&path, &spec).unwrap();
        let back = read_spectrogram_cache(&path).unwrap();
        assert_eq!((back.bands(), back.frames()), (40, 7));
        for (a, b) in spec.values.iter().zip(back.values.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn truncated_cache_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, [1u8, 0, 0, 0, 2, 0, 0, 0, 9]).unwrap();
        assert!(read_spectrogram_cache(&path).is_err());
    }
}
