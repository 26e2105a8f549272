//! Versioned binary checkpoints: named f64 tensors plus a config JSON blob.
//!
//! Layout (all integers little-endian):
//! magic "S2CK" | version u32 | kind len u16 + utf8 | config len u32 + utf8
//! | tensor count u32 | per tensor: name len u16 + utf8, ndim u8,
//! dims u32 x ndim, f64 payload.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::nn::Params;

const MAGIC: &[u8; 4] = b"S2CK";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub config_json: String,
    pub tensors: BTreeMap<String, ArrayD<f64>>,
}

impl Checkpoint {
    /// Snapshot a model's parameters and state tensors.
    pub fn from_model<M: Params + ?Sized>(kind: &str, config_json: &str, model: &mut M) -> Self {
        let mut tensors = BTreeMap::new();
        model.visit_params(&mut |name, value, _| {
            tensors.insert(name.to_string(), value.to_owned());
        });
        model.visit_state(&mut |name, value| {
            tensors.insert(name.to_string(), value.to_owned());
        });
        Self {
            kind: kind.to_string(),
            config_json: config_json.to_string(),
            tensors,
        }
    }

    /// Write every stored tensor back into a freshly constructed model.
    /// Fails if a model tensor is missing from the checkpoint or shaped
    /// differently.
    pub fn apply_to<M: Params + ?Sized>(&self, model: &mut M) -> Result<()> {
        let mut problems: Vec<String> = Vec::new();
        let mut apply = |name: &str, mut view: ndarray::ArrayViewMutD<f64>| {
            match self.tensors.get(name) {
                Some(t) if t.shape() == view.shape() => view.assign(t),
                Some(t) => problems.push(format!("{name}: shape {:?} vs {:?}", t.shape(), view.shape())),
                None => problems.push(format!("{name}: absent")),
            }
        };
        model.visit_params(&mut |name, view, _| apply(name, view));
        model.visit_state(&mut |name, view| apply(name, view));
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "checkpoint mismatch: {}",
                problems.join("; ")
            )))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&(self.kind.len() as u16).to_le_bytes())?;
        f.write_all(self.kind.as_bytes())?;
        f.write_all(&(self.config_json.len() as u32).to_le_bytes())?;
        f.write_all(self.config_json.as_bytes())?;
        f.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            f.write_all(&(name.len() as u16).to_le_bytes())?;
            f.write_all(name.as_bytes())?;
            f.write_all(&[t.ndim() as u8])?;
            for &d in t.shape() {
                f.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in t.iter() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));

        let mut magic = [0u8; 4];
        f.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut u32buf = [0u8; 4];
        f.read_exact(&mut u32buf).map_err(|_| bad("truncated version"))?;
        let version = u32::from_le_bytes(u32buf);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }

        let mut u16buf = [0u8; 2];
        f.read_exact(&mut u16buf).map_err(|_| bad("truncated kind"))?;
        let mut kind = vec![0u8; u16::from_le_bytes(u16buf) as usize];
        f.read_exact(&mut kind).map_err(|_| bad("truncated kind"))?;

        f.read_exact(&mut u32buf).map_err(|_| bad("truncated config"))?;
        let mut config = vec![0u8; u32::from_le_bytes(u32buf) as usize];
        f.read_exact(&mut config).map_err(|_| bad("truncated config"))?;

        f.read_exact(&mut u32buf).map_err(|_| bad("truncated tensor count"))?;
        let count = u32::from_le_bytes(u32buf) as usize;

        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            f.read_exact(&mut u16buf).map_err(|_| bad("truncated tensor name"))?;
            let mut name = vec![0u8; u16::from_le_bytes(u16buf) as usize];
            f.read_exact(&mut name).map_err(|_| bad("truncated tensor name"))?;
            let mut ndim = [0u8; 1];
            f.read_exact(&mut ndim).map_err(|_| bad("truncated ndim"))?;
            let mut dims = Vec::with_capacity(ndim[0] as usize);
            for _ in 0..ndim[0] {
                f.read_exact(&mut u32buf).map_err(|_| bad("truncated dims"))?;
                dims.push(u32::from_le_bytes(u32buf) as usize);
            }
            let len: usize = dims.iter().product();
            let mut data = vec![0.0f64; len];
            let mut b8 = [0u8; 8];
            for v in data.iter_mut() {
                f.read_exact(&mut b8).map_err(|_| bad("truncated payload"))?;
                *v = f64::from_le_bytes(b8);
            }
            let name = String::from_utf8(name).map_err(|_| bad("tensor name not utf8"))?;
            tensors.insert(
                name,
                ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|_| bad("bad tensor shape"))?,
            );
        }
        Ok(Self {
            kind: String::from_utf8(kind).map_err(|_| bad("kind not utf8"))?,
            config_json: String::from_utf8(config).map_err(|_| bad("config not utf8"))?,
            tensors,
        })
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "checkpoint kind '{}' where '{kind}' was required",
                self.kind
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Params};
    use ndarray::ArrayViewMutD;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct M {
        a: Dense,
    }

    impl Params for M {
        fn visit_params(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<f64>, ArrayViewMutD<f64>)) {
            self.a.visit("a", f);
        }
    }

    #[test]
    fn checkpoint_roundtrip_restores_exact_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = M {
            a: Dense::new(&mut rng, 4, 3),
        };
        let ck = Checkpoint::from_model("test", "{\"x\":1}", &mut m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();

        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.kind, "test");
        assert_eq!(back.config_json, "{\"x\":1}");

        let mut m2 = M {
            a: Dense::new(&mut rng, 4, 3),
        };
        back.apply_to(&mut m2).unwrap();
        assert_eq!(m.a.w, m2.a.w);
        assert_eq!(m.a.b, m2.a.b);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = M {
            a: Dense::new(&mut rng, 4, 3),
        };
        let ck = Checkpoint::from_model("test", "{}", &mut m);
        let mut other = M {
            a: Dense::new(&mut rng, 5, 3),
        };
        assert!(ck.apply_to(&mut other).is_err());
    }

    #[test]
    fn garbage_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
