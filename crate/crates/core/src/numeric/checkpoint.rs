//! Checkpoint directories: a text manifest plus one little-endian `f64`
//! blob holding every parameter back to back in manifest order.
//!
//! ```text
//! version=1
//! <key>=<value>          (model-specific header entries)
//! param=<name> <rows> <cols>
//! ...
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{DsdError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.txt";
pub const WEIGHTS: &str = "weights.bin";

/// Parsed manifest header (everything except `param=` lines).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
    pub params: Vec<(String, usize, usize)>,
}

impl Manifest {
    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| DsdError::Checkpoint(format!("manifest missing key {key}")))
    }

    pub fn parse_usize(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| DsdError::Checkpoint(format!("bad integer for {key}")))
    }

    pub fn parse_f64(&self, key: &str) -> Result<f64> {
        self.get(key)?
            .parse()
            .map_err(|_| DsdError::Checkpoint(format!("bad float for {key}")))
    }
}

pub fn save(dir: &Path, header: &[(&str, String)], store: &ParamStore) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = format!("version={FORMAT_VERSION}\n");
    for (k, v) in header {
        if k.contains('=') || v.contains('\n') {
            return Err(DsdError::Checkpoint(format!("invalid header entry {k}")));
        }
        manifest.push_str(&format!("{k}={v}\n"));
    }
    let mut blob = Vec::with_capacity(store.num_scalars() * 8);
    for (name, t) in store.iter() {
        let (r, c) = t.dims();
        manifest.push_str(&format!("param={name} {r} {c}\n"));
        for x in t.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    let mut f = fs::File::create(dir.join(WEIGHTS))?;
    f.write_all(&blob)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let mut m = Manifest::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| DsdError::Parse {
                line: i + 1,
                msg: "expected key=value".into(),
            })?;
        if k == "param" {
            let parts: Vec<&str> = v.split_whitespace().collect();
            let bad = || DsdError::Parse {
                line: i + 1,
                msg: "expected param=<name> <rows> <cols>".into(),
            };
            if parts.len() != 3 {
                return Err(bad());
            }
            let r = parts[1].parse().map_err(|_| bad())?;
            let c = parts[2].parse().map_err(|_| bad())?;
            m.params.push((parts[0].to_string(), r, c));
        } else {
            m.entries.insert(k.to_string(), v.to_string());
        }
    }
    let version: u32 = m
        .get("version")?
        .parse()
        .map_err(|_| DsdError::Checkpoint("bad version".into()))?;
    if version != FORMAT_VERSION {
        return Err(DsdError::Checkpoint(format!("unsupported version {version}")));
    }
    Ok(m)
}

/// Loads weights into a store whose layout must match the manifest exactly.
pub fn load_into(dir: &Path, manifest: &Manifest, store: &mut ParamStore) -> Result<()> {
    if manifest.params.len() != store.len() {
        return Err(DsdError::Checkpoint(format!(
            "manifest lists {} parameters, model has {}",
            manifest.params.len(),
            store.len()
        )));
    }
    let blob = fs::read(dir.join(WEIGHTS))?;
    let mut off = 0usize;
    for (id, (name, r, c)) in store.ids().collect::<Vec<_>>().into_iter().zip(&manifest.params) {
        if store.name(id) != name || store.get(id).dims() != (*r, *c) {
            return Err(DsdError::Checkpoint(format!(
                "parameter {name} [{r}x{c}] does not match model layout {} {:?}",
                store.name(id),
                store.get(id).shape()
            )));
        }
        let n = r * c;
        let end = off + n * 8;
        if end > blob.len() {
            return Err(DsdError::Checkpoint("weights file truncated".into()));
        }
        let data = blob[off..end]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        *store.get_mut(id) = Tensor::from_vec(*r, *c, data);
        off = end;
    }
    if off != blob.len() {
        return Err(DsdError::Checkpoint("trailing bytes in weights file".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ParamStore::new();
        s.add("a.w", Tensor::from_vec(2, 2, vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE]));
        s.add("a.b", Tensor::from_vec(1, 2, vec![0.1, 1e300]));
        save(dir.path(), &[("latent", "8".into())], &s).unwrap();
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m.parse_usize("latent").unwrap(), 8);
        let mut t = ParamStore::new();
        t.add("a.w", Tensor::zeros(2, 2));
        t.add("a.b", Tensor::zeros(1, 2));
        load_into(dir.path(), &m, &mut t).unwrap();
        assert_eq!(s.tensors(), t.tensors());
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ParamStore::new();
        s.add("x", Tensor::zeros(1, 3));
        save(dir.path(), &[], &s).unwrap();
        let m = read_manifest(dir.path()).unwrap();
        let mut t = ParamStore::new();
        t.add("x", Tensor::zeros(3, 1));
        assert!(load_into(dir.path(), &m, &mut t).is_err());
    }
}
