//! Named tensor files.
//!
//! The binary file is a sequence of records, one per tensor:
//!
//! ```text
//! u64 LE   ndim
//! u64 LE   dims[ndim]
//! f64 LE   data[product(dims)]   (row-major)
//! ```
//!
//! Names live in a sidecar text manifest with one name per line, in record
//! order. Names must be non-empty, unique, and free of whitespace.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::invalid("tensor name", format!("{name:?} must be non-empty without whitespace")));
        }
        if self.index.contains_key(&name) {
            return Err(Error::invalid("tensor name", format!("duplicate name {name:?}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::invalid("weight store", format!("missing tensor {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serializes to `(binary, manifest)`.
    pub fn encode(&self) -> (Vec<u8>, String) {
        let mut bin = Vec::new();
        let mut manifest = String::new();
        for (name, t) in &self.entries {
            bin.extend_from_slice(&(t.shape().len() as u64).to_le_bytes());
            for &d in t.shape() {
                bin.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                bin.extend_from_slice(&v.to_le_bytes());
            }
            manifest.push_str(name);
            manifest.push('\n');
        }
        (bin, manifest)
    }

    pub fn decode(bin: &[u8], manifest: &str) -> Result<Self> {
        let names: Vec<&str> = manifest.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let mut reader = Reader { bytes: bin, pos: 0 };
        let mut store = WeightStore::new();
        for (i, name) in names.iter().enumerate() {
            let ndim = reader.u64(name)? as usize;
            if ndim == 0 || ndim > 8 {
                return Err(format_err(format!("record {i} ({name}): unsupported rank {ndim}")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(reader.u64(name)? as usize);
            }
            let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let len = len
                .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= reader.remaining()))
                .ok_or_else(|| format_err(format!("record {i} ({name}): shape {shape:?} exceeds file size")))?;
            let data = (0..len).map(|_| reader.f64(name)).collect::<Result<Vec<_>>>()?;
            let tensor = Tensor::new(shape, data)
                .map_err(|e| format_err(format!("record {i} ({name}): {e}")))?;
            store.insert(*name, tensor)?;
        }
        if reader.remaining() != 0 {
            return Err(format_err(format!(
                "{} trailing bytes after {} records named in the manifest",
                reader.remaining(),
                names.len()
            )));
        }
        Ok(store)
    }

    pub fn read(bin_path: &Path, manifest_path: &Path) -> Result<Self> {
        let bin = std::fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
        let manifest = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        Self::decode(&bin, &manifest)
    }
}

/// Default sidecar manifest path: `<file>.manifest`.
pub fn manifest_path_for(bin_path: &Path) -> std::path::PathBuf {
    let mut s = bin_path.as_os_str().to_owned();
    s.push(".manifest");
    s.into()
}

fn format_err(reason: String) -> Error {
    Error::Format {
        what: "weights file".into(),
        reason,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take8(&mut self, name: &str) -> Result<[u8; 8]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 8)
            .ok_or_else(|| format_err(format!("unexpected end of file in record {name:?}")))?;
        self.pos += 8;
        Ok(chunk.try_into().expect("8-byte slice"))
    }

    fn u64(&mut self, name: &str) -> Result<u64> {
        self.take8(name).map(u64::from_le_bytes)
    }

    fn f64(&mut self, name: &str) -> Result<f64> {
        self.take8(name).map(f64::from_le_bytes)
    }
}
