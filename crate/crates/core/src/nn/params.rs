use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    value: Tensor,
    trainable: bool,
}

/// Registry of named parameter tensors and non-trainable buffers.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

/// One manifest line: where a tensor lives in the flat blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, true)
    }

    /// Registers state that is checkpointed but never optimized (e.g. running statistics).
    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, false)
    }

    fn push(&mut self, name: String, value: Tensor, trainable: bool) -> ParamId {
        debug_assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(Entry { name, value, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let slot = &mut self.entries[id.0].value;
        if slot.shape() != value.shape() {
            return Err(Error::shape(
                "set_param",
                format!("{:?} vs {:?}", slot.shape(), value.shape()),
            ));
        }
        *slot = value;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Number of scalar trainable parameters among `ids`.
    pub fn count(&self, ids: &[ParamId]) -> usize {
        ids.iter()
            .filter(|id| self.is_trainable(**id))
            .map(|id| self.get(*id).numel())
            .sum()
    }

    /// Number of scalar trainable parameters in the whole store.
    pub fn count_all(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.numel()).sum()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let mut offset = 0;
        self.entries
            .iter()
            .map(|e| {
                let m = ManifestEntry {
                    name: e.name.clone(),
                    offset,
                    shape: e.value.shape().to_vec(),
                    trainable: e.trainable,
                };
                offset += e.value.numel();
                m
            })
            .collect()
    }

    /// Little-endian `f64` values of every entry in registration order.
    pub fn to_blob(&self) -> Vec<u8> {
        let total: usize = self.entries.iter().map(|e| e.value.numel()).sum();
        let mut out = Vec::with_capacity(total * 8);
        for e in &self.entries {
            for v in e.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Overwrites values from a blob laid out per `manifest`; names and shapes must match.
    pub fn load_blob(&mut self, manifest: &[ManifestEntry], blob: &[u8]) -> Result<()> {
        if manifest.len() != self.entries.len() {
            return Err(Error::Data(format!(
                "manifest has {} entries, model has {}",
                manifest.len(),
                self.entries.len()
            )));
        }
        for (entry, m) in self.entries.iter_mut().zip(manifest) {
            if entry.name != m.name || entry.value.shape() != m.shape.as_slice() {
                return Err(Error::Data(format!(
                    "manifest entry {} {:?} does not match {} {:?}",
                    m.name,
                    m.shape,
                    entry.name,
                    entry.value.shape()
                )));
            }
            let n = entry.value.numel();
            let bytes = blob
                .get(m.offset * 8..(m.offset + n) * 8)
                .ok_or_else(|| Error::Data(format!("blob too short for {}", m.name)))?;
            for (dst, chunk) in entry.value.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
        }
        Ok(())
    }

    /// Writes `<stem>.bin` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.bin")), self.to_blob())?;
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(dir.join(format!("{stem}.json")), manifest)?;
        Ok(())
    }

    pub fn load(&mut self, dir: &Path, stem: &str) -> Result<()> {
        let blob = fs::read(dir.join(format!("{stem}.bin")))?;
        let manifest: Vec<ManifestEntry> =
            serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        self.load_blob(&manifest, &blob)
    }
}
