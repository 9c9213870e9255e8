//! Desk-scale storage behind port addresses.
//!
//! `sql` and `streaming` ports are CSV files with a header row (streaming
//! ports are append-only event logs); `blob` ports are opaque bytes. Ports
//! with encryption enabled hold `nonce || ciphertext || tag` under the
//! port's data key, and so do `by_copy` materializations of them, since a
//! copy is taken byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enforcement::crypto::{open, seal};
use crate::enforcement::kms::KeyStore;
use crate::mesh::{ConsumptionStyle, MeshGraph, PortRef};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error on `{address}`: {source}")]
    Io {
        address: String,
        #[source]
        source: std::io::Error,
    },
    #[error("`{0}` is not valid CSV: {1}")]
    Csv(String, String),
    #[error("cannot decrypt `{0}`: authentication failed")]
    Decrypt(String),
    #[error("port `{0}` has encryption enabled but no data key")]
    MissingKey(PortRef),
    #[error("`{0}` has no platform-managed store")]
    Unmanaged(String),
}

/// Identifies a platform-managed store.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "port", rename_all = "snake_case")]
pub enum StoreId {
    /// The dataset behind an output port.
    Output(PortRef),
    /// The materialization of a `by_copy` input port.
    Copy(PortRef),
}

impl fmt::Display for StoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreId::Output(p) => write!(f, "output {p}"),
            StoreId::Copy(p) => write!(f, "copy {p}"),
        }
    }
}

/// Plaintext access to stores. Implementations handle encryption.
pub trait DatasetStore {
    /// `Ok(None)` when nothing has been written yet.
    fn load(&self, id: &StoreId) -> Result<Option<Vec<u8>>, StoreError>;
    fn save(&self, id: &StoreId, plaintext: &[u8]) -> Result<(), StoreError>;
    /// Unix seconds of the last write, when known.
    fn last_modified(&self, id: &StoreId) -> Option<u64>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[&str]) {
        self.rows.push(row.iter().map(|v| v.to_string()).collect());
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn from_csv(name: &str, bytes: &[u8]) -> Result<Self, StoreError> {
        if bytes.is_empty() {
            return Ok(Self::default());
        }
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let header = reader
            .headers()
            .map_err(|e| StoreError::Csv(name.to_string(), e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| StoreError::Csv(name.to_string(), e.to_string()))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        if !self.header.is_empty() {
            writer.write_record(&self.header).expect("in-memory write");
        }
        for row in &self.rows {
            writer.write_record(row).expect("in-memory write");
        }
        writer.into_inner().expect("in-memory flush")
    }
}

pub fn load_table(store: &dyn DatasetStore, id: &StoreId) -> Result<Option<Table>, StoreError> {
    match store.load(id)? {
        Some(bytes) => Table::from_csv(&id.to_string(), &bytes).map(Some),
        None => Ok(None),
    }
}

/// In-memory store, for tests and examples.
#[derive(Debug, Default)]
pub struct MemoryStore {
    data: Mutex<BTreeMap<StoreId, (Vec<u8>, u64)>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, id: StoreId, bytes: Vec<u8>, modified: u64) {
        self.data.lock().unwrap().insert(id, (bytes, modified));
    }
}

impl DatasetStore for MemoryStore {
    fn load(&self, id: &StoreId) -> Result<Option<Vec<u8>>, StoreError> {
        Ok(self.data.lock().unwrap().get(id).map(|(b, _)| b.clone()))
    }

    fn save(&self, id: &StoreId, plaintext: &[u8]) -> Result<(), StoreError> {
        let mut data = self.data.lock().unwrap();
        let modified = data.get(id).map(|(_, m)| *m).unwrap_or_default();
        data.insert(id.clone(), (plaintext.to_vec(), modified));
        Ok(())
    }

    fn last_modified(&self, id: &StoreId) -> Option<u64> {
        self.data.lock().unwrap().get(id).map(|(_, m)| *m)
    }
}

/// Filesystem store. Relative addresses resolve against `root`.
pub struct FsStore<'a> {
    root: &'a Path,
    graph: &'a MeshGraph,
    keys: &'a KeyStore,
}

impl<'a> FsStore<'a> {
    pub fn new(root: &'a Path, graph: &'a MeshGraph, keys: &'a KeyStore) -> Self {
        Self { root, graph, keys }
    }

    pub fn resolve(&self, address: &str) -> PathBuf {
        let path = Path::new(address);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    /// Address and, if encrypted, the port whose key protects the bytes.
    fn locate(&self, id: &StoreId) -> Result<(String, Option<PortRef>), StoreError> {
        match id {
            StoreId::Output(port) => {
                let out = self
                    .graph
                    .output_port(port)
                    .ok_or_else(|| StoreError::Unmanaged(id.to_string()))?;
                Ok((out.address.clone(), out.encryption_enabled.then(|| port.clone())))
            }
            StoreId::Copy(input_ref) => {
                let input = self
                    .graph
                    .input_port(input_ref)
                    .ok_or_else(|| StoreError::Unmanaged(id.to_string()))?;
                let address = match (&input.consumption_style, &input.copy_address) {
                    (ConsumptionStyle::ByCopy, Some(a)) => a.clone(),
                    _ => return Err(StoreError::Unmanaged(id.to_string())),
                };
                let encrypted_by = input.mesh_target().and_then(|t| {
                    self.graph
                        .output_port(t)
                        .filter(|o| o.encryption_enabled)
                        .map(|_| t.clone())
                });
                Ok((address, encrypted_by))
            }
        }
    }

    /// Raw bytes as stored, without decryption.
    pub fn load_raw(&self, id: &StoreId) -> Result<Option<Vec<u8>>, StoreError> {
        let (address, _) = self.locate(id)?;
        read_optional(&self.resolve(&address), &address)
    }

    pub fn save_raw(&self, id: &StoreId, bytes: &[u8]) -> Result<(), StoreError> {
        let (address, _) = self.locate(id)?;
        write_file(&self.resolve(&address), &address, bytes)
    }
}

fn read_optional(path: &Path, address: &str) -> Result<Option<Vec<u8>>, StoreError> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(Some(bytes)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(StoreError::Io {
            address: address.to_string(),
            source,
        }),
    }
}

fn write_file(path: &Path, address: &str, bytes: &[u8]) -> Result<(), StoreError> {
    let io = |source| StoreError::Io {
        address: address.to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

impl DatasetStore for FsStore<'_> {
    fn load(&self, id: &StoreId) -> Result<Option<Vec<u8>>, StoreError> {
        let (address, encrypted_by) = self.locate(id)?;
        let Some(bytes) = read_optional(&self.resolve(&address), &address)? else {
            return Ok(None);
        };
        match encrypted_by {
            None => Ok(Some(bytes)),
            Some(port) => {
                let key = self
                    .keys
                    .active_key(&port)
                    .ok_or_else(|| StoreError::MissingKey(port.clone()))?;
                open(key.material(), &bytes)
                    .map(Some)
                    .map_err(|_| StoreError::Decrypt(address))
            }
        }
    }

    fn save(&self, id: &StoreId, plaintext: &[u8]) -> Result<(), StoreError> {
        let (address, encrypted_by) = self.locate(id)?;
        let bytes = match encrypted_by {
            None => plaintext.to_vec(),
            Some(port) => {
                let key = self
                    .keys
                    .active_key(&port)
                    .ok_or_else(|| StoreError::MissingKey(port.clone()))?;
                seal(key.material(), plaintext)
            }
        };
        write_file(&self.resolve(&address), &address, &bytes)
    }

    fn last_modified(&self, id: &StoreId) -> Option<u64> {
        let (address, _) = self.locate(id).ok()?;
        let modified = std::fs::metadata(self.resolve(&address)).ok()?.modified().ok()?;
        modified.duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_empty_cells() {
        let mut t = Table::new(&["id", "email"]);
        t.push(&["c1", ""]);
        t.push(&["c2", "a,b@example.com"]);
        let back = Table::from_csv("t", &t.to_csv()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn empty_bytes_is_empty_table() {
        assert_eq!(Table::from_csv("t", b"").unwrap(), Table::default());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(Table::from_csv("t", b"a,b\n1\n"), Err(StoreError::Csv(..))));
    }
}
