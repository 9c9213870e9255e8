//! Platform secret and per-port data keys.
//!
//! Key material is never stored or logged. Each key is derived from the
//! platform secret, the key id and the port, so replaying the event log
//! with the same secret restores every key.

use std::collections::BTreeMap;
use std::fmt;

use hmac::{Hmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::crypto::KEY_LEN;
use crate::mesh::PortRef;

pub const SECRET_ENV: &str = "MESH_SECRET";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SecretError {
    #[error("{SECRET_ENV} is not set")]
    Missing,
    #[error("platform secret must be 64 hex characters (256 bits)")]
    Invalid,
}

type HmacSha256 = Hmac<Sha256>;

#[derive(Clone)]
pub struct PlatformSecret([u8; 32]);

impl fmt::Debug for PlatformSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PlatformSecret(..)")
    }
}

impl PlatformSecret {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        PlatformSecret(bytes)
    }

    pub fn from_hex(text: &str) -> Result<Self, SecretError> {
        let bytes = hex::decode(text.trim()).map_err(|_| SecretError::Invalid)?;
        let bytes: [u8; 32] = bytes.try_into().map_err(|_| SecretError::Invalid)?;
        Ok(PlatformSecret(bytes))
    }

    pub fn from_env() -> Result<Self, SecretError> {
        let text = std::env::var(SECRET_ENV).map_err(|_| SecretError::Missing)?;
        Self::from_hex(&text)
    }

    pub fn generate() -> Self {
        let mut bytes = [0u8; 32];
        rand::thread_rng().fill_bytes(&mut bytes);
        PlatformSecret(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn mac(&self, message: &[u8]) -> [u8; 32] {
        let mut mac = HmacSha256::new_from_slice(&self.0).expect("HMAC accepts any key length");
        mac.update(message);
        mac.finalize().into_bytes().into()
    }

    /// Constant-time MAC check.
    pub fn verify_mac(&self, message: &[u8], tag: &[u8]) -> bool {
        let mut mac = HmacSha256::new_from_slice(&self.0).expect("HMAC accepts any key length");
        mac.update(message);
        mac.verify_slice(tag).is_ok()
    }

    fn derive_key(&self, key_id: &str, port: &PortRef) -> [u8; KEY_LEN] {
        self.mac(format!("datamesh/data-key/v1/{key_id}/{port}").as_bytes())
    }
}

/// 256-bit data key. `Debug` never prints the bytes.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct DataKey([u8; KEY_LEN]);

impl DataKey {
    pub fn material(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        DataKey(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Option<Self> {
        let bytes: [u8; KEY_LEN] = hex::decode(text).ok()?.try_into().ok()?;
        Some(DataKey(bytes))
    }
}

impl fmt::Debug for DataKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DataKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub key_id: String,
    pub port: PortRef,
    pub created_at: u64,
    #[serde(skip)]
    key: DataKey,
}

impl KeyRecord {
    pub fn material(&self) -> &[u8; KEY_LEN] {
        self.key.material()
    }

    pub fn data_key(&self) -> &DataKey {
        &self.key
    }
}

/// Key registry: one active key per encrypted port. Serializes without
/// material.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KeyStore {
    records: BTreeMap<String, KeyRecord>,
    active: BTreeMap<PortRef, String>,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next key id; deterministic so replay reproduces it.
    pub fn next_id(&self) -> String {
        format!("key-{:04}", self.records.len() + 1)
    }

    /// Registers a key and makes it the port's active key.
    pub fn create_key(&mut self, secret: &PlatformSecret, key_id: &str, port: &PortRef, created_at: u64) -> &KeyRecord {
        let record = KeyRecord {
            key_id: key_id.to_string(),
            port: port.clone(),
            created_at,
            key: DataKey(secret.derive_key(key_id, port)),
        };
        self.records.insert(key_id.to_string(), record);
        self.active.insert(port.clone(), key_id.to_string());
        &self.records[key_id]
    }

    pub fn get(&self, key_id: &str) -> Option<&KeyRecord> {
        self.records.get(key_id)
    }

    pub fn active_key(&self, port: &PortRef) -> Option<&KeyRecord> {
        self.active.get(port).and_then(|id| self.records.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &KeyRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Forgets which key is active for ports that no longer exist. Records stay,
    /// so old ciphertexts remain decryptable by id.
    pub fn retain_active(&mut self, mut exists: impl FnMut(&PortRef) -> bool) {
        self.active.retain(|p, _| exists(p));
    }
}
