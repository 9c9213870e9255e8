//! The three enforcement entry points plus the storage-side helpers.

use serde::{Deserialize, Serialize};

use super::crypto::{open, seal, CryptoError};
use super::kms::{DataKey, KeyStore, PlatformSecret};
use super::sql::parse_query;
use super::token::{sign, verify_token, AccessToken, TokenPayload, Verification};
use super::{EnforcementError, Enforcer, Outcome};
use crate::mesh::{InterfaceType, MeshGraph, PortRef};
use crate::policy::{Action, Subject};
use crate::store::{load_table, DatasetStore, FsStore, StoreId, Table};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrant {
    pub token: AccessToken,
    /// Where to present the token.
    pub address: String,
    pub interface: InterfaceType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyGrant {
    pub key_id: String,
    pub port: PortRef,
    /// Hex key material; only ever produced here.
    pub key: String,
}

impl KeyGrant {
    pub fn data_key(&self) -> Option<DataKey> {
        DataKey::from_hex(&self.key)
    }
}

impl Enforcer<'_> {
    /// Runs a query through the gateway. Every referenced column must be
    /// allowed; a denial names each denied column.
    pub fn gateway_query(
        &self,
        subject: &Subject,
        query_text: &str,
        store: &dyn DatasetStore,
    ) -> Result<Outcome<Table>, EnforcementError> {
        let query = parse_query(query_text)?;
        let port = &query.from;
        let output = self
            .graph
            .output_port(port)
            .ok_or_else(|| EnforcementError::Unresolved(port.to_string()))?;
        if output.interface != InterfaceType::Sql {
            return Err(EnforcementError::NotSql(port.clone()));
        }
        let schema: Vec<String> = output.schema.iter().map(|c| c.name.clone()).collect();
        let columns = query.referenced_columns(&schema);
        let authorization = self.authorize(subject, Action::Read, port, Some(&columns))?;
        if !authorization.is_allow() {
            return Ok(Outcome::Denied { authorization });
        }
        let table = load_table(store, &StoreId::Output(port.clone()))?.unwrap_or_else(|| Table {
            header: schema.clone(),
            rows: Vec::new(),
        });
        let rows = query.execute(&table).map_err(|_| EnforcementError::UnknownColumn {
            port: port.clone(),
            column: columns.join(","),
        })?;
        Ok(Outcome::Granted {
            grant: rows,
            authorization,
        })
    }

    /// Issues a signed token for direct storage access, with the port's
    /// address. Withheld unless every column of the port is allowed.
    pub fn issue_token(
        &self,
        subject: &Subject,
        port: &PortRef,
        action: Action,
        ttl_seconds: u64,
        now: u64,
        secret: &PlatformSecret,
    ) -> Result<Outcome<TokenGrant>, EnforcementError> {
        let authorization = self.authorize(subject, action, port, None)?;
        let output = self.graph.output_port(port).expect("authorize resolved the port");
        Ok(Outcome::from_authorization(authorization, || TokenGrant {
            token: sign(TokenPayload::new(&subject.user, port, action, now, ttl_seconds), secret),
            address: output.address.clone(),
            interface: output.interface,
        }))
    }

    /// Hands out a data key if the subject may read the key's port.
    pub fn request_key(
        &self,
        subject: &Subject,
        keys: &KeyStore,
        key_id: &str,
    ) -> Result<Outcome<KeyGrant>, EnforcementError> {
        let record = keys
            .get(key_id)
            .ok_or_else(|| EnforcementError::UnknownKey(key_id.to_string()))?;
        let authorization = self.authorize(subject, Action::Read, &record.port, None)?;
        Ok(Outcome::from_authorization(authorization, || KeyGrant {
            key_id: record.key_id.clone(),
            port: record.port.clone(),
            key: record.data_key().to_hex(),
        }))
    }
}

/// Encrypts a dataset under the port's active key. Returns the sealed bytes
/// and the key id consumers must request.
pub fn encrypt_dataset(
    graph: &MeshGraph,
    keys: &KeyStore,
    port: &PortRef,
    plaintext: &[u8],
) -> Result<(Vec<u8>, String), EnforcementError> {
    let output = graph
        .output_port(port)
        .ok_or_else(|| EnforcementError::Unresolved(port.to_string()))?;
    if !output.encryption_enabled {
        return Err(EnforcementError::EncryptionDisabled(port.clone()));
    }
    let record = keys
        .active_key(port)
        .ok_or_else(|| EnforcementError::NoKey(port.clone()))?;
    Ok((seal(record.material(), plaintext), record.key_id.clone()))
}

pub fn decrypt_dataset(ciphertext: &[u8], key: &DataKey) -> Result<Vec<u8>, CryptoError> {
    open(key.material(), ciphertext)
}

/// What a storage node does before serving bytes: verify the presented
/// token for this port, then hand out the stored bytes as they are.
pub fn fetch_with_token(
    store: &FsStore<'_>,
    token: &str,
    port: &PortRef,
    now: u64,
    secret: &PlatformSecret,
) -> Result<Result<Vec<u8>, Verification>, EnforcementError> {
    match verify_token(token, port, now, secret) {
        Verification::Valid => Ok(Ok(store.load_raw(&StoreId::Output(port.clone()))?.unwrap_or_default())),
        other => Ok(Err(other)),
    }
}
