//! Access enforcement: the query gateway, direct-storage tokens and the
//! key service. All three authorize through [`Enforcer::authorize`], so
//! they agree with each other and with policy evaluation.

pub mod crypto;
pub mod gateway;
pub mod kms;
pub mod sql;
pub mod token;

use serde::{Deserialize, Serialize};

pub use crypto::CryptoError;
pub use gateway::{decrypt_dataset, encrypt_dataset, fetch_with_token, KeyGrant, TokenGrant};
pub use kms::{DataKey, KeyRecord, KeyStore, PlatformSecret, SecretError, SECRET_ENV};
pub use sql::{parse_query, Query, SqlError};
pub use token::{sign, verify_token, AccessToken, TokenPayload, Verification, DEFAULT_TTL_SECONDS};

use crate::classification::Classification;
use crate::mesh::{MeshGraph, PortRef};
use crate::policy::{AccessRequest, Action, Decision, Effect, PolicyError, PolicySet, Subject};
use crate::store::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Gateway,
    Token,
    Key,
}

#[derive(Debug, thiserror::Error)]
pub enum EnforcementError {
    #[error("resource `{0}` does not resolve against the mesh")]
    Unresolved(String),
    #[error("port `{0}` is UNTAGGED; it must be classified before any access")]
    Untagged(PortRef),
    #[error("port `{0}` is not a sql port")]
    NotSql(PortRef),
    #[error("port `{0}` does not have encryption enabled")]
    EncryptionDisabled(PortRef),
    #[error("port `{0}` has no data key")]
    NoKey(PortRef),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("unknown column `{column}` on `{port}`")]
    UnknownColumn { port: PortRef, column: String },
    #[error(transparent)]
    Query(#[from] SqlError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl From<PolicyError> for EnforcementError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::Unresolved(r) => EnforcementError::Unresolved(r),
            other => EnforcementError::Unresolved(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDecision {
    /// `None` for a whole-port request on a port without a schema.
    pub column: Option<String>,
    pub decision: Decision,
}

/// Outcome of authorizing one subject against one port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortAuthorization {
    pub port: PortRef,
    pub action: Action,
    pub effect: Effect,
    pub decisions: Vec<ColumnDecision>,
    pub denied_columns: Vec<String>,
}

impl PortAuthorization {
    pub fn is_allow(&self) -> bool {
        self.effect == Effect::Allow
    }

    /// The decision that settled the outcome: the first denying one, or the
    /// first one when everything allowed.
    pub fn decisive(&self) -> Option<&Decision> {
        self.decisions
            .iter()
            .find(|d| !d.decision.is_allow())
            .or_else(|| self.decisions.first())
            .map(|d| &d.decision)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome<T> {
    Granted { grant: T, authorization: PortAuthorization },
    Denied { authorization: PortAuthorization },
}

impl<T> Outcome<T> {
    pub fn authorization(&self) -> &PortAuthorization {
        match self {
            Outcome::Granted { authorization, .. } | Outcome::Denied { authorization } => authorization,
        }
    }

    pub fn grant(&self) -> Option<&T> {
        match self {
            Outcome::Granted { grant, .. } => Some(grant),
            Outcome::Denied { .. } => None,
        }
    }

    pub fn is_granted(&self) -> bool {
        matches!(self, Outcome::Granted { .. })
    }

    pub(crate) fn from_authorization(authorization: PortAuthorization, grant: impl FnOnce() -> T) -> Self {
        if authorization.is_allow() {
            Outcome::Granted {
                grant: grant(),
                authorization,
            }
        } else {
            Outcome::Denied { authorization }
        }
    }
}

/// A read-only view of the state enforcement decides against.
#[derive(Clone, Copy)]
pub struct Enforcer<'a> {
    pub graph: &'a MeshGraph,
    pub classification: &'a Classification,
    pub policies: &'a PolicySet,
}

impl<'a> Enforcer<'a> {
    pub fn new(graph: &'a MeshGraph, classification: &'a Classification, policies: &'a PolicySet) -> Self {
        Self {
            graph,
            classification,
            policies,
        }
    }

    /// Evaluates one request per column (all schema columns when `columns`
    /// is `None`); the port is allowed only if every column is. Ports
    /// without a schema get a single whole-port request.
    ///
    /// Untagged ports are refused outright.
    pub fn authorize(
        &self,
        subject: &Subject,
        action: Action,
        port: &PortRef,
        columns: Option<&[String]>,
    ) -> Result<PortAuthorization, EnforcementError> {
        let output = self
            .graph
            .output_port(port)
            .ok_or_else(|| EnforcementError::Unresolved(port.to_string()))?;
        if self.classification.get(port).is_none_or(|s| s.is_untagged()) {
            return Err(EnforcementError::Untagged(port.clone()));
        }
        let columns: Vec<Option<String>> = match columns {
            Some(cols) if !cols.is_empty() => cols.iter().cloned().map(Some).collect(),
            _ if output.schema.is_empty() => vec![None],
            _ => output.schema.iter().map(|c| Some(c.name.clone())).collect(),
        };
        let base = AccessRequest::resolve(self.graph, self.classification, subject.clone(), action, port, None)?;
        let mut decisions = Vec::with_capacity(columns.len());
        for column in columns {
            if let Some(c) = &column {
                if output.column(c).is_none() {
                    return Err(EnforcementError::UnknownColumn {
                        port: port.clone(),
                        column: c.clone(),
                    });
                }
            }
            let decision = self.policies.evaluate(&base.for_column(column.as_deref()));
            decisions.push(ColumnDecision { column, decision });
        }
        let denied_columns: Vec<String> = decisions
            .iter()
            .filter(|d| !d.decision.is_allow())
            .filter_map(|d| d.column.clone())
            .collect();
        let effect = if decisions.iter().all(|d| d.decision.is_allow()) {
            Effect::Allow
        } else {
            Effect::Deny
        };
        Ok(PortAuthorization {
            port: port.clone(),
            action,
            effect,
            decisions,
            denied_columns,
        })
    }
}
