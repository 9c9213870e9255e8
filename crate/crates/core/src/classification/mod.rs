//! Sensitivity classification.
//!
//! Central governance defines labels and the obligations attached to them.
//! Domain teams tag their output ports; the platform carries labels along
//! composition edges so that every output of a product inherits the
//! effective labels of everything the product reads. Teams may override the
//! inherited labels; overrides that only add strictness are approved
//! automatically, everything else waits for a central review.

mod compliance;
mod forget;
mod overrides;
mod propagate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{check_name, MeshGraph, PortRef, ProductId};
use crate::store::StoreError;

pub use compliance::{check_obligations, ComplianceFinding, ComplianceReport};
pub use forget::{forget_subject, DeletionEntry, DeletionReport};
pub use overrides::{OverrideQueue, OverrideRequest, OverrideStatus, Verdict};
pub use propagate::{propagate, propagate_with_order, Classification, ClassificationState, OverrideView};

/// Built-in zero-obligation label that positively asserts non-sensitivity.
pub const PUBLIC_LABEL: &str = "public";

#[derive(Debug, Error)]
pub enum ClassificationError {
    #[error("label `{0}` is not registered")]
    UnknownLabel(String),
    #[error("label `{0}` is already registered")]
    DuplicateLabel(String),
    #[error("invalid label name `{0}`: {1}")]
    InvalidLabel(String, &'static str),
    #[error("output port `{0}` not found")]
    UnknownPort(PortRef),
    #[error("port `{port}` already has pending override #{id}")]
    PendingOverride { port: PortRef, id: u64 },
    #[error("override #{0} not found")]
    UnknownOverride(u64),
    #[error("override #{id} is {status:?}, only pending overrides can be reviewed")]
    NotPending { id: u64, status: OverrideStatus },
    #[error("mesh contains a cycle through {0:?}")]
    Cyclic(Vec<ProductId>),
    #[error("not a topological order: {0}")]
    InvalidOrder(String),
    #[error("port `{port}` carries subject-traceable data without a subject reference column")]
    MissingSubjectColumn { port: PortRef },
    #[error("store `{store}` has no column `{column}` to trace subjects by")]
    MissingSubjectData { store: String, column: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Obligation {
    EncryptAtRest,
    SubjectTraceability,
    InsiderAccessOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitivityLabel {
    pub name: String,
    pub obligations: BTreeSet<Obligation>,
    #[serde(default)]
    pub description: String,
}

/// The global label registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRegistry {
    labels: BTreeMap<String, SensitivityLabel>,
}

impl Default for LabelRegistry {
    fn default() -> Self {
        let public = SensitivityLabel {
            name: PUBLIC_LABEL.to_string(),
            obligations: BTreeSet::new(),
            description: "Explicitly not sensitive".to_string(),
        };
        Self {
            labels: BTreeMap::from([(PUBLIC_LABEL.to_string(), public)]),
        }
    }
}

impl LabelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn define_level(
        &mut self,
        name: &str,
        obligations: impl IntoIterator<Item = Obligation>,
        description: &str,
    ) -> Result<&SensitivityLabel, ClassificationError> {
        check_name(name).map_err(|e| ClassificationError::InvalidLabel(name.to_string(), e))?;
        if self.labels.contains_key(name) {
            return Err(ClassificationError::DuplicateLabel(name.to_string()));
        }
        let label = SensitivityLabel {
            name: name.to_string(),
            obligations: obligations.into_iter().collect(),
            description: description.to_string(),
        };
        Ok(self.labels.entry(name.to_string()).or_insert(label))
    }

    pub fn get(&self, name: &str) -> Option<&SensitivityLabel> {
        self.labels.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.labels.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SensitivityLabel> {
        self.labels.values()
    }

    pub fn ensure_registered<'a>(
        &self,
        labels: impl IntoIterator<Item = &'a String>,
    ) -> Result<(), ClassificationError> {
        for label in labels {
            if !self.contains(label) {
                return Err(ClassificationError::UnknownLabel(label.clone()));
            }
        }
        Ok(())
    }

    /// Union of the obligations implied by `labels`. Unknown labels imply nothing.
    pub fn obligations_of<'a>(&self, labels: impl IntoIterator<Item = &'a String>) -> BTreeSet<Obligation> {
        labels
            .into_iter()
            .filter_map(|l| self.labels.get(l))
            .flat_map(|l| l.obligations.iter().copied())
            .collect()
    }
}

/// Replaces the declared labels of an output port and re-runs propagation.
pub fn tag_port(
    graph: &mut MeshGraph,
    registry: &LabelRegistry,
    overrides: &OverrideQueue,
    port: &PortRef,
    labels: BTreeSet<String>,
) -> Result<(Classification, ClassificationState), ClassificationError> {
    registry.ensure_registered(&labels)?;
    let output = graph
        .get_mut(&port.product)
        .and_then(|p| p.output_port_mut(&port.port))
        .ok_or_else(|| ClassificationError::UnknownPort(port.clone()))?;
    output.labels = labels;
    let classification = propagate(graph, overrides)?;
    let state = classification
        .get(port)
        .cloned()
        .ok_or_else(|| ClassificationError::UnknownPort(port.clone()))?;
    Ok((classification, state))
}
