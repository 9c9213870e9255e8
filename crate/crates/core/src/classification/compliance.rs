use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Classification, ClassificationError, LabelRegistry, Obligation};
use crate::mesh::{MeshGraph, PortRef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum ComplianceFinding {
    /// Nothing declared, nothing inherited, no reviewed override.
    Untagged,
    EncryptAtRestUnmet,
    SubjectTraceabilityUnmet,
    /// Informational: enforced by the policy engine at access time.
    InsiderAccessOnly,
}

impl ComplianceFinding {
    pub fn is_violation(&self) -> bool {
        !matches!(self, ComplianceFinding::InsiderAccessOnly)
    }

    pub fn describe(&self) -> &'static str {
        match self {
            ComplianceFinding::Untagged => "UNTAGGED: port must be classified before it can be processed",
            ComplianceFinding::EncryptAtRestUnmet => "encrypt_at_rest unmet: encryption is not enabled on the port",
            ComplianceFinding::SubjectTraceabilityUnmet => {
                "subject_traceability unmet: schema has no subject_ref column"
            }
            ComplianceFinding::InsiderAccessOnly => "insider_access_only: enforced by access policies",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub port: PortRef,
    pub effective: BTreeSet<String>,
    pub obligations: BTreeSet<Obligation>,
    pub findings: Vec<ComplianceFinding>,
    pub compliant: bool,
}

impl ComplianceReport {
    pub fn is_untagged(&self) -> bool {
        self.findings.contains(&ComplianceFinding::Untagged)
    }

    /// Fixed-width text rendering for terminals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let labels = if self.effective.is_empty() {
            "-".to_string()
        } else {
            self.effective.iter().cloned().collect::<Vec<_>>().join(", ")
        };
        let _ = writeln!(out, "port       {}", self.port);
        let _ = writeln!(out, "labels     {labels}");
        let _ = writeln!(out, "compliant  {}", if self.compliant { "yes" } else { "NO" });
        for f in &self.findings {
            let marker = if f.is_violation() { "!!" } else { "--" };
            let _ = writeln!(out, "  {marker} {}", f.describe());
        }
        out
    }
}

pub fn check_obligations(
    graph: &MeshGraph,
    classification: &Classification,
    registry: &LabelRegistry,
    port: &PortRef,
) -> Result<ComplianceReport, ClassificationError> {
    let output = graph
        .output_port(port)
        .ok_or_else(|| ClassificationError::UnknownPort(port.clone()))?;
    let state = classification
        .get(port)
        .ok_or_else(|| ClassificationError::UnknownPort(port.clone()))?;
    let obligations = registry.obligations_of(&state.effective);

    let mut findings = Vec::new();
    if state.is_untagged() {
        findings.push(ComplianceFinding::Untagged);
    }
    for obligation in &obligations {
        match obligation {
            Obligation::EncryptAtRest if !output.encryption_enabled => {
                findings.push(ComplianceFinding::EncryptAtRestUnmet)
            }
            Obligation::SubjectTraceability if output.subject_column().is_none() => {
                findings.push(ComplianceFinding::SubjectTraceabilityUnmet)
            }
            Obligation::InsiderAccessOnly => findings.push(ComplianceFinding::InsiderAccessOnly),
            _ => {}
        }
    }
    let compliant = !findings.iter().any(ComplianceFinding::is_violation);
    Ok(ComplianceReport {
        port: port.clone(),
        effective: state.effective.clone(),
        obligations,
        findings,
        compliant,
    })
}
