use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::events::{Event, EventRecord};
use super::OperatorError;
use crate::canonical::content_hash;
use crate::classification::{propagate, tag_port, Classification, LabelRegistry, OverrideQueue};
use crate::contracts::{ContractRegistry, ContractReport};
use crate::enforcement::{Enforcer, KeyStore, PlatformSecret};
use crate::mesh::{MeshGraph, PortRef, PortTarget};
use crate::policy::{parse_policy, PolicySet};

/// Everything the control plane knows. Always the fold of the event log.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MeshState {
    pub graph: MeshGraph,
    pub labels: LabelRegistry,
    pub overrides: OverrideQueue,
    pub policies: PolicySet,
    pub keys: KeyStore,
    pub contracts: ContractRegistry,
    /// Latest contract report per output port.
    pub reports: BTreeMap<PortRef, ContractReport>,
    pub classification: Classification,
    pub last_seq: u64,
}

impl MeshState {
    pub fn new() -> Self {
        Self::default()
    }

    /// SHA-256 over the canonical JSON of the state. Key material is not
    /// part of the serialized form.
    pub fn hash(&self) -> String {
        content_hash(self).expect("state serializes")
    }

    pub fn enforcer(&self) -> Enforcer<'_> {
        Enforcer::new(&self.graph, &self.classification, &self.policies)
    }

    fn reclassify(&mut self) -> Result<(), OperatorError> {
        self.classification = propagate(&self.graph, &self.overrides)?;
        Ok(())
    }

    /// Applies one event. The live path and replay share this function, so
    /// a replayed log lands on the same state. On error `self` may be
    /// partially modified; callers apply to a copy.
    pub fn apply(&mut self, record: &EventRecord, secret: &PlatformSecret) -> Result<(), OperatorError> {
        if record.seq != self.last_seq + 1 {
            return Err(OperatorError::Replay {
                seq: record.seq,
                message: format!("expected sequence {}", self.last_seq + 1),
            });
        }
        let ts = record.ts;
        match &record.event {
            Event::LabelDefined {
                name,
                obligations,
                description,
            } => {
                self.labels
                    .define_level(name, obligations.iter().copied(), description)?;
            }
            Event::ProductRegistered { descriptor } => {
                let mut declared: BTreeSet<&String> = BTreeSet::new();
                for o in &descriptor.output_ports {
                    declared.extend(&o.labels);
                }
                for i in &descriptor.input_ports {
                    if let PortTarget::External(s) = &i.target {
                        declared.extend(&s.labels);
                    }
                }
                self.labels.ensure_registered(declared)?;
                let id = self.graph.register(descriptor.clone())?;
                let product = self.graph.get(&id).expect("just registered").clone();
                for output in product.output_ports.iter().filter(|o| o.encryption_enabled) {
                    let key_id = self.keys.next_id();
                    self.keys.create_key(secret, &key_id, &id.port(&output.id), ts);
                }
                for input in &product.input_ports {
                    if input.mesh_target().is_some() && !input.expectations.is_empty() {
                        self.contracts.register(&self.graph, &id.port(&input.id))?;
                    }
                }
                self.reclassify()?;
            }
            Event::ProductDecommissioned { product, force } => {
                self.graph.decommission(product, *force)?;
                let graph = &self.graph;
                self.overrides.retain_ports(|p| graph.output_port(p).is_some());
                self.contracts.retain_resolvable(graph);
                self.keys.retain_active(|p| graph.output_port(p).is_some());
                self.reports.retain(|p, _| graph.output_port(p).is_some());
                self.reclassify()?;
            }
            Event::PortTagged { port, labels } => {
                let (classification, _) =
                    tag_port(&mut self.graph, &self.labels, &self.overrides, port, labels.clone())?;
                self.classification = classification;
            }
            Event::OverrideRequested {
                port,
                labels,
                justification,
                id,
                status,
            } => {
                let current = self
                    .classification
                    .get(port)
                    .cloned()
                    .ok_or_else(|| crate::classification::ClassificationError::UnknownPort(port.clone()))?;
                let r =
                    self.overrides
                        .request(&current, &self.labels, labels.clone(), justification, &record.actor, ts)?;
                if r.id != *id || r.status != *status {
                    return Err(OperatorError::Replay {
                        seq: record.seq,
                        message: format!(
                            "override recomputed as #{} {:?}, log says #{id} {status:?}",
                            r.id, r.status
                        ),
                    });
                }
                self.reclassify()?;
            }
            Event::OverrideReviewed { id, verdict } => {
                self.overrides.review(*id, *verdict, &record.actor, ts)?;
                self.reclassify()?;
            }
            Event::PolicyApplied { name, text } => {
                let policy = parse_policy(text)?;
                if &policy.name != name {
                    return Err(OperatorError::BadRequest(format!(
                        "policy text is named `{}`, event says `{name}`",
                        policy.name
                    )));
                }
                self.policies.insert(policy);
            }
            Event::ContractRun { report } => {
                self.reports.insert(report.port.clone(), report.clone());
            }
            Event::AccessDecided { .. }
            | Event::TokenIssued { .. }
            | Event::KeyHandedOut { .. }
            | Event::SubjectForgotten { .. } => {}
        }
        self.last_seq = record.seq;
        Ok(())
    }
}

/// Rebuilds state from a log. Sequence numbers must run 1, 2, 3...
pub fn replay(records: &[EventRecord], secret: &PlatformSecret) -> Result<MeshState, OperatorError> {
    let mut state = MeshState::new();
    for record in records {
        state.apply(record, secret).map_err(|e| match e {
            OperatorError::Replay { .. } => e,
            other => OperatorError::Replay {
                seq: record.seq,
                message: other.to_string(),
            },
        })?;
    }
    Ok(state)
}
