use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ClassificationError, ClassificationState, LabelRegistry, OverrideView};
use crate::mesh::PortRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideStatus {
    AutoApproved,
    Pending,
    Approved,
    Rejected,
    /// Was active until a later override for the same port took effect.
    Superseded,
}

impl OverrideStatus {
    /// Active overrides replace the port's labels.
    pub fn is_active(self) -> bool {
        matches!(self, OverrideStatus::AutoApproved | OverrideStatus::Approved)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideRequest {
    pub id: u64,
    pub port: PortRef,
    pub labels: BTreeSet<String>,
    pub justification: String,
    pub status: OverrideStatus,
    pub requested_by: String,
    pub requested_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewed_at: Option<u64>,
}

/// All override requests, in request order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideQueue {
    requests: BTreeMap<u64, OverrideRequest>,
    next_id: u64,
}

impl OverrideQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: u64) -> Option<&OverrideRequest> {
        self.requests.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &OverrideRequest> {
        self.requests.values()
    }

    pub fn pending(&self) -> impl Iterator<Item = &OverrideRequest> {
        self.requests.values().filter(|r| r.status == OverrideStatus::Pending)
    }

    pub fn active_for(&self, port: &PortRef) -> Option<&OverrideRequest> {
        self.requests.values().find(|r| &r.port == port && r.status.is_active())
    }

    pub fn pending_for(&self, port: &PortRef) -> Option<&OverrideRequest> {
        self.requests
            .values()
            .find(|r| &r.port == port && r.status == OverrideStatus::Pending)
    }

    pub(crate) fn view_for(&self, port: &PortRef) -> Option<OverrideView> {
        self.active_for(port)
            .or_else(|| self.pending_for(port))
            .map(|r| OverrideView {
                id: r.id,
                labels: r.labels.clone(),
                justification: r.justification.clone(),
                status: r.status,
            })
    }

    /// Files an override against the port's current classification.
    ///
    /// The request is approved on the spot when it only adds strictness:
    /// the proposed labels contain `declared ∪ inherited` and their
    /// obligations contain the obligations those labels imply. Anything else
    /// stays pending and leaves the effective labels untouched.
    pub fn request(
        &mut self,
        current: &ClassificationState,
        registry: &LabelRegistry,
        labels: BTreeSet<String>,
        justification: &str,
        requested_by: &str,
        now: u64,
    ) -> Result<&OverrideRequest, ClassificationError> {
        registry.ensure_registered(&labels)?;
        let port = &current.port;
        if let Some(pending) = self.pending_for(port) {
            return Err(ClassificationError::PendingOverride {
                port: port.clone(),
                id: pending.id,
            });
        }
        let baseline = current.baseline();
        let stricter = labels.is_superset(&baseline)
            && registry
                .obligations_of(&labels)
                .is_superset(&registry.obligations_of(&baseline));

        self.next_id += 1;
        let id = self.next_id;
        let status = if stricter {
            self.supersede_active(port);
            OverrideStatus::AutoApproved
        } else {
            OverrideStatus::Pending
        };
        self.requests.insert(
            id,
            OverrideRequest {
                id,
                port: port.clone(),
                labels,
                justification: justification.to_string(),
                status,
                requested_by: requested_by.to_string(),
                requested_at: now,
                reviewer: None,
                reviewed_at: stricter.then_some(now),
            },
        );
        Ok(&self.requests[&id])
    }

    pub fn review(
        &mut self,
        id: u64,
        verdict: Verdict,
        reviewer: &str,
        now: u64,
    ) -> Result<&OverrideRequest, ClassificationError> {
        let request = self.requests.get(&id).ok_or(ClassificationError::UnknownOverride(id))?;
        if request.status != OverrideStatus::Pending {
            return Err(ClassificationError::NotPending {
                id,
                status: request.status,
            });
        }
        let port = request.port.clone();
        if verdict == Verdict::Approve {
            self.supersede_active(&port);
        }
        let request = self.requests.get_mut(&id).expect("checked above");
        request.status = match verdict {
            Verdict::Approve => OverrideStatus::Approved,
            Verdict::Reject => OverrideStatus::Rejected,
        };
        request.reviewer = Some(reviewer.to_string());
        request.reviewed_at = Some(now);
        Ok(request)
    }

    fn supersede_active(&mut self, port: &PortRef) {
        for r in self.requests.values_mut() {
            if &r.port == port && r.status.is_active() {
                r.status = OverrideStatus::Superseded;
            }
        }
    }

    /// Drops requests for ports that no longer exist.
    pub fn retain_ports(&mut self, mut exists: impl FnMut(&PortRef) -> bool) {
        self.requests.retain(|_, r| exists(&r.port));
    }
}
