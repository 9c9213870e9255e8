use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ClassificationError, OverrideQueue, OverrideStatus};
use crate::mesh::{MeshGraph, PortRef, PortTarget, ProductId};

/// The override currently attached to a port, as shown alongside its labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideView {
    pub id: u64,
    pub labels: BTreeSet<String>,
    pub justification: String,
    pub status: OverrideStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationState {
    pub port: PortRef,
    pub declared: BTreeSet<String>,
    pub inherited: BTreeSet<String>,
    /// The active override if there is one, else a pending one.
    #[serde(rename = "override", default, skip_serializing_if = "Option::is_none")]
    pub override_: Option<OverrideView>,
    pub effective: BTreeSet<String>,
}

impl ClassificationState {
    fn new(
        port: PortRef,
        declared: BTreeSet<String>,
        inherited: BTreeSet<String>,
        override_: Option<OverrideView>,
    ) -> Self {
        let effective = match &override_ {
            Some(o) if o.status.is_active() => o.labels.clone(),
            _ => declared.union(&inherited).cloned().collect(),
        };
        Self {
            port,
            declared,
            inherited,
            override_,
            effective,
        }
    }

    pub fn has_active_override(&self) -> bool {
        self.override_.as_ref().is_some_and(|o| o.status.is_active())
    }

    /// No declared labels, nothing inherited and no reviewed override. Such
    /// data must not be processed on platform infrastructure.
    pub fn is_untagged(&self) -> bool {
        self.declared.is_empty() && self.inherited.is_empty() && !self.has_active_override()
    }

    /// `declared ∪ inherited`: what the port would carry without an override.
    pub fn baseline(&self) -> BTreeSet<String> {
        self.declared.union(&self.inherited).cloned().collect()
    }
}

/// Classification of every output port in the mesh.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    states: BTreeMap<PortRef, ClassificationState>,
}

impl Classification {
    pub fn get(&self, port: &PortRef) -> Option<&ClassificationState> {
        self.states.get(port)
    }

    pub fn effective(&self, port: &PortRef) -> Option<&BTreeSet<String>> {
        self.states.get(port).map(|s| &s.effective)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PortRef, &ClassificationState)> {
        self.states.iter()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn effective_map(&self) -> BTreeMap<PortRef, BTreeSet<String>> {
        self.states
            .iter()
            .map(|(p, s)| (p.clone(), s.effective.clone()))
            .collect()
    }
}

/// Computes every output port's labels in topological order.
pub fn propagate(graph: &MeshGraph, overrides: &OverrideQueue) -> Result<Classification, ClassificationError> {
    let order = graph.topological_order().map_err(ClassificationError::Cyclic)?;
    Ok(run(graph, overrides, &order))
}

/// Same as [`propagate`], for a caller-chosen topological order. The result
/// does not depend on which valid order is used.
pub fn propagate_with_order(
    graph: &MeshGraph,
    overrides: &OverrideQueue,
    order: &[ProductId],
) -> Result<Classification, ClassificationError> {
    let listed: BTreeSet<&ProductId> = order.iter().collect();
    if listed.len() != order.len() || listed.len() != graph.len() || order.iter().any(|p| graph.get(p).is_none()) {
        return Err(ClassificationError::InvalidOrder(
            "order must list every product exactly once".to_string(),
        ));
    }
    let mut placed = BTreeSet::new();
    for id in order {
        if let Some(up) = graph.upstream_neighbors(id).into_iter().find(|u| !placed.contains(u)) {
            return Err(ClassificationError::InvalidOrder(format!(
                "`{id}` comes before its upstream `{up}`"
            )));
        }
        placed.insert(id.clone());
    }
    Ok(run(graph, overrides, order))
}

fn run(graph: &MeshGraph, overrides: &OverrideQueue, order: &[ProductId]) -> Classification {
    let mut states: BTreeMap<PortRef, ClassificationState> = BTreeMap::new();
    for id in order {
        let Some(product) = graph.get(id) else { continue };
        let mut inherited = BTreeSet::new();
        for input in &product.input_ports {
            match &input.target {
                PortTarget::Mesh(target) => {
                    // Dangling targets (left behind by a forced decommission) contribute nothing.
                    if let Some(upstream) = states.get(target) {
                        inherited.extend(upstream.effective.iter().cloned());
                    }
                }
                PortTarget::External(source) => inherited.extend(source.labels.iter().cloned()),
            }
        }
        for output in &product.output_ports {
            let port = id.port(&output.id);
            let view = overrides.view_for(&port);
            let state = ClassificationState::new(port.clone(), output.labels.clone(), inherited.clone(), view);
            states.insert(port, state);
        }
    }
    Classification { states }
}
