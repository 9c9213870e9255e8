use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{DataProduct, InputPort, InterfaceType, MeshError, OutputPort, PortRef, ProductId};
use crate::descriptor::{validate_descriptor, ProductDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upstream,
    Downstream,
}

/// A resolved composition edge: `consumer` input port reads `producer` output port.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub consumer: PortRef,
    pub producer: PortRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub removed: ProductId,
    /// Input ports of remaining products that now point at nothing.
    pub dangling_inputs: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    NoOutputPorts,
    OnCycle,
    DanglingRef { input: PortRef, target: PortRef },
    MissingAddress { port: String },
    MissingSchema { port: String },
    ProjectionMismatch { input: String },
}

/// Per-product findings. Empty means the mesh is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: BTreeMap<ProductId, Vec<Finding>>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn flagged(&self) -> BTreeSet<ProductId> {
        self.findings.keys().cloned().collect()
    }
}

/// The composition graph. Products are nodes; edges are derived from the
/// `Mesh` targets of input ports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshGraph {
    products: BTreeMap<ProductId, DataProduct>,
}

impl MeshGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph without any registration checks. Meant for analysis
    /// of externally supplied product sets; use [`MeshGraph::register`] for
    /// everything else.
    pub fn from_products(products: impl IntoIterator<Item = DataProduct>) -> Self {
        Self {
            products: products.into_iter().map(|p| (p.id.clone(), p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn products(&self) -> impl Iterator<Item = &DataProduct> {
        self.products.values()
    }

    pub fn get(&self, id: &ProductId) -> Option<&DataProduct> {
        self.products.get(id)
    }

    pub(crate) fn get_mut(&mut self, id: &ProductId) -> Option<&mut DataProduct> {
        self.products.get_mut(id)
    }

    pub fn output_port(&self, port: &PortRef) -> Option<&OutputPort> {
        self.products.get(&port.product)?.output_port(&port.port)
    }

    pub fn input_port(&self, port: &PortRef) -> Option<&InputPort> {
        self.products.get(&port.product)?.input_port(&port.port)
    }

    /// All output ports in product order.
    pub fn output_refs(&self) -> impl Iterator<Item = (PortRef, &OutputPort)> {
        self.products
            .values()
            .flat_map(|p| p.output_ports.iter().map(move |o| (p.id.port(&o.id), o)))
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for product in self.products.values() {
            for input in &product.input_ports {
                if let Some(target) = input.mesh_target() {
                    if self.output_port(target).is_some() {
                        edges.push(Edge {
                            consumer: product.id.port(&input.id),
                            producer: target.clone(),
                        });
                    }
                }
            }
        }
        edges
    }

    /// Products whose output ports `id` reads from (resolved targets only).
    pub fn upstream_neighbors(&self, id: &ProductId) -> BTreeSet<ProductId> {
        let Some(product) = self.products.get(id) else {
            return BTreeSet::new();
        };
        product
            .input_ports
            .iter()
            .filter_map(|i| i.mesh_target())
            .filter(|t| self.output_port(t).is_some())
            .map(|t| t.product.clone())
            .collect()
    }

    pub fn downstream_neighbors(&self, id: &ProductId) -> BTreeSet<ProductId> {
        self.products
            .values()
            .filter(|p| {
                p.input_ports
                    .iter()
                    .filter_map(|i| i.mesh_target())
                    .any(|t| &t.product == id && self.output_port(t).is_some())
            })
            .map(|p| p.id.clone())
            .collect()
    }

    /// Input ports of other products that point at any port of `id`.
    pub fn consumers_of(&self, id: &ProductId) -> Vec<Edge> {
        let mut out = Vec::new();
        for product in self.products.values().filter(|p| &p.id != id) {
            for input in &product.input_ports {
                if let Some(target) = input.mesh_target() {
                    if &target.product == id {
                        out.push(Edge {
                            consumer: product.id.port(&input.id),
                            producer: target.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    /// Validates the descriptor, resolves its references and adds it.
    pub fn register(&mut self, descriptor: ProductDescriptor) -> Result<ProductId, MeshError> {
        let errors = validate_descriptor(&descriptor);
        if !errors.is_empty() {
            return Err(MeshError::Invalid(errors));
        }
        let product = descriptor.into_product()?;
        let id = product.id.clone();
        if self.products.contains_key(&id) {
            return Err(MeshError::Duplicate(id));
        }
        for input in &product.input_ports {
            if let Some(target) = input.mesh_target() {
                let resolves = if target.product == id {
                    product.output_port(&target.port).is_some()
                } else {
                    self.output_port(target).is_some()
                };
                if !resolves {
                    return Err(MeshError::Dangling {
                        input: id.port(&input.id),
                        target: target.clone(),
                    });
                }
            }
        }
        let mut candidate = self.clone();
        candidate.products.insert(id.clone(), product);
        if let Err(remaining) = candidate.topological_order() {
            let on_cycle: Vec<ProductId> = remaining.into_iter().filter(|p| candidate.reaches_itself(p)).collect();
            return Err(MeshError::Cycle(on_cycle));
        }
        *self = candidate;
        Ok(id)
    }

    pub fn decommission(&mut self, id: &ProductId, force: bool) -> Result<RemovalReport, MeshError> {
        if !self.products.contains_key(id) {
            return Err(MeshError::NotFound(id.clone()));
        }
        let consumers = self.consumers_of(id);
        if !consumers.is_empty() && !force {
            let mut ports: Vec<PortRef> = consumers.into_iter().map(|e| e.consumer).collect();
            ports.dedup();
            return Err(MeshError::HasConsumers {
                product: id.clone(),
                consumers: ports,
            });
        }
        self.products.remove(id);
        Ok(RemovalReport {
            removed: id.clone(),
            dangling_inputs: consumers,
        })
    }

    /// Transitive closure over mesh edges. External sources and data
    /// applications are not nodes and never appear.
    pub fn lineage(&self, id: &ProductId, direction: Direction) -> Result<BTreeSet<ProductId>, MeshError> {
        if !self.products.contains_key(id) {
            return Err(MeshError::NotFound(id.clone()));
        }
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<ProductId> = VecDeque::from([id.clone()]);
        while let Some(current) = queue.pop_front() {
            let next = match direction {
                Direction::Upstream => self.upstream_neighbors(&current),
                Direction::Downstream => self.downstream_neighbors(&current),
            };
            for n in next {
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
        // A product only belongs to its own lineage when it sits on a cycle.
        if !self.reaches_itself(id) {
            seen.remove(id);
        }
        Ok(seen)
    }

    fn reaches_itself(&self, id: &ProductId) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<ProductId> = self.upstream_neighbors(id).into_iter().collect();
        while let Some(current) = stack.pop() {
            if &current == id {
                return true;
            }
            if seen.insert(current.clone()) {
                stack.extend(self.upstream_neighbors(&current));
            }
        }
        false
    }

    /// Upstream-first order (Kahn, ties broken by id). On a cycle, returns
    /// the products that could not be ordered.
    pub fn topological_order(&self) -> Result<Vec<ProductId>, Vec<ProductId>> {
        let mut indegree: BTreeMap<&ProductId, usize> = BTreeMap::new();
        for id in self.products.keys() {
            indegree.insert(id, self.upstream_neighbors(id).len());
        }
        let mut ready: BTreeSet<ProductId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| (*id).clone())
            .collect();
        let mut order = Vec::with_capacity(self.products.len());
        while let Some(id) = ready.pop_first() {
            for down in self.downstream_neighbors(&id) {
                if let Some(d) = indegree.get_mut(&down) {
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(down);
                    }
                }
            }
            order.push(id);
        }
        if order.len() == self.products.len() {
            Ok(order)
        } else {
            let placed: BTreeSet<&ProductId> = order.iter().collect();
            Err(self
                .products
                .keys()
                .filter(|id| !placed.contains(id))
                .cloned()
                .collect())
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for product in self.products.values() {
            let mut findings = Vec::new();
            if product.output_ports.is_empty() {
                findings.push(Finding::NoOutputPorts);
            }
            if self.reaches_itself(&product.id) {
                findings.push(Finding::OnCycle);
            }
            for output in &product.output_ports {
                if output.address.trim().is_empty() {
                    findings.push(Finding::MissingAddress {
                        port: output.id.clone(),
                    });
                }
                if output.interface == InterfaceType::Sql && output.schema.is_empty() {
                    findings.push(Finding::MissingSchema {
                        port: output.id.clone(),
                    });
                }
            }
            for input in &product.input_ports {
                if let Some(target) = input.mesh_target() {
                    if self.output_port(target).is_none() {
                        findings.push(Finding::DanglingRef {
                            input: product.id.port(&input.id),
                            target: target.clone(),
                        });
                    }
                }
                if !input.projection_consistent() {
                    findings.push(Finding::ProjectionMismatch {
                        input: input.id.clone(),
                    });
                }
            }
            if !findings.is_empty() {
                report.findings.insert(product.id.clone(), findings);
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Archetype, Column, ConsumptionStyle, PortTarget, ScalarType};

    fn output(id: &str) -> OutputPort {
        OutputPort {
            id: id.to_string(),
            address: format!("{id}.csv"),
            interface: InterfaceType::Sql,
            schema: vec![Column::new("id", ScalarType::String)],
            slos: vec![],
            labels: Default::default(),
            encryption_enabled: false,
        }
    }

    fn input(id: &str, target: &str) -> InputPort {
        InputPort {
            id: id.to_string(),
            target: PortTarget::Mesh(target.parse().unwrap()),
            consumption_style: ConsumptionStyle::ByReference,
            projection: None,
            copy_address: None,
            expectations: vec![],
            slos: vec![],
        }
    }

    fn descriptor(name: &str, inputs: Vec<InputPort>) -> ProductDescriptor {
        ProductDescriptor {
            name: name.to_string(),
            domain: "d".to_string(),
            archetype: Archetype::SourceAligned,
            description: String::new(),
            output_ports: vec![output("out")],
            input_ports: inputs,
        }
    }

    fn product(name: &str, inputs: Vec<InputPort>) -> DataProduct {
        descriptor(name, inputs).into_product().unwrap()
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let mut g = MeshGraph::new();
        let err = g.register(descriptor("a", vec![input("in", "d/a:out")])).unwrap_err();
        assert!(matches!(err, MeshError::Cycle(ref c) if c == &vec!["d/a".parse().unwrap()]));
        assert!(g.is_empty());
    }

    #[test]
    fn dangling_reference_rejected() {
        let mut g = MeshGraph::new();
        let err = g
            .register(descriptor("a", vec![input("in", "marketing/x:y")]))
            .unwrap_err();
        assert!(matches!(err, MeshError::Dangling { .. }));
    }

    #[test]
    fn duplicate_rejected() {
        let mut g = MeshGraph::new();
        g.register(descriptor("a", vec![])).unwrap();
        assert!(matches!(
            g.register(descriptor("a", vec![])),
            Err(MeshError::Duplicate(_))
        ));
    }

    #[test]
    fn re_registration_after_forced_removal_cannot_close_a_cycle() {
        let mut g = MeshGraph::new();
        g.register(descriptor("b", vec![])).unwrap();
        g.register(descriptor("a", vec![input("in", "d/b:out")])).unwrap();
        let report = g.decommission(&"d/b".parse().unwrap(), true).unwrap();
        assert_eq!(report.dangling_inputs.len(), 1);
        let err = g.register(descriptor("b", vec![input("in", "d/a:out")])).unwrap_err();
        assert!(matches!(err, MeshError::Cycle(ref c) if c.len() == 2));
    }

    #[test]
    fn two_cycle_is_flagged_on_both_products() {
        let g = MeshGraph::from_products([
            product("a", vec![input("in", "d/b:out")]),
            product("b", vec![input("in", "d/a:out")]),
        ]);
        let report = g.validate();
        assert_eq!(report.flagged().len(), 2);
        for findings in report.findings.values() {
            assert!(findings.contains(&Finding::OnCycle));
        }
        assert!(g.topological_order().is_err());
    }

    #[test]
    fn empty_mesh_is_valid() {
        assert!(MeshGraph::new().validate().is_empty());
    }

    #[test]
    fn lineage_of_unknown_product() {
        let g = MeshGraph::new();
        assert!(matches!(
            g.lineage(&"d/nope".parse().unwrap(), Direction::Upstream),
            Err(MeshError::NotFound(_))
        ));
    }

    #[test]
    fn decommission_unknown_product() {
        let mut g = MeshGraph::new();
        assert!(matches!(
            g.decommission(&"d/nope".parse().unwrap(), false),
            Err(MeshError::NotFound(_))
        ));
    }
}
