//! Data products, their ports and the composition graph between them.
//!
//! A product is identified by `domain/name`; a port by `domain/name:port`.
//! Input ports point either at another product's output port (a mesh edge)
//! or at a system outside the mesh boundary, whose sensitivity labels have
//! to be declared by hand.

mod graph;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::Expectation;

pub use graph::{Direction, Edge, Finding, MeshGraph, RemovalReport, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid identifier `{0}`: {1}")]
    InvalidId(String, &'static str),
    #[error("product `{0}` is already registered")]
    Duplicate(ProductId),
    #[error("input port `{input}` targets `{target}`, which does not exist")]
    Dangling { input: PortRef, target: PortRef },
    #[error("registration would introduce a cycle through {}", join(.0))]
    Cycle(Vec<ProductId>),
    #[error("product `{0}` not found")]
    NotFound(ProductId),
    #[error("port `{0}` not found")]
    PortNotFound(PortRef),
    #[error("`{product}` still has consumers: {}", join(.consumers))]
    HasConsumers {
        product: ProductId,
        consumers: Vec<PortRef>,
    },
    #[error("invalid product: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Names used for domains, products, ports, columns and labels.
pub(crate) fn check_name(name: &str) -> Result<(), &'static str> {
    if name.is_empty() {
        return Err("must not be empty");
    }
    if !name
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    {
        return Err("only ASCII letters, digits, `-`, `_` and `.` are allowed");
    }
    Ok(())
}

/// Qualified product name, `domain/name`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProductId(String);

impl ProductId {
    pub fn new(domain: &str, name: &str) -> Result<Self, MeshError> {
        check_name(domain).map_err(|e| MeshError::InvalidId(domain.to_string(), e))?;
        check_name(name).map_err(|e| MeshError::InvalidId(name.to_string(), e))?;
        Ok(Self(format!("{domain}/{name}")))
    }

    pub fn domain(&self) -> &str {
        self.0.split_once('/').map(|(d, _)| d).unwrap_or_default()
    }

    pub fn name(&self) -> &str {
        self.0.split_once('/').map(|(_, n)| n).unwrap_or_default()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn port(&self, port: &str) -> PortRef {
        PortRef {
            product: self.clone(),
            port: port.to_string(),
        }
    }
}

impl FromStr for ProductId {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((domain, name)) => Self::new(domain, name),
            None => Err(MeshError::InvalidId(s.to_string(), "expected `domain/name`")),
        }
    }
}

impl TryFrom<String> for ProductId {
    type Error = MeshError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ProductId> for String {
    fn from(id: ProductId) -> Self {
        id.0
    }
}

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Port reference, `domain/name:port`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PortRef {
    pub product: ProductId,
    pub port: String,
}

impl PortRef {
    pub fn new(product: ProductId, port: &str) -> Result<Self, MeshError> {
        check_name(port).map_err(|e| MeshError::InvalidId(port.to_string(), e))?;
        Ok(Self {
            product,
            port: port.to_string(),
        })
    }
}

impl FromStr for PortRef {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (product, port) = s
            .split_once(':')
            .ok_or_else(|| MeshError::InvalidId(s.to_string(), "expected `domain/name:port`"))?;
        Self::new(product.parse()?, port)
    }
}

impl TryFrom<String> for PortRef {
    type Error = MeshError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<PortRef> for String {
    fn from(r: PortRef) -> Self {
        r.to_string()
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.product, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    SourceAligned,
    ConsumerAligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarType {
    String,
    Int,
    Float,
    Bool,
    Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ScalarType,
    /// Marks the column holding the reference to the data subject.
    #[serde(default, skip_serializing_if = "is_false")]
    pub subject_ref: bool,
}

impl Column {
    pub fn new(name: &str, ty: ScalarType) -> Self {
        Self {
            name: name.to_string(),
            ty,
            subject_ref: false,
        }
    }

    pub fn subject(name: &str, ty: ScalarType) -> Self {
        Self {
            subject_ref: true,
            ..Self::new(name, ty)
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Access interface of an output port. Exactly one per port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceType {
    Blob,
    Streaming,
    Sql,
}

impl fmt::Display for InterfaceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterfaceType::Blob => "blob",
            InterfaceType::Streaming => "streaming",
            InterfaceType::Sql => "sql",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SloKind {
    FreshnessSeconds,
    CompletenessPct,
    AvailabilityPct,
}

impl SloKind {
    pub fn is_percentage(self) -> bool {
        matches!(self, SloKind::CompletenessPct | SloKind::AvailabilityPct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slo {
    pub kind: SloKind,
    pub threshold: f64,
}

impl Slo {
    pub fn problems(&self) -> Option<String> {
        if !self.threshold.is_finite() || self.threshold <= 0.0 {
            return Some(format!(
                "SLO {:?} threshold must be positive, got {}",
                self.kind, self.threshold
            ));
        }
        if self.kind.is_percentage() && self.threshold > 100.0 {
            return Some(format!(
                "SLO {:?} threshold must be within (0, 100], got {}",
                self.kind, self.threshold
            ));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPort {
    pub id: String,
    pub address: String,
    pub interface: InterfaceType,
    pub schema: Vec<Column>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slos: Vec<Slo>,
    /// Locally declared sensitivity labels.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub labels: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub encryption_enabled: bool,
}

impl OutputPort {
    pub fn new(id: &str, address: &str, interface: InterfaceType) -> Self {
        OutputPort {
            id: id.to_string(),
            address: address.to_string(),
            interface,
            schema: Vec::new(),
            slos: Vec::new(),
            labels: BTreeSet::new(),
            encryption_enabled: false,
        }
    }

    pub fn with_columns(mut self, columns: impl IntoIterator<Item = Column>) -> Self {
        self.schema.extend(columns);
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.labels.insert(label.to_string());
        self
    }

    pub fn encrypted(mut self) -> Self {
        self.encryption_enabled = true;
        self
    }

    pub fn subject_column(&self) -> Option<&Column> {
        self.schema.iter().find(|c| c.subject_ref)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.iter().find(|c| c.name == name)
    }
}

/// A system outside the mesh boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSource {
    pub uri: String,
    /// Labels the consuming team declares for the external data.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PortTarget {
    Mesh(PortRef),
    External(ExternalSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumptionStyle {
    ByCopy,
    ByReference,
    ByProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPort {
    pub id: String,
    pub target: PortTarget,
    pub consumption_style: ConsumptionStyle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Vec<String>>,
    /// Where a `by_copy` input materializes its copy, if the platform manages it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copy_address: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expectations: Vec<Expectation>,
    /// Always rejected by validation; present so the error is explicit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slos: Vec<Slo>,
}

impl InputPort {
    pub fn new(id: &str, target: PortTarget, consumption_style: ConsumptionStyle) -> Self {
        InputPort {
            id: id.to_string(),
            target,
            consumption_style,
            projection: None,
            copy_address: None,
            expectations: Vec::new(),
            slos: Vec::new(),
        }
    }

    pub fn reading(id: &str, target: PortRef) -> Self {
        Self::new(id, PortTarget::Mesh(target), ConsumptionStyle::ByReference)
    }

    pub fn mesh_target(&self) -> Option<&PortRef> {
        match &self.target {
            PortTarget::Mesh(r) => Some(r),
            PortTarget::External(_) => None,
        }
    }

    pub fn projection_consistent(&self) -> bool {
        (self.consumption_style == ConsumptionStyle::ByProjection) == self.projection.is_some()
    }
}

/// A registered data product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProduct {
    pub id: ProductId,
    pub archetype: Archetype,
    pub description: String,
    pub output_ports: Vec<OutputPort>,
    pub input_ports: Vec<InputPort>,
}

impl DataProduct {
    pub fn new(id: ProductId, archetype: Archetype) -> Self {
        DataProduct {
            id,
            archetype,
            description: String::new(),
            output_ports: Vec::new(),
            input_ports: Vec::new(),
        }
    }

    pub fn domain(&self) -> &str {
        self.id.domain()
    }

    pub fn output_port(&self, id: &str) -> Option<&OutputPort> {
        self.output_ports.iter().find(|p| p.id == id)
    }

    pub fn output_port_mut(&mut self, id: &str) -> Option<&mut OutputPort> {
        self.output_ports.iter_mut().find(|p| p.id == id)
    }

    pub fn input_port(&self, id: &str) -> Option<&InputPort> {
        self.input_ports.iter().find(|p| p.id == id)
    }

    pub fn output_refs(&self) -> impl Iterator<Item = PortRef> + '_ {
        self.output_ports.iter().map(|p| self.id.port(&p.id))
    }
}
