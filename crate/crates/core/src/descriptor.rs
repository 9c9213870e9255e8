//! The `.dp.json` data product description format.
//!
//! Parsing is strict: unknown keys and unknown enum values are errors, and
//! required keys that are missing on a port are reported with the port's
//! name. Serialization is canonical (sorted keys, two-space indentation,
//! LF), so equal descriptors always produce identical bytes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::mesh::{
    check_name, Archetype, ConsumptionStyle, DataProduct, InputPort, InterfaceType, MeshError, OutputPort, PortTarget,
    ProductId,
};

pub const FILE_EXTENSION: &str = ".dp.json";

pub const REQUIRED_TOP_LEVEL: &[&str] = &["name", "domain", "archetype", "output_ports", "input_ports"];
pub const REQUIRED_OUTPUT_PORT: &[&str] = &["id", "address", "interface", "schema"];
pub const REQUIRED_INPUT_PORT: &[&str] = &["id", "target", "consumption_style"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptorError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{location}: missing required key `{key}`")]
    MissingKey { location: String, key: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("input port `{port}`: `projection` must be given exactly when consumption_style is by_projection")]
    ProjectionMismatch { port: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductDescriptor {
    pub name: String,
    pub domain: String,
    pub archetype: Archetype,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub output_ports: Vec<OutputPort>,
    pub input_ports: Vec<InputPort>,
}

impl ProductDescriptor {
    pub fn product_id(&self) -> Result<ProductId, MeshError> {
        ProductId::new(&self.domain, &self.name)
    }

    pub fn into_product(self) -> Result<DataProduct, MeshError> {
        Ok(DataProduct {
            id: self.product_id()?,
            archetype: self.archetype,
            description: self.description,
            output_ports: self.output_ports,
            input_ports: self.input_ports,
        })
    }

    pub fn from_product(product: &DataProduct) -> Self {
        Self {
            name: product.id.name().to_string(),
            domain: product.id.domain().to_string(),
            archetype: product.archetype,
            description: product.description.clone(),
            output_ports: product.output_ports.clone(),
            input_ports: product.input_ports.clone(),
        }
    }
}

fn port_location(kind: &str, index: usize, port: &Value) -> String {
    match port.get("id").and_then(Value::as_str) {
        Some(id) => format!("{kind} port `{id}`"),
        None => format!("{kind}_ports[{index}]"),
    }
}

fn check_required(value: &Value) -> Result<(), DescriptorError> {
    let Some(top) = value.as_object() else {
        return Err(DescriptorError::Invalid {
            path: ".".into(),
            message: "descriptor must be a JSON object".into(),
        });
    };
    for key in REQUIRED_TOP_LEVEL {
        if !top.contains_key(*key) {
            return Err(DescriptorError::MissingKey {
                location: "descriptor".into(),
                key: (*key).into(),
            });
        }
    }
    for (kind, field, required) in [
        ("output", "output_ports", REQUIRED_OUTPUT_PORT),
        ("input", "input_ports", REQUIRED_INPUT_PORT),
    ] {
        let Some(ports) = top.get(field).and_then(Value::as_array) else {
            continue;
        };
        for (index, port) in ports.iter().enumerate() {
            let Some(obj) = port.as_object() else { continue };
            for key in required {
                if !obj.contains_key(*key) {
                    return Err(DescriptorError::MissingKey {
                        location: port_location(kind, index, port),
                        key: (*key).into(),
                    });
                }
            }
        }
    }
    Ok(())
}

pub fn parse_descriptor(text: &str) -> Result<ProductDescriptor, DescriptorError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DescriptorError::Malformed {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    check_required(&value)?;
    let descriptor: ProductDescriptor =
        serde_path_to_error::deserialize(value).map_err(|e| DescriptorError::Invalid {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    if let Some(input) = descriptor.input_ports.iter().find(|i| !i.projection_consistent()) {
        return Err(DescriptorError::ProjectionMismatch { port: input.id.clone() });
    }
    Ok(descriptor)
}

pub fn serialize_descriptor(descriptor: &ProductDescriptor) -> String {
    to_canonical_string(descriptor).expect("descriptor is always representable as JSON")
}

/// Local (graph-independent) checks. Empty means valid.
pub fn validate_descriptor(d: &ProductDescriptor) -> Vec<String> {
    let mut errors = Vec::new();
    if let Err(e) = check_name(&d.domain) {
        errors.push(format!("domain `{}` {e}", d.domain));
    }
    if let Err(e) = check_name(&d.name) {
        errors.push(format!("name `{}` {e}", d.name));
    }
    if d.output_ports.is_empty() {
        errors.push("product must declare at least one output port".to_string());
    }

    let mut port_ids = BTreeSet::new();
    for id in d
        .output_ports
        .iter()
        .map(|p| &p.id)
        .chain(d.input_ports.iter().map(|p| &p.id))
    {
        if let Err(e) = check_name(id) {
            errors.push(format!("port id `{id}` {e}"));
        }
        if !port_ids.insert(id) {
            errors.push(format!("port id `{id}` is declared more than once"));
        }
    }

    for port in &d.output_ports {
        let at = format!("output port `{}`", port.id);
        if port.address.trim().is_empty() {
            errors.push(format!("{at}: address must not be empty"));
        }
        if port.interface == InterfaceType::Sql && port.schema.is_empty() {
            errors.push(format!("{at}: sql ports must declare a schema"));
        }
        let mut columns = BTreeSet::new();
        for column in &port.schema {
            if let Err(e) = check_name(&column.name) {
                errors.push(format!("{at}: column `{}` {e}", column.name));
            }
            if !columns.insert(&column.name) {
                errors.push(format!("{at}: column `{}` is declared more than once", column.name));
            }
        }
        if port.schema.iter().filter(|c| c.subject_ref).count() > 1 {
            errors.push(format!("{at}: at most one column may be flagged subject_ref"));
        }
        for slo in &port.slos {
            if let Some(problem) = slo.problems() {
                errors.push(format!("{at}: {problem}"));
            }
        }
        for label in &port.labels {
            if let Err(e) = check_name(label) {
                errors.push(format!("{at}: label `{label}` {e}"));
            }
        }
    }

    for port in &d.input_ports {
        let at = format!("input port `{}`", port.id);
        if !port.projection_consistent() {
            errors.push(format!(
                "{at}: `projection` must be given exactly when consumption_style is by_projection"
            ));
        }
        if let Some(projection) = &port.projection {
            if projection.is_empty() {
                errors.push(format!("{at}: projection must name at least one column"));
            }
        }
        if let Some(address) = &port.copy_address {
            if port.consumption_style != ConsumptionStyle::ByCopy {
                errors.push(format!("{at}: copy_address is only meaningful for by_copy inputs"));
            }
            if address.trim().is_empty() {
                errors.push(format!("{at}: copy_address must not be empty"));
            }
        }
        if !port.slos.is_empty() {
            errors.push(format!("{at}: SLOs can only be attached to output ports"));
        }
        if let PortTarget::External(source) = &port.target {
            if source.uri.trim().is_empty() {
                errors.push(format!("{at}: external source uri must not be empty"));
            }
        }
        for expectation in &port.expectations {
            if let Some(problem) = expectation.problems() {
                errors.push(format!("{at}: {problem}"));
            }
        }
    }
    errors
}
