//! Product catalog search.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::state::MeshState;
use crate::mesh::{Archetype, InterfaceType, PortRef, ProductId, Slo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSummary {
    pub port: PortRef,
    pub interface: InterfaceType,
    pub address: String,
    pub effective_labels: BTreeSet<String>,
    pub slos: Vec<Slo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub product: ProductId,
    pub archetype: Archetype,
    pub description: String,
    pub ports: Vec<PortSummary>,
}

/// Case-insensitive substring search over product ids, names, descriptions
/// and port ids. An empty query matches everything. With a label filter
/// only ports whose effective labels contain it are listed, and products
/// left with no ports are dropped.
pub fn search_catalog(state: &MeshState, query: &str, label: Option<&str>) -> Vec<CatalogEntry> {
    let needle = query.trim().to_lowercase();
    let mut out = Vec::new();
    for product in state.graph.products() {
        let text_hit = needle.is_empty()
            || product.id.as_str().to_lowercase().contains(&needle)
            || product.description.to_lowercase().contains(&needle)
            || product
                .output_ports
                .iter()
                .any(|p| p.id.to_lowercase().contains(&needle));
        if !text_hit {
            continue;
        }
        let ports: Vec<PortSummary> = product
            .output_ports
            .iter()
            .map(|o| {
                let port = product.id.port(&o.id);
                PortSummary {
                    effective_labels: state.classification.effective(&port).cloned().unwrap_or_default(),
                    port,
                    interface: o.interface,
                    address: o.address.clone(),
                    slos: o.slos.clone(),
                }
            })
            .filter(|s| label.is_none_or(|l| s.effective_labels.contains(l)))
            .collect();
        if label.is_some() && ports.is_empty() {
            continue;
        }
        out.push(CatalogEntry {
            product: product.id.clone(),
            archetype: product.archetype,
            description: product.description.clone(),
            ports,
        });
    }
    out
}
