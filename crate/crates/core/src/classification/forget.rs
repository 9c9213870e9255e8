use serde::{Deserialize, Serialize};

use super::{Classification, ClassificationError, LabelRegistry, Obligation};
use crate::mesh::{ConsumptionStyle, MeshGraph, PortRef};
use crate::store::{load_table, DatasetStore, StoreId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletionEntry {
    pub store: StoreId,
    pub rows_removed: usize,
}

/// Stores that held rows of the subject. Empty when the subject was unknown.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletionReport {
    pub entries: Vec<DeletionEntry>,
}

impl DeletionReport {
    pub fn total_rows(&self) -> usize {
        self.entries.iter().map(|e| e.rows_removed).sum()
    }
}

/// A store to purge and the column that carries the subject reference.
struct Target {
    store: StoreId,
    column: String,
}

/// Removes every row referencing `subject` from subject-traceable stores:
/// output ports whose effective labels carry the obligation, and `by_copy`
/// materializations of those ports.
///
/// Fails before touching any store if a traceable port lacks a subject
/// reference column, since deletion could not be guaranteed.
pub fn forget_subject(
    graph: &MeshGraph,
    classification: &Classification,
    registry: &LabelRegistry,
    store: &dyn DatasetStore,
    subject: &str,
) -> Result<DeletionReport, ClassificationError> {
    let mut targets = Vec::new();
    let mut traceable: Vec<(PortRef, String)> = Vec::new();
    for (port, state) in classification.iter() {
        if !registry
            .obligations_of(&state.effective)
            .contains(&Obligation::SubjectTraceability)
        {
            continue;
        }
        let column = graph
            .output_port(port)
            .and_then(|o| o.subject_column())
            .map(|c| c.name.clone())
            .ok_or_else(|| ClassificationError::MissingSubjectColumn { port: port.clone() })?;
        traceable.push((port.clone(), column.clone()));
        targets.push(Target {
            store: StoreId::Output(port.clone()),
            column,
        });
    }
    for product in graph.products() {
        for input in &product.input_ports {
            if input.consumption_style != ConsumptionStyle::ByCopy || input.copy_address.is_none() {
                continue;
            }
            let Some(target) = input.mesh_target() else { continue };
            if let Some((_, column)) = traceable.iter().find(|(p, _)| p == target) {
                targets.push(Target {
                    store: StoreId::Copy(product.id.port(&input.id)),
                    column: column.clone(),
                });
            }
        }
    }

    // Load and check every store first so a failure leaves all of them untouched.
    let mut loaded = Vec::new();
    for target in targets {
        let Some(table) = load_table(store, &target.store)? else {
            continue;
        };
        if table.header.is_empty() {
            continue;
        }
        let idx = table
            .column_index(&target.column)
            .ok_or_else(|| ClassificationError::MissingSubjectData {
                store: target.store.to_string(),
                column: target.column.clone(),
            })?;
        loaded.push((target.store, table, idx));
    }

    let mut report = DeletionReport::default();
    for (id, mut table, idx) in loaded {
        let before = table.rows.len();
        table
            .rows
            .retain(|row| row.get(idx).map(String::as_str) != Some(subject));
        let removed = before - table.rows.len();
        if removed > 0 {
            store.save(&id, &table.to_csv())?;
            report.entries.push(DeletionEntry {
                store: id,
                rows_removed: removed,
            });
        }
    }
    Ok(report)
}
