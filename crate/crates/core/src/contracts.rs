//! Consumer-driven contract tests and output-port SLO checks.
//!
//! A consumer states its expectations on an input port. Registering the
//! contract attaches those expectations to the producer's output port, where
//! the platform runs them against the data the port actually serves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{MeshGraph, PortRef, PortTarget, SloKind};
use crate::store::Table;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractError {
    #[error("port `{0}` not found")]
    UnknownPort(PortRef),
    #[error("input port `{0}` targets a system outside the mesh; there is no provider to register with")]
    ExternalTarget(PortRef),
    #[error("input port `{0}` declares no expectations")]
    NoExpectations(PortRef),
    #[error("`{0}` is an input port; SLOs belong to output ports")]
    InputPortSlo(PortRef),
    #[error("store of `{0}` is unreadable: {1}")]
    Unreadable(PortRef, String),
}

/// A declarative clause a consumer expects of the data it reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    ColumnPresent { column: String },
    NonNullFraction { column: String, min: f64 },
    MinRowCount { rows: u64 },
    MaxStalenessSeconds { seconds: u64 },
}

impl Expectation {
    pub fn problems(&self) -> Option<String> {
        match self {
            Expectation::NonNullFraction { min, column } if !(0.0..=1.0).contains(min) => Some(format!(
                "non_null_fraction on `{column}` must be within [0, 1], got {min}"
            )),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub id: u64,
    /// The consumer's input port.
    pub owner: PortRef,
    /// The provider's output port.
    pub target: PortRef,
    pub expectations: Vec<Expectation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractRegistry {
    contracts: BTreeMap<u64, Contract>,
    next_id: u64,
}

impl ContractRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers (or replaces) the contract of `input`.
    pub fn register(&mut self, graph: &MeshGraph, input: &PortRef) -> Result<u64, ContractError> {
        let port = graph
            .input_port(input)
            .ok_or_else(|| ContractError::UnknownPort(input.clone()))?;
        let target = match &port.target {
            PortTarget::Mesh(t) => t.clone(),
            PortTarget::External(_) => return Err(ContractError::ExternalTarget(input.clone())),
        };
        if port.expectations.is_empty() {
            return Err(ContractError::NoExpectations(input.clone()));
        }
        if graph.output_port(&target).is_none() {
            return Err(ContractError::UnknownPort(target));
        }
        self.contracts.retain(|_, c| &c.owner != input);
        self.next_id += 1;
        let id = self.next_id;
        self.contracts.insert(
            id,
            Contract {
                id,
                owner: input.clone(),
                target,
                expectations: port.expectations.clone(),
            },
        );
        Ok(id)
    }

    pub fn for_port(&self, output: &PortRef) -> Vec<&Contract> {
        self.contracts.values().filter(|c| &c.target == output).collect()
    }

    pub fn all(&self) -> impl Iterator<Item = &Contract> {
        self.contracts.values()
    }

    /// Drops contracts whose owner or target belongs to a removed product.
    pub fn retain_resolvable(&mut self, graph: &MeshGraph) {
        self.contracts
            .retain(|_, c| graph.input_port(&c.owner).is_some() && graph.output_port(&c.target).is_some());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Violation {
        details: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        measured: Option<f64>,
    },
}

impl Outcome {
    pub fn is_violation(&self) -> bool {
        matches!(self, Outcome::Violation { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub contract: u64,
    pub owner: PortRef,
    pub expectation: Expectation,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractReport {
    pub port: PortRef,
    pub results: Vec<ExpectationResult>,
    pub evaluated_at: u64,
    pub alert_raised: bool,
}

impl ContractReport {
    pub fn violations(&self) -> impl Iterator<Item = &ExpectationResult> {
        self.results.iter().filter(|r| r.outcome.is_violation())
    }
}

/// The provider's current data as seen by the platform.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub table: Table,
    pub last_updated: Option<u64>,
}

impl Dataset {
    /// `(non-empty cells, rows)` for a column, or `None` if the column is absent.
    pub fn non_null(&self, column: &str) -> Option<(usize, usize)> {
        let idx = self.table.column_index(column)?;
        let filled = self
            .table
            .rows
            .iter()
            .filter(|r| r.get(idx).is_some_and(|v| !v.is_empty()))
            .count();
        Some((filled, self.table.rows.len()))
    }

    /// Completeness in percent: the least complete column decides. An empty
    /// dataset counts as complete.
    pub fn completeness_pct(&self) -> f64 {
        let rows = self.table.rows.len();
        if rows == 0 {
            return 100.0;
        }
        self.table
            .header
            .iter()
            .filter_map(|c| self.non_null(c))
            .map(|(filled, rows)| (filled * 100) as f64 / rows as f64)
            .fold(100.0, f64::min)
    }
}

fn fraction(filled: usize, rows: usize) -> f64 {
    if rows == 0 {
        1.0
    } else {
        filled as f64 / rows as f64
    }
}

pub fn evaluate_expectation(expectation: &Expectation, dataset: &Dataset, now: u64) -> Outcome {
    match expectation {
        Expectation::ColumnPresent { column } => {
            if dataset.table.column_index(column).is_some() {
                Outcome::Pass
            } else {
                Outcome::Violation {
                    details: format!("column `{column}` is missing"),
                    measured: None,
                }
            }
        }
        Expectation::NonNullFraction { column, min } => match dataset.non_null(column) {
            None => Outcome::Violation {
                details: format!("column `{column}` is missing"),
                measured: None,
            },
            Some((filled, rows)) => {
                let measured = fraction(filled, rows);
                if measured >= *min {
                    Outcome::Pass
                } else {
                    Outcome::Violation {
                        details: format!(
                            "non-null fraction of `{column}` is {measured} ({filled}/{rows}), below {min}"
                        ),
                        measured: Some(measured),
                    }
                }
            }
        },
        Expectation::MinRowCount { rows } => {
            let n = dataset.table.rows.len() as u64;
            if n >= *rows {
                Outcome::Pass
            } else {
                Outcome::Violation {
                    details: format!("{n} rows, expected at least {rows}"),
                    measured: Some(n as f64),
                }
            }
        }
        Expectation::MaxStalenessSeconds { seconds } => match dataset.last_updated {
            None => Outcome::Violation {
                details: "last update time unknown".to_string(),
                measured: None,
            },
            Some(updated) => {
                let age = now.saturating_sub(updated);
                if age <= *seconds {
                    Outcome::Pass
                } else {
                    Outcome::Violation {
                        details: format!("data is {age}s old, allowed {seconds}s"),
                        measured: Some(age as f64),
                    }
                }
            }
        },
    }
}

/// Runs every registered expectation against `dataset`. Pure.
pub fn run_contracts(port: &PortRef, contracts: &[&Contract], dataset: &Dataset, now: u64) -> ContractReport {
    let results: Vec<ExpectationResult> = contracts
        .iter()
        .flat_map(|c| {
            c.expectations.iter().map(move |e| ExpectationResult {
                contract: c.id,
                owner: c.owner.clone(),
                expectation: e.clone(),
                outcome: evaluate_expectation(e, dataset, now),
            })
        })
        .collect();
    let alert_raised = results.iter().any(|r| r.outcome.is_violation());
    ContractReport {
        port: port.clone(),
        results,
        evaluated_at: now,
        alert_raised,
    }
}

/// Metrics observed for an output port.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub last_updated: Option<u64>,
    pub completeness_pct: Option<f64>,
    pub availability_pct: Option<f64>,
}

impl Observed {
    /// Freshness from the store's write time, completeness from a row scan.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self {
            last_updated: dataset.last_updated,
            completeness_pct: Some(dataset.completeness_pct()),
            availability_pct: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloResult {
    pub kind: SloKind,
    pub threshold: f64,
    /// In the SLO's unit; freshness is the data's age in seconds.
    pub observed: Option<f64>,
    pub pass: bool,
}

pub fn check_slo(
    graph: &MeshGraph,
    port: &PortRef,
    observed: &Observed,
    now: u64,
) -> Result<Vec<SloResult>, ContractError> {
    if graph.input_port(port).is_some() {
        return Err(ContractError::InputPortSlo(port.clone()));
    }
    let output = graph
        .output_port(port)
        .ok_or_else(|| ContractError::UnknownPort(port.clone()))?;
    Ok(output
        .slos
        .iter()
        .map(|slo| {
            let (value, pass) = match slo.kind {
                SloKind::FreshnessSeconds => {
                    let age = observed.last_updated.map(|t| now.saturating_sub(t) as f64);
                    (age, age.is_some_and(|a| a <= slo.threshold))
                }
                SloKind::CompletenessPct => (
                    observed.completeness_pct,
                    observed.completeness_pct.is_some_and(|v| v >= slo.threshold),
                ),
                SloKind::AvailabilityPct => (
                    observed.availability_pct,
                    observed.availability_pct.is_some_and(|v| v >= slo.threshold),
                ),
            };
            SloResult {
                kind: slo.kind,
                threshold: slo.threshold,
                observed: value,
                pass,
            }
        })
        .collect())
}
