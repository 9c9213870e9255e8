//! Setup shared by the examples: the marketing mesh from `fixtures/`.
#![allow(dead_code)]

use datamesh::classification::SensitivityLabel;
use datamesh::enforcement::PlatformSecret;
use datamesh::store::StoreId;
use datamesh::{Operator, OperatorConfig, PortRef};

pub type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

pub const TRACKING: &str = include_str!("../../fixtures/products/customer-tracking.dp.json");
pub const DETAILS: &str = include_str!("../../fixtures/products/customer-details.dp.json");
pub const RECOMMENDATIONS: &str = include_str!("../../fixtures/products/customer-recommendations.dp.json");

pub const GLOBAL_POLICY: &str = include_str!("../../fixtures/policies/global.mpol");
pub const MARKETING_POLICY: &str = include_str!("../../fixtures/policies/marketing.mpol");
pub const DETAILS_POLICY: &str = include_str!("../../fixtures/policies/customer-details.mpol");
pub const EXPORTS_POLICY: &str = include_str!("../../fixtures/policies/exports.mpol");

pub fn port(s: &str) -> PortRef {
    s.parse().expect("valid port ref")
}

/// A fresh operator in a temporary directory. Keep the guard alive.
pub fn operator() -> AnyResult<(tempfile::TempDir, Operator)> {
    let home = tempfile::tempdir()?;
    let op = Operator::open(OperatorConfig::new(home.path(), PlatformSecret::generate()))?;
    Ok((home, op))
}

pub fn define_labels(op: &Operator) -> AnyResult<()> {
    let labels: Vec<SensitivityLabel> = serde_json::from_str(include_str!("../../fixtures/labels.json"))?;
    for l in labels {
        op.define_label("platform", &l.name, l.obligations, &l.description)?;
    }
    Ok(())
}

/// Labels and the three marketing products, with their datasets loaded.
pub fn marketing_mesh() -> AnyResult<(tempfile::TempDir, Operator)> {
    let (home, op) = operator()?;
    define_labels(&op)?;
    for text in [TRACKING, DETAILS, RECOMMENDATIONS] {
        op.register_descriptor_text("platform", text)?;
    }
    let data = [
        (
            "marketing/customer-tracking:tracking-sql",
            &include_bytes!("../../fixtures/data/tracking.csv")[..],
        ),
        (
            "marketing/customer-details:details-sql",
            include_bytes!("../../fixtures/data/details.csv"),
        ),
        (
            "marketing/customer-recommendations:recommendations-sql",
            include_bytes!("../../fixtures/data/recommendations.csv"),
        ),
        (
            "marketing/customer-tracking:tracking-export",
            include_bytes!("../../fixtures/data/tracking-export.csv"),
        ),
    ];
    for (p, bytes) in data {
        op.put_dataset(&StoreId::Output(port(p)), bytes)?;
    }
    Ok((home, op))
}
