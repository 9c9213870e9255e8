//! # datamesh
//!
//! A desk-scale data mesh control plane. Data products expose typed output
//! ports and consume other products through input ports; the platform keeps
//! the composition graph acyclic, carries sensitivity labels transitively
//! along it, evaluates scoped access policies and enforces the outcome
//! through three mechanisms: a column-aware query gateway, signed
//! direct-storage tokens and per-port encryption keys.
//!
//! ## Layout
//!
//! - [`mesh`]: products, ports and the composition graph.
//! - [`descriptor`]: the `.dp.json` product description format.
//! - [`classification`]: sensitivity levels, propagation, overrides,
//!   obligation checks and subject deletion.
//! - [`policy`]: the `.mpol` policy language, its evaluator and the
//!   native blob-store compiler.
//! - [`enforcement`]: gateway queries, access tokens and the key service.
//! - [`contracts`]: consumer-driven contract tests and output-port SLOs.
//! - [`operator`]: the event-sourced control plane, catalog and HTTP API.
//!
//! Every major capability has a runnable program under `examples/`.
//!
//! ```
//! use datamesh::descriptor::parse_descriptor;
//!
//! let text = r#"{
//!   "name": "customer-details",
//!   "domain": "marketing",
//!   "archetype": "source_aligned",
//!   "output_ports": [{
//!     "id": "details-sql",
//!     "address": "marketing/details.csv",
//!     "interface": "sql",
//!     "schema": [{"name": "customer_id", "type": "string", "subject_ref": true}]
//!   }],
//!   "input_ports": []
//! }"#;
//! let descriptor = parse_descriptor(text).unwrap();
//! assert_eq!(descriptor.product_id().unwrap().to_string(), "marketing/customer-details");
//! ```

pub mod canonical;
pub mod classification;
pub mod contracts;
pub mod descriptor;
pub mod enforcement;
pub mod mesh;
pub mod operator;
pub mod policy;
pub mod store;

pub use mesh::{DataProduct, MeshGraph, PortRef, ProductId};
pub use operator::{Operator, OperatorConfig};
