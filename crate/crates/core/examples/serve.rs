//! Serves the HTTP API over the marketing mesh.
//!
//! ```text
//! cargo run --example serve -- 127.0.0.1:8080
//! curl -s localhost:8080/catalog/search?q=recommendations
//! ```

mod common;

use std::sync::Arc;

use datamesh::operator::http;

#[tokio::main]
async fn main() -> common::AnyResult<()> {
    let addr = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "127.0.0.1:8080".into())
        .parse()?;
    let (_home, op) = common::marketing_mesh()?;
    for text in [common::GLOBAL_POLICY, common::MARKETING_POLICY, common::DETAILS_POLICY] {
        op.apply_policies("governance", text)?;
    }
    println!("listening on http://{addr} (ctrl-c to stop)");
    http::serve(Arc::new(op), addr).await?;
    Ok(())
}
