//! Compiles a policy to a blob-store bucket policy, and shows what does not translate.

mod common;

use std::collections::BTreeSet;

use datamesh::policy::{compile_native, parse_policies, Action, NativeRequest, NativeTarget};

fn main() -> common::AnyResult<()> {
    let (_home, op) = common::marketing_mesh()?;
    let graph = op.state().graph.clone();

    for policy in parse_policies(common::EXPORTS_POLICY)? {
        let native = compile_native(&policy, &graph, NativeTarget::BlobStore)?;
        println!("{}", serde_json::to_string_pretty(&native)?);
        for (user, role) in [("ana", "analyst"), ("carl", "contractor"), ("dora", "designer")] {
            let req = NativeRequest {
                user: user.into(),
                roles: BTreeSet::from([role.to_string()]),
                action: Action::Read,
                key: "marketing/exports/tracking/2026-10-01.csv".into(),
            };
            println!("  {role:<10} -> {:?}", native.evaluate(&req));
        }
    }

    for policy in parse_policies(common::DETAILS_POLICY)? {
        if let Err(e) = compile_native(&policy, &graph, NativeTarget::BlobStore) {
            println!("{e}");
        }
    }
    Ok(())
}
