//! Tags one port and watches the label flow to everything downstream.

mod common;

use std::collections::BTreeSet;

fn print_labels(op: &datamesh::Operator, heading: &str) {
    println!("{heading}");
    for (port, state) in op.state().classification.iter() {
        let shown = if state.is_untagged() {
            "UNTAGGED".to_string()
        } else {
            format!("{:?}", state.effective)
        };
        println!("  {port:<58} {shown}");
    }
}

fn main() -> common::AnyResult<()> {
    let (_home, op) = common::marketing_mesh()?;
    print_labels(&op, "before tagging:");

    let tracking = common::port("marketing/customer-tracking:tracking-sql");
    op.tag_port(
        "tracking-team",
        &tracking,
        BTreeSet::from(["sensitive-pii".to_string()]),
    )?;
    op.tag_port(
        "tracking-team",
        &common::port("marketing/customer-tracking:tracking-export"),
        BTreeSet::from(["internal".to_string()]),
    )?;
    print_labels(&op, "after tagging the tracking ports:");

    let recs = common::port("marketing/customer-recommendations:recommendations-sql");
    let report = op.compliance(&recs)?;
    println!("obligations on {recs}:\n{}", report.render_table());
    Ok(())
}
