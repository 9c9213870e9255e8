//! Stricter overrides go through on their own; looser ones wait for review.

mod common;

use std::collections::BTreeSet;

use datamesh::classification::Verdict;

fn labels(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn main() -> common::AnyResult<()> {
    let (_home, op) = common::marketing_mesh()?;
    let recs = common::port("marketing/customer-recommendations:recommendations-sql");
    let effective = |op: &datamesh::Operator| op.state().classification.effective(&recs).cloned().unwrap_or_default();
    println!("inherited: {:?}", effective(&op));

    let stricter = op.request_override(
        "recs-team",
        &recs,
        labels(&["sensitive-pii", "financial"]),
        "scores feed pricing",
    )?;
    println!("override #{} adding `financial`: {:?}", stricter.id, stricter.status);
    println!("effective now: {:?}", effective(&op));

    let looser = op.request_override("recs-team", &recs, labels(&["internal"]), "output cleansed of PII")?;
    println!("override #{} dropping PII: {:?}", looser.id, looser.status);
    println!("effective while pending: {:?}", effective(&op));

    let reviewed = op.review_override("privacy-officer", looser.id, Verdict::Approve)?;
    println!("after review: {:?} by {:?}", reviewed.status, reviewed.reviewer);
    println!("effective now: {:?}", effective(&op));

    for o in op.state().overrides.iter() {
        println!("  #{} {:?} {:?}", o.id, o.labels, o.status);
    }
    Ok(())
}
