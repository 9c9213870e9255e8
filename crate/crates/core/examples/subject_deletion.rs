//! Deletes every row about one customer, copies included.

mod common;

use std::collections::BTreeSet;

use datamesh::store::{StoreId, Table};

fn count(op: &datamesh::Operator, store: &StoreId, subject: &str) -> common::AnyResult<usize> {
    let Some(bytes) = op.read_dataset(store)? else {
        return Ok(0);
    };
    let table = Table::from_csv(&store.to_string(), &bytes)?;
    let col = table.column_index("customer_id").ok_or("no subject column")?;
    Ok(table.rows.iter().filter(|r| r[col] == subject).count())
}

fn main() -> common::AnyResult<()> {
    let (_home, op) = common::marketing_mesh()?;
    let tracking = common::port("marketing/customer-tracking:tracking-sql");
    op.tag_port(
        "tracking-team",
        &tracking,
        BTreeSet::from(["sensitive-pii".to_string()]),
    )?;

    // The recommendations product keeps its own copy of the details table.
    let copy = StoreId::Copy(common::port("marketing/customer-recommendations:details-in"));
    op.put_dataset(&copy, include_bytes!("../fixtures/data/details.csv"))?;

    let stores = [
        StoreId::Output(tracking),
        StoreId::Output(common::port("marketing/customer-details:details-sql")),
        StoreId::Output(common::port("marketing/customer-recommendations:recommendations-sql")),
        copy,
    ];
    for s in &stores {
        println!("before: {s} has {} row(s) for c003", count(&op, s, "c003")?);
    }

    let report = op.forget_subject("privacy-officer", "c003")?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("{} row(s) removed", report.total_rows());

    for s in &stores {
        println!("after: {s} has {} row(s) for c003", count(&op, s, "c003")?);
    }
    let last = op.events().pop().expect("deletion was logged");
    println!(
        "audit entry `{}` does not contain the id: {}",
        last.event.kind(),
        !serde_json::to_string(&last)?.contains("c003")
    );
    Ok(())
}
