//! Column-level access control in the query gateway.

mod common;

use std::collections::BTreeSet;

use datamesh::enforcement::Outcome;
use datamesh::policy::Subject;

fn run(op: &datamesh::Operator, who: &Subject, sql: &str) -> common::AnyResult<()> {
    println!("{} > {sql}", who.user);
    match op.query("gateway", who, sql)? {
        Outcome::Granted { grant, .. } => print!("{}", String::from_utf8_lossy(&grant.to_csv())),
        Outcome::Denied { authorization } => println!("denied on columns {:?}", authorization.denied_columns),
    }
    println!();
    Ok(())
}

fn main() -> common::AnyResult<()> {
    let (_home, op) = common::marketing_mesh()?;
    for text in [common::GLOBAL_POLICY, common::MARKETING_POLICY, common::DETAILS_POLICY] {
        op.apply_policies("governance", text)?;
    }
    let analyst = Subject::user("ana").with_role("analyst");
    let insider = Subject::user("ines").with_role("analyst").with_attr("insider", true);

    run(
        &op,
        &analyst,
        "SELECT name, email FROM marketing/customer-details:details-sql",
    )?;
    run(
        &op,
        &analyst,
        "SELECT customer_id, name FROM marketing/customer-details:details-sql WHERE segment = 'premium'",
    )?;
    run(
        &op,
        &insider,
        "SELECT name, email FROM marketing/customer-details:details-sql WHERE segment = 'new'",
    )?;

    // Nobody gets through to a port that was never classified.
    let tracking = common::port("marketing/customer-tracking:tracking-sql");
    if let Err(e) = op.query(
        "gateway",
        &analyst,
        "SELECT page FROM marketing/customer-tracking:tracking-sql",
    ) {
        println!("before tagging: {e}");
    }
    op.tag_port(
        "tracking-team",
        &tracking,
        BTreeSet::from(["sensitive-pii".to_string()]),
    )?;
    let marketer = Subject::user("mo").in_domain("marketing");
    run(
        &op,
        &marketer,
        "SELECT page FROM marketing/customer-tracking:tracking-sql WHERE customer_id = 'c003'",
    )?;

    if let Err(e) = op.query(
        "gateway",
        &analyst,
        "SELECT name FROM marketing/customer-details:details-sql WHERE",
    ) {
        println!("malformed: {e}");
    }
    Ok(())
}
