//! Direct storage access with signed, short-lived tokens.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use datamesh::enforcement::{PlatformSecret, Verification};
use datamesh::operator::{AccessGrant, ManualClock};
use datamesh::policy::{Action, Subject};
use datamesh::store::StoreId;
use datamesh::{Operator, OperatorConfig};

fn main() -> common::AnyResult<()> {
    let home = tempfile::tempdir()?;
    let clock = Arc::new(ManualClock::new(1_800_000_000));
    let op = Operator::open_with_clock(
        OperatorConfig::new(home.path(), PlatformSecret::generate()),
        clock.clone(),
    )?;
    common::define_labels(&op)?;
    op.register_descriptor_text("platform", common::TRACKING)?;
    let export = common::port("marketing/customer-tracking:tracking-export");
    op.put_dataset(
        &StoreId::Output(export.clone()),
        include_bytes!("../fixtures/data/tracking-export.csv"),
    )?;
    op.tag_port("tracking-team", &export, BTreeSet::from(["internal".to_string()]))?;
    op.apply_policies("governance", common::EXPORTS_POLICY)?;

    let contractor = Subject::user("carl").with_role("contractor").with_role("analyst");
    let outcome = op.issue_token("broker", &contractor, &export, Action::Read, None)?;
    println!("contractor: {:?} by {:?}", outcome.effect, outcome.matched_rule);

    let analyst = Subject::user("ana").with_role("analyst");
    let outcome = op.issue_token("broker", &analyst, &export, Action::Read, Some(60))?;
    let Some(AccessGrant::Token(grant)) = outcome.grant else {
        return Err("analyst should get a token".into());
    };
    let token = grant.token.token;
    println!("token: {token}");
    println!("payload: {}", serde_json::to_string(&grant.token.payload)?);

    let bytes = op.fetch_with_token(&token, &export)?.map_err(|v| format!("{v:?}"))?;
    println!("fetched {} bytes from {}", bytes.len(), grant.address);

    let other = common::port("marketing/customer-tracking:tracking-sql");
    println!("presented for another port: {:?}", op.verify_token(&token, &other));

    let mut tampered = token.clone().into_bytes();
    tampered[10] ^= 0x01;
    println!(
        "one bit flipped: {:?}",
        op.verify_token(std::str::from_utf8(&tampered)?, &export)
    );

    clock.advance(59);
    println!("after 59s: {:?}", op.verify_token(&token, &export));
    clock.advance(1);
    let v = op.verify_token(&token, &export);
    println!("after 60s: {v:?}");
    assert_eq!(v, Verification::Expired);
    Ok(())
}
