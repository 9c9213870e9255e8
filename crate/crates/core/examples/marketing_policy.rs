//! A domain-level allow takes precedence over the global baseline deny.

mod common;

use std::collections::BTreeSet;

use datamesh::policy::{Action, Subject, TraceStatus};

fn main() -> common::AnyResult<()> {
    let (_home, op) = common::marketing_mesh()?;
    let tracking = common::port("marketing/customer-tracking:tracking-sql");
    op.tag_port(
        "tracking-team",
        &tracking,
        BTreeSet::from(["sensitive-pii".to_string()]),
    )?;

    op.apply_policies("governance", common::GLOBAL_POLICY)?;
    let recs = Subject::user("marketing/customer-recommendations").in_domain("marketing");
    let d = op.decide(recs.clone(), Action::Read, &tracking, None, false)?;
    println!("global baseline only: {:?} via {:?}", d.effect, d.matched_rule);

    op.apply_policies("marketing-lead", common::MARKETING_POLICY)?;
    let d = op.decide(recs, Action::Read, &tracking, None, true)?;
    println!(
        "with the marketing rule: {:?} (decided at {:?} scope)",
        d.effect, d.scope_consulted
    );
    for t in &d.trace {
        let mark = match t.status {
            TraceStatus::Matched => "match",
            TraceStatus::NotMatched => "skip",
            TraceStatus::Shadowed => "shadowed",
        };
        println!("  [{mark:>8}] {} #{}: {}", t.rule.policy, t.rule.index, t.text);
        if !t.why.is_empty() {
            println!("             {}", t.why);
        }
    }

    let outsider = Subject::user("finance/ledger").in_domain("finance");
    let d = op.decide(outsider, Action::Read, &tracking, None, false)?;
    println!("finance reading tracking: {:?}", d.effect);
    Ok(())
}
