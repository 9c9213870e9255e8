//! The control plane is the fold of its log: reopen and land on the same state.

mod common;

use std::collections::BTreeSet;

use datamesh::enforcement::{Mode, PlatformSecret};
use datamesh::operator::{replay, EventLog};
use datamesh::policy::{Action, Subject};
use datamesh::{Operator, OperatorConfig};

fn main() -> common::AnyResult<()> {
    let home = tempfile::tempdir()?;
    let secret = PlatformSecret::generate();
    let config = OperatorConfig::new(home.path(), secret.clone());
    let live_hash = {
        let op = Operator::open(config.clone())?;
        common::define_labels(&op)?;
        for text in [common::TRACKING, common::DETAILS, common::RECOMMENDATIONS] {
            op.register_descriptor_text("platform", text)?;
        }
        let tracking = common::port("marketing/customer-tracking:tracking-sql");
        op.tag_port(
            "tracking-team",
            &tracking,
            BTreeSet::from(["sensitive-pii".to_string()]),
        )?;
        op.apply_policies("governance", common::GLOBAL_POLICY)?;
        op.apply_policies("governance", common::MARKETING_POLICY)?;
        let recs = Subject::user("marketing/customer-recommendations").in_domain("marketing");
        op.submit_access_request("broker", &recs, &tracking, Action::Read, Mode::Token, None)?;
        op.state_hash()
    };

    let log = EventLog::open(home.path())?;
    println!(
        "{} events in {}",
        log.len(),
        log.path().map(|p| p.display().to_string()).unwrap_or_default()
    );
    for r in log.records() {
        println!("  #{:<3} {:<22} by {}", r.seq, r.event.kind(), r.actor);
    }

    let reopened = Operator::open(config)?;
    println!("live hash     {live_hash}");
    println!("reopened hash {}", reopened.state_hash());
    println!("pure replay   {}", replay(log.records(), &secret)?.hash());

    // Keys are derived from the platform secret, so replay restores them.
    let key = reopened.state().keys.iter().next().map(|k| k.key_id.clone());
    println!("key after replay: {key:?}");

    // A gap in the log is detected and reported with its sequence number.
    let path = home.path().join("events.jsonl");
    let text = std::fs::read_to_string(&path)?;
    let without_third: Vec<&str> = text
        .lines()
        .enumerate()
        .filter(|(i, _)| *i != 2)
        .map(|(_, l)| l)
        .collect();
    std::fs::write(&path, without_third.join("\n") + "\n")?;
    println!("after deleting line 3: {}", EventLog::open(home.path()).unwrap_err());
    Ok(())
}
