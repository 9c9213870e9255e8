//! Per-port data keys: ciphertext on disk, keys only for authorized readers.

mod common;

use datamesh::enforcement::{decrypt_dataset, Mode, Outcome};
use datamesh::operator::AccessGrant;
use datamesh::policy::{Action, Subject};
use datamesh::store::StoreId;

fn main() -> common::AnyResult<()> {
    let (_home, op) = common::marketing_mesh()?;
    for text in [common::GLOBAL_POLICY, common::MARKETING_POLICY] {
        op.apply_policies("governance", text)?;
    }
    let details = common::port("marketing/customer-details:details-sql");
    let on_disk = op.raw_dataset(&StoreId::Output(details.clone()))?.unwrap_or_default();
    println!("stored bytes: {} (nonce, ciphertext, tag)", on_disk.len());
    println!(
        "plaintext visible on disk: {}",
        String::from_utf8_lossy(&on_disk).contains("Ada Brandt")
    );

    let recs = Subject::user("marketing/customer-recommendations").in_domain("marketing");
    let outcome = op.submit_access_request("broker", &recs, &details, Action::Read, Mode::Key, None)?;
    let Some(AccessGrant::Key { key_id }) = outcome.grant else {
        return Err("marketing should be allowed".into());
    };
    println!("granted key handle {key_id}");

    let stranger = Subject::user("finance/ledger").in_domain("finance");
    match op.request_key("kms", &stranger, &key_id)? {
        Outcome::Denied { authorization } => println!("finance: denied, no key material ({:?})", authorization.effect),
        Outcome::Granted { .. } => unreachable!("finance has no rule"),
    }

    let Outcome::Granted { grant, .. } = op.request_key("kms", &recs, &key_id)? else {
        return Err("key request should be granted".into());
    };
    let key = grant.data_key().ok_or("malformed key")?;
    let plain = decrypt_dataset(&on_disk, &key)?;
    println!(
        "decrypted {} bytes; first line: {}",
        plain.len(),
        String::from_utf8_lossy(&plain).lines().next().unwrap_or("")
    );

    let mut flipped = on_disk.clone();
    flipped[20] ^= 0x80;
    println!("tampered ciphertext: {}", decrypt_dataset(&flipped, &key).unwrap_err());
    Ok(())
}
