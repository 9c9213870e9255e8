mod common;

use std::collections::BTreeSet;

use common::fixture::{self, port, DETAILS, EXPORT, RECS, TRACKING};
use common::*;
use datamesh::enforcement::crypto::{open, seal};
use datamesh::enforcement::token::decode_unverified;
use datamesh::enforcement::{
    decrypt_dataset, sign, verify_token, DataKey, EnforcementError, Mode, Outcome, PlatformSecret, TokenPayload,
    Verification,
};
use datamesh::operator::{AccessGrant, OperatorError};
use datamesh::policy::{Action, Effect, Subject};
use datamesh::store::StoreId;
use proptest::prelude::*;
use rand::{Rng, RngCore};

/// An encrypted sql port nobody has classified.
pub const SESSIONS: &str = r#"{
  "name": "web-sessions",
  "domain": "marketing",
  "archetype": "source_aligned",
  "output_ports": [{
    "id": "sessions",
    "address": "marketing/sessions.csv",
    "interface": "sql",
    "schema": [{"name": "session_id", "type": "string"}],
    "encryption_enabled": true
  }],
  "input_ports": []
}"#;

fn flip_bit(s: &str, bit: usize) -> String {
    let mut b = s.as_bytes().to_vec();
    b[bit / 8] ^= 1 << (bit % 8);
    String::from_utf8_lossy(&b).into_owned()
}

#[test]
fn tampered_tokens_never_verify() {
    let secret = PlatformSecret::from_bytes([3; 32]);
    let p = port(TRACKING);
    let mut rng = rng(0xe0_0001);
    for _ in 0..1000 {
        let t = sign(TokenPayload::new("ana", &p, Action::Read, 1_000, 300), &secret);
        assert_eq!(verify_token(&t.token, &p, 1_000, &secret), Verification::Valid);
        let bit = rng.gen_range(0..t.token.len() * 8);
        let bad = flip_bit(&t.token, bit);
        assert_ne!(verify_token(&bad, &p, 1_000, &secret), Verification::Valid, "bit {bit}");
    }
}

#[test]
fn token_expiry_boundary() {
    let secret = PlatformSecret::generate();
    let p = port(TRACKING);
    let t = sign(TokenPayload::new("ana", &p, Action::Read, 500, 300), &secret);
    assert_eq!(t.payload.expires_at, 800);
    assert_eq!(verify_token(&t.token, &p, 799, &secret), Verification::Valid);
    assert_eq!(verify_token(&t.token, &p, 800, &secret), Verification::Expired);
    assert_eq!(
        verify_token(&t.token, &port(DETAILS), 500, &secret),
        Verification::ResourceMismatch
    );
    let other = PlatformSecret::generate();
    assert_eq!(verify_token(&t.token, &p, 500, &other), Verification::SignatureInvalid);
    assert_eq!(verify_token("not-a-token", &p, 500, &secret), Verification::Malformed);
    assert_eq!(decode_unverified(&t.token).unwrap(), t.payload);
}

#[test]
fn token_wire_format() {
    use base64::engine::general_purpose::URL_SAFE_NO_PAD;
    use base64::Engine;
    use hmac::{Hmac, Mac};
    let secret_bytes = [9u8; 32];
    let secret = PlatformSecret::from_bytes(secret_bytes);
    let t = sign(TokenPayload::new("ana", &port(TRACKING), Action::Read, 10, 60), &secret);
    let (body, sig) = t.token.split_once('.').unwrap();
    let body = URL_SAFE_NO_PAD.decode(body).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        ["action", "expires_at", "issued_at", "nonce", "port", "product", "sub"]
    );
    let mut mac = Hmac::<sha2::Sha256>::new_from_slice(&secret_bytes).unwrap();
    mac.update(&body);
    assert_eq!(
        URL_SAFE_NO_PAD.decode(sig).unwrap(),
        mac.finalize().into_bytes().to_vec()
    );
}

#[test]
fn aead_round_trip_and_tamper_detection() {
    let mut rng = rng(0xe0_0002);
    for _ in 0..500 {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let mut plain = vec![0u8; rng.gen_range(0..2048)];
        rng.fill_bytes(&mut plain);
        let sealed = seal(&key, &plain);
        assert_eq!(sealed.len(), 12 + plain.len() + 16);
        assert_eq!(open(&key, &sealed).unwrap(), plain);

        let mut wrong = key;
        wrong[rng.gen_range(0..32)] ^= 1 << rng.gen_range(0..8);
        assert!(open(&wrong, &sealed).is_err());

        let mut bad = sealed.clone();
        let bit = rng.gen_range(0..bad.len() * 8);
        bad[bit / 8] ^= 1 << (bit % 8);
        assert!(open(&key, &bad).is_err());
    }
    assert!(open(&[0; 32], &[1, 2, 3]).is_err());
}

fn mode_outcomes(m: &fixture::Mesh, subject: &Subject, p: &str) -> Vec<Effect> {
    let pr = port(p);
    let mut out = vec![];
    for mode in [Mode::Gateway, Mode::Token] {
        out.push(
            m.op.submit_access_request("t", subject, &pr, Action::Read, mode, None)
                .unwrap()
                .effect,
        );
    }
    let state = m.op.state();
    if let Some(key) = state.keys.active_key(&pr) {
        let k = m.op.request_key("t", subject, &key.key_id).unwrap();
        out.push(k.authorization().effect);
        out.push(
            m.op.submit_access_request("t", subject, &pr, Action::Read, Mode::Key, None)
                .unwrap()
                .effect,
        );
    }
    if state.graph.output_port(&pr).unwrap().interface == datamesh::mesh::InterfaceType::Sql {
        let q = m.op.query("t", subject, &format!("SELECT * FROM {p}")).unwrap();
        out.push(q.authorization().effect);
    }
    out
}

#[test]
fn all_modes_agree() {
    let m = fixture::governed();
    let mut rng = rng(0xe0_0003);
    let mut seen = BTreeSet::new();
    for _ in 0..150 {
        let s = random_subject(&mut rng);
        for p in [TRACKING, DETAILS, RECS, EXPORT] {
            let effects = mode_outcomes(&m, &s, p);
            assert!(effects.windows(2).all(|w| w[0] == w[1]), "{p} {s:?}: {effects:?}");
            let cols = m.op.state().graph.output_port(&port(p)).unwrap().schema.clone();
            let per_column = if cols.is_empty() {
                m.op.decide(s.clone(), Action::Read, &port(p), None, false)
                    .unwrap()
                    .effect
            } else if cols.iter().all(|c| {
                m.op.decide(s.clone(), Action::Read, &port(p), Some(&c.name), false)
                    .unwrap()
                    .is_allow()
            }) {
                Effect::Allow
            } else {
                Effect::Deny
            };
            assert_eq!(effects[0], per_column);
            seen.insert(effects[0]);
        }
    }
    assert_eq!(seen.len(), 2, "both outcomes exercised");
}

#[test]
fn untagged_port_refused_by_every_mechanism() {
    let m = fixture::marketing();
    m.op.apply_policies("g", r#"policy "open" scope global { allow read on *:* to any; }"#)
        .unwrap();
    m.op.register_descriptor_text("platform", SESSIONS).unwrap();
    let anyone = Subject::user("ana");
    for p in [TRACKING, "marketing/web-sessions:sessions"] {
        for mode in [Mode::Gateway, Mode::Token, Mode::Key] {
            if mode == Mode::Key && p == TRACKING {
                continue;
            }
            let err =
                m.op.submit_access_request("t", &anyone, &port(p), Action::Read, mode, None)
                    .unwrap_err();
            assert!(
                matches!(err, OperatorError::Enforcement(EnforcementError::Untagged(_))),
                "{mode:?}: {err}"
            );
        }
        let sql = format!("SELECT * FROM {p}");
        assert!(matches!(
            m.op.query("t", &anyone, &sql),
            Err(OperatorError::Enforcement(EnforcementError::Untagged(_)))
        ));
    }
    let key_id =
        m.op.state()
            .keys
            .active_key(&port("marketing/web-sessions:sessions"))
            .unwrap()
            .key_id
            .clone();
    assert!(matches!(
        m.op.request_key("t", &anyone, &key_id),
        Err(OperatorError::Enforcement(EnforcementError::Untagged(_)))
    ));
    // Tagged ports go through under the same policy.
    assert!(m
        .op
        .submit_access_request("t", &anyone, &port(DETAILS), Action::Read, Mode::Gateway, None)
        .unwrap()
        .grant
        .is_some());
}

#[test]
fn key_material_only_on_allow() {
    let m = fixture::governed();
    let mut rng = rng(0xe0_0004);
    let key_id = m.op.state().keys.active_key(&port(DETAILS)).unwrap().key_id.clone();
    let mut material = None;
    let mut denials = 0;
    for _ in 0..200 {
        let s = random_subject(&mut rng);
        let outcome = m.op.request_key("kms", &s, &key_id).unwrap();
        let json = serde_json::to_value(&outcome).unwrap();
        match &outcome {
            Outcome::Denied { .. } => {
                denials += 1;
                assert!(json.get("grant").is_none());
            }
            Outcome::Granted { grant, .. } => material = Some(grant.key.clone()),
        }
    }
    assert!(denials > 0);
    let material = material.expect("some subject was allowed");
    // The key never appears in the audit trail or state.
    let log = std::fs::read_to_string(m.home.path().join("events.jsonl")).unwrap();
    assert!(!log.contains(&material));
    assert!(!serde_json::to_string(&*m.op.state()).unwrap().contains(&material));
    let raw = m.op.raw_dataset(&StoreId::Output(port(DETAILS))).unwrap().unwrap();
    let plain = decrypt_dataset(&raw, &DataKey::from_hex(&material).unwrap()).unwrap();
    assert_eq!(plain, fixture::read_bytes("data/details.csv"));
}

#[test]
fn column_level_denial_names_the_column() {
    let m = fixture::governed();
    let analyst = Subject::user("ana").with_role("analyst");
    let q =
        m.op.query("t", &analyst, &format!("SELECT name, email FROM {DETAILS}"))
            .unwrap();
    assert!(!q.is_granted());
    assert_eq!(q.authorization().denied_columns, ["email"]);
    let q =
        m.op.query("t", &analyst, &format!("SELECT name FROM {DETAILS}"))
            .unwrap();
    assert_eq!(q.grant().unwrap().rows.len(), 10);
    // A filter on a denied column counts as touching it.
    let q =
        m.op.query("t", &analyst, &format!("SELECT name FROM {DETAILS} WHERE email = 'x'"))
            .unwrap();
    assert!(!q.is_granted());
    let insider = analyst.clone().with_attr("insider", true);
    assert!(m
        .op
        .query("t", &insider, &format!("SELECT name, email FROM {DETAILS}"))
        .unwrap()
        .is_granted());
}

#[test]
fn token_grant_fetches_ciphertext_for_encrypted_ports() {
    let m = fixture::governed();
    let recs = Subject::user("marketing/customer-recommendations")
        .in_domain("marketing")
        .with_attr("insider", true);
    let out =
        m.op.issue_token("t", &recs, &port(DETAILS), Action::Read, Some(30))
            .unwrap();
    let Some(AccessGrant::Token(g)) = out.grant else {
        panic!("{out:?}")
    };
    let bytes = m.op.fetch_with_token(&g.token.token, &port(DETAILS)).unwrap().unwrap();
    assert_eq!(
        bytes,
        m.op.raw_dataset(&StoreId::Output(port(DETAILS))).unwrap().unwrap()
    );
    m.clock.advance(30);
    assert_eq!(
        m.op.fetch_with_token(&g.token.token, &port(DETAILS)).unwrap(),
        Err(Verification::Expired)
    );
}

proptest! {
    #[test]
    fn sealed_bytes_round_trip(key in any::<[u8; 32]>(), plain in proptest::collection::vec(any::<u8>(), 0..512)) {
        prop_assert_eq!(open(&key, &seal(&key, &plain)).unwrap(), plain);
    }
}
