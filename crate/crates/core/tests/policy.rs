mod common;

use common::*;
use datamesh::policy::{
    evaluate, explain, parse_policies, parse_policy, serialize_policy, Effect, PolicyError, PolicySet, Scope,
    ScopeLevel, TraceStatus,
};
use proptest::prelude::*;
use rand::Rng;

fn random_set(rng: &mut impl Rng, n_products: usize) -> Vec<datamesh::policy::Policy> {
    (0..rng.gen_range(0..6))
        .map(|i| random_policy(rng, i, n_products))
        .collect()
}

#[test]
fn evaluation_matches_rule_enumeration() {
    let mut rng = rng(0xb0_0001);
    let mut allows = 0;
    for _ in 0..3000 {
        let policies = random_set(&mut rng, 4);
        let set: PolicySet = policies.iter().cloned().collect();
        let req = random_request(&mut rng, 4);
        let got = evaluate(&req, &set);
        assert_eq!(got.effect, oracle_effect(&policies, &req), "{req:?}\n{policies:#?}");
        allows += usize::from(got.is_allow());
    }
    // The generator has to exercise both outcomes to mean anything.
    assert!(allows > 100, "only {allows} allows");
}

#[test]
fn explain_agrees_with_evaluate() {
    let mut rng = rng(0xb0_0002);
    for _ in 0..500 {
        let policies = random_set(&mut rng, 4);
        let set: PolicySet = policies.iter().cloned().collect();
        let req = random_request(&mut rng, 4);
        let e = evaluate(&req, &set);
        let x = explain(&req, &set);
        assert_eq!(
            (e.effect, &e.matched_rule, e.scope_consulted),
            (x.effect, &x.matched_rule, x.scope_consulted)
        );
        // Everything below the deciding scope is shadowed, nothing above it is.
        for t in &x.trace {
            let below = x.scope_consulted.is_some_and(|s| t.scope > s);
            assert_eq!(t.status == TraceStatus::Shadowed, below, "{t:?}");
        }
        if let Some(id) = &x.matched_rule {
            assert!(x
                .trace
                .iter()
                .any(|t| &t.rule == id && t.status == TraceStatus::Matched));
        }
    }
}

#[test]
fn default_deny_without_policies() {
    let mut rng = rng(0xb0_0003);
    for _ in 0..100 {
        let d = evaluate(&random_request(&mut rng, 4), &PolicySet::new());
        assert!(d.is_default_deny());
        assert_eq!(d.effect, Effect::Deny);
    }
}

#[test]
fn deny_overrides_within_a_scope() {
    let set: PolicySet = parse_policies(
        r#"policy "a" scope domain sales { allow read on sales/*:* to any; }
           policy "b" scope domain sales { deny read on sales/p1:out to role(contractor); }"#,
    )
    .unwrap()
    .into_iter()
    .collect();
    let mut rng = rng(0xb0_0004);
    let mut req = random_request(&mut rng, 4);
    req.action = datamesh::policy::Action::Read;
    req.resource.product = "sales/p1".parse().unwrap();
    req.resource.port = "out".into();
    req.subject.roles = ["contractor".to_string()].into();
    let d = evaluate(&req, &set);
    assert_eq!(d.effect, Effect::Deny);
    assert_eq!(d.scope_consulted, Some(ScopeLevel::Domain));
    req.subject.roles.clear();
    assert!(evaluate(&req, &set).is_allow());
}

#[test]
fn serialize_parse_identity_on_random_policies() {
    let mut rng = rng(0xb0_0005);
    for i in 0..500 {
        let p = random_policy(&mut rng, i, 6);
        let text = serialize_policy(&p);
        let back = parse_policy(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(back, p);
        assert_eq!(serialize_policy(&back), text);
    }
}

#[test]
fn fixture_policies_round_trip() {
    for f in ["global", "marketing", "customer-details", "exports"] {
        let text = fixture::read(&format!("policies/{f}.mpol"));
        for p in parse_policies(&text).unwrap() {
            assert_eq!(parse_policy(&serialize_policy(&p)).unwrap(), p);
        }
    }
}

#[test]
fn errors_carry_positions() {
    let cases = [
        ("policy \"p\" scope global {\n  allow read on *:* to any\n}", (3, 1)),
        ("policy \"p\" scope global {\n  allow read on *:* to any;\n", (3, 1)),
        (
            "policy \"p\" scope global {\n  allow read on *:* to rol(x);\n}",
            (2, 24),
        ),
        (
            "policy \"p\" scope global {\n  allow read on *:* to any when label(x;\n}",
            (2, 40),
        ),
        ("policy \"p\" scope planet {}", (1, 18)),
        ("policy \"unterminated scope global {}", (1, 8)),
    ];
    for (text, pos) in cases {
        let err = parse_policy(text).unwrap_err();
        assert_eq!(err.position(), Some(pos), "{text:?}: {err}");
    }
    let err = parse_policy("policy \"p\" scope domain sales {\n  allow read on marketing/*:* to any;\n}").unwrap_err();
    assert!(matches!(err, PolicyError::ScopeMismatch { line: 2, .. }));
}

#[test]
fn scope_serialization_is_tagged() {
    let s = serde_json::to_value(Scope::Domain("marketing".into())).unwrap();
    assert_eq!(s, serde_json::json!({"level": "domain", "name": "marketing"}));
}

proptest! {
    #[test]
    fn parser_never_panics(text in "[a-z\"{}();:*/ \n#-]{0,80}") {
        let _ = parse_policies(&text);
    }

    #[test]
    fn policy_names_survive_escaping(name in "\\PC{0,20}") {
        let p = parse_policy(&format!("policy \"{}\" scope global {{}}", name.replace('\\', "\\\\").replace('"', "\\\""))).unwrap();
        prop_assert_eq!(&p.name, &name);
        prop_assert_eq!(parse_policy(&serialize_policy(&p)).unwrap(), p);
    }
}
