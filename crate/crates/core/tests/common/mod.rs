//! Seeded generators and brute-force oracles shared by the integration
//! tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use datamesh::contracts::Expectation;
use datamesh::descriptor::ProductDescriptor;
use datamesh::mesh::{
    Archetype, Column, ConsumptionStyle, ExternalSource, InputPort, InterfaceType, MeshGraph, OutputPort, PortTarget,
    ScalarType, Slo, SloKind,
};
use datamesh::policy::{
    AccessRequest, Action, Dnf, Effect, LabelTerm, Policy, Resource, ResourcePattern, Rule, Scope, Subject,
    SubjectMatcher, SubjectTerm, TermKind,
};
use datamesh::{PortRef, ProductId};

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const DOMAINS: [&str; 3] = ["marketing", "sales", "finance"];
pub const LABELS: [&str; 5] = ["public", "internal", "sensitive-pii", "financial", "restricted"];
pub const ROLES: [&str; 4] = ["analyst", "engineer", "contractor", "steward"];
pub const USERS: [&str; 4] = ["ana", "bo", "cy", "di"];
pub const ATTRS: [&str; 2] = ["insider", "trained"];
pub const COLUMNS: [&str; 4] = ["id", "email", "amount", "segment"];
pub const PORTS: [&str; 3] = ["out", "files", "stream"];

fn subset<R: Rng>(rng: &mut R, pool: &[&str], p: f64) -> BTreeSet<String> {
    pool.iter().filter(|_| rng.gen_bool(p)).map(|s| s.to_string()).collect()
}

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("non-empty pool")
}

/// A random mesh of `n` products, returned in a valid registration order.
/// Every input targets an earlier product, so the graph is acyclic.
pub fn random_mesh<R: Rng>(rng: &mut R, n: usize) -> Vec<ProductDescriptor> {
    let mut out: Vec<ProductDescriptor> = Vec::with_capacity(n);
    let mut outputs: Vec<PortRef> = Vec::new();
    for i in 0..n {
        let domain = pick(rng, &DOMAINS);
        let id = ProductId::new(domain, &format!("p{i}")).unwrap();
        let mut d = ProductDescriptor {
            name: format!("p{i}"),
            domain: domain.to_string(),
            archetype: if rng.gen_bool(0.5) {
                Archetype::SourceAligned
            } else {
                Archetype::ConsumerAligned
            },
            description: String::new(),
            output_ports: Vec::new(),
            input_ports: Vec::new(),
        };
        let n_out = rng.gen_range(1..=2);
        for port in &PORTS[..n_out] {
            let mut o = OutputPort::new(port, &format!("{domain}/p{i}/{port}"), InterfaceType::Sql)
                .with_columns(COLUMNS.iter().map(|c| Column::new(c, ScalarType::String)));
            o.labels = subset(rng, &LABELS, 0.15);
            d.output_ports.push(o);
            outputs.push(id.port(port));
        }
        let n_in = if i == 0 { 0 } else { rng.gen_range(0..=3) };
        for k in 0..n_in {
            let target = if rng.gen_bool(0.8) && outputs.len() > n_out {
                let candidates = &outputs[..outputs.len() - n_out];
                PortTarget::Mesh(candidates.choose(rng).unwrap().clone())
            } else {
                PortTarget::External(ExternalSource {
                    uri: format!("ext://source/{i}/{k}"),
                    labels: subset(rng, &LABELS, 0.2),
                })
            };
            d.input_ports
                .push(InputPort::new(&format!("in{k}"), target, ConsumptionStyle::ByReference));
        }
        out.push(d);
    }
    out
}

pub fn build_graph(descriptors: &[ProductDescriptor]) -> MeshGraph {
    let mut g = MeshGraph::new();
    for d in descriptors {
        g.register(d.clone()).expect("generated descriptor registers");
    }
    g
}

/// Effective labels with no overrides, computed by walking every upstream
/// path from each port and collecting what is declared along the way.
pub fn reachability_oracle(graph: &MeshGraph) -> BTreeMap<PortRef, BTreeSet<String>> {
    let mut out = BTreeMap::new();
    for p in graph.products() {
        for o in &p.output_ports {
            let mut labels = o.labels.clone();
            let mut stack: Vec<ProductId> = vec![p.id.clone()];
            let mut seen_ports: BTreeSet<PortRef> = BTreeSet::new();
            while let Some(owner) = stack.pop() {
                let product = graph.get(&owner).unwrap();
                for input in &product.input_ports {
                    match &input.target {
                        PortTarget::External(e) => labels.extend(e.labels.iter().cloned()),
                        PortTarget::Mesh(t) => {
                            if seen_ports.insert(t.clone()) {
                                labels.extend(graph.output_port(t).unwrap().labels.iter().cloned());
                                stack.push(t.product.clone());
                            }
                        }
                    }
                }
            }
            out.insert(p.id.port(&o.id), labels);
        }
    }
    out
}

/// Effective labels with overrides: an active override replaces the port's
/// labels, and downstream sees the replacement. Plain recursion.
pub fn recursive_oracle(
    graph: &MeshGraph,
    active: &BTreeMap<PortRef, BTreeSet<String>>,
    port: &PortRef,
) -> BTreeSet<String> {
    if let Some(l) = active.get(port) {
        return l.clone();
    }
    let product = graph.get(&port.product).unwrap();
    let mut labels = graph.output_port(port).unwrap().labels.clone();
    for input in &product.input_ports {
        match &input.target {
            PortTarget::External(e) => labels.extend(e.labels.iter().cloned()),
            PortTarget::Mesh(t) => labels.extend(recursive_oracle(graph, active, t)),
        }
    }
    labels
}

/// Upstream closure by repeated scanning until nothing changes.
pub fn naive_upstream(graph: &MeshGraph, id: &ProductId) -> BTreeSet<ProductId> {
    let mut found: BTreeSet<ProductId> = BTreeSet::new();
    loop {
        let before = found.len();
        for p in graph.products() {
            if &p.id != id && !found.contains(&p.id) {
                continue;
            }
            for input in &p.input_ports {
                if let PortTarget::Mesh(t) = &input.target {
                    found.insert(t.product.clone());
                }
            }
        }
        if found.len() == before {
            return found;
        }
    }
}

// ---- policies ----

fn subject_term<R: Rng>(rng: &mut R) -> SubjectTerm {
    let (kind, name) = match rng.gen_range(0..4) {
        0 => (TermKind::Role, pick(rng, &ROLES)),
        1 => (TermKind::User, pick(rng, &USERS)),
        2 => (TermKind::Domain, pick(rng, &DOMAINS)),
        _ => (TermKind::Attr, pick(rng, &ATTRS)),
    };
    SubjectTerm {
        negated: rng.gen_bool(0.2),
        kind,
        name: name.to_string(),
    }
}

fn dnf<R: Rng, T>(rng: &mut R, mut term: impl FnMut(&mut R) -> T) -> Dnf<T> {
    let clauses = (0..rng.gen_range(1..=2))
        .map(|_| (0..rng.gen_range(1..=2)).map(|_| term(rng)).collect())
        .collect();
    Dnf(clauses)
}

fn product_glob<R: Rng>(rng: &mut R, scope: &Scope, n_products: usize) -> String {
    match scope {
        Scope::Product(p) => p.to_string(),
        Scope::Domain(d) => match rng.gen_range(0..3) {
            0 => format!("{d}/*"),
            1 => format!("{d}/p{}", rng.gen_range(0..n_products)),
            _ => format!("{d}/p{}*", rng.gen_range(0..n_products.min(3))),
        },
        Scope::Global => match rng.gen_range(0..4) {
            0 => "*".to_string(),
            1 => format!("{}/*", pick(rng, &DOMAINS)),
            2 => format!("*/p{}", rng.gen_range(0..n_products)),
            _ => format!("{}/p{}", pick(rng, &DOMAINS), rng.gen_range(0..n_products)),
        },
    }
}

pub fn random_rule<R: Rng>(rng: &mut R, scope: &Scope, n_products: usize) -> Rule {
    let port = match rng.gen_range(0..4) {
        0 => None,
        1 => Some("*".to_string()),
        _ => Some(pick(rng, &PORTS).to_string()),
    };
    let column = match (&port, rng.gen_range(0..4)) {
        (None, _) | (_, 0) | (_, 1) => None,
        (_, 2) => Some("*".to_string()),
        _ => Some(pick(rng, &COLUMNS).to_string()),
    };
    Rule {
        effect: if rng.gen_bool(0.5) { Effect::Allow } else { Effect::Deny },
        action: *[Action::Read, Action::Write, Action::Manage].choose(rng).unwrap(),
        resource: ResourcePattern {
            product: product_glob(rng, scope, n_products),
            port,
            column,
        },
        subject: if rng.gen_bool(0.3) {
            SubjectMatcher::Any
        } else {
            SubjectMatcher::Expr(dnf(rng, subject_term))
        },
        condition: rng.gen_bool(0.3).then(|| {
            dnf(rng, |r| LabelTerm {
                negated: r.gen_bool(0.3),
                label: pick(r, &LABELS).to_string(),
            })
        }),
    }
}

pub fn random_scope<R: Rng>(rng: &mut R, n_products: usize) -> Scope {
    match rng.gen_range(0..3) {
        0 => Scope::Global,
        1 => Scope::Domain(pick(rng, &DOMAINS).to_string()),
        _ => {
            Scope::Product(ProductId::new(pick(rng, &DOMAINS), &format!("p{}", rng.gen_range(0..n_products))).unwrap())
        }
    }
}

const NAME_CHARS: &[char] = &['a', 'b', 'z', '-', ' ', '"', '\\', '\n', '\t', 'é', '#', '{'];

pub fn random_policy<R: Rng>(rng: &mut R, index: usize, n_products: usize) -> Policy {
    let scope = random_scope(rng, n_products);
    let mut name: String = (0..rng.gen_range(0..6))
        .map(|_| *NAME_CHARS.choose(rng).unwrap())
        .collect();
    name.push_str(&format!("p{index}"));
    let rules = (0..rng.gen_range(0..5))
        .map(|_| random_rule(rng, &scope, n_products))
        .collect();
    Policy { name, scope, rules }
}

pub fn random_subject<R: Rng>(rng: &mut R) -> Subject {
    let mut attrs = BTreeMap::new();
    for a in ATTRS {
        if rng.gen_bool(0.5) {
            attrs.insert(a.to_string(), rng.gen_bool(0.6));
        }
    }
    Subject {
        user: pick(rng, &USERS).to_string(),
        roles: subset(rng, &ROLES, 0.35),
        domain: rng.gen_bool(0.8).then(|| pick(rng, &DOMAINS).to_string()),
        attrs,
    }
}

pub fn random_request<R: Rng>(rng: &mut R, n_products: usize) -> AccessRequest {
    AccessRequest {
        subject: random_subject(rng),
        action: *[Action::Read, Action::Write, Action::Manage].choose(rng).unwrap(),
        resource: Resource {
            product: ProductId::new(pick(rng, &DOMAINS), &format!("p{}", rng.gen_range(0..n_products))).unwrap(),
            port: pick(rng, &PORTS).to_string(),
            column: rng.gen_bool(0.5).then(|| pick(rng, &COLUMNS).to_string()),
        },
        labels: subset(rng, &LABELS, 0.3),
    }
}

/// `*` matches any run of characters. Dynamic programming over prefixes.
pub fn oracle_glob(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let mut m = vec![vec![false; t.len() + 1]; p.len() + 1];
    m[0][0] = true;
    for i in 1..=p.len() {
        for j in 0..=t.len() {
            m[i][j] = if p[i - 1] == '*' {
                m[i - 1][j] || (j > 0 && m[i][j - 1])
            } else {
                j > 0 && m[i - 1][j - 1] && p[i - 1] == t[j - 1]
            };
        }
    }
    m[p.len()][t.len()]
}

fn oracle_rule_matches(rule: &Rule, req: &AccessRequest) -> bool {
    if rule.action != req.action {
        return false;
    }
    let r = &rule.resource;
    if !oracle_glob(&r.product, req.resource.product.as_str()) {
        return false;
    }
    if let Some(port) = &r.port {
        if !oracle_glob(port, &req.resource.port) {
            return false;
        }
    }
    match (&r.column, &req.resource.column) {
        (None, _) => {}
        (Some(g), Some(c)) if oracle_glob(g, c) => {}
        (Some(g), None) if g.chars().all(|c| c == '*') => {}
        _ => return false,
    }
    let s = &req.subject;
    let subject_ok = match &rule.subject {
        SubjectMatcher::Any => true,
        SubjectMatcher::Expr(d) => d.0.iter().any(|clause| {
            clause.iter().all(|t| {
                let v = match t.kind {
                    TermKind::Role => s.roles.contains(&t.name),
                    TermKind::User => s.user == t.name,
                    TermKind::Domain => s.domain.as_ref() == Some(&t.name),
                    TermKind::Attr => s.attrs.get(&t.name).copied().unwrap_or(false),
                };
                v ^ t.negated
            })
        }),
    };
    let condition_ok = rule.condition.as_ref().is_none_or(|d| {
        d.0.iter()
            .any(|clause| clause.iter().all(|t| req.labels.contains(&t.label) ^ t.negated))
    });
    subject_ok && condition_ok
}

/// Enumerates every rule, groups matches by scope level and lets the most
/// specific non-empty level decide, deny beating allow.
pub fn oracle_effect(policies: &[Policy], req: &AccessRequest) -> Effect {
    let product = &req.resource.product;
    let level_of = |s: &Scope| match s {
        Scope::Product(p) => (p == product).then_some(0),
        Scope::Domain(d) => (d == product.domain()).then_some(1),
        Scope::Global => Some(2),
    };
    let mut matched: [Vec<Effect>; 3] = Default::default();
    for p in policies {
        let Some(level) = level_of(&p.scope) else { continue };
        for r in &p.rules {
            if oracle_rule_matches(r, req) {
                matched[level].push(r.effect);
            }
        }
    }
    for effects in matched {
        if effects.contains(&Effect::Deny) {
            return Effect::Deny;
        }
        if !effects.is_empty() {
            return Effect::Allow;
        }
    }
    Effect::Deny
}

// ---- descriptors ----

/// A random descriptor that passes validation; mesh targets point at
/// products that need not exist.
pub fn random_descriptor<R: Rng>(rng: &mut R, i: usize) -> ProductDescriptor {
    let domain = pick(rng, &DOMAINS);
    let descriptions = [
        "",
        "plain",
        "quotes \" and \\ slashes",
        "unicode: données, データ",
        "line\nbreak",
    ];
    let mut d = ProductDescriptor {
        name: format!("prod-{i}"),
        domain: domain.to_string(),
        archetype: if rng.gen_bool(0.5) {
            Archetype::SourceAligned
        } else {
            Archetype::ConsumerAligned
        },
        description: descriptions.choose(rng).unwrap().to_string(),
        output_ports: Vec::new(),
        input_ports: Vec::new(),
    };
    for k in 0..rng.gen_range(1..=3) {
        let interface = *[InterfaceType::Sql, InterfaceType::Blob, InterfaceType::Streaming]
            .choose(rng)
            .unwrap();
        let mut o = OutputPort::new(&format!("out{k}"), &format!("{domain}/prod-{i}/out{k}"), interface);
        if interface == InterfaceType::Sql || rng.gen_bool(0.3) {
            let types = [
                ScalarType::String,
                ScalarType::Int,
                ScalarType::Float,
                ScalarType::Bool,
                ScalarType::Timestamp,
            ];
            let n = rng.gen_range(1..=COLUMNS.len());
            let subject_at = rng.gen_bool(0.5).then(|| rng.gen_range(0..n));
            for (c, name) in COLUMNS[..n].iter().enumerate() {
                let col = if subject_at == Some(c) {
                    Column::subject(name, *types.choose(rng).unwrap())
                } else {
                    Column::new(name, *types.choose(rng).unwrap())
                };
                o.schema.push(col);
            }
        }
        if rng.gen_bool(0.5) {
            o.slos.push(Slo {
                kind: SloKind::FreshnessSeconds,
                threshold: rng.gen_range(60..100_000) as f64,
            });
        }
        if rng.gen_bool(0.5) {
            o.slos.push(Slo {
                kind: SloKind::CompletenessPct,
                threshold: rng.gen_range(1..=1000) as f64 / 10.0,
            });
        }
        o.labels = subset(rng, &LABELS, 0.2);
        o.encryption_enabled = rng.gen_bool(0.3);
        d.output_ports.push(o);
    }
    for k in 0..rng.gen_range(0..=3) {
        let target = if rng.gen_bool(0.7) {
            PortTarget::Mesh(
                ProductId::new(pick(rng, &DOMAINS), &format!("up-{}", rng.gen_range(0..50)))
                    .unwrap()
                    .port(pick(rng, &PORTS)),
            )
        } else {
            PortTarget::External(ExternalSource {
                uri: format!("jdbc://src/{k}"),
                labels: subset(rng, &LABELS, 0.3),
            })
        };
        let style = *[
            ConsumptionStyle::ByCopy,
            ConsumptionStyle::ByReference,
            ConsumptionStyle::ByProjection,
        ]
        .choose(rng)
        .unwrap();
        let mut input = InputPort::new(&format!("in{k}"), target, style);
        if style == ConsumptionStyle::ByProjection {
            input.projection = Some(
                COLUMNS[..rng.gen_range(1..=COLUMNS.len())]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            );
        }
        if style == ConsumptionStyle::ByCopy && rng.gen_bool(0.5) {
            input.copy_address = Some(format!("{domain}/copies/prod-{i}-in{k}"));
        }
        if matches!(input.target, PortTarget::Mesh(_)) {
            for _ in 0..rng.gen_range(0..3) {
                input.expectations.push(match rng.gen_range(0..4) {
                    0 => Expectation::ColumnPresent {
                        column: pick(rng, &COLUMNS).to_string(),
                    },
                    1 => Expectation::NonNullFraction {
                        column: pick(rng, &COLUMNS).to_string(),
                        min: rng.gen_range(0..=100) as f64 / 100.0,
                    },
                    2 => Expectation::MinRowCount {
                        rows: rng.gen_range(0..1000),
                    },
                    _ => Expectation::MaxStalenessSeconds {
                        seconds: rng.gen_range(1..100_000),
                    },
                });
            }
        }
        d.input_ports.push(input);
    }
    d
}

// ---- the marketing fixture ----

pub mod fixture {
    use std::collections::BTreeSet;
    use std::sync::Arc;

    use datamesh::classification::SensitivityLabel;
    use datamesh::enforcement::PlatformSecret;
    use datamesh::operator::{Clock, ManualClock};
    use datamesh::store::StoreId;
    use datamesh::{Operator, OperatorConfig, PortRef};

    pub const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    pub const TRACKING: &str = "marketing/customer-tracking:tracking-sql";
    pub const EXPORT: &str = "marketing/customer-tracking:tracking-export";
    pub const DETAILS: &str = "marketing/customer-details:details-sql";
    pub const RECS: &str = "marketing/customer-recommendations:recommendations-sql";
    pub const DETAILS_COPY: &str = "marketing/customer-recommendations:details-in";
    pub const NOW: u64 = 1_800_000_000;

    pub fn port(s: &str) -> PortRef {
        s.parse().unwrap()
    }

    pub fn read(rel: &str) -> String {
        std::fs::read_to_string(format!("{FIXTURES}/{rel}")).unwrap()
    }

    pub fn read_bytes(rel: &str) -> Vec<u8> {
        std::fs::read(format!("{FIXTURES}/{rel}")).unwrap()
    }

    pub struct Mesh {
        pub home: tempfile::TempDir,
        pub secret: PlatformSecret,
        pub clock: Arc<ManualClock>,
        pub op: Operator,
    }

    impl Mesh {
        pub fn config(&self) -> OperatorConfig {
            OperatorConfig::new(self.home.path(), self.secret.clone())
        }

        pub fn reopen(&self) -> Operator {
            let clock: Arc<dyn Clock> = self.clock.clone();
            Operator::open_with_clock(self.config(), clock).unwrap()
        }
    }

    pub fn empty() -> Mesh {
        let home = tempfile::tempdir().unwrap();
        let secret = PlatformSecret::from_bytes([7; 32]);
        let clock = Arc::new(ManualClock::new(NOW));
        let op = Operator::open_with_clock(OperatorConfig::new(home.path(), secret.clone()), clock.clone()).unwrap();
        Mesh {
            home,
            secret,
            clock,
            op,
        }
    }

    pub fn with_labels() -> Mesh {
        let m = empty();
        let labels: Vec<SensitivityLabel> = serde_json::from_str(&read("labels.json")).unwrap();
        for l in labels {
            m.op.define_label("platform", &l.name, l.obligations, &l.description)
                .unwrap();
        }
        m
    }

    /// Labels, the three products and their datasets. Tracking is untagged.
    pub fn marketing() -> Mesh {
        let m = with_labels();
        for name in ["customer-tracking", "customer-details", "customer-recommendations"] {
            m.op.register_descriptor_text("platform", &read(&format!("products/{name}.dp.json")))
                .unwrap();
        }
        for (p, file) in [
            (TRACKING, "tracking.csv"),
            (DETAILS, "details.csv"),
            (RECS, "recommendations.csv"),
            (EXPORT, "tracking-export.csv"),
        ] {
            m.op.put_dataset(&StoreId::Output(port(p)), &read_bytes(&format!("data/{file}")))
                .unwrap();
        }
        m
    }

    /// `marketing()` plus tracking tagged PII and every fixture policy applied.
    pub fn governed() -> Mesh {
        let m = marketing();
        m.op.tag_port(
            "tracking-team",
            &port(TRACKING),
            BTreeSet::from(["sensitive-pii".to_string()]),
        )
        .unwrap();
        m.op.tag_port("tracking-team", &port(EXPORT), BTreeSet::from(["internal".to_string()]))
            .unwrap();
        for f in ["global", "marketing", "customer-details", "exports"] {
            m.op.apply_policies("governance", &read(&format!("policies/{f}.mpol")))
                .unwrap();
        }
        m
    }
}

/// A random mix of control-plane operations over the fixture mesh.
pub mod session {
    use std::collections::BTreeSet;

    use datamesh::classification::Verdict;
    use datamesh::enforcement::{EnforcementError, Mode};
    use datamesh::operator::OperatorError;
    use datamesh::policy::Action;
    use datamesh::Operator;
    use rand::seq::SliceRandom;
    use rand::Rng;

    use super::fixture::{self, port, DETAILS, EXPORT, RECS, TRACKING};
    use super::random_subject;

    #[derive(Default, Debug)]
    pub struct Tally {
        pub decisions: usize,
        pub tokens: usize,
        pub keys: usize,
        pub reviews: usize,
        pub overrides: usize,
    }

    /// Performs one random control-plane operation and counts what it should
    /// have written to the audit trail.
    pub fn random_op<R: Rng>(op: &Operator, rng: &mut R, tally: &mut Tally) {
        let ports = [TRACKING, DETAILS, RECS, EXPORT];
        let p = port(ports.choose(rng).unwrap());
        let subject = random_subject(rng);
        let labels = |rng: &mut R| -> BTreeSet<String> {
            ["internal", "sensitive-pii", "financial"]
                .iter()
                .filter(|_| rng.gen_bool(0.4))
                .map(|s| s.to_string())
                .collect()
        };
        match rng.gen_range(0..9) {
            0 => {
                let _ = op.tag_port("steward", &p, labels(rng));
            }
            1 => {
                let ls = labels(rng);
                if op.request_override("steward", &p, ls, "reassessed").is_ok() {
                    tally.overrides += 1;
                }
            }
            2 => {
                let pending: Vec<u64> = op.state().overrides.pending().map(|o| o.id).collect();
                if let Some(id) = pending.choose(rng) {
                    let v = if rng.gen_bool(0.5) {
                        Verdict::Approve
                    } else {
                        Verdict::Reject
                    };
                    op.review_override("governance", *id, v).unwrap();
                    tally.reviews += 1;
                }
            }
            3 => {
                let text = match rng.gen_range(0..5) {
                    0 => r#"policy "open" scope global { allow read on *:* to any when not label(financial); }"#
                        .to_string(),
                    i => fixture::read(&format!(
                        "policies/{}.mpol",
                        ["global", "marketing", "customer-details", "exports"][i - 1]
                    )),
                };
                op.apply_policies("governance", &text).unwrap();
            }
            4 | 5 => {
                let mode = *[Mode::Gateway, Mode::Token, Mode::Key].choose(rng).unwrap();
                match op.submit_access_request("app", &subject, &p, Action::Read, mode, Some(60)) {
                    Ok(out) => {
                        tally.decisions += 1;
                        if mode == Mode::Token && out.grant.is_some() {
                            tally.tokens += 1;
                        }
                    }
                    Err(OperatorError::Enforcement(EnforcementError::Untagged(_))) => tally.decisions += 1,
                    Err(OperatorError::Enforcement(EnforcementError::EncryptionDisabled(_))) => {}
                    Err(e) => panic!("{e}"),
                }
            }
            6 => {
                let key = op.state().keys.active_key(&p).map(|k| k.key_id.clone());
                if let Some(key) = key {
                    match op.request_key("app", &subject, &key) {
                        Ok(out) => {
                            tally.decisions += 1;
                            if out.is_granted() {
                                tally.keys += 1;
                            }
                        }
                        Err(OperatorError::Enforcement(EnforcementError::Untagged(_))) => tally.decisions += 1,
                        Err(e) => panic!("{e}"),
                    }
                }
            }
            7 => {
                if p != port(EXPORT) {
                    match op.query("app", &subject, &format!("SELECT customer_id FROM {p}")) {
                        Ok(_) | Err(OperatorError::Enforcement(EnforcementError::Untagged(_))) => tally.decisions += 1,
                        Err(e) => panic!("{e}"),
                    }
                }
            }
            _ => {
                if rng.gen_bool(0.5) {
                    op.run_contracts("ci", &port(TRACKING)).unwrap();
                } else {
                    // Fails when a blob port ends up carrying a traceability obligation.
                    match op.forget_subject("dpo", &format!("c00{}", rng.gen_range(1..10))) {
                        Ok(_) | Err(OperatorError::Classification(_)) => {}
                        Err(e) => panic!("{e}"),
                    }
                }
            }
        }
    }
}
