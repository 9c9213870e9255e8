use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::{Action, Effect, LabelTerm, Policy, Rule, ScopeLevel, SubjectMatcher, SubjectTerm, TermKind};
use super::PolicyError;
use crate::classification::Classification;
use crate::mesh::{MeshGraph, PortRef, ProductId};

/// The party asking for access. Subjects are asserted by the caller.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub user: String,
    #[serde(default)]
    pub roles: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default)]
    pub attrs: BTreeMap<String, bool>,
}

impl Subject {
    pub fn user(user: impl Into<String>) -> Self {
        Subject {
            user: user.into(),
            ..Default::default()
        }
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.roles.insert(role.into());
        self
    }

    pub fn in_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = Some(domain.into());
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: bool) -> Self {
        self.attrs.insert(key.into(), value);
        self
    }

    fn holds(&self, term: &SubjectTerm) -> bool {
        let v = match term.kind {
            TermKind::Role => self.roles.contains(&term.name),
            TermKind::User => self.user == term.name,
            TermKind::Domain => self.domain.as_deref() == Some(term.name.as_str()),
            TermKind::Attr => self.attrs.get(&term.name) == Some(&true),
        };
        v != term.negated
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub product: ProductId,
    pub port: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

impl Resource {
    pub fn port_ref(&self) -> PortRef {
        self.product.port(&self.port)
    }
}

/// A resolved request: the resource exists and `labels` are its effective labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub subject: Subject,
    pub action: Action,
    pub resource: Resource,
    pub labels: BTreeSet<String>,
}

impl AccessRequest {
    /// Builds a request against the current mesh. The port must be an output
    /// port and the column, if given, must be in its schema.
    pub fn resolve(
        graph: &MeshGraph,
        classification: &Classification,
        subject: Subject,
        action: Action,
        port: &PortRef,
        column: Option<&str>,
    ) -> Result<Self, PolicyError> {
        let output = graph
            .output_port(port)
            .ok_or_else(|| PolicyError::Unresolved(port.to_string()))?;
        if let Some(c) = column {
            if output.column(c).is_none() {
                return Err(PolicyError::Unresolved(format!("{port}:{c}")));
            }
        }
        Ok(AccessRequest {
            subject,
            action,
            resource: Resource {
                product: port.product.clone(),
                port: port.port.clone(),
                column: column.map(str::to_string),
            },
            labels: classification.effective(port).cloned().unwrap_or_default(),
        })
    }

    pub fn for_column(&self, column: Option<&str>) -> Self {
        let mut r = self.clone();
        r.resource.column = column.map(str::to_string);
        r
    }
}

/// Policies keyed by name; applying a policy with an existing name replaces it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySet {
    policies: BTreeMap<String, Policy>,
}

impl PolicySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, policy: Policy) -> Option<Policy> {
        self.policies.insert(policy.name.clone(), policy)
    }

    pub fn remove(&mut self, name: &str) -> Option<Policy> {
        self.policies.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Policy> {
        self.policies.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Policy> {
        self.policies.values()
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn evaluate(&self, request: &AccessRequest) -> Decision {
        decide(self, request, false)
    }

    pub fn explain(&self, request: &AccessRequest) -> Decision {
        decide(self, request, true)
    }
}

impl FromIterator<Policy> for PolicySet {
    fn from_iter<I: IntoIterator<Item = Policy>>(iter: I) -> Self {
        let mut set = PolicySet::new();
        for p in iter {
            set.insert(p);
        }
        set
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleId {
    pub policy: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Matched,
    NotMatched,
    /// In a lower-precedence scope than the one that decided.
    Shadowed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rule: RuleId,
    pub scope: ScopeLevel,
    pub text: String,
    pub status: TraceStatus,
    pub why: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub effect: Effect,
    /// `None` exactly when the default deny fired.
    pub matched_rule: Option<RuleId>,
    /// The scope that decided; `None` for the default deny.
    pub scope_consulted: Option<ScopeLevel>,
    pub trace: Vec<TraceEntry>,
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        self.effect == Effect::Allow
    }

    pub fn is_default_deny(&self) -> bool {
        self.effect == Effect::Deny && self.matched_rule.is_none()
    }
}

struct Check {
    clause: &'static str,
    ok: bool,
    detail: String,
}

fn checks(rule: &Rule, req: &AccessRequest) -> Vec<Check> {
    let res = &req.resource;
    let mut out = Vec::with_capacity(4);
    out.push(Check {
        clause: "action",
        ok: rule.action == req.action,
        detail: format!("rule action {} vs request {}", rule.action, req.action),
    });
    let resource_ok = rule.resource.matches_product(res.product.as_str())
        && rule.resource.matches_port(&res.port)
        && rule.resource.matches_column(res.column.as_deref());
    let target = match &res.column {
        Some(c) => format!("{}:{}:{c}", res.product, res.port),
        None => format!("{}:{}", res.product, res.port),
    };
    out.push(Check {
        clause: "resource",
        ok: resource_ok,
        detail: format!("pattern {} vs {target}", rule.resource),
    });
    let subject_ok = match &rule.subject {
        SubjectMatcher::Any => true,
        SubjectMatcher::Expr(dnf) => dnf.eval(|t| req.subject.holds(t)),
    };
    out.push(Check {
        clause: "subject",
        ok: subject_ok,
        detail: format!("{} for user {}", rule.subject, req.subject.user),
    });
    if let Some(cond) = &rule.condition {
        let ok = cond.eval(|t: &LabelTerm| req.labels.contains(&t.label) != t.negated);
        let labels = req.labels.iter().cloned().collect::<Vec<_>>().join(",");
        out.push(Check {
            clause: "condition",
            ok,
            detail: format!("{cond} on labels [{labels}]"),
        });
    }
    out
}

fn render_why(checks: &[Check], detailed: bool) -> (bool, String) {
    let matched = checks.iter().all(|c| c.ok);
    if detailed {
        let parts: Vec<String> = checks
            .iter()
            .map(|c| format!("{} {}: {}", c.clause, if c.ok { "ok" } else { "failed" }, c.detail))
            .collect();
        return (matched, parts.join("; "));
    }
    let why = match checks.iter().find(|c| !c.ok) {
        Some(c) => format!("{} failed: {}", c.clause, c.detail),
        None => "all clauses hold".to_string(),
    };
    (matched, why)
}

const LEVELS: [ScopeLevel; 3] = [ScopeLevel::Product, ScopeLevel::Domain, ScopeLevel::Global];

fn decide(set: &PolicySet, req: &AccessRequest, explain: bool) -> Decision {
    let mut trace = Vec::new();
    let mut decided: Option<(Effect, RuleId, ScopeLevel)> = None;

    for level in LEVELS {
        let mut first_allow = None;
        let mut first_deny = None;
        for policy in set
            .iter()
            .filter(|p| p.scope.level() == level && p.scope.covers(&req.resource.product))
        {
            for (index, rule) in policy.rules.iter().enumerate() {
                let id = RuleId {
                    policy: policy.name.clone(),
                    index,
                };
                if let Some((_, ref by, by_level)) = decided {
                    if explain {
                        let (would, detail) = render_why(&checks(rule, req), true);
                        trace.push(TraceEntry {
                            rule: id,
                            scope: level,
                            text: rule.to_string(),
                            status: TraceStatus::Shadowed,
                            why: format!(
                                "shadowed by {}#{} in {} scope (would {}match: {detail})",
                                by.policy,
                                by.index,
                                by_level,
                                if would { "" } else { "not " }
                            ),
                        });
                    }
                    continue;
                }
                let (matched, why) = render_why(&checks(rule, req), explain);
                if matched {
                    let slot = match rule.effect {
                        Effect::Allow => &mut first_allow,
                        Effect::Deny => &mut first_deny,
                    };
                    if slot.is_none() {
                        *slot = Some(id.clone());
                    }
                }
                trace.push(TraceEntry {
                    rule: id,
                    scope: level,
                    text: rule.to_string(),
                    status: if matched {
                        TraceStatus::Matched
                    } else {
                        TraceStatus::NotMatched
                    },
                    why,
                });
            }
        }
        if decided.is_none() {
            if let Some(id) = first_deny {
                decided = Some((Effect::Deny, id, level));
            } else if let Some(id) = first_allow {
                decided = Some((Effect::Allow, id, level));
            }
            if decided.is_some() && !explain {
                break;
            }
        }
    }

    match decided {
        Some((effect, id, level)) => Decision {
            effect,
            matched_rule: Some(id),
            scope_consulted: Some(level),
            trace,
        },
        None => Decision {
            effect: Effect::Deny,
            matched_rule: None,
            scope_consulted: None,
            trace,
        },
    }
}

/// Scopes consulted in order product, domain, global; the first scope with a
/// matching rule decides, deny winning over allow inside it. No match
/// anywhere is a deny.
pub fn evaluate(request: &AccessRequest, policies: &PolicySet) -> Decision {
    policies.evaluate(request)
}

/// Like [`evaluate`], with per-clause reasons and the shadowed rules of
/// lower-precedence scopes in the trace.
pub fn explain(request: &AccessRequest, policies: &PolicySet) -> Decision {
    policies.explain(request)
}
