//! Translation of policies into a blob-store bucket policy document.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::{Action, Effect, Policy, SubjectMatcher, TermKind};
use crate::mesh::{InterfaceType, MeshGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NativeTarget {
    BlobStore,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principals {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub any: bool,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub roles: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub users: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub sid: String,
    pub effect: Effect,
    pub principals: Principals,
    pub actions: Vec<Action>,
    /// Object-key prefixes, each ending in `/`.
    pub resources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NativePolicy {
    pub target: NativeTarget,
    pub policy: String,
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnsupportedRule {
    pub rule: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("policy `{policy}` has rules with no native equivalent: {}", describe(.rules))]
    Unsupported {
        policy: String,
        rules: Vec<UnsupportedRule>,
    },
}

fn describe(rules: &[UnsupportedRule]) -> String {
    rules
        .iter()
        .map(|r| format!("#{} `{}` ({})", r.rule, r.text, r.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Normalizes a port address into a prefix that only matches keys under it.
pub fn address_prefix(address: &str) -> String {
    format!("{}/", address.trim_end_matches('/'))
}

/// Compiles a policy to a bucket policy over the blob ports it covers.
///
/// Only plain principal and prefix matching survives translation; label
/// conditions, domain and attribute subjects, negation, conjunction,
/// `manage`, column patterns and non-blob ports are rejected.
pub fn compile_native(policy: &Policy, graph: &MeshGraph, target: NativeTarget) -> Result<NativePolicy, CompileError> {
    let NativeTarget::BlobStore = target;
    let mut statements = Vec::new();
    let mut unsupported = Vec::new();
    for (index, rule) in policy.rules.iter().enumerate() {
        let mut reasons = Vec::new();
        if rule.condition.is_some() {
            reasons.push("label conditions".to_string());
        }
        if rule.action == Action::Manage {
            reasons.push("manage action".to_string());
        }
        if rule.resource.column.as_deref().is_some_and(|c| c != "*") {
            reasons.push("column patterns".to_string());
        }
        let mut principals = Principals::default();
        match &rule.subject {
            SubjectMatcher::Any => principals.any = true,
            SubjectMatcher::Expr(dnf) => {
                for clause in dnf.clauses() {
                    if clause.len() > 1 {
                        reasons.push("`and` subjects".to_string());
                        continue;
                    }
                    let term = &clause[0];
                    if term.negated {
                        reasons.push("`not` subjects".to_string());
                        continue;
                    }
                    match term.kind {
                        TermKind::Role => {
                            principals.roles.insert(term.name.clone());
                        }
                        TermKind::User => {
                            principals.users.insert(term.name.clone());
                        }
                        TermKind::Domain | TermKind::Attr => reasons.push(format!("{}() subjects", term.kind)),
                    }
                }
            }
        }
        let mut resources = BTreeSet::new();
        for product in graph.products() {
            if !rule.resource.matches_product(product.id.as_str()) || !policy.scope.covers(&product.id) {
                continue;
            }
            for port in product
                .output_ports
                .iter()
                .filter(|p| rule.resource.matches_port(&p.id))
            {
                if port.interface != InterfaceType::Blob {
                    reasons.push(format!("{} port {}", port.interface, product.id.port(&port.id)));
                } else {
                    resources.insert(address_prefix(&port.address));
                }
            }
        }
        if reasons.is_empty() {
            statements.push(Statement {
                sid: format!("{}-{index}", policy.name),
                effect: rule.effect,
                principals,
                actions: vec![rule.action],
                resources: resources.into_iter().collect(),
            });
        } else {
            reasons.dedup();
            unsupported.push(UnsupportedRule {
                rule: index,
                text: rule.to_string(),
                reason: reasons.join(", "),
            });
        }
    }
    if !unsupported.is_empty() {
        return Err(CompileError::Unsupported {
            policy: policy.name.clone(),
            rules: unsupported,
        });
    }
    Ok(NativePolicy {
        target,
        policy: policy.name.clone(),
        statements,
    })
}

/// A request as a blob store sees it: a principal and an object key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NativeRequest {
    pub user: String,
    pub roles: BTreeSet<String>,
    pub action: Action,
    pub key: String,
}

impl Statement {
    fn applies(&self, req: &NativeRequest) -> bool {
        let who = self.principals.any
            || self.principals.users.contains(&req.user)
            || self.principals.roles.iter().any(|r| req.roles.contains(r));
        who && self.actions.contains(&req.action) && self.resources.iter().any(|p| req.key.starts_with(p.as_str()))
    }
}

impl NativePolicy {
    /// Bucket-policy semantics: an explicit deny wins, then any allow,
    /// otherwise the implicit deny.
    pub fn evaluate(&self, req: &NativeRequest) -> Effect {
        let mut allowed = false;
        for s in self.statements.iter().filter(|s| s.applies(req)) {
            match s.effect {
                Effect::Deny => return Effect::Deny,
                Effect::Allow => allowed = true,
            }
        }
        if allowed {
            Effect::Allow
        } else {
            Effect::Deny
        }
    }
}
