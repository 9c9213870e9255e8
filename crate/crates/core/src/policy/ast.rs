use std::fmt;

use serde::{Deserialize, Serialize};

use super::glob::glob_match;
use crate::mesh::ProductId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Allow,
    Deny,
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Allow => "allow",
            Effect::Deny => "deny",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Read,
    Write,
    Manage,
}

impl Action {
    pub fn parse(word: &str) -> Option<Self> {
        match word {
            "read" => Some(Action::Read),
            "write" => Some(Action::Write),
            "manage" => Some(Action::Manage),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Read => "read",
            Action::Write => "write",
            Action::Manage => "manage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "level", content = "name")]
pub enum Scope {
    Global,
    Domain(String),
    Product(ProductId),
}

/// Precedence rank of a scope; lower is consulted first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeLevel {
    Product,
    Domain,
    Global,
}

impl fmt::Display for ScopeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScopeLevel::Product => "product",
            ScopeLevel::Domain => "domain",
            ScopeLevel::Global => "global",
        })
    }
}

impl Scope {
    pub fn level(&self) -> ScopeLevel {
        match self {
            Scope::Global => ScopeLevel::Global,
            Scope::Domain(_) => ScopeLevel::Domain,
            Scope::Product(_) => ScopeLevel::Product,
        }
    }

    /// Whether a policy with this scope governs `product`.
    pub fn covers(&self, product: &ProductId) -> bool {
        match self {
            Scope::Global => true,
            Scope::Domain(d) => product.domain() == d,
            Scope::Product(p) => p == product,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Global => f.write_str("global"),
            Scope::Domain(d) => write!(f, "domain {d}"),
            Scope::Product(p) => write!(f, "product {p}"),
        }
    }
}

/// `product-glob [":" port-glob [":" column-glob]]`. Omitted parts match anything.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourcePattern {
    pub product: String,
    pub port: Option<String>,
    pub column: Option<String>,
}

impl ResourcePattern {
    pub fn matches_product(&self, product: &str) -> bool {
        glob_match(&self.product, product)
    }

    pub fn matches_port(&self, port: &str) -> bool {
        self.port.as_deref().is_none_or(|g| glob_match(g, port))
    }

    /// A whole-port request (no column) only matches patterns that cover
    /// every column: no column part, or a bare `*`.
    pub fn matches_column(&self, column: Option<&str>) -> bool {
        match (&self.column, column) {
            (None, _) => true,
            (Some(g), Some(c)) => glob_match(g, c),
            (Some(g), None) => g.chars().all(|c| c == '*'),
        }
    }
}

impl fmt::Display for ResourcePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.product)?;
        if let Some(port) = &self.port {
            write!(f, ":{port}")?;
            if let Some(column) = &self.column {
                write!(f, ":{column}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Role,
    User,
    Domain,
    Attr,
}

impl TermKind {
    pub fn parse(word: &str) -> Option<Self> {
        match word {
            "role" => Some(TermKind::Role),
            "user" => Some(TermKind::User),
            "domain" => Some(TermKind::Domain),
            "attr" => Some(TermKind::Attr),
            _ => None,
        }
    }
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermKind::Role => "role",
            TermKind::User => "user",
            TermKind::Domain => "domain",
            TermKind::Attr => "attr",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubjectTerm {
    pub negated: bool,
    pub kind: TermKind,
    pub name: String,
}

impl fmt::Display for SubjectTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        write!(f, "{}({})", self.kind, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelTerm {
    pub negated: bool,
    pub label: String,
}

impl fmt::Display for LabelTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        write!(f, "label({})", self.label)
    }
}

/// Boolean expression in disjunctive normal form: `and` binds tighter than
/// `or`, so `a and b or c` is `[[a, b], [c]]`. Never empty; no clause is empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dnf<T>(pub Vec<Vec<T>>);

impl<T> Dnf<T> {
    pub fn single(term: T) -> Self {
        Dnf(vec![vec![term]])
    }

    pub fn clauses(&self) -> &[Vec<T>] {
        &self.0
    }

    pub fn eval(&self, mut holds: impl FnMut(&T) -> bool) -> bool {
        self.0.iter().any(|clause| clause.iter().all(&mut holds))
    }

    pub fn terms(&self) -> impl Iterator<Item = &T> {
        self.0.iter().flatten()
    }
}

impl<T: fmt::Display> fmt::Display for Dnf<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, clause) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" or ")?;
            }
            for (j, term) in clause.iter().enumerate() {
                if j > 0 {
                    f.write_str(" and ")?;
                }
                write!(f, "{term}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectMatcher {
    Any,
    Expr(Dnf<SubjectTerm>),
}

impl fmt::Display for SubjectMatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubjectMatcher::Any => f.write_str("any"),
            SubjectMatcher::Expr(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub effect: Effect,
    pub action: Action,
    pub resource: ResourcePattern,
    pub subject: SubjectMatcher,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Dnf<LabelTerm>>,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} on {} to {}",
            self.effect, self.action, self.resource, self.subject
        )?;
        if let Some(cond) = &self.condition {
            write!(f, " when {cond}")?;
        }
        f.write_str(";")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub name: String,
    pub scope: Scope,
    pub rules: Vec<Rule>,
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "policy {} scope {} {{", quote(&self.name), self.scope)?;
        for rule in &self.rules {
            writeln!(f, "  {rule}")?;
        }
        writeln!(f, "}}")
    }
}

/// Canonical `.mpol` text of a policy.
pub fn serialize_policy(policy: &Policy) -> String {
    policy.to_string()
}
