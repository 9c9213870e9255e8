//! The `.mpol` policy language.
//!
//! ```
//! use datamesh::policy::{parse_policy, Scope};
//!
//! let p = parse_policy(
//!     r#"policy "mkt-open" scope domain marketing { allow read on marketing/*:* to domain(marketing); }"#,
//! ).unwrap();
//! assert_eq!(p.scope, Scope::Domain("marketing".into()));
//! assert_eq!(p.rules.len(), 1);
//! ```

pub mod ast;
pub mod eval;
pub mod glob;
mod lexer;
pub mod native;
mod parser;

pub use ast::{
    serialize_policy, Action, Dnf, Effect, LabelTerm, Policy, ResourcePattern, Rule, Scope, ScopeLevel, SubjectMatcher,
    SubjectTerm, TermKind,
};
pub use eval::{
    evaluate, explain, AccessRequest, Decision, PolicySet, Resource, RuleId, Subject, TraceEntry, TraceStatus,
};
pub use native::{compile_native, CompileError, NativePolicy, NativeRequest, NativeTarget};
pub use parser::{parse_policies, parse_policy};

pub const FILE_EXTENSION: &str = ".mpol";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("{line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{line}:{column}: unknown action `{action}`; expected read, write or manage")]
    UnknownAction { line: usize, column: usize, action: String },
    #[error("{line}:{column}: rule {rule} targets `{resource}`, outside policy scope `{scope}`")]
    ScopeMismatch {
        line: usize,
        column: usize,
        rule: usize,
        resource: String,
        scope: String,
    },
    #[error("resource `{0}` does not resolve against the mesh")]
    Unresolved(String),
}

impl PolicyError {
    pub(crate) fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        PolicyError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    /// Source position, for errors that have one.
    pub fn position(&self) -> Option<(usize, usize)> {
        match self {
            PolicyError::Syntax { line, column, .. }
            | PolicyError::UnknownAction { line, column, .. }
            | PolicyError::ScopeMismatch { line, column, .. } => Some((*line, *column)),
            PolicyError::Unresolved(_) => None,
        }
    }
}
