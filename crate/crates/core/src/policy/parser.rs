use super::ast::{
    Action, Dnf, Effect, LabelTerm, Policy, ResourcePattern, Rule, Scope, SubjectMatcher, SubjectTerm, TermKind,
};
use super::glob::has_wildcard;
use super::lexer::{tokenize, Spanned, Tok};
use super::PolicyError;
use crate::mesh::ProductId;

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error(&self, at: &Spanned, message: impl Into<String>) -> PolicyError {
        PolicyError::syntax(at.line, at.column, message)
    }

    fn expect(&mut self, want: Tok) -> Result<Spanned, PolicyError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(self.error(&t, format!("expected {}, found {}", want.describe(), t.tok.describe())))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Spanned, PolicyError> {
        let t = self.next();
        match &t.tok {
            Tok::Word(w) if w == kw => Ok(t),
            other => Err(self.error(&t, format!("expected `{kw}`, found {}", other.describe()))),
        }
    }

    fn word(&mut self, what: &str) -> Result<(String, Spanned), PolicyError> {
        let t = self.next();
        match &t.tok {
            Tok::Word(w) => Ok((w.clone(), t)),
            other => Err(self.error(&t, format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn peek_word(&self) -> Option<&str> {
        match &self.peek().tok {
            Tok::Word(w) => Some(w),
            _ => None,
        }
    }

    fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    fn policy(&mut self) -> Result<Policy, PolicyError> {
        self.keyword("policy")?;
        let t = self.next();
        let name = match t.tok.clone() {
            Tok::Str(s) => s,
            other => return Err(self.error(&t, format!("expected policy name string, found {}", other.describe()))),
        };
        self.keyword("scope")?;
        let scope = self.scope()?;
        self.expect(Tok::LBrace)?;
        let mut rules = Vec::new();
        while self.peek().tok != Tok::RBrace {
            let start = self.peek().clone();
            let rule = self.rule()?;
            check_scope(&scope, &rule.resource, rules.len(), &start)?;
            rules.push(rule);
        }
        self.expect(Tok::RBrace)?;
        Ok(Policy { name, scope, rules })
    }

    fn scope(&mut self) -> Result<Scope, PolicyError> {
        let (w, t) = self.word("scope level")?;
        match w.as_str() {
            "global" => Ok(Scope::Global),
            "domain" => {
                let (d, t) = self.word("domain name")?;
                if has_wildcard(&d) || d.contains('/') {
                    return Err(self.error(&t, format!("invalid domain name `{d}`")));
                }
                Ok(Scope::Domain(d))
            }
            "product" => {
                let (p, t) = self.word("product id")?;
                if has_wildcard(&p) {
                    return Err(self.error(&t, format!("invalid product id `{p}`")));
                }
                p.parse::<ProductId>()
                    .map(Scope::Product)
                    .map_err(|e| self.error(&t, e.to_string()))
            }
            other => Err(self.error(
                &t,
                format!("unknown scope `{other}`; expected global, domain or product"),
            )),
        }
    }

    fn rule(&mut self) -> Result<Rule, PolicyError> {
        let (w, t) = self.word("`allow` or `deny`")?;
        let effect = match w.as_str() {
            "allow" => Effect::Allow,
            "deny" => Effect::Deny,
            other => return Err(self.error(&t, format!("expected `allow` or `deny`, found `{other}`"))),
        };
        let (w, t) = self.word("action")?;
        let action = Action::parse(&w).ok_or(PolicyError::UnknownAction {
            line: t.line,
            column: t.column,
            action: w.clone(),
        })?;
        self.keyword("on")?;
        let resource = self.resource()?;
        self.keyword("to")?;
        let subject = self.subject()?;
        let condition = if self.peek_word() == Some("when") {
            self.next();
            Some(self.condition()?)
        } else {
            None
        };
        self.expect(Tok::Semi)?;
        Ok(Rule {
            effect,
            action,
            resource,
            subject,
            condition,
        })
    }

    fn resource(&mut self) -> Result<ResourcePattern, PolicyError> {
        let (product, _) = self.word("resource pattern")?;
        let mut port = None;
        let mut column = None;
        if self.peek().tok == Tok::Colon {
            self.next();
            port = Some(self.word("port pattern")?.0);
            if self.peek().tok == Tok::Colon {
                self.next();
                column = Some(self.word("column pattern")?.0);
            }
        }
        Ok(ResourcePattern { product, port, column })
    }

    fn subject(&mut self) -> Result<SubjectMatcher, PolicyError> {
        if self.peek_word() == Some("any") {
            self.next();
            return Ok(SubjectMatcher::Any);
        }
        let dnf = self.dnf(|p| {
            let negated = p.negation();
            let (w, t) = p.word("subject term")?;
            let kind = TermKind::parse(&w)
                .ok_or_else(|| p.error(&t, format!("expected role, user, domain or attr, found `{w}`")))?;
            let name = p.parenthesized()?;
            Ok(SubjectTerm { negated, kind, name })
        })?;
        Ok(SubjectMatcher::Expr(dnf))
    }

    fn condition(&mut self) -> Result<Dnf<LabelTerm>, PolicyError> {
        self.dnf(|p| {
            let negated = p.negation();
            p.keyword("label")?;
            let label = p.parenthesized()?;
            Ok(LabelTerm { negated, label })
        })
    }

    fn negation(&mut self) -> bool {
        if self.peek_word() == Some("not") {
            self.next();
            true
        } else {
            false
        }
    }

    fn parenthesized(&mut self) -> Result<String, PolicyError> {
        self.expect(Tok::LParen)?;
        let (name, _) = self.word("name")?;
        self.expect(Tok::RParen)?;
        Ok(name)
    }

    /// `term (("and"|"or") term)*` with `and` binding tighter.
    fn dnf<T>(&mut self, mut term: impl FnMut(&mut Self) -> Result<T, PolicyError>) -> Result<Dnf<T>, PolicyError> {
        let mut clauses = vec![vec![term(self)?]];
        loop {
            match self.peek_word() {
                Some("and") => {
                    self.next();
                    let t = term(self)?;
                    clauses.last_mut().expect("non-empty").push(t);
                }
                Some("or") => {
                    self.next();
                    clauses.push(vec![term(self)?]);
                }
                _ => return Ok(Dnf(clauses)),
            }
        }
    }
}

fn check_scope(scope: &Scope, resource: &ResourcePattern, rule: usize, at: &Spanned) -> Result<(), PolicyError> {
    let ok = match scope {
        Scope::Global => true,
        Scope::Domain(d) => resource.product.split_once('/').is_some_and(|(domain, _)| domain == d),
        Scope::Product(p) => resource.product == p.as_str(),
    };
    if ok {
        Ok(())
    } else {
        Err(PolicyError::ScopeMismatch {
            line: at.line,
            column: at.column,
            rule,
            resource: resource.product.clone(),
            scope: scope.to_string(),
        })
    }
}

/// Parses text holding exactly one policy.
pub fn parse_policy(text: &str) -> Result<Policy, PolicyError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let policy = p.policy()?;
    if !p.at_eof() {
        let t = p.peek().clone();
        return Err(p.error(&t, format!("expected end of input, found {}", t.tok.describe())));
    }
    Ok(policy)
}

/// Parses a `.mpol` file, which may hold any number of policies.
pub fn parse_policies(text: &str) -> Result<Vec<Policy>, PolicyError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut out = Vec::new();
    while !p.at_eof() {
        out.push(p.policy()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MKT: &str =
        r#"policy "mkt-open" scope domain marketing { allow read on marketing/*:* to domain(marketing); }"#;

    #[test]
    fn marketing_domain_rule() {
        let p = parse_policy(MKT).unwrap();
        assert_eq!(p.rules.len(), 1);
        assert_eq!(p.scope, Scope::Domain("marketing".into()));
        let r = &p.rules[0];
        assert_eq!(r.resource.product, "marketing/*");
        assert_eq!(r.resource.port.as_deref(), Some("*"));
        assert_eq!(r.resource.column, None);
    }

    #[test]
    fn empty_block() {
        let p = parse_policy(r#"policy "none" scope global {}"#).unwrap();
        assert!(p.rules.is_empty());
    }

    #[test]
    fn product_scope_mismatch() {
        let err = parse_policy(
            r#"policy "p" scope product marketing/a {
  allow read on marketing/b:out to any;
}"#,
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                PolicyError::ScopeMismatch {
                    line: 2,
                    column: 3,
                    rule: 0,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn domain_scope_rejects_globbed_domain() {
        let err = parse_policy(r#"policy "p" scope domain marketing { allow read on *:* to any; }"#).unwrap_err();
        assert!(matches!(err, PolicyError::ScopeMismatch { .. }));
    }

    #[test]
    fn unknown_action_position() {
        let err = parse_policy("policy \"p\" scope global {\n  allow delete on *:* to any;\n}").unwrap_err();
        assert!(
            matches!(err, PolicyError::UnknownAction { line: 2, column: 9, .. }),
            "{err}"
        );
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_policy("policy \"p\" scope global {\n  allow read on *:* any;\n}").unwrap_err();
        assert!(
            matches!(
                err,
                PolicyError::Syntax {
                    line: 2,
                    column: 21,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn precedence_and_binds_tighter() {
        let p = parse_policy(
            r#"policy "g" scope global {
  deny read on *:* to role(a) and not attr(insider) or user(bob) when label(financial) or not label(public) and label(x);
}"#,
        )
        .unwrap();
        let r = &p.rules[0];
        let SubjectMatcher::Expr(s) = &r.subject else { panic!() };
        assert_eq!(s.0.len(), 2);
        assert_eq!(s.0[0].len(), 2);
        assert!(s.0[0][1].negated);
        let c = r.condition.as_ref().unwrap();
        assert_eq!(c.0.len(), 2);
        assert_eq!(c.0[1].len(), 2);
    }

    #[test]
    fn multiple_policies_and_comments() {
        let ps = parse_policies(
            "# global\npolicy \"a\" scope global { deny read on *:* to any; }\npolicy \"b\" scope product m/x { allow write on m/x:out:col-* to role(w); }\n",
        )
        .unwrap();
        assert_eq!(ps.len(), 2);
        assert!(parse_policy("policy \"a\" scope global {} policy \"b\" scope global {}").is_err());
    }

    #[test]
    fn serialize_round_trip() {
        let p = parse_policy(MKT).unwrap();
        let text = super::super::ast::serialize_policy(&p);
        assert_eq!(parse_policy(&text).unwrap(), p);
        assert_eq!(
            text,
            "policy \"mkt-open\" scope domain marketing {\n  allow read on marketing/*:* to domain(marketing);\n}\n"
        );
    }
}
