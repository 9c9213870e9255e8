//! The gateway's query language: one table, an optional single predicate.
//!
//! ```text
//! query     := SELECT columns FROM port-ref [WHERE column op literal] [";"]
//! columns   := "*" | column ("," column)*
//! op        := "=" | "!=" | "<" | ">"
//! literal   := 'single-quoted text' | number
//! ```

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::mesh::PortRef;
use crate::store::Table;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("query error at position {position}: {message}")]
pub struct SqlError {
    /// 1-based character offset.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Star,
    Columns(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Literal {
    Text(String),
    Number(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: CmpOp,
    pub literal: Literal,
}

impl Predicate {
    fn holds(&self, value: &str) -> bool {
        let ord = match &self.literal {
            Literal::Number(n) => match (value.trim().parse::<f64>(), n.parse::<f64>()) {
                (Ok(a), Ok(b)) => a.partial_cmp(&b),
                _ => None,
            },
            Literal::Text(t) => Some(value.cmp(t.as_str())),
        };
        match (self.op, ord) {
            (CmpOp::Eq, Some(o)) => o == Ordering::Equal,
            (CmpOp::Ne, Some(o)) => o != Ordering::Equal,
            (CmpOp::Ne, None) => true,
            (CmpOp::Lt, Some(o)) => o == Ordering::Less,
            (CmpOp::Gt, Some(o)) => o == Ordering::Greater,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub select: Selection,
    pub from: PortRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<Predicate>,
}

impl Query {
    /// Every column the query reads: the selection (star expanded against
    /// `schema`) plus the predicate column, without duplicates.
    pub fn referenced_columns(&self, schema: &[String]) -> Vec<String> {
        let mut cols: Vec<String> = match &self.select {
            Selection::Star => schema.to_vec(),
            Selection::Columns(c) => c.clone(),
        };
        if let Some(p) = &self.filter {
            cols.push(p.column.clone());
        }
        let mut seen = std::collections::BTreeSet::new();
        cols.retain(|c| seen.insert(c.clone()));
        cols
    }

    /// Applies projection and filter. Unknown columns are an error.
    pub fn execute(&self, table: &Table) -> Result<Table, String> {
        let idx = |c: &str| table.column_index(c).ok_or_else(|| format!("unknown column `{c}`"));
        let out_cols: Vec<usize> = match &self.select {
            Selection::Star => (0..table.header.len()).collect(),
            Selection::Columns(cols) => cols.iter().map(|c| idx(c)).collect::<Result<_, _>>()?,
        };
        let filter = match &self.filter {
            Some(p) => Some((idx(&p.column)?, p)),
            None => None,
        };
        let header = out_cols.iter().map(|&i| table.header[i].clone()).collect();
        let rows = table
            .rows
            .iter()
            .filter(|row| filter.is_none_or(|(i, p)| p.holds(row.get(i).map(String::as_str).unwrap_or(""))))
            .map(|row| {
                out_cols
                    .iter()
                    .map(|&i| row.get(i).cloned().unwrap_or_default())
                    .collect()
            })
            .collect();
        Ok(Table { header, rows })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Text(String),
    Number(String),
    Star,
    Comma,
    Semi,
    Op(CmpOp),
}

fn is_ident(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/' | ':')
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, SqlError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |position: usize, message: String| SqlError { position, message };
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '*' => {
                i += 1;
                Tok::Star
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            ';' => {
                i += 1;
                Tok::Semi
            }
            '=' => {
                i += 1;
                Tok::Op(CmpOp::Eq)
            }
            '<' => {
                i += 1;
                Tok::Op(CmpOp::Lt)
            }
            '>' => {
                i += 1;
                Tok::Op(CmpOp::Gt)
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Tok::Op(CmpOp::Ne)
            }
            '\'' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(err(pos, "unterminated string literal".into())),
                        Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                            s.push('\'');
                            i += 2;
                        }
                        Some('\'') => {
                            i += 1;
                            break;
                        }
                        Some(&c) => {
                            s.push(c);
                            i += 1;
                        }
                    }
                }
                Tok::Text(s)
            }
            c if is_ident(c) => {
                let start = i;
                while i < chars.len() && is_ident(chars[i]) {
                    i += 1;
                }
                let w: String = chars[start..i].iter().collect();
                if w.starts_with(|c: char| c.is_ascii_digit() || c == '-') && w.parse::<f64>().is_ok() {
                    Tok::Number(w)
                } else {
                    Tok::Word(w)
                }
            }
            other => return Err(err(pos, format!("unexpected character `{other}`"))),
        };
        out.push((tok, pos));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn err(&self, message: impl Into<String>) -> SqlError {
        SqlError {
            position: self.here(),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SqlError> {
        match self.peek() {
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw) => {
                self.pos += 1;
                Ok(())
            }
            Some(Tok::Word(w)) => Err(self.err(format!("expected {kw}, found `{w}`"))),
            _ => Err(self.err(format!("expected {kw}"))),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn column(&mut self) -> Result<String, SqlError> {
        match self.peek().cloned() {
            Some(Tok::Word(w)) if !w.contains(':') && !w.contains('/') => {
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.err("expected column name")),
        }
    }
}

pub fn parse_query(text: &str) -> Result<Query, SqlError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        end: text.chars().count() + 1,
    };
    p.keyword("SELECT")?;
    let select = if p.peek() == Some(&Tok::Star) {
        p.pos += 1;
        Selection::Star
    } else {
        let mut cols = vec![p.column()?];
        while p.peek() == Some(&Tok::Comma) {
            p.pos += 1;
            cols.push(p.column()?);
        }
        Selection::Columns(cols)
    };
    p.keyword("FROM")?;
    let from = match p.peek().cloned() {
        Some(Tok::Word(w)) => {
            let r = w
                .parse::<PortRef>()
                .map_err(|e| p.err(format!("expected `domain/product:port`: {e}")))?;
            p.pos += 1;
            r
        }
        _ => return Err(p.err("expected `domain/product:port`")),
    };
    let filter = if p.is_keyword("WHERE") {
        p.pos += 1;
        let column = p.column()?;
        let op = match p.peek() {
            Some(Tok::Op(op)) => *op,
            _ => return Err(p.err("expected one of = != < >")),
        };
        p.pos += 1;
        let literal = match p.peek().cloned() {
            Some(Tok::Text(s)) => Literal::Text(s),
            Some(Tok::Number(n)) => Literal::Number(n),
            _ => return Err(p.err("expected a quoted string or a number")),
        };
        p.pos += 1;
        Some(Predicate { column, op, literal })
    } else {
        None
    };
    if p.peek() == Some(&Tok::Semi) {
        p.pos += 1;
    }
    if p.peek().is_some() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(Query { select, from, filter })
}
