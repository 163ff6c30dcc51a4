//! Single-key CRUD statements with the `WITH REQUIREMENTS` postfix.
//!
//! ```text
//! INSERT INTO t (k, c1) VALUES ('x', 'v') WITH REQUIREMENTS location = { 'DE', 'FR' } AND encryption = { 'AES-256' }
//! SELECT * FROM t WHERE key = 'x'
//! UPDATE t SET c1 = 'w' WHERE key = 'x' WITH REQUIREMENTS location = { 'FR' }
//! DELETE FROM t WHERE key = 'x'
//! ```
//!
//! The first INSERT column is the row key. Table names are accepted and
//! ignored since the store holds one table. Values are single-quoted UTF-8
//! strings or `0x` hex blobs.

mod lexer;
mod parser;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dhr::{DhrRequest, Property};

pub use parser::parse;

pub type Columns = BTreeMap<String, Vec<u8>>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statement {
    Insert { key: Vec<u8>, columns: Columns, dhr: DhrRequest },
    Select { key: Vec<u8> },
    Update { key: Vec<u8>, columns: Columns, dhr: Option<DhrRequest> },
    Delete { key: Vec<u8> },
}

impl Statement {
    pub fn key(&self) -> &[u8] {
        match self {
            Statement::Insert { key, .. }
            | Statement::Select { key }
            | Statement::Update { key, .. }
            | Statement::Delete { key } => key,
        }
    }

    /// DHRs carried by the statement; `None` when it carries none.
    pub fn dhr(&self) -> Option<&DhrRequest> {
        match self {
            Statement::Insert { dhr, .. } if !dhr.is_empty() => Some(dhr),
            Statement::Update { dhr: Some(dhr), .. } => Some(dhr),
            _ => None,
        }
    }

    pub fn kind(&self) -> OpKind {
        match self {
            Statement::Insert { .. } => OpKind::Create,
            Statement::Select { .. } => OpKind::Read,
            Statement::Update { .. } => OpKind::Update,
            Statement::Delete { .. } => OpKind::Delete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Create,
    Read,
    Update,
    Delete,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Create => "create",
            OpKind::Read => "read",
            OpKind::Update => "update",
            OpKind::Delete => "delete",
        }
    }
}

fn literal(out: &mut String, bytes: &[u8]) {
    match std::str::from_utf8(bytes) {
        Ok(s) if !s.chars().any(char::is_control) => {
            out.push('\'');
            out.push_str(&s.replace('\'', "''"));
            out.push('\'');
        }
        _ => {
            out.push_str("0x");
            out.push_str(&hex::encode(bytes));
        }
    }
}

fn requirements(out: &mut String, req: &DhrRequest) {
    out.push_str(" WITH REQUIREMENTS ");
    for (i, (ty, props)) in req.demands.iter().enumerate() {
        if i > 0 {
            out.push_str(" AND ");
        }
        write!(out, "{ty} = {{ ").unwrap();
        for (j, p) in props.iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            match p {
                Property::Level(v) => write!(out, "{v}").unwrap(),
                Property::Label(s) => literal(out, s.as_bytes()),
            }
        }
        out.push_str(" }");
    }
}

/// Canonical statement text; `parse(render(s))` yields `s` again.
pub fn render(stmt: &Statement) -> String {
    let mut out = String::new();
    match stmt {
        Statement::Insert { key, columns, dhr } => {
            out.push_str("INSERT INTO t (key");
            for name in columns.keys() {
                write!(out, ", {name}").unwrap();
            }
            out.push_str(") VALUES (");
            literal(&mut out, key);
            for value in columns.values() {
                out.push_str(", ");
                literal(&mut out, value);
            }
            out.push(')');
            if !dhr.is_empty() {
                requirements(&mut out, dhr);
            }
        }
        Statement::Select { key } => {
            out.push_str("SELECT * FROM t WHERE key=");
            literal(&mut out, key);
        }
        Statement::Update { key, columns, dhr } => {
            out.push_str("UPDATE t SET ");
            for (i, (name, value)) in columns.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write!(out, "{name} = ").unwrap();
                literal(&mut out, value);
            }
            out.push_str(" WHERE key=");
            literal(&mut out, key);
            if let Some(dhr) = dhr {
                requirements(&mut out, dhr);
            }
        }
        Statement::Delete { key } => {
            out.push_str("DELETE FROM t WHERE key=");
            literal(&mut out, key);
        }
    }
    out
}
