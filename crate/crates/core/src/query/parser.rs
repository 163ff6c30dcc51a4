use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{tokenize, Tok, Token};
use super::{Columns, Statement};
use crate::dhr::{DhrRegistry, DhrRequest, Property};
use crate::error::ParseError;

/// Parses one statement and validates its requirement clause against `registry`.
pub fn parse(text: &str, registry: &DhrRegistry) -> Result<Statement, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, at: 0, registry };
    let stmt = p.statement()?;
    if p.peek_sym(';') {
        p.at += 1;
    }
    p.expect_eof()?;
    Ok(stmt)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    at: usize,
    registry: &'a DhrRegistry,
}

impl Parser<'_> {
    fn cur(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn error(&self, expected: &str) -> ParseError {
        let t = self.cur();
        ParseError::Syntax { pos: t.pos, expected: expected.into(), found: t.tok.describe() }
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(&self.cur().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.peek_keyword(kw) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.error(kw))
        }
    }

    fn peek_sym(&self, c: char) -> bool {
        self.cur().tok == Tok::Sym(c)
    }

    fn sym(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek_sym(c) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.error(&format!("`{c}`")))
        }
    }

    fn ident(&mut self) -> Result<(String, usize), ParseError> {
        match &self.cur().tok {
            Tok::Ident(s) => {
                let out = (s.clone(), self.cur().pos);
                self.at += 1;
                Ok(out)
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn value(&mut self) -> Result<(Vec<u8>, usize), ParseError> {
        let pos = self.cur().pos;
        let bytes = match &self.cur().tok {
            Tok::Str(s) => s.as_bytes().to_vec(),
            Tok::Hex(b) => b.clone(),
            _ => return Err(self.error("quoted literal or hex blob")),
        };
        self.at += 1;
        Ok((bytes, pos))
    }

    fn key_value(&mut self) -> Result<Vec<u8>, ParseError> {
        let (key, pos) = self.value()?;
        if key.is_empty() {
            return Err(ParseError::Syntax { pos, expected: "non-empty key".into(), found: "''".into() });
        }
        Ok(key)
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if self.cur().tok == Tok::Eof {
            Ok(())
        } else {
            Err(self.error("end of statement"))
        }
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        if self.peek_keyword("INSERT") {
            self.insert()
        } else if self.peek_keyword("SELECT") {
            self.select()
        } else if self.peek_keyword("UPDATE") {
            self.update()
        } else if self.peek_keyword("DELETE") {
            self.delete()
        } else {
            Err(self.error("INSERT, SELECT, UPDATE or DELETE"))
        }
    }

    fn where_key(&mut self) -> Result<Vec<u8>, ParseError> {
        self.keyword("WHERE")?;
        self.ident()?;
        self.sym('=')?;
        self.key_value()
    }

    fn insert(&mut self) -> Result<Statement, ParseError> {
        self.keyword("INSERT")?;
        self.keyword("INTO")?;
        self.ident()?;
        self.sym('(')?;
        let mut names = vec![self.ident()?];
        while self.peek_sym(',') {
            self.at += 1;
            names.push(self.ident()?);
        }
        self.sym(')')?;
        let mut seen = BTreeSet::new();
        for (name, pos) in &names {
            if !seen.insert(name.as_str()) {
                return Err(ParseError::Syntax {
                    pos: *pos,
                    expected: "distinct column name".into(),
                    found: format!("`{name}`"),
                });
            }
        }
        self.keyword("VALUES")?;
        self.sym('(')?;
        let key = self.key_value()?;
        let mut columns = Columns::new();
        for (name, _) in &names[1..] {
            self.sym(',')?;
            let (v, _) = self.value()?;
            columns.insert(name.clone(), v);
        }
        self.sym(')')?;
        let dhr = self.requirements()?.unwrap_or_default();
        Ok(Statement::Insert { key, columns, dhr })
    }

    fn select(&mut self) -> Result<Statement, ParseError> {
        self.keyword("SELECT")?;
        self.sym('*')?;
        self.keyword("FROM")?;
        self.ident()?;
        let key = self.where_key()?;
        Ok(Statement::Select { key })
    }

    fn update(&mut self) -> Result<Statement, ParseError> {
        self.keyword("UPDATE")?;
        self.ident()?;
        self.keyword("SET")?;
        let mut columns = Columns::new();
        loop {
            let (name, pos) = self.ident()?;
            self.sym('=')?;
            let (v, _) = self.value()?;
            if columns.insert(name.clone(), v).is_some() {
                return Err(ParseError::Syntax { pos, expected: "distinct column name".into(), found: format!("`{name}`") });
            }
            if !self.peek_sym(',') {
                break;
            }
            self.at += 1;
        }
        let key = self.where_key()?;
        let dhr = self.requirements()?;
        Ok(Statement::Update { key, columns, dhr })
    }

    fn delete(&mut self) -> Result<Statement, ParseError> {
        self.keyword("DELETE")?;
        self.keyword("FROM")?;
        self.ident()?;
        let key = self.where_key()?;
        Ok(Statement::Delete { key })
    }

    fn requirements(&mut self) -> Result<Option<DhrRequest>, ParseError> {
        if !self.peek_keyword("WITH") {
            return Ok(None);
        }
        self.at += 1;
        self.keyword("REQUIREMENTS")?;
        let mut demands = BTreeMap::new();
        loop {
            let (name, pos) = self.ident()?;
            let Some(ty) = self.registry.get(&name) else {
                return Err(ParseError::UnknownDhrType { pos, name });
            };
            if demands.contains_key(&name) {
                return Err(ParseError::Syntax { pos, expected: "each requirement type once".into(), found: format!("`{name}`") });
            }
            self.sym('=')?;
            self.sym('{')?;
            let mut props = BTreeSet::new();
            loop {
                let pos = self.cur().pos;
                let (prop, text) = match &self.cur().tok {
                    Tok::Str(s) => (ty.resolve_label(s), s.clone()),
                    Tok::Number(n) => {
                        let level = Property::Level(*n);
                        let label = Property::Label(n.to_string());
                        let found = [level, label].into_iter().find(|p| ty.contains(p));
                        (found, n.to_string())
                    }
                    _ => return Err(self.error("property literal")),
                };
                let Some(prop) = prop else {
                    return Err(ParseError::UnknownProperty { pos, ty: name, property: text });
                };
                self.at += 1;
                props.insert(prop);
                if !self.peek_sym(',') {
                    break;
                }
                self.at += 1;
            }
            self.sym('}')?;
            demands.insert(name, props);
            if !self.peek_keyword("AND") {
                break;
            }
            self.at += 1;
        }
        Ok(Some(DhrRequest { demands }))
    }
}
