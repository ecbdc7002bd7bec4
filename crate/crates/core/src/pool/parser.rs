use super::ast::*;
use super::lexer::{tokenize, Keyword, Token, TokenKind};
use super::PoolError;
use crate::poem::Attribute;

struct Parser<'a> {
    tokens: &'a [Token],
    at: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a TokenKind> {
        self.tokens.get(self.at).map(|t| &t.kind)
    }

    fn error<T>(&self, expected: &str) -> Result<T, PoolError> {
        let (found, position) = match self.tokens.get(self.at) {
            Some(t) => (t.kind.to_string(), t.pos),
            None => ("end of input".to_string(), self.tokens.last().map_or(0, |t| t.pos + 1)),
        };
        Err(PoolError::Parse { expected: expected.to_string(), found, position })
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), PoolError> {
        if self.eat(&kind) {
            Ok(())
        } else {
            self.error(&kind.to_string())
        }
    }

    fn keyword(&mut self, k: Keyword) -> Result<(), PoolError> {
        self.expect(TokenKind::Keyword(k))
    }

    fn eat_keyword(&mut self, k: Keyword) -> bool {
        self.eat(&TokenKind::Keyword(k))
    }

    /// Identifier or quoted name.
    fn name(&mut self, what: &str) -> Result<String, PoolError> {
        match self.peek() {
            Some(TokenKind::Ident(s)) | Some(TokenKind::Str(s)) => {
                self.at += 1;
                Ok(s.clone())
            }
            _ => self.error(what),
        }
    }

    fn attr(&mut self) -> Result<Attribute, PoolError> {
        match self.peek() {
            Some(TokenKind::Ident(s)) => {
                let a = s.parse::<Attribute>()?;
                self.at += 1;
                Ok(a)
            }
            _ => self.error("attribute"),
        }
    }

    fn literal(&mut self) -> Result<String, PoolError> {
        match self.peek() {
            Some(TokenKind::Str(s)) | Some(TokenKind::Ident(s)) => {
                self.at += 1;
                Ok(s.clone())
            }
            _ => self.error("literal"),
        }
    }

    fn qualified_attr(&mut self) -> Result<QualifiedAttr, PoolError> {
        if matches!(self.tokens.get(self.at + 1).map(|t| &t.kind), Some(TokenKind::Dot)) {
            let q = self.name("qualifier")?;
            self.at += 1;
            Ok(QualifiedAttr { qualifier: Some(q), attr: self.attr()? })
        } else {
            Ok(QualifiedAttr { qualifier: None, attr: self.attr()? })
        }
    }

    fn pred(&mut self) -> Result<Pred, PoolError> {
        let attr = self.qualified_attr()?;
        let op = if self.eat(&TokenKind::Eq) {
            CompareOp::Eq
        } else if self.eat_keyword(Keyword::Like) {
            CompareOp::Like
        } else {
            return self.error("'=' or LIKE");
        };
        Ok(Pred { attr, op, value: self.literal()? })
    }

    fn value(&mut self) -> Result<ValueExpr, PoolError> {
        if self.eat_keyword(Keyword::Null) {
            return Ok(ValueExpr::Null);
        }
        if self.eat(&TokenKind::LParen) {
            let s = self.select()?;
            self.expect(TokenKind::RParen)?;
            return Ok(ValueExpr::SubSelect(Box::new(s)));
        }
        if self.eat_keyword(Keyword::Replace) {
            self.expect(TokenKind::LParen)?;
            let inner = self.value()?;
            self.expect(TokenKind::Comma)?;
            let from = self.literal()?;
            self.expect(TokenKind::Comma)?;
            let to = self.literal()?;
            self.expect(TokenKind::RParen)?;
            return Ok(ValueExpr::Replace(Box::new(inner), from, to));
        }
        match self.peek() {
            Some(TokenKind::Str(_)) | Some(TokenKind::Ident(_)) => Ok(ValueExpr::Literal(self.literal()?)),
            _ => self.error("value"),
        }
    }

    fn assignments(&mut self) -> Result<Vec<(Attribute, ValueExpr)>, PoolError> {
        let mut out = Vec::new();
        loop {
            let a = self.attr()?;
            self.expect(TokenKind::Eq)?;
            out.push((a, self.value()?));
            if !self.eat(&TokenKind::Comma) {
                return Ok(out);
            }
        }
    }

    fn select(&mut self) -> Result<SelectStmt, PoolError> {
        self.keyword(Keyword::Select)?;
        let projection = if self.eat(&TokenKind::Star) {
            Projection::All
        } else {
            let mut attrs = vec![self.attr()?];
            while self.eat(&TokenKind::Comma) {
                attrs.push(self.attr()?);
            }
            Projection::Attrs(attrs)
        };
        self.keyword(Keyword::From)?;
        let source = self.name("source")?;
        let alias = if self.eat_keyword(Keyword::As) {
            Some(self.name("alias")?)
        } else if let Some(TokenKind::Ident(a)) = self.peek() {
            self.at += 1;
            Some(a.clone())
        } else {
            None
        };
        let predicate = if self.eat_keyword(Keyword::Where) { Some(self.pred()?) } else { None };
        Ok(SelectStmt { projection, source, alias, predicate })
    }

    fn statement(&mut self) -> Result<Statement, PoolError> {
        match self.peek() {
            Some(TokenKind::Keyword(Keyword::Create)) => {
                self.at += 1;
                self.keyword(Keyword::Poperator)?;
                let name = self.name("operator name")?;
                self.keyword(Keyword::For)?;
                let source = self.name("source")?;
                self.expect(TokenKind::LParen)?;
                let assignments = self.assignments()?;
                self.expect(TokenKind::RParen)?;
                Ok(Statement::Create(CreateStmt { name, source, assignments }))
            }
            Some(TokenKind::Keyword(Keyword::Select)) => Ok(Statement::Select(self.select()?)),
            Some(TokenKind::Keyword(Keyword::Compose)) => {
                self.at += 1;
                let mut names = vec![self.name("operator name")?];
                if self.eat(&TokenKind::Comma) {
                    names.push(self.name("operator name")?);
                }
                self.keyword(Keyword::From)?;
                let source = self.name("source")?;
                let using = if self.eat_keyword(Keyword::Using) {
                    let a = self.qualified_attr()?;
                    self.expect(TokenKind::Eq)?;
                    Some((a, self.literal()?))
                } else {
                    None
                };
                Ok(Statement::Compose(ComposeStmt { names, source, using }))
            }
            Some(TokenKind::Keyword(Keyword::Update)) => {
                self.at += 1;
                let source = self.name("source")?;
                self.keyword(Keyword::Set)?;
                let assignments = self.assignments()?;
                let predicate = if self.eat_keyword(Keyword::Where) { Some(self.pred()?) } else { None };
                Ok(Statement::Update(UpdateStmt { source, assignments, predicate }))
            }
            _ => self.error("CREATE, SELECT, COMPOSE or UPDATE"),
        }
    }
}

/// Parses exactly one statement; trailing tokens are an error.
pub fn parse(tokens: &[Token]) -> Result<Statement, PoolError> {
    let mut p = Parser { tokens, at: 0 };
    let s = p.statement()?;
    if p.at != tokens.len() {
        return p.error("end of statement");
    }
    Ok(s)
}

/// Parses `;`-separated statements. Empty statements are skipped.
pub fn parse_script(text: &str) -> Result<Vec<Statement>, PoolError> {
    let tokens = tokenize(text)?;
    tokens
        .split(|t| t.kind == TokenKind::Semicolon)
        .filter(|chunk| !chunk.is_empty())
        .map(parse)
        .collect()
}

pub fn parse_str(text: &str) -> Result<Statement, PoolError> {
    parse(&tokenize(text)?)
}
