use std::fmt;

use super::PoolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Create,
    Poperator,
    For,
    Select,
    From,
    Where,
    Like,
    Compose,
    Using,
    Update,
    Set,
    Replace,
    As,
    Null,
}

impl Keyword {
    pub const ALL: [Keyword; 14] = [
        Keyword::Create,
        Keyword::Poperator,
        Keyword::For,
        Keyword::Select,
        Keyword::From,
        Keyword::Where,
        Keyword::Like,
        Keyword::Compose,
        Keyword::Using,
        Keyword::Update,
        Keyword::Set,
        Keyword::Replace,
        Keyword::As,
        Keyword::Null,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Create => "CREATE",
            Keyword::Poperator => "POPERATOR",
            Keyword::For => "FOR",
            Keyword::Select => "SELECT",
            Keyword::From => "FROM",
            Keyword::Where => "WHERE",
            Keyword::Like => "LIKE",
            Keyword::Compose => "COMPOSE",
            Keyword::Using => "USING",
            Keyword::Update => "UPDATE",
            Keyword::Set => "SET",
            Keyword::Replace => "REPLACE",
            Keyword::As => "AS",
            Keyword::Null => "NULL",
        }
    }

    pub fn lookup(word: &str) -> Option<Keyword> {
        Keyword::ALL.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(word))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Keyword(Keyword),
    /// Lowercased identifier.
    Ident(String),
    /// Single-quoted literal with `''` unescaped.
    Str(String),
    Eq,
    Comma,
    Dot,
    Star,
    LParen,
    RParen,
    Semicolon,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => f.write_str(k.as_str()),
            TokenKind::Ident(s) => write!(f, "identifier {s}"),
            TokenKind::Str(s) => write!(f, "string '{s}'"),
            TokenKind::Eq => f.write_str("'='"),
            TokenKind::Comma => f.write_str("','"),
            TokenKind::Dot => f.write_str("'.'"),
            TokenKind::Star => f.write_str("'*'"),
            TokenKind::LParen => f.write_str("'('"),
            TokenKind::RParen => f.write_str("')'"),
            TokenKind::Semicolon => f.write_str("';'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset of the first character.
    pub pos: usize,
}

fn snippet(text: &str, pos: usize) -> String {
    text[pos..].chars().take(16).collect()
}

/// Splits POOL text into tokens. `--` starts a comment running to the end of the line.
pub fn tokenize(text: &str) -> Result<Vec<Token>, PoolError> {
    let mut out = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some(&(pos, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
            continue;
        }
        let single = match c {
            '=' => Some(TokenKind::Eq),
            ',' => Some(TokenKind::Comma),
            '.' => Some(TokenKind::Dot),
            '*' => Some(TokenKind::Star),
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            ';' => Some(TokenKind::Semicolon),
            _ => None,
        };
        if let Some(kind) = single {
            it.next();
            out.push(Token { kind, pos });
            continue;
        }
        if c == '-' && text[pos..].starts_with("--") {
            while let Some(&(_, c)) = it.peek() {
                if c == '\n' {
                    break;
                }
                it.next();
            }
            continue;
        }
        if c == '\'' {
            it.next();
            let mut s = String::new();
            loop {
                match it.next() {
                    None => return Err(PoolError::Lex { position: pos, snippet: snippet(text, pos) }),
                    Some((_, '\'')) => {
                        if matches!(it.peek(), Some((_, '\''))) {
                            it.next();
                            s.push('\'');
                        } else {
                            break;
                        }
                    }
                    Some((_, ch)) => s.push(ch),
                }
            }
            out.push(Token { kind: TokenKind::Str(s), pos });
            continue;
        }
        if c.is_ascii_alphanumeric() || c == '_' {
            let mut word = String::new();
            while let Some(&(_, ch)) = it.peek() {
                if ch.is_ascii_alphanumeric() || ch == '_' {
                    word.push(ch);
                    it.next();
                } else {
                    break;
                }
            }
            let kind = match Keyword::lookup(&word) {
                Some(k) => TokenKind::Keyword(k),
                None => TokenKind::Ident(word.to_ascii_lowercase()),
            };
            out.push(Token { kind, pos });
            continue;
        }
        return Err(PoolError::Lex { position: pos, snippet: snippet(text, pos) });
    }
    Ok(out)
}
