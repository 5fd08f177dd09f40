use super::ast::{BoolOp, ConditionExpr, EqualityOp, ExprType, Method};
use super::ConditionError;

pub const MAX_SOURCE_LEN: usize = 4096;
pub const MAX_DEPTH: usize = 32;

const ROOT: &str = "assertion";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Dot,
    LParen,
    RParen,
    EqEq,
    NotEq,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Dot => "`.`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::AndAnd => "`&&`".into(),
            Tok::OrOr => "`||`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn syntax(offset: usize, expected: &[&str], found: impl Into<String>) -> ConditionError {
    ConditionError::Syntax {
        offset,
        expected: expected.iter().map(|s| (*s).to_owned()).collect(),
        found: found.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ConditionError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'.' => toks.push((Tok::Dot, start)),
            b'(' => toks.push((Tok::LParen, start)),
            b')' => toks.push((Tok::RParen, start)),
            b'=' | b'!' | b'&' | b'|' => {
                let next = bytes.get(i + 1).copied();
                let tok = match (c, next) {
                    (b'=', Some(b'=')) => Tok::EqEq,
                    (b'!', Some(b'=')) => Tok::NotEq,
                    (b'&', Some(b'&')) => Tok::AndAnd,
                    (b'|', Some(b'|')) => Tok::OrOr,
                    (b'!', _) => Tok::Bang,
                    (b'=', _) => return Err(syntax(start, &["`==`"], "`=`")),
                    (b'&', _) => return Err(syntax(start, &["`&&`"], "`&`")),
                    _ => return Err(syntax(start, &["`||`"], "`|`")),
                };
                if tok != Tok::Bang {
                    i += 1;
                }
                toks.push((tok, start));
            }
            b'\'' | b'"' => {
                let (s, end) = lex_string(src, start)?;
                toks.push((Tok::Str(s), start));
                i = end;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push((Tok::Ident(src[start..i].to_owned()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(syntax(
                    start,
                    &["identifier", "string literal", "operator", "`(`", "`)`", "`.`"],
                    format!("`{ch}`"),
                ));
            }
        }
        i += 1;
    }
    toks.push((Tok::Eof, src.len()));
    Ok(toks)
}

/// Returns the unescaped contents and the byte offset just past the closing
/// quote.
fn lex_string(src: &str, start: usize) -> Result<(String, usize), ConditionError> {
    let quote = src.as_bytes()[start] as char;
    let mut out = String::new();
    let mut chars = src[start + 1..].char_indices();
    while let Some((off, c)) = chars.next() {
        let pos = start + 1 + off;
        match c {
            c if c == quote => return Ok((out, pos + 1)),
            '\\' => match chars.next() {
                Some((_, '\\')) => out.push('\\'),
                Some((_, '\'')) => out.push('\''),
                Some((_, '"')) => out.push('"'),
                Some((_, 'n')) => out.push('\n'),
                Some((_, 'r')) => out.push('\r'),
                Some((_, 't')) => out.push('\t'),
                Some((_, other)) => {
                    return Err(syntax(
                        pos,
                        &["\\\\", "\\'", "\\\"", "\\n", "\\r", "\\t"],
                        format!("`\\{other}`"),
                    ))
                }
                None => break,
            },
            c => out.push(c),
        }
    }
    Err(syntax(src.len(), &["closing quote"], "end of input"))
}

struct Parsed {
    expr: ConditionExpr,
    depth: usize,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    /// Open `(` and `!` frames; bounds recursion before the tree exists.
    nesting: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    fn unexpected(&self, expected: &[&str]) -> ConditionError {
        syntax(self.offset(), expected, self.peek().describe())
    }

    fn node(&self, expr: ConditionExpr, child_depth: usize) -> Result<Parsed, ConditionError> {
        let depth = child_depth + 1;
        if depth > MAX_DEPTH {
            return Err(ConditionError::DepthExceeded {
                offset: self.offset(),
                limit: MAX_DEPTH,
            });
        }
        Ok(Parsed { expr, depth })
    }

    fn enter(&mut self) -> Result<(), ConditionError> {
        self.nesting += 1;
        if self.nesting > MAX_DEPTH {
            return Err(ConditionError::DepthExceeded {
                offset: self.offset(),
                limit: MAX_DEPTH,
            });
        }
        Ok(())
    }

    fn parse_or(&mut self) -> Result<Parsed, ConditionError> {
        let mut left = self.parse_and()?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            let right = self.parse_and()?;
            left = self.binary(BoolOp::Or, left, right)?;
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<Parsed, ConditionError> {
        let mut left = self.parse_equality()?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            let right = self.parse_equality()?;
            left = self.binary(BoolOp::And, left, right)?;
        }
        Ok(left)
    }

    fn binary(&self, op: BoolOp, left: Parsed, right: Parsed) -> Result<Parsed, ConditionError> {
        let depth = left.depth.max(right.depth);
        self.node(
            ConditionExpr::BoolOp {
                op,
                left: Box::new(left.expr),
                right: Box::new(right.expr),
            },
            depth,
        )
    }

    fn parse_equality(&mut self) -> Result<Parsed, ConditionError> {
        let left = self.parse_unary()?;
        let op = match self.peek() {
            Tok::EqEq => EqualityOp::Eq,
            Tok::NotEq => EqualityOp::Ne,
            _ => return Ok(left),
        };
        self.bump();
        let right = self.parse_unary()?;
        if matches!(self.peek(), Tok::EqEq | Tok::NotEq) {
            // Comparisons do not chain.
            return Err(self.unexpected(&["`&&`", "`||`", "`)`", "end of input"]));
        }
        let depth = left.depth.max(right.depth);
        self.node(
            ConditionExpr::Equality {
                op,
                left: Box::new(left.expr),
                right: Box::new(right.expr),
            },
            depth,
        )
    }

    fn parse_unary(&mut self) -> Result<Parsed, ConditionError> {
        if *self.peek() == Tok::Bang {
            self.bump();
            self.enter()?;
            let inner = self.parse_unary()?;
            self.nesting -= 1;
            return self.node(ConditionExpr::Not(Box::new(inner.expr)), inner.depth);
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> Result<Parsed, ConditionError> {
        let mut current = self.parse_primary()?;
        while *self.peek() == Tok::Dot {
            self.bump();
            let name_offset = self.offset();
            let name = match self.peek() {
                Tok::Ident(name) => name.clone(),
                _ => return Err(self.unexpected(&["method name"])),
            };
            self.bump();
            if *self.peek() != Tok::LParen {
                // Plain field access only extends attribute paths.
                if let ConditionExpr::AttributePath(segments) = &mut current.expr {
                    segments.push(name);
                    continue;
                }
                return Err(self.unexpected(&["`(`"]));
            }
            let method = Method::from_name(&name).ok_or_else(|| {
                syntax(
                    name_offset,
                    &["endsWith", "startsWith", "contains"],
                    format!("identifier `{name}`"),
                )
            })?;
            self.bump();
            self.enter()?;
            let arg_offset = self.offset();
            let argument = self.parse_or()?;
            self.nesting -= 1;
            if argument.expr.static_type() != ExprType::String {
                return Err(syntax(arg_offset, &["string expression"], "boolean expression"));
            }
            self.expect_rparen()?;
            let depth = current.depth.max(argument.depth);
            current = self.node(
                ConditionExpr::MethodCall {
                    receiver: Box::new(current.expr),
                    method,
                    argument: Box::new(argument.expr),
                },
                depth,
            )?;
        }
        Ok(current)
    }

    fn expect_rparen(&mut self) -> Result<(), ConditionError> {
        if *self.peek() != Tok::RParen {
            return Err(self.unexpected(&["`)`", "`&&`", "`||`", "`==`", "`!=`", "`.`"]));
        }
        self.bump();
        Ok(())
    }

    fn parse_primary(&mut self) -> Result<Parsed, ConditionError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Parsed {
                    expr: ConditionExpr::StringLiteral(s),
                    depth: 1,
                })
            }
            Tok::Ident(name) if name == ROOT => {
                self.bump();
                if *self.peek() != Tok::Dot || !matches!(self.peek_at(1), Tok::Ident(_)) {
                    return Err(self.unexpected(&["`.`"]));
                }
                self.bump();
                let Tok::Ident(first) = self.bump() else {
                    unreachable!("checked above")
                };
                if *self.peek() == Tok::LParen {
                    return Err(syntax(
                        self.toks[self.pos - 1].1,
                        &["attribute name"],
                        format!("method call `{first}(`"),
                    ));
                }
                Ok(Parsed {
                    expr: ConditionExpr::AttributePath(vec![first]),
                    depth: 1,
                })
            }
            Tok::LParen => {
                self.bump();
                self.enter()?;
                let inner = self.parse_or()?;
                self.nesting -= 1;
                self.expect_rparen()?;
                self.node(ConditionExpr::Parenthesized(Box::new(inner.expr)), inner.depth)
            }
            _ => Err(self.unexpected(&["`assertion`", "string literal", "`(`", "`!`"])),
        }
    }
}

pub fn parse_condition(source: &str) -> Result<ConditionExpr, ConditionError> {
    if source.len() > MAX_SOURCE_LEN {
        return Err(ConditionError::SourceTooLong {
            len: source.len(),
            limit: MAX_SOURCE_LEN,
        });
    }
    let mut parser = Parser {
        toks: lex(source)?,
        pos: 0,
        nesting: 0,
    };
    let parsed = parser.parse_or()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.unexpected(&["`&&`", "`||`", "`==`", "`!=`", "end of input"]));
    }
    Ok(parsed.expr)
}
