use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    EndsWith,
    StartsWith,
    Contains,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::EndsWith, Method::StartsWith, Method::Contains];

    pub fn name(self) -> &'static str {
        match self {
            Method::EndsWith => "endsWith",
            Method::StartsWith => "startsWith",
            Method::Contains => "contains",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn apply(self, receiver: &str, arg: &str) -> bool {
        match self {
            Method::EndsWith => receiver.ends_with(arg),
            Method::StartsWith => receiver.starts_with(arg),
            Method::Contains => receiver.contains(arg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EqualityOp {
    Eq,
    Ne,
}

impl EqualityOp {
    pub fn symbol(self) -> &'static str {
        match self {
            EqualityOp::Eq => "==",
            EqualityOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoolOp {
    And,
    Or,
}

impl BoolOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BoolOp::And => "&&",
            BoolOp::Or => "||",
        }
    }
}

/// Parsed attribute condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConditionExpr {
    StringLiteral(String),
    /// Segments after the `assertion` root, at least one.
    AttributePath(Vec<String>),
    MethodCall {
        receiver: Box<ConditionExpr>,
        method: Method,
        argument: Box<ConditionExpr>,
    },
    Equality {
        op: EqualityOp,
        left: Box<ConditionExpr>,
        right: Box<ConditionExpr>,
    },
    BoolOp {
        op: BoolOp,
        left: Box<ConditionExpr>,
        right: Box<ConditionExpr>,
    },
    Not(Box<ConditionExpr>),
    Parenthesized(Box<ConditionExpr>),
}

/// Static result type of an expression, as far as the grammar determines it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprType {
    String,
    Bool,
}

// Binding strength, loosest first.
pub(crate) const PREC_OR: u8 = 1;
pub(crate) const PREC_AND: u8 = 2;
pub(crate) const PREC_EQ: u8 = 3;
pub(crate) const PREC_UNARY: u8 = 4;
pub(crate) const PREC_POSTFIX: u8 = 5;

impl ConditionExpr {
    pub fn path(segments: &[&str]) -> Self {
        ConditionExpr::AttributePath(segments.iter().map(|s| (*s).to_owned()).collect())
    }

    pub fn literal(s: impl Into<String>) -> Self {
        ConditionExpr::StringLiteral(s.into())
    }

    pub fn static_type(&self) -> ExprType {
        match self {
            ConditionExpr::StringLiteral(_) | ConditionExpr::AttributePath(_) => ExprType::String,
            ConditionExpr::Parenthesized(inner) => inner.static_type(),
            _ => ExprType::Bool,
        }
    }

    /// Leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            ConditionExpr::StringLiteral(_) | ConditionExpr::AttributePath(_) => 1,
            ConditionExpr::Not(e) | ConditionExpr::Parenthesized(e) => 1 + e.depth(),
            ConditionExpr::MethodCall {
                receiver: a,
                argument: b,
                ..
            }
            | ConditionExpr::Equality {
                left: a, right: b, ..
            }
            | ConditionExpr::BoolOp {
                left: a, right: b, ..
            } => 1 + a.depth().max(b.depth()),
        }
    }

    pub(crate) fn precedence(&self) -> u8 {
        match self {
            ConditionExpr::BoolOp { op: BoolOp::Or, .. } => PREC_OR,
            ConditionExpr::BoolOp { op: BoolOp::And, .. } => PREC_AND,
            ConditionExpr::Equality { .. } => PREC_EQ,
            ConditionExpr::Not(_) => PREC_UNARY,
            _ => PREC_POSTFIX,
        }
    }

    /// Dotted path of an attribute reference, without the `assertion` root.
    pub fn attribute_key(&self) -> Option<String> {
        match self {
            ConditionExpr::AttributePath(segments) => Some(segments.join(".")),
            _ => None,
        }
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

fn write_child(
    f: &mut fmt::Formatter<'_>,
    child: &ConditionExpr,
    min_prec: u8,
) -> fmt::Result {
    // Only hand-built trees need the extra parentheses; parsed trees carry
    // explicit Parenthesized nodes wherever precedence demands them.
    if child.precedence() < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

/// Canonical source form. Parsing the output of a parsed expression yields
/// the same tree.
impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionExpr::StringLiteral(s) => f.write_str(&quote(s)),
            ConditionExpr::AttributePath(segments) => {
                f.write_str("assertion")?;
                for s in segments {
                    write!(f, ".{s}")?;
                }
                Ok(())
            }
            ConditionExpr::MethodCall {
                receiver,
                method,
                argument,
            } => {
                write_child(f, receiver, PREC_POSTFIX)?;
                write!(f, ".{}({argument})", method.name())
            }
            ConditionExpr::Equality { op, left, right } => {
                write_child(f, left, PREC_EQ + 1)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, right, PREC_EQ + 1)
            }
            ConditionExpr::BoolOp { op, left, right } => {
                let prec = self.precedence();
                write_child(f, left, prec)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, right, prec + 1)
            }
            ConditionExpr::Not(inner) => {
                f.write_str("!")?;
                write_child(f, inner, PREC_UNARY)
            }
            ConditionExpr::Parenthesized(inner) => write!(f, "({inner})"),
        }
    }
}
