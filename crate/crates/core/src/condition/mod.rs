//! Attribute-condition language and claim conditions.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! or       := and ( "||" and )*
//! and      := equality ( "&&" equality )*
//! equality := unary ( ( "==" | "!=" ) unary )?
//! unary    := "!" unary | postfix
//! postfix  := primary ( "." method "(" or ")" )*
//! primary  := string | "assertion" ( "." ident )+ | "(" or ")"
//! method   := "endsWith" | "startsWith" | "contains"
//! ```
//!
//! Strings are single- or double-quoted with `\\ \' \" \n \r \t` escapes.
//! Comparisons are byte-exact. There is no arithmetic and no regex.

mod ast;
mod eval;
mod mapping;
mod parser;

use thiserror::Error;

pub use ast::{BoolOp, ConditionExpr, EqualityOp, ExprType, Method};
pub use eval::{eval_condition, AssertionContext};
pub use mapping::{
    apply_mapping, eval_string_equals, issuer_key_prefix, AttributeMapping,
    StringEqualsCondition, SUBJECT_TARGET,
};
pub use parser::{parse_condition, MAX_DEPTH, MAX_SOURCE_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConditionError {
    #[error("syntax error at byte {offset}: expected one of {expected:?}, found {found}")]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("expression nesting exceeds {limit} at byte {offset}")]
    DepthExceeded { offset: usize, limit: usize },
    #[error("condition source is {len} bytes, limit is {limit}")]
    SourceTooLong { len: usize, limit: usize },
    #[error("missing attribute assertion.{0}")]
    MissingAttribute(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("invalid attribute mapping: {0}")]
    InvalidMapping(String),
}
