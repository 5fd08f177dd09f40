use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::{BoolOp, ConditionExpr, EqualityOp};
use super::ConditionError;
use crate::token::{ClaimValue, JwtClaims};

/// Asserted identity attributes, keyed by dotted path relative to the
/// `assertion` root (`arn`, `sub`, `kubernetes.namespace`, ...).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssertionContext {
    attributes: BTreeMap<String, String>,
}

impl AssertionContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empty keys are ignored.
    pub fn insert(&mut self, path: impl Into<String>, value: impl Into<String>) {
        let path = path.into();
        if !path.is_empty() {
            self.attributes.insert(path, value.into());
        }
    }

    pub fn with(mut self, path: impl Into<String>, value: impl Into<String>) -> Self {
        self.insert(path, value);
        self
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.attributes.get(path).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.attributes.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Flattens verified token claims. Nested claim maps become dotted
    /// paths; `aud` is present only for single-audience tokens.
    pub fn from_claims(claims: &JwtClaims) -> Self {
        fn flatten(prefix: &str, value: &ClaimValue, ctx: &mut AssertionContext) {
            match value {
                ClaimValue::String(s) => ctx.insert(prefix, s.clone()),
                ClaimValue::Number(n) => ctx.insert(prefix, n.to_string()),
                ClaimValue::Map(m) => {
                    for (k, v) in m {
                        flatten(&format!("{prefix}.{k}"), v, ctx);
                    }
                }
            }
        }
        let mut ctx = AssertionContext::new()
            .with("iss", claims.issuer.clone())
            .with("sub", claims.subject.clone())
            .with("jti", claims.jwt_id.clone());
        if let [aud] = claims.audience.as_slice() {
            ctx.insert("aud", aud.clone());
        }
        for (k, v) in &claims.extra {
            flatten(k, v, &mut ctx);
        }
        ctx
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for AssertionContext {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut ctx = AssertionContext::new();
        for (k, v) in iter {
            ctx.insert(k, v);
        }
        ctx
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Value<'a> {
    Str(std::borrow::Cow<'a, str>),
    Bool(bool),
}

fn string<'a>(v: Value<'a>, what: &str) -> Result<std::borrow::Cow<'a, str>, ConditionError> {
    match v {
        Value::Str(s) => Ok(s),
        Value::Bool(_) => Err(ConditionError::TypeMismatch(format!(
            "{what} must be a string, got a boolean"
        ))),
    }
}

fn boolean(v: Value<'_>, what: &str) -> Result<bool, ConditionError> {
    match v {
        Value::Bool(b) => Ok(b),
        Value::Str(_) => Err(ConditionError::TypeMismatch(format!(
            "{what} must be a boolean, got a string"
        ))),
    }
}

pub(crate) fn eval_value<'a>(
    expr: &'a ConditionExpr,
    ctx: &'a AssertionContext,
) -> Result<Value<'a>, ConditionError> {
    use std::borrow::Cow;
    match expr {
        ConditionExpr::StringLiteral(s) => Ok(Value::Str(Cow::Borrowed(s))),
        ConditionExpr::AttributePath(segments) => {
            let key = segments.join(".");
            match ctx.get(&key) {
                Some(v) => Ok(Value::Str(Cow::Borrowed(v))),
                None => Err(ConditionError::MissingAttribute(key)),
            }
        }
        ConditionExpr::MethodCall {
            receiver,
            method,
            argument,
        } => {
            let recv = string(eval_value(receiver, ctx)?, "method receiver")?;
            let arg = string(eval_value(argument, ctx)?, "method argument")?;
            Ok(Value::Bool(method.apply(&recv, &arg)))
        }
        ConditionExpr::Equality { op, left, right } => {
            let l = string(eval_value(left, ctx)?, "comparison operand")?;
            let r = string(eval_value(right, ctx)?, "comparison operand")?;
            Ok(Value::Bool(match op {
                EqualityOp::Eq => l == r,
                EqualityOp::Ne => l != r,
            }))
        }
        ConditionExpr::BoolOp { op, left, right } => {
            let l = boolean(eval_value(left, ctx)?, "logical operand")?;
            // Short circuit: the right side is not evaluated, so it cannot
            // raise MissingAttribute.
            match (op, l) {
                (BoolOp::And, false) => Ok(Value::Bool(false)),
                (BoolOp::Or, true) => Ok(Value::Bool(true)),
                _ => Ok(Value::Bool(boolean(
                    eval_value(right, ctx)?,
                    "logical operand",
                )?)),
            }
        }
        ConditionExpr::Not(inner) => Ok(Value::Bool(!boolean(
            eval_value(inner, ctx)?,
            "negation operand",
        )?)),
        ConditionExpr::Parenthesized(inner) => eval_value(inner, ctx),
    }
}

/// Evaluates a condition to a boolean. A missing attribute is an error, not
/// `false`; callers decide how to fail closed.
pub fn eval_condition(expr: &ConditionExpr, ctx: &AssertionContext) -> Result<bool, ConditionError> {
    boolean(eval_value(expr, ctx)?, "condition")
}
