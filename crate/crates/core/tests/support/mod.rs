//! Generators and independent oracles shared by the integration suites.
#![allow(dead_code)]

use fedauth_core::condition::{
    AssertionContext, BoolOp, ConditionError, ConditionExpr, EqualityOp, Method,
};
use rand::seq::SliceRandom;
use rand::Rng;

const ALPHABET: &[char] = &['a', 'b', 'x', ':', '/', '\'', '\\', '"', ' ', '-'];
pub const PRESENT: [&str; 3] = ["a", "b", "c"];
const ABSENT: [&str; 1] = ["d"];

// Same binding strengths as the parser; duplicated so the generator does
// not lean on crate internals.
fn prec(e: &ConditionExpr) -> u8 {
    match e {
        ConditionExpr::BoolOp { op: BoolOp::Or, .. } => 1,
        ConditionExpr::BoolOp { op: BoolOp::And, .. } => 2,
        ConditionExpr::Equality { .. } => 3,
        ConditionExpr::Not(_) => 4,
        _ => 5,
    }
}

fn wrap(e: ConditionExpr, min: u8) -> ConditionExpr {
    if prec(&e) < min {
        ConditionExpr::Parenthesized(Box::new(e))
    } else {
        e
    }
}

pub fn gen_string_value<R: Rng>(rng: &mut R) -> String {
    let len = rng.gen_range(0..4);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn gen_path<R: Rng>(rng: &mut R) -> ConditionExpr {
    if rng.gen_bool(0.05) {
        return ConditionExpr::path(&["k8s", "ns"]);
    }
    let name = if rng.gen_bool(0.1) {
        ABSENT.choose(rng).unwrap()
    } else {
        PRESENT.choose(rng).unwrap()
    };
    ConditionExpr::path(&[name])
}

/// String-typed operand: literal, path, or a parenthesized one of those.
fn gen_string_expr<R: Rng>(rng: &mut R) -> ConditionExpr {
    let leaf = if rng.gen_bool(0.5) {
        ConditionExpr::StringLiteral(gen_string_value(rng))
    } else {
        gen_path(rng)
    };
    if rng.gen_bool(0.1) {
        ConditionExpr::Parenthesized(Box::new(leaf))
    } else {
        leaf
    }
}

/// Any tree the parser can produce. Mostly well-typed, with occasional
/// ill-typed nodes so type errors get exercised too.
pub fn gen_expr<R: Rng>(rng: &mut R, budget: u32) -> ConditionExpr {
    if budget == 0 {
        return gen_string_expr(rng);
    }
    let well_typed = rng.gen_bool(0.9);
    let operand = |rng: &mut R, want_bool: bool| {
        if want_bool == well_typed {
            gen_expr(rng, budget - 1)
        } else {
            gen_string_expr(rng)
        }
    };
    match rng.gen_range(0..6) {
        0 => {
            let receiver = if well_typed {
                gen_string_expr(rng)
            } else {
                gen_expr(rng, budget - 1)
            };
            ConditionExpr::MethodCall {
                receiver: Box::new(wrap(receiver, 5)),
                method: *Method::ALL.choose(rng).unwrap(),
                argument: Box::new(gen_string_expr(rng)),
            }
        }
        1 => {
            let op = if rng.gen_bool(0.5) {
                EqualityOp::Eq
            } else {
                EqualityOp::Ne
            };
            let (l, r) = if well_typed {
                (gen_string_expr(rng), gen_string_expr(rng))
            } else {
                (gen_expr(rng, budget - 1), gen_string_expr(rng))
            };
            ConditionExpr::Equality {
                op,
                left: Box::new(wrap(l, 4)),
                right: Box::new(wrap(r, 4)),
            }
        }
        2 | 3 => {
            let op = if rng.gen_bool(0.5) {
                BoolOp::And
            } else {
                BoolOp::Or
            };
            let p = if op == BoolOp::Or { 1 } else { 2 };
            let l = operand(rng, true);
            let r = operand(rng, true);
            ConditionExpr::BoolOp {
                op,
                left: Box::new(wrap(l, p)),
                right: Box::new(wrap(r, p + 1)),
            }
        }
        4 => ConditionExpr::Not(Box::new(wrap(operand(rng, true), 4))),
        _ => ConditionExpr::Parenthesized(Box::new(gen_expr(rng, budget - 1))),
    }
}

/// Three attributes, values drawn from the literal alphabet so that
/// comparisons hit often.
pub fn gen_context<R: Rng>(rng: &mut R) -> AssertionContext {
    PRESENT
        .iter()
        .map(|k| (k.to_string(), gen_string_value(rng)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleValue {
    Str(String),
    Bool(bool),
    Missing(String),
    TypeError,
}

fn ends_with(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.len() >= needle.len() && haystack[haystack.len() - needle.len()..] == *needle
}

fn starts_with(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.len() >= needle.len() && haystack[..needle.len()] == *needle
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
}

/// Eager interpreter: every child is evaluated, then short-circuit rules
/// decide which child results matter.
pub fn oracle(expr: &ConditionExpr, ctx: &AssertionContext) -> OracleValue {
    use OracleValue::*;
    let as_str = |v: OracleValue| -> Result<String, OracleValue> {
        match v {
            Str(s) => Ok(s),
            Bool(_) => Err(TypeError),
            e => Err(e),
        }
    };
    let as_bool = |v: OracleValue| -> Result<bool, OracleValue> {
        match v {
            Bool(b) => Ok(b),
            Str(_) => Err(TypeError),
            e => Err(e),
        }
    };
    match expr {
        ConditionExpr::StringLiteral(s) => Str(s.clone()),
        ConditionExpr::AttributePath(segs) => {
            let key = segs.join(".");
            let found = ctx.iter().find(|(k, _)| *k == key).map(|(_, v)| v.to_owned());
            match found {
                Some(v) => Str(v),
                None => Missing(key),
            }
        }
        ConditionExpr::MethodCall {
            receiver,
            method,
            argument,
        } => {
            let r = oracle(receiver, ctx);
            let a = oracle(argument, ctx);
            let r = match as_str(r) {
                Ok(s) => s,
                Err(e) => return e,
            };
            let a = match as_str(a) {
                Ok(s) => s,
                Err(e) => return e,
            };
            Bool(match method {
                Method::EndsWith => ends_with(r.as_bytes(), a.as_bytes()),
                Method::StartsWith => starts_with(r.as_bytes(), a.as_bytes()),
                Method::Contains => contains(r.as_bytes(), a.as_bytes()),
            })
        }
        ConditionExpr::Equality { op, left, right } => {
            let l = oracle(left, ctx);
            let r = oracle(right, ctx);
            let l = match as_str(l) {
                Ok(s) => s,
                Err(e) => return e,
            };
            let r = match as_str(r) {
                Ok(s) => s,
                Err(e) => return e,
            };
            let same = l.as_bytes() == r.as_bytes();
            Bool(if *op == EqualityOp::Eq { same } else { !same })
        }
        ConditionExpr::BoolOp { op, left, right } => {
            let l = oracle(left, ctx);
            let r = oracle(right, ctx);
            let l = match as_bool(l) {
                Ok(b) => b,
                Err(e) => return e,
            };
            match (op, l) {
                (BoolOp::And, false) => Bool(false),
                (BoolOp::Or, true) => Bool(true),
                _ => match as_bool(r) {
                    Ok(b) => Bool(b),
                    Err(e) => e,
                },
            }
        }
        ConditionExpr::Not(inner) => match as_bool(oracle(inner, ctx)) {
            Ok(b) => Bool(!b),
            Err(e) => e,
        },
        ConditionExpr::Parenthesized(inner) => oracle(inner, ctx),
    }
}

/// Oracle result at the top level, where the condition must be boolean.
pub fn oracle_condition(expr: &ConditionExpr, ctx: &AssertionContext) -> OracleValue {
    match oracle(expr, ctx) {
        OracleValue::Str(_) => OracleValue::TypeError,
        other => other,
    }
}

pub fn agrees(actual: &Result<bool, ConditionError>, expected: &OracleValue) -> bool {
    match (actual, expected) {
        (Ok(a), OracleValue::Bool(b)) => a == b,
        (Err(ConditionError::MissingAttribute(a)), OracleValue::Missing(b)) => a == b,
        (Err(ConditionError::TypeMismatch(_)), OracleValue::TypeError) => true,
        _ => false,
    }
}
