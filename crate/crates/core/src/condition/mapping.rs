use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::ConditionExpr;
use super::eval::AssertionContext;
use super::{parse_condition, ConditionError};
use crate::token::JwtClaims;

pub const SUBJECT_TARGET: &str = "google.subject";

/// Projection of asserted attributes onto target attribute names. Each
/// source is an attribute path or a string literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeMapping {
    entries: Vec<(String, ConditionExpr)>,
}

impl AttributeMapping {
    pub fn new(entries: Vec<(String, ConditionExpr)>) -> Result<Self, ConditionError> {
        for (i, (target, source)) in entries.iter().enumerate() {
            if target.is_empty() {
                return Err(ConditionError::InvalidMapping("empty target name".into()));
            }
            if entries[..i].iter().any(|(t, _)| t == target) {
                return Err(ConditionError::InvalidMapping(format!(
                    "duplicate target {target}"
                )));
            }
            if !matches!(
                source,
                ConditionExpr::AttributePath(_) | ConditionExpr::StringLiteral(_)
            ) {
                return Err(ConditionError::InvalidMapping(format!(
                    "{target}: only attribute paths and string literals can be mapped"
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Parses each `(target, source)` pair.
    pub fn parse<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, ConditionError> {
        let entries = pairs
            .into_iter()
            .map(|(t, s)| Ok((t.to_owned(), parse_condition(s)?)))
            .collect::<Result<_, ConditionError>>()?;
        Self::new(entries)
    }

    pub fn has_target(&self, target: &str) -> bool {
        self.entries.iter().any(|(t, _)| t == target)
    }

    pub fn entries(&self) -> &[(String, ConditionExpr)] {
        &self.entries
    }

    /// Source strings in entry order, for serialization.
    pub fn to_source_pairs(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .map(|(t, e)| (t.clone(), e.to_string()))
            .collect()
    }
}

pub fn apply_mapping(
    mapping: &AttributeMapping,
    ctx: &AssertionContext,
) -> Result<BTreeMap<String, String>, ConditionError> {
    mapping
        .entries
        .iter()
        .map(|(target, source)| {
            let value = match source {
                ConditionExpr::StringLiteral(s) => s.clone(),
                ConditionExpr::AttributePath(segments) => {
                    let key = segments.join(".");
                    ctx.get(&key)
                        .ok_or(ConditionError::MissingAttribute(key.clone()))?
                        .to_owned()
                }
                _ => unreachable!("validated at construction"),
            };
            Ok((target.clone(), value))
        })
        .collect()
}

/// Exact-match claim conditions, keyed `<issuer-host-and-path>:<claim>`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StringEqualsCondition {
    pub entries: BTreeMap<String, String>,
}

impl StringEqualsCondition {
    pub fn new<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            entries: pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }
}

/// Issuer URL without scheme or trailing slash, the form used as the claim
/// key prefix in trust policies.
pub fn issuer_key_prefix(issuer: &str) -> &str {
    let rest = issuer
        .strip_prefix("https://")
        .or_else(|| issuer.strip_prefix("http://"))
        .unwrap_or(issuer);
    rest.trim_end_matches('/')
}

fn matches_claim(key: &str, expected: &str, claims: &JwtClaims) -> bool {
    let Some((prefix, claim)) = key.rsplit_once(':') else {
        return false;
    };
    if prefix != issuer_key_prefix(&claims.issuer) {
        return false;
    }
    match claim {
        "aud" => claims.audience.iter().any(|a| a == expected),
        other => claims.lookup(other).is_some_and(|v| v == expected),
    }
}

/// True iff every entry names a claim of this issuer whose value equals the
/// required string exactly. Unresolvable keys make the result false.
pub fn eval_string_equals(cond: &StringEqualsCondition, claims: &JwtClaims) -> bool {
    cond.entries
        .iter()
        .all(|(key, expected)| matches_claim(key, expected, claims))
}
