//! Comparative risk and operational-complexity model.
//!
//! `R_legacy = n_keys * t_long * i_blast` and `R_wif = n_auths * t_short *
//! i_scoped`, both in relative units. The blast-radius indices are free
//! weights with illustrative defaults; only ratios between scores mean
//! anything.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Julian year.
pub const YEAR_SECS: f64 = 365.25 * 86_400.0;
pub const HOUR_SECS: f64 = 3600.0;
pub const DEFAULT_I_BLAST: f64 = 10.0;
pub const DEFAULT_I_SCOPED: f64 = 1.0;
pub const UNITS: &str = "relative units";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("parameter {name} must be finite and non-negative, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("cannot read parameters: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskParameters {
    pub n_keys: f64,
    /// Mean static-credential lifetime, seconds.
    pub t_long: f64,
    pub i_blast: f64,
    pub n_auths: f64,
    /// Mean federated token lifetime, seconds.
    pub t_short: f64,
    pub i_scoped: f64,
    pub n_idp: f64,
}

impl Default for RiskParameters {
    /// The demo estate: a thousand static keys replaced by a thousand
    /// hour-long federated sessions behind three identity providers.
    fn default() -> Self {
        Self {
            n_keys: 1000.0,
            t_long: YEAR_SECS,
            i_blast: DEFAULT_I_BLAST,
            n_auths: 1000.0,
            t_short: HOUR_SECS,
            i_scoped: DEFAULT_I_SCOPED,
            n_idp: 3.0,
        }
    }
}

impl RiskParameters {
    pub fn validate(&self) -> Result<(), RiskError> {
        for (name, value) in [
            ("n_keys", self.n_keys),
            ("t_long", self.t_long),
            ("i_blast", self.i_blast),
            ("n_auths", self.n_auths),
            ("t_short", self.t_short),
            ("i_scoped", self.i_scoped),
            ("n_idp", self.n_idp),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(RiskError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// YAML or JSON; missing fields take their defaults.
    pub fn parse(text: &str) -> Result<Self, RiskError> {
        let p: Self = serde_yaml::from_str(text).map_err(|e| RiskError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

pub fn risk_legacy(p: &RiskParameters) -> f64 {
    p.n_keys * p.t_long * p.i_blast
}

pub fn risk_wif(p: &RiskParameters) -> f64 {
    p.n_auths * p.t_short * p.i_scoped
}

/// Coarse lifetime band as used in the comparison table.
pub fn lifetime_band(seconds: f64) -> &'static str {
    if seconds <= HOUR_SECS {
        "Minutes"
    } else if seconds <= 86_400.0 {
        "Hours"
    } else if seconds < 30.0 * 86_400.0 {
        "Days to Weeks"
    } else {
        "Months to Years"
    }
}

fn human_duration(seconds: f64) -> String {
    if seconds >= YEAR_SECS {
        format!("{:.2} y", seconds / YEAR_SECS)
    } else if seconds >= 86_400.0 {
        format!("{:.1} d", seconds / 86_400.0)
    } else if seconds >= HOUR_SECS {
        format!("{:.1} h", seconds / HOUR_SECS)
    } else {
        format!("{:.0} min", seconds / 60.0)
    }
}

fn count(n: f64) -> String {
    if n.fract() == 0.0 {
        format!("{n:.0}")
    } else {
        format!("{n}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub factor: String,
    pub legacy: String,
    pub legacy_value: String,
    pub federated: String,
    pub federated_value: String,
    pub mechanism: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub parameters: RiskParameters,
    pub rows: Vec<ReportRow>,
    pub r_legacy: f64,
    pub r_wif: f64,
    /// `r_legacy / r_wif`, absent when `r_wif` is zero.
    pub ratio: Option<f64>,
    pub units: String,
    pub lower_risk: String,
    pub notes: Vec<String>,
}

pub fn complexity_report(p: &RiskParameters) -> ComplexityReport {
    let r_legacy = risk_legacy(p);
    let r_wif = risk_wif(p);
    let row = |factor: &str, legacy: &str, lv: String, federated: &str, fv: String, mech: &str| {
        ReportRow {
            factor: factor.into(),
            legacy: legacy.into(),
            legacy_value: lv,
            federated: federated.into(),
            federated_value: fv,
            mechanism: mech.into(),
        }
    };
    let blast = |i: f64, other: f64, high: &str, low: &str| {
        if i > other {
            high.to_owned()
        } else {
            low.to_owned()
        }
    };
    let rows = vec![
        row(
            "Credential Lifetime",
            lifetime_band(p.t_long),
            human_duration(p.t_long),
            lifetime_band(p.t_short),
            human_duration(p.t_short),
            "OIDC Token Expiration (exp claim)",
        ),
        row(
            "Blast Radius",
            &blast(p.i_blast, p.i_scoped, "High (Broad Permissions)", "Low (Scoped)"),
            format!("i = {}", count(p.i_blast)),
            &blast(p.i_scoped, p.i_blast, "High (Broad Permissions)", "Low (Scoped)"),
            format!("i = {}", count(p.i_scoped)),
            "Token Audience Scoping (aud claim)",
        ),
        row(
            "Static Secrets",
            if p.n_keys > 0.0 { "High" } else { "Zero" },
            count(p.n_keys),
            "Zero",
            "0".into(),
            "On-Demand Credential Exchange",
        ),
        row(
            "Operational Complexity",
            "Linear (O(N_keys))",
            format!("N_keys = {}", count(p.n_keys)),
            "Near-Constant (O(N_IdP))",
            format!("N_IdP = {}", count(p.n_idp)),
            "Centralized Trust Policy",
        ),
    ];
    let lower_risk = if r_wif < r_legacy {
        "federated"
    } else if r_legacy < r_wif {
        "legacy"
    } else {
        "equal"
    };
    ComplexityReport {
        parameters: p.clone(),
        rows,
        r_legacy,
        r_wif,
        ratio: (r_wif > 0.0).then(|| r_legacy / r_wif),
        units: UNITS.into(),
        lower_risk: lower_risk.into(),
        notes: vec![
            "Scores are proportional, with the constant set to 1; compare them, do not read them as probabilities.".into(),
            "i_blast and i_scoped are illustrative weights, not measured quantities.".into(),
        ],
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let headers = ["Risk Factor", "Legacy Model", "Federated Model", "Mechanism of Control"];
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.factor.clone(),
                    format!("{} [{}]", r.legacy, r.legacy_value),
                    format!("{} [{}]", r.federated, r.federated_value),
                    r.mechanism.clone(),
                ]
            })
            .collect();
        let mut widths = headers.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cols: [&str; 4]| -> fmt::Result {
            for (i, c) in cols.iter().enumerate() {
                if i > 0 {
                    f.write_str(" | ")?;
                }
                write!(f, "{c:<w$}", w = widths[i])?;
            }
            writeln!(f)
        };
        line(f, headers)?;
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(f, [&rule[0], &rule[1], &rule[2], &rule[3]])?;
        for row in &cells {
            line(f, [&row[0], &row[1], &row[2], &row[3]])?;
        }
        writeln!(f)?;
        writeln!(f, "R_legacy = {:.6e} {}", self.r_legacy, self.units)?;
        writeln!(f, "R_wif    = {:.6e} {}", self.r_wif, self.units)?;
        match self.ratio {
            Some(r) => writeln!(f, "R_legacy / R_wif = {r:.2}")?,
            None => writeln!(f, "R_legacy / R_wif = undefined (R_wif = 0)")?,
        }
        writeln!(f, "lower risk: {}", self.lower_risk)?;
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}
