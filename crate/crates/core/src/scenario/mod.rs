//! Scripted end-to-end runs.
//!
//! A scenario is a YAML document: a `setup` block declaring issuers, pods,
//! token services, trust documents, static keys and workload clients, then
//! an ordered list of `steps`, each with the outcome it must produce. Every
//! run builds a fresh in-process world on a fake clock, so runs with the
//! same definition and seed produce the same report.
//!
//! Outcomes are written as `ok`, `allow`, `deny`, `accept`, `reject` or
//! `error:<Kind>[:<Cause>]`. An expected error matches any actual error
//! it is a prefix of, so `error:VerificationFailed` also matches
//! `error:VerificationFailed:Expired`.

mod world;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::token::Algorithm;
use crate::workload::FlowKind;

pub use world::JwksByIssuer;

/// 2025-07-27T00:00:00Z.
pub const DEFAULT_START: i64 = 1_753_574_400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("ScenarioMalformed: {0}")]
    Malformed(String),
    #[error("no built-in scenario named {0}")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: i64,
    #[serde(default)]
    pub setup: Setup,
    pub steps: Vec<Step>,
}

fn default_start() -> i64 {
    DEFAULT_START
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setup {
    #[serde(default)]
    pub idps: Vec<IdpSetup>,
    #[serde(default)]
    pub pods: Vec<PodSetup>,
    #[serde(default)]
    pub services: Vec<ServiceSetup>,
    #[serde(default)]
    pub providers: Vec<ProviderSetup>,
    #[serde(default)]
    pub trust: Vec<TrustSetup>,
    #[serde(default)]
    pub static_keys: Vec<StaticKeySetup>,
    #[serde(default)]
    pub workloads: Vec<WorkloadSetup>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdpSetup {
    pub name: String,
    pub issuer: String,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub aws_account_id: Option<String>,
    #[serde(default)]
    pub roles: Vec<RoleBinding>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleBinding {
    pub namespace: String,
    pub serviceaccount: String,
    pub role: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodSetup {
    pub name: String,
    pub idp: String,
    pub namespace: String,
    pub serviceaccount: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSetup {
    pub name: String,
    #[serde(default)]
    pub max_credential_lifetime: Option<i64>,
}

/// Registers `idp` as an OIDC provider of `service`, keys fetched from the
/// issuer's JWKS endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSetup {
    pub service: String,
    pub idp: String,
    pub audiences: Vec<String>,
    #[serde(default)]
    pub provider_id: Option<String>,
}

/// Any document `trust apply` accepts, inline as YAML or as a string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustSetup {
    pub service: String,
    #[serde(default)]
    pub pool: Option<String>,
    pub document: serde_yaml::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticKeySetup {
    pub access_key_id: String,
    pub secret_key: String,
    #[serde(default)]
    pub permissions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSetup {
    pub name: String,
    pub pod: String,
    pub service: String,
    pub audience: String,
    pub flow: FlowKind,
    #[serde(default)]
    pub token_ttl: Option<i64>,
    #[serde(default)]
    pub refresh_margin: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step {
    #[serde(flatten)]
    pub action: Action,
    /// Required on every step except clock moves.
    #[serde(default)]
    pub expect: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    AdvanceClock {
        seconds: i64,
    },
    IssueToken {
        pod: String,
        audience: String,
        #[serde(default)]
        ttl: Option<i64>,
        #[serde(default)]
        save: Option<String>,
    },
    AssumeRole {
        service: String,
        token: String,
        role: String,
        #[serde(default)]
        save: Option<String>,
    },
    TokenExchange {
        service: String,
        token: String,
        pool: String,
        provider: String,
        #[serde(default)]
        save: Option<String>,
    },
    Impersonate {
        service: String,
        federated_token: String,
        account: String,
        #[serde(default)]
        save: Option<String>,
    },
    /// `GET /data/<resource>` at the service's mock resource server.
    Access {
        service: String,
        credential: String,
        resource: String,
    },
    RevokeProvider {
        service: String,
        provider: String,
    },
    ApplyTrust {
        service: String,
        #[serde(default)]
        pool: Option<String>,
        document: serde_yaml::Value,
    },
    RotateIdpKey {
        idp: String,
    },
    DeployPod {
        name: String,
        idp: String,
        namespace: String,
        serviceaccount: String,
    },
    DeregisterPod {
        pod: String,
    },
    /// Runs the workload client end to end against the resource server.
    WorkloadAccess {
        workload: String,
        resource: String,
    },
    LegacySign {
        key: String,
        #[serde(default = "default_region")]
        region: String,
        #[serde(default = "default_signing_service")]
        signing_service: String,
        #[serde(default = "default_path")]
        path: String,
        save: String,
    },
    LegacyVerify {
        signature: String,
    },
}

fn default_region() -> String {
    "us-east-1".into()
}
fn default_signing_service() -> String {
    "s3".into()
}
fn default_path() -> String {
    "/".into()
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::AdvanceClock { .. } => "advance_clock",
            Action::IssueToken { .. } => "issue_token",
            Action::AssumeRole { .. } => "assume_role",
            Action::TokenExchange { .. } => "token_exchange",
            Action::Impersonate { .. } => "impersonate",
            Action::Access { .. } => "access",
            Action::RevokeProvider { .. } => "revoke_provider",
            Action::ApplyTrust { .. } => "apply_trust",
            Action::RotateIdpKey { .. } => "rotate_idp_key",
            Action::DeployPod { .. } => "deploy_pod",
            Action::DeregisterPod { .. } => "deregister_pod",
            Action::WorkloadAccess { .. } => "workload_access",
            Action::LegacySign { .. } => "legacy_sign",
            Action::LegacyVerify { .. } => "legacy_verify",
        }
    }
}

/// Whether an actual outcome satisfies an expected one.
pub fn outcome_matches(expected: &str, actual: &str) -> bool {
    expected == actual
        || (expected.starts_with("error:")
            && actual.len() > expected.len()
            && actual.starts_with(expected)
            && actual.as_bytes()[expected.len()] == b':')
}

fn valid_expectation(e: &str) -> bool {
    matches!(e, "ok" | "allow" | "deny" | "accept" | "reject")
        || e.strip_prefix("error:").is_some_and(|k| !k.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub action: String,
    /// Fake-clock seconds since the scenario start.
    pub at: i64,
    pub expected: String,
    pub actual: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub passed: bool,
    pub steps: Vec<StepReport>,
    /// Token-service audit entries, one line each, per service.
    pub audit: Vec<(String, Vec<String>)>,
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        writeln!(f, "{verdict} {}", self.name)?;
        for s in &self.steps {
            let mark = if s.passed { "ok  " } else { "MISS" };
            write!(
                f,
                "  {mark} #{:<2} t+{:<9} {:<16} expected {:<40} got {}",
                s.index, s.at, s.action, s.expected, s.actual
            )?;
            match &s.detail {
                Some(d) if !s.passed => writeln!(f, " ({d})")?,
                _ => writeln!(f)?,
            }
        }
        Ok(())
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Self =
            serde_yaml::from_str(text).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Checks references between setup entries and steps.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Malformed(format!("{}: {m}", self.name)));
        if self.name.is_empty() {
            return Err(ScenarioError::Malformed("scenario has no name".into()));
        }
        if self.steps.is_empty() {
            return bad("no steps".into());
        }
        let setup = &self.setup;
        let idps: Vec<&str> = setup.idps.iter().map(|i| i.name.as_str()).collect();
        let services: Vec<&str> = setup.services.iter().map(|s| s.name.as_str()).collect();
        let mut pods: Vec<&str> = setup.pods.iter().map(|p| p.name.as_str()).collect();
        let workloads: Vec<&str> = setup.workloads.iter().map(|w| w.name.as_str()).collect();
        let keys: Vec<&str> = setup
            .static_keys
            .iter()
            .map(|k| k.access_key_id.as_str())
            .collect();
        for list in [&idps, &services, &pods, &workloads, &keys] {
            let mut sorted = list.clone();
            sorted.sort_unstable();
            if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                return bad(format!("duplicate name {}", w[0]));
            }
        }
        let need = |kind: &str, list: &[&str], name: &str| -> Result<(), ScenarioError> {
            if list.contains(&name) {
                Ok(())
            } else {
                Err(ScenarioError::Malformed(format!(
                    "{}: unknown {kind} {name}",
                    self.name
                )))
            }
        };
        for p in &setup.pods {
            need("idp", &idps, &p.idp)?;
        }
        for p in &setup.providers {
            need("service", &services, &p.service)?;
            need("idp", &idps, &p.idp)?;
        }
        for t in &setup.trust {
            need("service", &services, &t.service)?;
        }
        for w in &setup.workloads {
            need("pod", &pods, &w.pod)?;
            need("service", &services, &w.service)?;
        }

        // Saved values must be produced before they are used.
        let mut tokens: Vec<&str> = Vec::new();
        let mut credentials: Vec<&str> = Vec::new();
        let mut federated: Vec<&str> = Vec::new();
        let mut signatures: Vec<&str> = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            let at = |m: String| ScenarioError::Malformed(format!("{} step {i}: {m}", self.name));
            match (&step.action, &step.expect) {
                (Action::AdvanceClock { seconds }, e) => {
                    if *seconds < 0 {
                        return Err(at("the clock only moves forward".into()));
                    }
                    if e.as_deref().is_some_and(|e| e != "ok") {
                        return Err(at("a clock move can only expect ok".into()));
                    }
                }
                (_, None) => return Err(at("missing expect".into())),
                (_, Some(e)) if !valid_expectation(e) => {
                    return Err(at(format!("unrecognized expectation {e:?}")))
                }
                _ => {}
            }
            let in_list = |kind: &str, list: &[&str], name: &str| {
                if list.contains(&name) {
                    Ok(())
                } else {
                    Err(at(format!("unknown {kind} {name}")))
                }
            };
            match &step.action {
                Action::AdvanceClock { .. } => {}
                Action::IssueToken { pod, save, .. } => {
                    in_list("pod", &pods, pod)?;
                    tokens.extend(save.as_deref());
                }
                Action::AssumeRole {
                    service,
                    token,
                    save,
                    ..
                } => {
                    in_list("service", &services, service)?;
                    in_list("token", &tokens, token)?;
                    credentials.extend(save.as_deref());
                }
                Action::TokenExchange {
                    service,
                    token,
                    save,
                    ..
                } => {
                    in_list("service", &services, service)?;
                    in_list("token", &tokens, token)?;
                    federated.extend(save.as_deref());
                }
                Action::Impersonate {
                    service,
                    federated_token,
                    save,
                    ..
                } => {
                    in_list("service", &services, service)?;
                    in_list("federated token", &federated, federated_token)?;
                    credentials.extend(save.as_deref());
                }
                Action::Access {
                    service,
                    credential,
                    ..
                } => {
                    in_list("service", &services, service)?;
                    in_list("credential", &credentials, credential)?;
                }
                Action::RevokeProvider { service, .. } | Action::ApplyTrust { service, .. } => {
                    in_list("service", &services, service)?;
                }
                Action::RotateIdpKey { idp } => in_list("idp", &idps, idp)?,
                Action::DeployPod { name, idp, .. } => {
                    in_list("idp", &idps, idp)?;
                    if pods.contains(&name.as_str()) {
                        return Err(at(format!("pod {name} already exists")));
                    }
                    pods.push(name);
                }
                Action::DeregisterPod { pod } => in_list("pod", &pods, pod)?,
                Action::WorkloadAccess { workload, .. } => {
                    in_list("workload", &workloads, workload)?
                }
                Action::LegacySign { key, save, .. } => {
                    in_list("static key", &keys, key)?;
                    signatures.push(save);
                }
                Action::LegacyVerify { signature } => {
                    in_list("signature", &signatures, signature)?
                }
            }
        }
        Ok(())
    }
}

/// Runs one scenario in a fresh world.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    scenario.validate()?;
    world::run(scenario)
}

/// Runs scenarios on separate threads; each has its own world.
pub fn run_all(scenarios: &[Scenario]) -> Vec<Result<ScenarioReport, ScenarioError>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| s.spawn(move || run_scenario(sc)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

const BUILTIN_SOURCES: &[(&str, &str)] = &[
    (
        "happy-path-gcp-to-aws",
        include_str!("../../scenarios/happy-path-gcp-to-aws.yaml"),
    ),
    (
        "happy-path-aws-to-gcp",
        include_str!("../../scenarios/happy-path-aws-to-gcp.yaml"),
    ),
    (
        "confused-deputy",
        include_str!("../../scenarios/confused-deputy.yaml"),
    ),
    (
        "expired-token",
        include_str!("../../scenarios/expired-token.yaml"),
    ),
    (
        "replay-after-expiry",
        include_str!("../../scenarios/replay-after-expiry.yaml"),
    ),
    (
        "audience-mismatch",
        include_str!("../../scenarios/audience-mismatch.yaml"),
    ),
    (
        "provider-revocation",
        include_str!("../../scenarios/provider-revocation.yaml"),
    ),
    (
        "stolen-static-key",
        include_str!("../../scenarios/stolen-static-key.yaml"),
    ),
    (
        "cicd-pipeline",
        include_str!("../../scenarios/cicd-pipeline.yaml"),
    ),
    (
        "key-rotation",
        include_str!("../../scenarios/key-rotation.yaml"),
    ),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN_SOURCES.iter().map(|(n, _)| *n).collect()
}

/// Parses every built-in; a parse failure is a bug in the shipped YAML.
pub fn builtin_scenarios() -> Vec<Scenario> {
    BUILTIN_SOURCES
        .iter()
        .map(|(name, text)| {
            let s = Scenario::parse(text)
                .unwrap_or_else(|e| panic!("built-in scenario {name} is malformed: {e}"));
            assert_eq!(s.name, *name, "built-in scenario name mismatch");
            s
        })
        .collect()
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ScenarioError::UnknownScenario(name.to_owned()))
}
