use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::DateTime;

use super::{outcome_matches, Action, Scenario, ScenarioError, ScenarioReport, StepReport};
use crate::clock::{Clock, FakeClock};
use crate::http::{HttpRequest, HttpTransport, LocalNetwork};
use crate::idp::{self, IdpConfig, IdpService, ServiceAccount, TokenRequestSpec, JWKS_PATH};
use crate::legacy::{self, LegacyDecision, LegacyKeystore, SignableRequest, StaticKey, DATE_HEADER};
use crate::resource::{self, data_path, presentation_headers};
use crate::sts::{
    self, AuditEntry, AuditOperation, JwksFetcher, JwksSource, NativeCredential,
    OidcProviderRegistration, StsError, StsOptions, StsService, TrustDocument,
};
use crate::token::{JwkSet, SignedJwt};
use crate::workload::{PodReference, TargetDescriptor, WorkloadClient, WorkloadConfig, WorkloadError};

/// Fetches `<issuer>/openid/v1/jwks` by sending `GET /openid/v1/jwks` to a
/// transport route mounted at the issuer URL itself. Issuers with a path
/// component are mounted that way on a [`LocalNetwork`].
pub struct JwksByIssuer {
    transport: Arc<dyn HttpTransport>,
}

impl JwksByIssuer {
    pub fn new(transport: Arc<dyn HttpTransport>) -> Self {
        Self { transport }
    }
}

impl JwksFetcher for JwksByIssuer {
    fn fetch(&self, uri: &str) -> Result<JwkSet, String> {
        let issuer = uri
            .strip_suffix(JWKS_PATH)
            .ok_or_else(|| format!("{uri} is not an issuer JWKS endpoint"))?;
        let resp = self
            .transport
            .send(issuer, HttpRequest::get(JWKS_PATH))
            .map_err(|e| e.to_string())?;
        if resp.status != 200 {
            return Err(format!("{uri} returned {}", resp.status));
        }
        resp.parse().map_err(|e| format!("{uri}: {e}"))
    }
}

fn sts_url(service: &str) -> String {
    format!("http://sts.{service}.local")
}

fn resource_url(service: &str) -> String {
    format!("http://resource.{service}.local")
}

fn sts_outcome(e: &StsError) -> String {
    format!("error:{}", e.qualified_kind())
}

fn workload_outcome(e: &WorkloadError) -> String {
    match e {
        WorkloadError::ExchangeFailed { kind, .. } => format!("error:ExchangeFailed:{kind}"),
        other => format!("error:{}", other.kind()),
    }
}

fn document_text(doc: &serde_yaml::Value) -> Result<String, String> {
    match doc {
        serde_yaml::Value::String(s) => Ok(s.clone()),
        other => serde_yaml::to_string(other).map_err(|e| e.to_string()),
    }
}

fn audit_line(start: i64, e: &AuditEntry) -> String {
    let op = match e.operation {
        AuditOperation::AssumeRole => "assume_role",
        AuditOperation::TokenExchange => "token_exchange",
        AuditOperation::Impersonate => "impersonate",
        AuditOperation::CheckAccess => "check_access",
    };
    let mut line = format!(
        "t+{} {op} target={} subject={} {}",
        e.at - start,
        e.target,
        e.subject.as_deref().unwrap_or("-"),
        if e.allowed { "allow" } else { "deny" }
    );
    if let Some(err) = &e.error {
        line.push(' ');
        line.push_str(err);
    }
    line
}

struct Pod {
    idp: String,
    uid: String,
}

struct SignedRequest {
    request: SignableRequest,
    authorization: String,
}

struct World {
    start: i64,
    clock: Arc<FakeClock>,
    net: Arc<LocalNetwork>,
    idps: BTreeMap<String, Arc<IdpService>>,
    pods: BTreeMap<String, Pod>,
    services: BTreeMap<String, Arc<StsService>>,
    keystore: LegacyKeystore,
    workloads: BTreeMap<String, WorkloadClient>,
    tokens: BTreeMap<String, SignedJwt>,
    credentials: BTreeMap<String, NativeCredential>,
    federated: BTreeMap<String, String>,
    signatures: BTreeMap<String, SignedRequest>,
}

type Outcome = (String, Option<String>);

impl World {
    fn build(s: &Scenario) -> Result<Self, String> {
        let setup = &s.setup;
        let clock = Arc::new(FakeClock::new(s.start));
        let net = Arc::new(LocalNetwork::new());
        let mut world = World {
            start: s.start,
            clock: clock.clone(),
            net: net.clone(),
            idps: BTreeMap::new(),
            pods: BTreeMap::new(),
            services: BTreeMap::new(),
            keystore: LegacyKeystore::new(),
            workloads: BTreeMap::new(),
            tokens: BTreeMap::new(),
            credentials: BTreeMap::new(),
            federated: BTreeMap::new(),
            signatures: BTreeMap::new(),
        };

        for (i, spec) in setup.idps.iter().enumerate() {
            let mut cfg = IdpConfig::new(&spec.issuer);
            if let Some(alg) = spec.algorithm {
                cfg.algorithm = alg;
            }
            cfg.aws_account_id = spec.aws_account_id.clone();
            cfg.seed = s.seed.wrapping_add(i as u64 + 1);
            let svc = Arc::new(
                IdpService::new(cfg, s.start).map_err(|e| format!("idp {}: {e}", spec.name))?,
            );
            for b in &spec.roles {
                let sa = ServiceAccount::new(&b.namespace, &b.serviceaccount)
                    .map_err(|e| format!("idp {}: {e}", spec.name))?;
                svc.bind_role(sa, &b.role);
            }
            let (handler_idp, c) = (svc.clone(), clock.clone());
            net.mount(
                &spec.issuer,
                Arc::new(move |r| idp::api::handle(&handler_idp, &r, c.now())),
            );
            world.idps.insert(spec.name.clone(), svc);
        }
        for p in &setup.pods {
            world
                .deploy_pod(&p.name, &p.idp, &p.namespace, &p.serviceaccount)
                .map_err(|e| format!("pod {}: {e}", p.name))?;
        }

        let fetcher: Arc<dyn JwksFetcher> = Arc::new(JwksByIssuer::new(net.clone()));
        for (i, spec) in setup.services.iter().enumerate() {
            let mut options = StsOptions {
                seed: s.seed.wrapping_add(1000 + i as u64),
                ..StsOptions::default()
            };
            if let Some(max) = spec.max_credential_lifetime {
                options.max_credential_lifetime = max;
            }
            let svc = Arc::new(StsService::new(options, fetcher.clone()));
            let (a, c) = (svc.clone(), clock.clone());
            net.mount(
                &sts_url(&spec.name),
                Arc::new(move |r| sts::api::handle(&a, &r, c.now())),
            );
            let (b, c) = (svc.clone(), clock.clone());
            net.mount(
                &resource_url(&spec.name),
                Arc::new(move |r| resource::handle(&r, &|p, l| b.check_access(p, l, c.now()))),
            );
            world.services.insert(spec.name.clone(), svc);
        }

        for p in &setup.providers {
            let idp = &world.idps[&p.idp];
            let mut reg = OidcProviderRegistration::new(
                idp.issuer(),
                p.audiences.first().cloned().unwrap_or_default(),
                JwksSource::Uri(idp.config().jwks_uri()),
            );
            reg.audiences = p.audiences.clone();
            if let Some(id) = &p.provider_id {
                reg.provider_id = id.clone();
            }
            world.services[&p.service]
                .register_provider(reg, s.start)
                .map_err(|e| format!("provider for {}: {e}", p.idp))?;
        }
        for t in &setup.trust {
            world
                .apply_trust(&t.service, t.pool.as_deref(), &t.document)
                .map_err(|e| format!("trust document for {}: {e}", t.service))?;
        }
        for k in &setup.static_keys {
            world
                .keystore
                .insert(StaticKey {
                    access_key_id: k.access_key_id.clone(),
                    secret_key: k.secret_key.clone(),
                    created_at: s.start,
                    permissions: k.permissions.clone(),
                })
                .map_err(|e| e.to_string())?;
        }
        for w in &setup.workloads {
            let pod = &world.pods[&w.pod];
            let identity = world.idps[&pod.idp]
                .pod(&pod.uid)
                .ok_or_else(|| format!("pod {} vanished", w.pod))?;
            let config = WorkloadConfig {
                pod: PodReference {
                    namespace: identity.service_account.namespace.clone(),
                    serviceaccount: identity.service_account.name.clone(),
                    pod_uid: identity.pod_uid.clone(),
                },
                idp_endpoint: world.idps[&pod.idp].issuer().to_owned(),
                target: TargetDescriptor {
                    sts_endpoint: sts_url(&w.service),
                    audience: w.audience.clone(),
                    flow: w.flow.clone(),
                },
                token_ttl: w.token_ttl,
                refresh_margin: w
                    .refresh_margin
                    .unwrap_or(crate::workload::DEFAULT_REFRESH_MARGIN),
                resource_endpoint: Some(resource_url(&w.service)),
            };
            let client = WorkloadClient::new(config, net.clone(), clock.clone())
                .map_err(|e| format!("workload {}: {e}", w.name))?;
            world.workloads.insert(w.name.clone(), client);
        }
        Ok(world)
    }

    fn deploy_pod(
        &mut self,
        name: &str,
        idp: &str,
        namespace: &str,
        serviceaccount: &str,
    ) -> Result<(), String> {
        let sa = ServiceAccount::new(namespace, serviceaccount).map_err(|e| e.to_string())?;
        let pod = self.idps[idp]
            .register_pod(sa, name)
            .map_err(|e| e.to_string())?;
        self.pods.insert(
            name.to_owned(),
            Pod {
                idp: idp.to_owned(),
                uid: pod.pod_uid,
            },
        );
        Ok(())
    }

    fn apply_trust(
        &self,
        service: &str,
        pool: Option<&str>,
        doc: &serde_yaml::Value,
    ) -> Result<String, StsError> {
        let text = document_text(doc).map_err(StsError::InvalidConfig)?;
        let parsed = TrustDocument::parse(&text, pool)?;
        self.services[service].apply_document(parsed, self.clock.now())
    }

    fn missing(kind: &str, name: &str) -> Outcome {
        (
            "error:MissingValue".into(),
            Some(format!("no {kind} saved as {name}; an earlier step failed")),
        )
    }

    fn step(&mut self, action: &Action) -> Outcome {
        let now = self.clock.now();
        match action {
            Action::AdvanceClock { seconds } => {
                self.clock.advance(*seconds);
                ("ok".into(), None)
            }
            Action::IssueToken {
                pod,
                audience,
                ttl,
                save,
            } => {
                let p = &self.pods[pod];
                let spec = TokenRequestSpec {
                    audience: audience.clone(),
                    expiration_seconds: *ttl,
                };
                match self.idps[&p.idp].issue_bound_token(&p.uid, &spec, now) {
                    Ok(token) => {
                        if let Some(name) = save {
                            self.tokens.insert(name.clone(), token);
                        }
                        ("ok".into(), None)
                    }
                    Err(e) => (format!("error:{}", e.kind()), Some(e.to_string())),
                }
            }
            Action::AssumeRole {
                service,
                token,
                role,
                save,
            } => {
                let Some(jwt) = self.tokens.get(token) else {
                    return Self::missing("token", token);
                };
                match self.services[service].assume_role_with_web_identity(jwt, role, now) {
                    Ok(cred) => {
                        let detail = format!("credential lifetime {}s", cred.lifetime());
                        if let Some(name) = save {
                            self.credentials.insert(name.clone(), cred);
                        }
                        ("ok".into(), Some(detail))
                    }
                    Err(e) => (sts_outcome(&e), Some(e.to_string())),
                }
            }
            Action::TokenExchange {
                service,
                token,
                pool,
                provider,
                save,
            } => {
                let Some(jwt) = self.tokens.get(token) else {
                    return Self::missing("token", token);
                };
                match self.services[service].exchange_federated_token(jwt, pool, provider, now) {
                    Ok(fed) => {
                        let detail = format!("subject {}", fed.subject);
                        if let Some(name) = save {
                            self.federated.insert(name.clone(), fed.access_token);
                        }
                        ("ok".into(), Some(detail))
                    }
                    Err(e) => (sts_outcome(&e), Some(e.to_string())),
                }
            }
            Action::Impersonate {
                service,
                federated_token,
                account,
                save,
            } => {
                let Some(fed) = self.federated.get(federated_token) else {
                    return Self::missing("federated token", federated_token);
                };
                match self.services[service].impersonate_service_account(fed, account, now) {
                    Ok(cred) => {
                        let detail = format!("credential lifetime {}s", cred.lifetime());
                        if let Some(name) = save {
                            self.credentials.insert(name.clone(), cred);
                        }
                        ("ok".into(), Some(detail))
                    }
                    Err(e) => (sts_outcome(&e), Some(e.to_string())),
                }
            }
            Action::Access {
                service,
                credential,
                resource,
            } => {
                let Some(cred) = self.credentials.get(credential) else {
                    return Self::missing("credential", credential);
                };
                let req = presentation_headers(HttpRequest::get(data_path(resource)), &cred.presentation());
                match self.net.send(&resource_url(service), req) {
                    Ok(r) if r.status == 200 => ("allow".into(), None),
                    Ok(r) if r.status == 403 => ("deny".into(), None),
                    Ok(r) => (format!("error:Status{}", r.status), None),
                    Err(e) => ("error:Transport".into(), Some(e.to_string())),
                }
            }
            Action::RevokeProvider { service, provider } => {
                match self.services[service].revoke_provider(provider) {
                    Ok(()) => ("ok".into(), None),
                    Err(e) => (sts_outcome(&e), Some(e.to_string())),
                }
            }
            Action::ApplyTrust {
                service,
                pool,
                document,
            } => match self.apply_trust(service, pool.as_deref(), document) {
                Ok(summary) => ("ok".into(), Some(summary)),
                Err(e) => (sts_outcome(&e), Some(e.to_string())),
            },
            Action::RotateIdpKey { idp } => match self.idps[idp].rotate_key(now) {
                Ok(_) => (
                    "ok".into(),
                    self.idps[idp].active_key_id().map(|k| format!("active key {k}")),
                ),
                Err(e) => (format!("error:{}", e.kind()), Some(e.to_string())),
            },
            Action::DeployPod {
                name,
                idp,
                namespace,
                serviceaccount,
            } => match self.deploy_pod(name, idp, namespace, serviceaccount) {
                Ok(()) => ("ok".into(), None),
                Err(e) => ("error:InvalidName".into(), Some(e)),
            },
            Action::DeregisterPod { pod } => {
                let p = &self.pods[pod];
                match self.idps[&p.idp].deregister_pod(&p.uid) {
                    Ok(_) => ("ok".into(), None),
                    Err(e) => (format!("error:{}", e.kind()), Some(e.to_string())),
                }
            }
            Action::WorkloadAccess { workload, resource } => {
                let client = &self.workloads[workload];
                let before = client.exchange_count();
                match client.access_resource(resource) {
                    Ok(d) => {
                        let fresh = client.exchange_count() > before;
                        let detail = if fresh { "new exchange" } else { "cached credential" };
                        (
                            serde_json::to_value(d)
                                .ok()
                                .and_then(|v| v.as_str().map(str::to_owned))
                                .unwrap_or_default(),
                            Some(detail.into()),
                        )
                    }
                    Err(e) => (workload_outcome(&e), Some(e.to_string())),
                }
            }
            Action::LegacySign {
                key,
                region,
                signing_service,
                path,
                save,
            } => {
                let Some(stored) = self.keystore.get(key) else {
                    return ("error:UnknownKey".into(), None);
                };
                let Some(at) = DateTime::from_timestamp(now, 0) else {
                    return ("error:ClockOutOfRange".into(), None);
                };
                let request = SignableRequest::new("GET", path)
                    .header("host", &format!("examplebucket.{signing_service}.amazonaws.com"))
                    .header(DATE_HEADER, &at.format("%Y%m%dT%H%M%SZ").to_string());
                let date = at.format("%Y%m%d").to_string();
                match legacy::sign(&request, &stored, &date, region, signing_service) {
                    Ok(authorization) => {
                        self.signatures.insert(
                            save.clone(),
                            SignedRequest {
                                request,
                                authorization,
                            },
                        );
                        ("ok".into(), None)
                    }
                    Err(e) => (format!("error:{}", e.kind()), Some(e.to_string())),
                }
            }
            Action::LegacyVerify { signature } => {
                let signed = &self.signatures[signature];
                let age = now - self.start;
                match legacy::verify(&signed.request, &signed.authorization, &self.keystore, now) {
                    LegacyDecision::Accept => ("accept".into(), Some(format!("signature age {age}s"))),
                    LegacyDecision::Reject => ("reject".into(), None),
                }
            }
        }
    }
}

pub(super) fn run(s: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    let mut world =
        World::build(s).map_err(|e| ScenarioError::Malformed(format!("{}: setup: {e}", s.name)))?;
    let mut steps = Vec::with_capacity(s.steps.len());
    for (index, step) in s.steps.iter().enumerate() {
        let at = world.clock.now() - world.start;
        let (actual, detail) = world.step(&step.action);
        let expected = step.expect.clone().unwrap_or_else(|| "ok".into());
        steps.push(StepReport {
            index,
            action: step.action.name().into(),
            at,
            passed: outcome_matches(&expected, &actual),
            expected,
            actual,
            detail,
        });
    }
    let audit = world
        .services
        .iter()
        .map(|(name, svc)| {
            let lines = svc
                .audit_log()
                .iter()
                .map(|e| audit_line(world.start, e))
                .collect();
            (name.clone(), lines)
        })
        .collect();
    Ok(ScenarioReport {
        name: s.name.clone(),
        description: s.description.trim().to_owned(),
        seed: s.seed,
        passed: steps.iter().all(|r| r.passed),
        steps,
        audit,
    })
}
