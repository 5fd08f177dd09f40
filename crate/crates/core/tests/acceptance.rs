//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are printed even when everything passes.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fedauth_core::clock::{Clock, FakeClock};
use fedauth_core::condition::{apply_mapping, eval_condition, parse_condition, AssertionContext};
use fedauth_core::http::{HttpResponse, LocalNetwork};
use fedauth_core::idp::{
    self, IdpConfig, IdpService, ServiceAccount, TokenRequestSpec, DEFAULT_MOUNT_PATH,
};
use fedauth_core::legacy::{self, LegacyDecision, LegacyKeystore, SignableRequest, StaticKey};
use fedauth_core::risk::{risk_legacy, risk_wif, RiskParameters, YEAR_SECS};
use fedauth_core::scenario::{builtin_scenarios, run_all};
use fedauth_core::sts::{
    self, default_pool_audience, Decision, JwksSource, OidcProviderRegistration, ProviderConfig,
    StsError, StsOptions, StsService, TrustPolicy,
};
use fedauth_core::token::TokenError;
use fedauth_core::workload::{
    FlowKind, PodReference, TargetDescriptor, WorkloadClient, WorkloadConfig, WorkloadError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const T0: i64 = 1_753_574_400;
const SKEW: i64 = 30;

/// The trust policy exactly as published, issuer elision included.
const ROLE_TRUST_POLICY: &str = r#"{
  "Version": "2012-10-17",
  "Statement": [
    {
      "Effect": "Allow",
      "Principal": {
        "Federated": "arn:aws:iam::123456789:oidc-provider/container.googleapis.com/..."
      },
      "Action": "sts:AssumeRoleWithWebIdentity",
      "Condition": {
        "StringEquals": {
          "container.googleapis.com/...:sub": "system:serviceaccount:pegasus:pegasus-sa",
          "container.googleapis.com/...:aud": "sts.amazonaws.com"
        }
      }
    }
  ]
}"#;

const POOL_PROVIDERS: &str = r#"
- provider_id: "eks-pegasus-provider"
  aws:
    account_id: "123456789"
  attribute_condition: "assertion.arn.endsWith(':assumed-role/pegasus-iam-role/pegasus-sa')"
  attribute_mapping:
    google.subject: "assertion.arn"
"#;

const PEGASUS_ARN: &str = "arn:aws:sts::123456789:assumed-role/pegasus-iam-role/pegasus-sa";
const GKE_ISSUER: &str = "https://container.googleapis.com/...";
const EKS_ISSUER: &str = "https://oidc.eks.us-east-1.amazonaws.com/id/EXAMPLED539D4633E53DE1B71EXAMPLE";
const SA_EMAIL: &str = "pegasus@pegasus-gcp-project.iam.gserviceaccount.com";

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Issuer with one pegasus pod, and a token service trusting it for the
/// Role trusted by the reference policy.
struct AwsSide {
    idp: Arc<IdpService>,
    pod_uid: String,
    sts: StsService,
}

fn aws_side(seed: u64, policy: &str) -> AwsSide {
    let mut cfg = IdpConfig::new(GKE_ISSUER);
    cfg.seed = seed;
    let idp = Arc::new(IdpService::new(cfg, T0).unwrap());
    let pod = idp
        .register_pod(ServiceAccount::new("pegasus", "pegasus-sa").unwrap(), "pegasus-0")
        .unwrap();
    let sts = StsService::new(
        StsOptions {
            seed,
            ..StsOptions::default()
        },
        Arc::new(sts::NoFetcher),
    );
    sts.register_provider(
        OidcProviderRegistration::new(
            GKE_ISSUER,
            "sts.amazonaws.com",
            JwksSource::Inline(idp.serve_jwks(T0)),
        ),
        T0,
    )
    .unwrap();
    sts.put_trust_policy(TrustPolicy::parse_json(policy, Some("pegasus-role")).unwrap())
        .unwrap();
    AwsSide {
        idp,
        pod_uid: pod.pod_uid,
        sts,
    }
}

/// Projected volume parameters: audience sts.amazonaws.com, 3600 s, projected at
/// /var/run/secrets/tokens/token.
fn projected_token_spec() -> TokenRequestSpec {
    TokenRequestSpec::new("sts.amazonaws.com", 3600)
}

fn criterion_1() -> Result<String, String> {
    let started = Instant::now();
    let side = aws_side(1, ROLE_TRUST_POLICY);
    let projected = side
        .idp
        .project_token(&side.pod_uid, &projected_token_spec(), T0)
        .map_err(|e| e.to_string())?;
    ensure(projected.path == format!("{DEFAULT_MOUNT_PATH}/token"), || {
        format!("token projected at {}", projected.path)
    })?;
    let cred = side
        .sts
        .assume_role_with_web_identity(&projected.token, "pegasus-role", T0)
        .map_err(|e| format!("unmodified reference configuration denied: {e}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;

    // Every one-character edit of either condition value: substitution at
    // each position, deletion at each position and one appended character.
    let values = ["system:serviceaccount:pegasus:pegasus-sa", "sts.amazonaws.com"];
    let mut variants = 0;
    for value in values {
        let chars: Vec<char> = value.chars().collect();
        let mut edits: Vec<String> = Vec::new();
        for i in 0..chars.len() {
            let mut sub = chars.clone();
            sub[i] = if chars[i] == 'x' { 'y' } else { 'x' };
            edits.push(sub.iter().collect());
            let mut del = chars.clone();
            del.remove(i);
            edits.push(del.iter().collect());
        }
        edits.push(format!("{value}x"));
        for edited in edits {
            let policy = ROLE_TRUST_POLICY.replace(&format!("\"{value}\""), &format!("\"{edited}\""));
            side.sts
                .put_trust_policy(TrustPolicy::parse_json(&policy, Some("pegasus-role")).unwrap())
                .unwrap();
            match side
                .sts
                .assume_role_with_web_identity(&projected.token, "pegasus-role", T0)
            {
                Err(StsError::ConditionDenied(_)) => variants += 1,
                other => {
                    return Err(format!("edit {edited:?} of {value:?} gave {other:?}"));
                }
            }
        }
    }
    Ok(format!(
        "credential {}s in {elapsed:?}; {variants} one-character edits all ConditionDenied",
        cred.lifetime()
    ))
}

fn criterion_2() -> Result<String, String> {
    let providers = ProviderConfig::parse_yaml_list(POOL_PROVIDERS, "aws-pool").map_err(|e| e.to_string())?;
    let provider = &providers[0];
    let ctx = |arn: &str| AssertionContext::new().with("arn", arn);
    let holds = |arn: &str| eval_condition(&provider.attribute_condition, &ctx(arn));
    ensure(holds(PEGASUS_ARN) == Ok(true), || "reference ARN rejected".into())?;
    let negatives = [
        "arn:aws:sts::123456789:assumed-role/pegasus-iam-role/other-sa",
        "arn:aws:sts::123456789:assumed-role/other-role/pegasus-sa",
        "arn:aws:sts::123456789:assumed-role/pegasus-iam-role/pegasus-sa-2",
        "arn:aws:sts::123456789:assumed-role/pegasus-iam-role/pegasus-s",
        "arn:aws:sts::123456789:assumed-role/pegasus-iam-role/PEGASUS-SA",
        "arn:aws:sts::123456789:assumed-role:pegasus-iam-role/pegasus-sa",
        "",
    ];
    for n in negatives {
        ensure(holds(n) == Ok(false), || format!("{n:?} accepted"))?;
    }
    // Random prefixes keep the verdict; random suffixes break it.
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let suffix = ":assumed-role/pegasus-iam-role/pegasus-sa";
    let mut checked = negatives.len() + 1;
    for _ in 0..2000 {
        let prefix: String = (0..rng.gen_range(0..40))
            .map(|_| rng.gen_range(b' '..=b'~') as char)
            .collect();
        let tail: String = (0..rng.gen_range(1..4))
            .map(|_| rng.gen_range(b' '..=b'~') as char)
            .collect();
        let positive = format!("{prefix}{suffix}");
        let negative = format!("{positive}{tail}");
        ensure(holds(&positive) == Ok(true), || format!("{positive:?} rejected"))?;
        ensure(holds(&negative) == Ok(negative.ends_with(suffix)), || {
            format!("{negative:?} misjudged")
        })?;
        checked += 2;
    }
    let mapped = apply_mapping(&provider.attribute_mapping, &ctx(PEGASUS_ARN)).map_err(|e| e.to_string())?;
    ensure(
        mapped.get("google.subject").map(String::as_str) == Some(PEGASUS_ARN),
        || format!("mapping produced {mapped:?}"),
    )?;

    // The same document applied at a token service, fed by an EKS-style issuer.
    let mut cfg = IdpConfig::new(EKS_ISSUER);
    cfg.aws_account_id = Some("123456789".into());
    let eks = IdpService::new(cfg, T0).unwrap();
    let sa = ServiceAccount::new("pegasus", "pegasus-sa").unwrap();
    eks.bind_role(sa.clone(), "pegasus-iam-role");
    let pod = eks.register_pod(sa, "pegasus-0").unwrap();
    let gcp = StsService::new(StsOptions::default(), Arc::new(sts::NoFetcher));
    let audience = default_pool_audience("aws-pool", "eks-pegasus-provider");
    let mut reg = OidcProviderRegistration::new(EKS_ISSUER, audience.clone(), JwksSource::Inline(eks.serve_jwks(T0)));
    reg.provider_id = "eks-pegasus-provider".into();
    let mut provider = provider.clone();
    provider.service_account = Some(SA_EMAIL.into());
    gcp.apply_pool("aws-pool", vec![(provider, Some(reg))], T0).map_err(|e| e.to_string())?;
    let jwt = eks
        .issue_bound_token(&pod.pod_uid, &TokenRequestSpec::new(audience, 3600), T0)
        .unwrap();
    let fed = gcp
        .exchange_federated_token(&jwt, "aws-pool", "eks-pegasus-provider", T0)
        .map_err(|e| format!("exchange: {e}"))?;
    ensure(fed.subject == PEGASUS_ARN, || format!("subject {}", fed.subject))?;
    Ok(format!("{checked} ARNs judged correctly; google.subject = {}", fed.subject))
}

fn criterion_3() -> Result<String, String> {
    let side = aws_side(3, ROLE_TRUST_POLICY);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut successes = 0;
    let mut attempts = 0;
    let mut longest = 0;
    while successes < 1000 {
        attempts += 1;
        let issued = T0 + rng.gen_range(0..1_000_000);
        let ttl = rng.gen_range(1..200_000);
        let token = side
            .idp
            .issue_bound_token(&side.pod_uid, &TokenRequestSpec::new("sts.amazonaws.com", ttl), issued)
            .unwrap();
        let effective_ttl = ttl.clamp(600, 86_400);
        let now = issued + rng.gen_range(0..effective_ttl + 2 * SKEW);
        match side.sts.assume_role_with_web_identity(&token, "pegasus-role", now) {
            Ok(cred) => {
                successes += 1;
                let expected = (issued + effective_ttl - now).min(3600);
                ensure(cred.lifetime() <= 3600, || format!("lifetime {}", cred.lifetime()))?;
                ensure(cred.lifetime() == expected && cred.issued_at == now, || {
                    format!("lifetime {} expected {expected}", cred.lifetime())
                })?;
                longest = longest.max(cred.lifetime());
            }
            Err(StsError::VerificationFailed(TokenError::Expired { .. })) => {
                ensure(now >= issued + effective_ttl, || "live token called expired".into())?;
            }
            Err(e) => return Err(format!("unexpected denial: {e}")),
        }
    }
    Ok(format!("{successes} successes of {attempts} attempts; 0 violations; longest {longest}s"))
}

/// Near misses of `target` and unrelated audiences.
fn fuzz_audience(rng: &mut ChaCha20Rng, target: &str) -> String {
    let chars: Vec<char> = target.chars().collect();
    match rng.gen_range(0..6) {
        0 => {
            let mut c = chars.clone();
            let i = rng.gen_range(0..c.len());
            c[i] = rng.gen_range(b'!'..=b'~') as char;
            c.into_iter().collect()
        }
        1 => {
            let mut c = chars.clone();
            c.remove(rng.gen_range(0..c.len()));
            c.into_iter().collect()
        }
        2 => format!("{target}{}", rng.gen_range(b'!'..=b'~') as char),
        3 => target.to_uppercase(),
        4 => format!(" {target}"),
        _ => (0..rng.gen_range(1..30))
            .map(|_| rng.gen_range(b'!'..=b'~') as char)
            .collect(),
    }
}

fn criterion_4() -> Result<String, String> {
    let side = aws_side(4, ROLE_TRUST_POLICY);
    let pool_audience = default_pool_audience("gke-pool", "gke-provider");
    let providers = ProviderConfig::parse_yaml_list(
        "- provider_id: gke-provider\n  attribute_condition: \"assertion.sub == 'system:serviceaccount:pegasus:pegasus-sa'\"\n  attribute_mapping:\n    google.subject: assertion.sub\n",
        "gke-pool",
    )
    .unwrap();
    let gcp = StsService::new(StsOptions::default(), Arc::new(sts::NoFetcher));
    let mut reg = OidcProviderRegistration::new(
        GKE_ISSUER,
        pool_audience.clone(),
        JwksSource::Inline(side.idp.serve_jwks(T0)),
    );
    reg.provider_id = "gke-provider".into();
    gcp.apply_pool("gke-pool", vec![(providers[0].clone(), Some(reg))], T0)
        .unwrap();

    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut attempts = 0;
    let mut denied = 0;
    for i in 0..2000 {
        let (target, role_side) = if i % 2 == 0 {
            ("sts.amazonaws.com", true)
        } else {
            (pool_audience.as_str(), false)
        };
        let mut aud = fuzz_audience(&mut rng, target);
        if aud == target || aud.is_empty() {
            aud.push('!');
        }
        let token = side
            .idp
            .issue_bound_token(&side.pod_uid, &TokenRequestSpec::new(aud.clone(), 3600), T0)
            .unwrap();
        let issued_before = side.sts.credential_count();
        let result = if role_side {
            side.sts
                .assume_role_with_web_identity(&token, "pegasus-role", T0)
                .map(|_| ())
        } else {
            gcp.exchange_federated_token(&token, "gke-pool", "gke-provider", T0)
                .map(|_| ())
        };
        attempts += 1;
        match result {
            Err(StsError::VerificationFailed(TokenError::AudienceMismatch { .. })) => denied += 1,
            other => return Err(format!("audience {aud:?} gave {other:?}")),
        }
        ensure(side.sts.credential_count() == issued_before, || "credential issued".into())?;
    }
    // Each service's own audience is still accepted.
    let good = side
        .idp
        .issue_bound_token(&side.pod_uid, &projected_token_spec(), T0)
        .unwrap();
    side.sts
        .assume_role_with_web_identity(&good, "pegasus-role", T0)
        .map_err(|e| format!("control exchange failed: {e}"))?;
    Ok(format!("{denied}/{attempts} mismatched audiences denied before issuance"))
}

fn criterion_5() -> Result<String, String> {
    let side = aws_side(5, ROLE_TRUST_POLICY);
    let keystore = LegacyKeystore::new();
    let key = StaticKey {
        access_key_id: "AKIDEXAMPLE".into(),
        secret_key: "wJalrXUtnFEMI/K7MDENG+bPxRfiCYEXAMPLEKEY".into(),
        created_at: T0,
        permissions: vec!["s3:*".into()],
    };
    keystore.insert(key.clone()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let cases = 500;
    for _ in 0..cases {
        let issued = T0 + rng.gen_range(0..10_000_000);
        let ttl = rng.gen_range(600..=86_400);
        let token = side
            .idp
            .issue_bound_token(&side.pod_uid, &TokenRequestSpec::new("sts.amazonaws.com", ttl), issued)
            .unwrap();
        let stamp = chrono::DateTime::from_timestamp(issued, 0).unwrap();
        let request = SignableRequest::new("GET", "/pegasus-bucket/data.csv")
            .header("host", "examplebucket.s3.amazonaws.com")
            .header("x-amz-date", &stamp.format("%Y%m%dT%H%M%SZ").to_string());
        let auth = legacy::sign(&request, &key, &stamp.format("%Y%m%d").to_string(), "us-east-1", "s3")
            .unwrap();

        let late = issued + ttl + SKEW + 1;
        let federated_denied = matches!(
            side.sts.assume_role_with_web_identity(&token, "pegasus-role", late),
            Err(StsError::VerificationFailed(TokenError::Expired { .. }))
        );
        let legacy_accepted = legacy::verify(&request, &auth, &keystore, late) == LegacyDecision::Accept;
        ensure(federated_denied && legacy_accepted, || {
            format!("at exp+skew+1 federated denied={federated_denied} legacy accepted={legacy_accepted}")
        })?;
    }
    Ok(format!("{cases}/{cases} ages: federated deny and legacy accept"))
}

fn criterion_6() -> Result<String, String> {
    let scoped = ROLE_TRUST_POLICY.replacen(
        "\"Version\"",
        "\"Scopes\": [\"s3://pegasus-bucket\"],\n  \"Version\"",
        1,
    );
    let side = aws_side(6, &scoped);
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut pre_issued = Vec::new();
    let mut pending = Vec::new();
    let mut now = T0;
    for _ in 0..50 {
        now += rng.gen_range(0..60);
        let spec = TokenRequestSpec::new("sts.amazonaws.com", rng.gen_range(600..7200));
        let token = side.idp.issue_bound_token(&side.pod_uid, &spec, now).unwrap();
        pre_issued.push(
            side.sts
                .assume_role_with_web_identity(&token, "pegasus-role", now)
                .map_err(|e| e.to_string())?,
        );
        pending.push(token);
    }
    let revoked_at = now;
    side.sts
        .revoke_provider("container.googleapis.com/...")
        .map_err(|e| e.to_string())?;
    for _ in 0..50 {
        pending.push(
            side.idp
                .issue_bound_token(&side.pod_uid, &projected_token_spec(), revoked_at)
                .unwrap(),
        );
    }
    for token in &pending {
        match side
            .sts
            .assume_role_with_web_identity(token, "pegasus-role", revoked_at)
        {
            Err(StsError::UnknownProvider(_)) => {}
            other => return Err(format!("post-revocation exchange gave {other:?}")),
        }
    }
    for c in &pre_issued {
        let p = c.presentation();
        let check = |t| side.sts.check_access(&p, "s3://pegasus-bucket", t);
        let live = if revoked_at < c.expires_at { Decision::Allow } else { Decision::Deny };
        ensure(
            check(revoked_at) == live
                && check(c.expires_at - 1) == Decision::Allow
                && check(c.expires_at) == Decision::Deny,
            || format!("credential expiring at {} misjudged", c.expires_at),
        )?;
    }
    let live = pre_issued.iter().filter(|c| c.expires_at > revoked_at).count();
    ensure(live > 0, || "no credential outlived the revocation".into())?;
    Ok(format!(
        "{} exchanges after revocation all UnknownProvider in the same tick; {} pre-issued credentials ({live} still live) valid until exactly expires_at",
        pending.len(),
        pre_issued.len()
    ))
}

fn criterion_7() -> Result<String, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let pairs = 10_000;
    for i in 0..pairs {
        let budget = rng.gen_range(0..7);
        let expr = support::gen_expr(&mut rng, budget);
        let ctx = support::gen_context(&mut rng);
        let actual = eval_condition(&expr, &ctx);
        let expected = support::oracle_condition(&expr, &ctx);
        ensure(support::agrees(&actual, &expected), || {
            format!("pair {i}: {expr} gave {actual:?}, oracle {expected:?}")
        })?;
    }
    let asts = 1000;
    for i in 0..asts {
        let budget = rng.gen_range(0..7);
        let expr = support::gen_expr(&mut rng, budget);
        let printed = expr.to_string();
        let reparsed = parse_condition(&printed).map_err(|e| format!("ast {i}: {printed}: {e}"))?;
        ensure(reparsed == expr && reparsed.to_string() == printed, || {
            format!("ast {i}: {printed} is not a fixpoint")
        })?;
    }
    Ok(format!("{pairs} pairs, 0 disagreements; {asts} ASTs print/parse fixpoint"))
}

fn criterion_8() -> Result<String, String> {
    let p = RiskParameters {
        n_keys: 1000.0,
        t_long: YEAR_SECS,
        i_blast: 1.0,
        n_auths: 1000.0,
        t_short: 3600.0,
        i_scoped: 1.0,
        n_idp: 3.0,
    };
    let ratio = risk_legacy(&p) / risk_wif(&p);
    ensure((ratio - 8766.0).abs() <= 0.5, || format!("ratio {ratio}"))?;

    // Integer parameters small enough for exact f64 products, checked
    // against u128 arithmetic, then scaling on arbitrary reals.
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let cases = 10_000;
    for _ in 0..cases {
        let ints: Vec<u64> = (0..6).map(|_| rng.gen_range(0..1 << 17)).collect();
        let q = RiskParameters {
            n_keys: ints[0] as f64,
            t_long: ints[1] as f64,
            i_blast: ints[2] as f64,
            n_auths: ints[3] as f64,
            t_short: ints[4] as f64,
            i_scoped: ints[5] as f64,
            n_idp: 1.0,
        };
        let exact_legacy = ints[0] as u128 * ints[1] as u128 * ints[2] as u128;
        let exact_wif = ints[3] as u128 * ints[4] as u128 * ints[5] as u128;
        ensure(risk_legacy(&q) == exact_legacy as f64 && risk_wif(&q) == exact_wif as f64, || {
            format!("inexact product for {ints:?}")
        })?;
        let k = 2f64.powi(rng.gen_range(-20..20));
        let mut scaled = q.clone();
        scaled.t_long *= k;
        scaled.i_scoped *= k;
        ensure(
            risk_legacy(&scaled) == k * risk_legacy(&q) && risk_wif(&scaled) == k * risk_wif(&q),
            || format!("scaling by {k} not multiplicative for {ints:?}"),
        )?;
    }
    Ok(format!("R_legacy/R_wif = {ratio} (Julian year); {cases} exact multiplicativity checks"))
}

fn alg1_client(net: &Arc<LocalNetwork>, clock: &Arc<FakeClock>, pod_uid: &str) -> WorkloadClient {
    let config = WorkloadConfig {
        pod: PodReference {
            namespace: "pegasus".into(),
            serviceaccount: "pegasus-sa".into(),
            pod_uid: pod_uid.into(),
        },
        idp_endpoint: "http://idp".into(),
        target: TargetDescriptor {
            sts_endpoint: "http://sts".into(),
            audience: "sts.amazonaws.com".into(),
            flow: FlowKind::AssumeRole {
                role: "pegasus-role".into(),
            },
        },
        token_ttl: Some(3600),
        refresh_margin: 60,
        resource_endpoint: None,
    };
    WorkloadClient::new(config, net.clone(), clock.clone()).unwrap()
}

fn criterion_9() -> Result<String, String> {
    let clock = Arc::new(FakeClock::new(T0));
    let side = Arc::new(aws_side(9, ROLE_TRUST_POLICY));
    let sts_calls = Arc::new(std::sync::atomic::AtomicUsize::new(0));

    // Guard one: no token from the issuer, in each way it can be missing.
    let missing_token: [(&str, HttpResponse); 4] = [
        ("null token", HttpResponse::ok(&serde_json::json!({"token": null, "expiration_timestamp": 0}))),
        ("empty token", HttpResponse::ok(&serde_json::json!({"token": "", "expiration_timestamp": 0}))),
        ("issuer error", HttpResponse::error(500, "Internal", "boom")),
        ("no body", HttpResponse::ok(&serde_json::json!({}))),
    ];
    let mut lines = Vec::new();
    for (label, resp) in missing_token {
        let net = Arc::new(LocalNetwork::new());
        net.mount("http://idp", Arc::new(move |_| resp.clone()));
        let calls = sts_calls.clone();
        net.mount(
            "http://sts",
            Arc::new(move |_| {
                calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                HttpResponse::error(500, "Unexpected", "should not be called")
            }),
        );
        let err = alg1_client(&net, &clock, &side.pod_uid).federated_exchange().unwrap_err();
        ensure(matches!(err, WorkloadError::TokenAcquisitionFailed(_)), || format!("{label}: {err:?}"))?;
        ensure(err.to_string().starts_with("Token acquisition failed"), || err.to_string())?;
    }
    ensure(sts_calls.load(std::sync::atomic::Ordering::SeqCst) == 0, || {
        "exchange attempted without a token".into()
    })?;
    lines.push("null/empty/missing token -> TokenAcquisitionFailed, no exchange sent".to_owned());

    // Guard two: any non-success exchange status.
    for status in [400u16, 401, 403, 404, 409, 500, 502, 503] {
        let net = Arc::new(LocalNetwork::new());
        let (i, c) = (side.idp.clone(), clock.clone());
        net.mount("http://idp", Arc::new(move |r| idp::api::handle(&i, &r, c.now())));
        net.mount(
            "http://sts",
            Arc::new(move |_| HttpResponse::error(status, "Injected", "injected failure")),
        );
        let err = alg1_client(&net, &clock, &side.pod_uid).federated_exchange().unwrap_err();
        ensure(
            err == WorkloadError::ExchangeFailed {
                status: Some(status),
                kind: "Injected".into(),
            },
            || format!("status {status}: {err:?}"),
        )?;
        ensure(err.to_string().starts_with("Exchange failed"), || err.to_string())?;
    }
    lines.push("8 non-success statuses -> ExchangeFailed".to_owned());
    Ok(lines.join("; "))
}

fn criterion_10() -> Result<String, String> {
    let started = Instant::now();
    let scenarios = builtin_scenarios();
    ensure(scenarios.len() >= 9, || format!("only {} built-ins", scenarios.len()))?;
    let first: Vec<_> = run_all(&scenarios);
    let second: Vec<_> = run_all(&scenarios);
    let elapsed = started.elapsed();
    for (a, b) in first.iter().zip(&second) {
        let a = a.as_ref().map_err(|e| e.to_string())?;
        let b = b.as_ref().map_err(|e| e.to_string())?;
        ensure(a.passed, || format!("{a}"))?;
        ensure(a == b, || format!("{} differs between runs", a.name))?;
    }
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} scenarios pass, identical reports on rerun, two full runs in {elapsed:?}",
        scenarios.len()
    ))
}

type Criterion = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("reference configuration fidelity", criterion_1),
        ("attribute condition and mapping", criterion_2),
        ("credential lifetime bound", criterion_3),
        ("audience mismatch denial", criterion_4),
        ("expiry enforcement vs static key", criterion_5),
        ("revocation semantics", criterion_6),
        ("condition oracle and fixpoint", criterion_7),
        ("risk arithmetic", criterion_8),
        ("exchange guard errors", criterion_9),
        ("scenario suite", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| {
                Err(p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()))
            });
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
