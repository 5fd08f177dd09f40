//! `fedauth` command-line entrypoint.

mod serve;
mod transport;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedauth_core::clock::{Clock, SystemClock};
use fedauth_core::condition::{eval_condition, parse_condition, AssertionContext};
use fedauth_core::http::{Handler, HttpRequest, HttpResponse, HttpTransport};
use fedauth_core::idp::{self, IdpConfig, IdpService, ServiceAccount};
use fedauth_core::legacy::{self, SignableRequest, StaticKey, DATE_HEADER};
use fedauth_core::risk::{complexity_report, RiskParameters};
use fedauth_core::scenario::{self, Scenario};
use fedauth_core::sts::api::ApplyRequest;
use fedauth_core::sts::{self, Decision, HttpJwksFetcher, StsOptions, StsService, TrustDocument};
use fedauth_core::token::Algorithm;
use fedauth_core::workload::{WorkloadClient, WorkloadConfig};
use fedauth_core::resource;

use crate::transport::ReqwestTransport;

const DEFAULT_STS: &str = "http://127.0.0.1:8081";

#[derive(Parser)]
#[command(name = "fedauth", version, about = "Secretless workload authentication testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scripted end-to-end runs against in-process services.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Mock protected resource.
    #[command(subcommand)]
    Resource(ResourceCmd),
    /// Token issuer.
    #[command(subcommand)]
    Idp(IdpCmd),
    /// Token-exchange service.
    #[command(subcommand)]
    Sts(StsCmd),
    /// Trust configuration on a running token service.
    #[command(subcommand)]
    Trust(TrustCmd),
    /// Workload client.
    #[command(subcommand)]
    Workload(WorkloadCmd),
    /// Static-key request signing.
    #[command(subcommand)]
    Legacy(LegacyCmd),
    /// Comparative risk model.
    #[command(subcommand)]
    Risk(RiskCmd),
    /// Attribute condition language.
    #[command(subcommand)]
    Condition(ConditionCmd),
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Lists built-in scenarios.
    List,
    /// Runs scenarios; exits 0 iff every step matched its expectation.
    Run {
        /// Built-in scenario name.
        #[arg(required_unless_present_any = ["all", "file"], conflicts_with = "all")]
        name: Option<String>,
        /// Every built-in scenario.
        #[arg(long)]
        all: bool,
        /// Scenario YAML files to run in addition.
        #[arg(long = "file", short = 'f')]
        file: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Listen {
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// 0 picks a free port; the chosen address is printed on startup.
    #[arg(long)]
    port: u16,
}

#[derive(Subcommand)]
enum ResourceCmd {
    Serve {
        #[command(flatten)]
        listen: Listen,
        /// Token service consulted for every access check.
        #[arg(long, default_value = DEFAULT_STS)]
        sts: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Es256,
    Rs256,
}

#[derive(Subcommand)]
enum IdpCmd {
    Serve {
        #[command(flatten)]
        listen: Listen,
        /// Defaults to `http://<bound address>`.
        #[arg(long)]
        issuer: Option<String>,
        #[arg(long, default_value_t = idp::DEFAULT_MIN_TTL)]
        min_ttl: i64,
        #[arg(long, default_value_t = idp::DEFAULT_MAX_TTL)]
        max_ttl: i64,
        #[arg(long, value_enum, default_value = "es256")]
        algorithm: AlgorithmArg,
        /// Adds `arn` and `account` claims for service accounts bound with `--bind-role`.
        #[arg(long)]
        aws_account_id: Option<String>,
        /// `namespace/serviceaccount=role`, repeatable.
        #[arg(long = "bind-role")]
        bind_role: Vec<String>,
        /// Pre-registers a pod, `namespace/serviceaccount/pod-name`; its uid is printed.
        #[arg(long = "pod")]
        pod: Vec<String>,
        /// Fixed key seed; random by default.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum StsCmd {
    Serve {
        #[command(flatten)]
        listen: Listen,
        /// Trust documents applied at startup, repeatable.
        #[arg(long = "file", short = 'f')]
        file: Vec<PathBuf>,
        /// Pool id for bare provider lists among `--file`.
        #[arg(long)]
        pool: Option<String>,
        #[arg(long, default_value_t = sts::MAX_CREDENTIAL_LIFETIME)]
        max_credential_lifetime: i64,
        #[arg(long, default_value_t = fedauth_core::token::DEFAULT_SKEW_SECS)]
        skew: i64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum TrustCmd {
    /// Sends a trust policy, pool, provider list or provider registration.
    Apply {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
        #[arg(long)]
        pool: Option<String>,
        #[arg(long, default_value = DEFAULT_STS)]
        sts: String,
    },
    /// Removes a provider; credentials already issued run to expiry.
    Revoke {
        provider_id: String,
        #[arg(long, default_value = DEFAULT_STS)]
        sts: String,
    },
}

#[derive(Subcommand)]
enum WorkloadCmd {
    /// Reads `resource` through the federated flow; exits 0 iff every access is allowed.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resource: String,
        /// Number of accesses.
        #[arg(long = "loop", default_value_t = 1)]
        iterations: u32,
        /// Seconds between accesses.
        #[arg(long, default_value_t = 1.0)]
        interval: f64,
    },
}

#[derive(Subcommand)]
enum LegacyCmd {
    /// Prints the `Authorization` header for a GET of `path` on `host`.
    Sign {
        #[arg(long)]
        key_id: String,
        #[arg(long, env = "FEDAUTH_SECRET_KEY", hide_env_values = true)]
        secret_key: String,
        /// YYYYMMDD
        #[arg(long)]
        date: String,
        /// HHMMSS, UTC.
        #[arg(long, default_value = "000000")]
        time: String,
        #[arg(long)]
        region: String,
        #[arg(long)]
        service: String,
        /// Defaults to `examplebucket.<service>.amazonaws.com`.
        #[arg(long)]
        host: Option<String>,
        #[arg(long, default_value = "/")]
        path: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
    Both,
}

#[derive(Subcommand)]
enum RiskCmd {
    Report {
        /// YAML or JSON parameters; omitted fields take defaults.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        format: ReportFormat,
    },
}

#[derive(Subcommand)]
enum ConditionCmd {
    /// Exits 0 when true, 1 when false, 2 on error.
    Eval {
        #[arg(long)]
        expr: String,
        /// `path=value` under `assertion`, repeatable.
        #[arg(long = "attr")]
        attr: Vec<String>,
    },
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn now() -> i64 {
    SystemClock.now()
}

fn client() -> anyhow::Result<Arc<ReqwestTransport>> {
    Ok(Arc::new(ReqwestTransport::new(Duration::from_secs(10))?))
}

fn print_response(resp: &HttpResponse) -> ExitCode {
    let text = serde_json::from_slice::<serde_json::Value>(&resp.body)
        .ok()
        .and_then(|v| serde_json::to_string_pretty(&v).ok())
        .unwrap_or_else(|| String::from_utf8_lossy(&resp.body).into_owned());
    if resp.is_success() {
        println!("{text}");
        ExitCode::SUCCESS
    } else {
        eprintln!("{}: {text}", resp.status);
        ExitCode::FAILURE
    }
}

fn scenario_list() -> ExitCode {
    for s in scenario::builtin_scenarios() {
        let summary = s.description.lines().next().unwrap_or("").trim();
        println!("{:<24} {summary}", s.name);
    }
    ExitCode::SUCCESS
}

fn scenario_run(
    name: Option<String>,
    all: bool,
    files: Vec<PathBuf>,
    json: bool,
) -> anyhow::Result<ExitCode> {
    let mut scenarios: Vec<Scenario> = if all {
        scenario::builtin_scenarios()
    } else {
        name.iter().map(|n| scenario::builtin(n)).collect::<Result<_, _>>()?
    };
    for f in &files {
        scenarios.push(
            Scenario::parse(&read(f)?).with_context(|| f.display().to_string())?,
        );
    }
    let reports = scenario::run_all(&scenarios)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        for r in &reports {
            println!("{r}");
        }
        let passed = reports.iter().filter(|r| r.passed).count();
        println!("{passed}/{} scenarios passed", reports.len());
    }
    Ok(if reports.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn resource_serve(listen: Listen, sts_url: String) -> anyhow::Result<()> {
    let (listener, _) = serve::bind(&listen.bind, listen.port)?;
    let transport = client()?;
    let outbound = transport.clone();
    let handler: Handler = Arc::new(move |req: HttpRequest| {
        resource::handle(&req, &resource::sts_checker(&*outbound, &sts_url))
    });
    serve::run(listener, handler)?;
    // The blocking client must be dropped outside the async runtime.
    drop(transport);
    Ok(())
}

fn split_service_account(s: &str) -> anyhow::Result<(ServiceAccount, &str)> {
    let (namespace, rest) = s.split_once('/').context("expected namespace/serviceaccount")?;
    let (name, tail) = rest.split_once(['/', '=']).unwrap_or((rest, ""));
    Ok((ServiceAccount::new(namespace, name)?, tail))
}

#[allow(clippy::too_many_arguments)]
fn idp_serve(
    listen: Listen,
    issuer: Option<String>,
    min_ttl: i64,
    max_ttl: i64,
    algorithm: AlgorithmArg,
    aws_account_id: Option<String>,
    bind_role: Vec<String>,
    pods: Vec<String>,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let (listener, addr) = serve::bind(&listen.bind, listen.port)?;
    let issuer = issuer.unwrap_or_else(|| format!("http://{addr}"));
    let mut config = IdpConfig::new(issuer);
    config.min_ttl = min_ttl;
    config.max_ttl = max_ttl;
    config.default_ttl = idp::DEFAULT_TTL.clamp(min_ttl, max_ttl.max(min_ttl));
    config.algorithm = match algorithm {
        AlgorithmArg::Es256 => Algorithm::ES256,
        AlgorithmArg::Rs256 => Algorithm::RS256,
    };
    config.aws_account_id = aws_account_id;
    config.seed = seed.unwrap_or_else(rand::random);
    let service = Arc::new(IdpService::new(config, now())?);
    for binding in &bind_role {
        let (sa, role) = split_service_account(binding)?;
        if role.is_empty() {
            bail!("--bind-role expects namespace/serviceaccount=role");
        }
        service.bind_role(sa, role);
    }
    for pod in &pods {
        let (sa, name) = split_service_account(pod)?;
        let p = service.register_pod(sa, name)?;
        println!(
            "pod {}/{} serviceaccount={} uid={}",
            p.service_account.namespace, p.pod_name, p.service_account.name, p.pod_uid
        );
    }
    println!("issuer {}", service.issuer());
    let handler: Handler = Arc::new(move |req: HttpRequest| idp::api::handle(&service, &req, now()));
    serve::run(listener, handler)
}

#[allow(clippy::too_many_arguments)]
fn sts_serve(
    listen: Listen,
    files: Vec<PathBuf>,
    pool: Option<String>,
    max_credential_lifetime: i64,
    skew: i64,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let (listener, _) = serve::bind(&listen.bind, listen.port)?;
    let transport = client()?;
    let options = StsOptions {
        max_credential_lifetime,
        skew,
        seed: seed.unwrap_or_else(rand::random),
    };
    let service = Arc::new(StsService::new(
        options,
        Arc::new(HttpJwksFetcher::new(transport.clone() as Arc<dyn HttpTransport>)),
    ));
    for f in &files {
        let doc = TrustDocument::parse(&read(f)?, pool.as_deref())
            .with_context(|| f.display().to_string())?;
        let summary = service
            .apply_document(doc, now())
            .with_context(|| f.display().to_string())?;
        println!("applied {summary}");
    }
    let svc = service.clone();
    let handler: Handler = Arc::new(move |req: HttpRequest| sts::api::handle(&svc, &req, now()));
    serve::run(listener, handler)?;
    // Owns the fetcher and with it the blocking client.
    drop(service);
    drop(transport);
    Ok(())
}

fn trust_apply(file: PathBuf, pool: Option<String>, sts_url: String) -> anyhow::Result<ExitCode> {
    let body = ApplyRequest {
        document: read(&file)?,
        pool,
    };
    let resp = client()?.send(&sts_url, HttpRequest::post_json("/v1/admin/apply", &body))?;
    Ok(print_response(&resp))
}

fn trust_revoke(provider_id: String, sts_url: String) -> anyhow::Result<ExitCode> {
    let resp = client()?.send(
        &sts_url,
        HttpRequest::delete(format!("/v1/admin/providers/{provider_id}")),
    )?;
    Ok(print_response(&resp))
}

fn workload_run(
    config: PathBuf,
    label: String,
    iterations: u32,
    interval: f64,
) -> anyhow::Result<ExitCode> {
    let config = WorkloadConfig::parse_yaml(&read(&config)?)?;
    let client = WorkloadClient::new(config, client()?, Arc::new(SystemClock))?;
    let mut all_allowed = true;
    for i in 1..=iterations {
        match client.access_resource(&label) {
            Ok(decision) => {
                let word = match decision {
                    Decision::Allow => "allow",
                    Decision::Deny => "deny",
                };
                all_allowed &= decision == Decision::Allow;
                println!("[{i}] {label} {word} exchanges={}", client.exchange_count());
            }
            Err(e) => {
                all_allowed = false;
                println!("[{i}] {label} error {}: {e}", e.kind());
            }
        }
        if i < iterations {
            std::thread::sleep(Duration::from_secs_f64(interval.max(0.0)));
        }
    }
    Ok(if all_allowed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

#[allow(clippy::too_many_arguments)]
fn legacy_sign(
    key_id: String,
    secret_key: String,
    date: String,
    time: String,
    region: String,
    service: String,
    host: Option<String>,
    path: String,
) -> anyhow::Result<()> {
    let digits = |s: &str, n: usize| s.len() == n && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(&date, 8) {
        bail!("--date must be YYYYMMDD");
    }
    if !digits(&time, 6) {
        bail!("--time must be HHMMSS");
    }
    let host = host.unwrap_or_else(|| format!("examplebucket.{service}.amazonaws.com"));
    let req = SignableRequest::new("GET", &path)
        .header("host", &host)
        .header(DATE_HEADER, &format!("{date}T{time}Z"));
    let key = StaticKey {
        access_key_id: key_id,
        secret_key,
        created_at: 0,
        permissions: Vec::new(),
    };
    println!("Authorization: {}", legacy::sign(&req, &key, &date, &region, &service)?);
    Ok(())
}

fn risk_report(params: Option<PathBuf>, format: ReportFormat) -> anyhow::Result<()> {
    let params = match params {
        Some(p) => RiskParameters::parse(&read(&p)?)?,
        None => RiskParameters::default(),
    };
    let report = complexity_report(&params);
    if format != ReportFormat::Json {
        println!("{report}");
    }
    if format != ReportFormat::Text {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(())
}

fn condition_eval(expr: String, attrs: Vec<String>) -> ExitCode {
    let mut ctx = AssertionContext::new();
    for a in &attrs {
        let Some((k, v)) = a.split_once('=') else {
            eprintln!("--attr expects path=value, got {a:?}");
            return ExitCode::from(2);
        };
        ctx.insert(k.strip_prefix("assertion.").unwrap_or(k), v);
    }
    match parse_condition(&expr).and_then(|e| eval_condition(&e, &ctx)) {
        Ok(true) => {
            println!("true");
            ExitCode::SUCCESS
        }
        Ok(false) => {
            println!("false");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let ok = |r: anyhow::Result<()>| r.map(|()| ExitCode::SUCCESS);
    match cli.command {
        Command::Scenario(ScenarioCmd::List) => Ok(scenario_list()),
        Command::Scenario(ScenarioCmd::Run { name, all, file, json }) => {
            scenario_run(name, all, file, json)
        }
        Command::Resource(ResourceCmd::Serve { listen, sts }) => ok(resource_serve(listen, sts)),
        Command::Idp(IdpCmd::Serve {
            listen,
            issuer,
            min_ttl,
            max_ttl,
            algorithm,
            aws_account_id,
            bind_role,
            pod,
            seed,
        }) => ok(idp_serve(
            listen,
            issuer,
            min_ttl,
            max_ttl,
            algorithm,
            aws_account_id,
            bind_role,
            pod,
            seed,
        )),
        Command::Sts(StsCmd::Serve {
            listen,
            file,
            pool,
            max_credential_lifetime,
            skew,
            seed,
        }) => ok(sts_serve(listen, file, pool, max_credential_lifetime, skew, seed)),
        Command::Trust(TrustCmd::Apply { file, pool, sts }) => trust_apply(file, pool, sts),
        Command::Trust(TrustCmd::Revoke { provider_id, sts }) => trust_revoke(provider_id, sts),
        Command::Workload(WorkloadCmd::Run {
            config,
            resource,
            iterations,
            interval,
        }) => workload_run(config, resource, iterations, interval),
        Command::Legacy(LegacyCmd::Sign {
            key_id,
            secret_key,
            date,
            time,
            region,
            service,
            host,
            path,
        }) => ok(legacy_sign(key_id, secret_key, date, time, region, service, host, path)),
        Command::Risk(RiskCmd::Report { params, format }) => ok(risk_report(params, format)),
        Command::Condition(ConditionCmd::Eval { expr, attr }) => Ok(condition_eval(expr, attr)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
