//! Runs the real binary: issuer, token service and resource server as
//! separate processes talking HTTP on loopback.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_fedauth");

struct Server {
    child: Child,
    url: String,
    /// Stdout lines printed before the listening line.
    banner: Vec<String>,
}

impl Server {
    fn start(args: &[&str]) -> Server {
        let mut child = Command::new(BIN)
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
        let mut banner = Vec::new();
        loop {
            let line = match lines.next() {
                Some(Ok(l)) => l,
                other => {
                    let _ = child.kill();
                    let _ = child.wait();
                    panic!("{args:?} exited before listening: {other:?} {banner:?}");
                }
            };
            if let Some(url) = line.strip_prefix("listening on ") {
                let url = url.to_owned();
                // Keep draining so later prints never block the server.
                std::thread::spawn(move || lines.for_each(drop));
                return Server { child, url, banner };
            }
            banner.push(line);
        }
    }

    fn banner_value(&self, prefix: &str, key: &str) -> String {
        self.banner
            .iter()
            .find(|l| l.starts_with(prefix))
            .and_then(|l| l.split_whitespace().find_map(|w| w.strip_prefix(key)))
            .unwrap_or_else(|| panic!("no {key} in {:?}", self.banner))
            .to_owned()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn fedauth(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("run fedauth")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Estate {
    _dir: tempfile::TempDir,
    idp: Server,
    sts: Server,
    resource: Server,
    workload: PathBuf,
    provider_id: String,
}

fn estate() -> Estate {
    let dir = tempfile::tempdir().unwrap();
    let idp = Server::start(&["idp", "serve", "--port", "0", "--pod", "pegasus/pegasus-sa/pegasus-0"]);
    let sts = Server::start(&["sts", "serve", "--port", "0"]);
    let resource = Server::start(&["resource", "serve", "--port", "0", "--sts", &sts.url]);
    let issuer = idp.banner_value("issuer", "http");
    let issuer = format!("http{issuer}");
    let uid = idp.banner_value("pod pegasus/pegasus-0", "uid=");
    let provider_id = issuer.trim_start_matches("http://").to_owned();

    let registration = write(
        dir.path(),
        "provider.yaml",
        &format!("issuer: {issuer}\naudiences: [sts.amazonaws.com]\njwks:\n  uri: {issuer}/openid/v1/jwks\n"),
    );
    let policy = write(
        dir.path(),
        "policy.json",
        &format!(
            r#"{{
  "Version": "2012-10-17",
  "RoleName": "pegasus-role",
  "Scopes": ["s3://pegasus-bucket"],
  "Statement": [{{
    "Effect": "Allow",
    "Principal": {{"Federated": "arn:aws:iam::123456789:oidc-provider/{provider_id}"}},
    "Action": "sts:AssumeRoleWithWebIdentity",
    "Condition": {{"StringEquals": {{
      "{provider_id}:sub": "system:serviceaccount:pegasus:pegasus-sa",
      "{provider_id}:aud": "sts.amazonaws.com"
    }}}}
  }}]
}}"#
        ),
    );
    for doc in [&registration, &policy] {
        let out = fedauth(&["trust", "apply", "-f", doc.to_str().unwrap(), "--sts", &sts.url]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let workload = write(
        dir.path(),
        "workload.yaml",
        &format!(
            "pod: {{namespace: pegasus, serviceaccount: pegasus-sa, pod_uid: {uid}}}\n\
             idp_endpoint: {}\n\
             resource_endpoint: {}\n\
             token_ttl: 3600\n\
             target:\n  sts_endpoint: {}\n  audience: sts.amazonaws.com\n  flow: {{kind: assume_role, role: pegasus-role}}\n",
            idp.url, resource.url, sts.url
        ),
    );
    Estate {
        _dir: dir,
        idp,
        sts,
        resource,
        workload,
        provider_id,
    }
}

fn run_workload(e: &Estate, label: &str, iterations: &str) -> Output {
    fedauth(&[
        "workload",
        "run",
        "--config",
        e.workload.to_str().unwrap(),
        "--resource",
        label,
        "--loop",
        iterations,
        "--interval",
        "0",
    ])
}

#[test]
fn live_flow_allow_deny_and_revocation() {
    let e = estate();

    let out = run_workload(&e, "s3://pegasus-bucket", "3");
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.matches(" allow ").count(), 3, "{text}");
    // One exchange serves all three accesses.
    assert!(text.lines().all(|l| l.ends_with("exchanges=1")), "{text}");

    let out = run_workload(&e, "s3://finance-bucket", "1");
    assert!(!out.status.success());
    assert!(stdout(&out).contains(" deny "));

    let out = fedauth(&["trust", "revoke", &e.provider_id, "--sts", &e.sts.url]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run_workload(&e, "s3://pegasus-bucket", "1");
    let text = stdout(&out);
    assert!(!out.status.success());
    assert!(text.contains("ExchangeFailed") && text.contains("UnknownProvider"), "{text}");

    let again = fedauth(&["trust", "revoke", &e.provider_id, "--sts", &e.sts.url]);
    assert!(!again.status.success());
}

#[test]
fn live_endpoints_and_resource_refusals() {
    let e = estate();
    let http = reqwest::blocking::Client::new();

    let get_json = |url: String| -> serde_json::Value {
        serde_json::from_str(&http.get(url).send().unwrap().text().unwrap()).unwrap()
    };
    let discovery = get_json(format!("{}/.well-known/openid-configuration", e.idp.url));
    assert_eq!(discovery["jwks_uri"], format!("{}/openid/v1/jwks", e.idp.url));
    let jwks = get_json(format!("{}/openid/v1/jwks", e.idp.url));
    assert!(!jwks["keys"].as_array().unwrap().is_empty());

    let token = http
        .post(format!("{}/token", e.idp.url))
        .header("content-type", "application/json")
        .body(
            serde_json::json!({
                "namespace": "pegasus", "serviceaccount": "pegasus-sa",
                "pod_uid": "no-such-pod", "audience": "sts.amazonaws.com"
            })
            .to_string(),
        )
        .send()
        .unwrap();
    assert_eq!(token.status(), 404);

    // No credential, and a made-up one: both refused, and the made-up one is audited.
    let bare = http
        .get(format!("{}/data/s3%3A%2F%2Fpegasus-bucket", e.resource.url))
        .send()
        .unwrap();
    assert_eq!(bare.status(), 403);
    let forged = http
        .get(format!("{}/data/s3%3A%2F%2Fpegasus-bucket", e.resource.url))
        .header("x-fedauth-credential-id", "ASIAFORGED")
        .header("x-fedauth-secret", "x")
        .header("x-fedauth-session-token", "y")
        .send()
        .unwrap();
    assert_eq!(forged.status(), 403);
    let audit = get_json(format!("{}/v1/admin/audit", e.sts.url));
    assert!(audit.to_string().contains("ASIAFORGED"), "{audit}");

    let missing = http.get(format!("{}/elsewhere", e.sts.url)).send().unwrap();
    assert_eq!(missing.status(), 404);
}

#[test]
fn workload_against_dead_issuer_fails_acquisition() {
    let e = estate();
    let text = std::fs::read_to_string(&e.workload)
        .unwrap()
        .replace(&e.idp.url, "http://127.0.0.1:9");
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "w.yaml", &text);
    let out = fedauth(&[
        "workload", "run", "--config", cfg.to_str().unwrap(), "--resource", "s3://pegasus-bucket",
    ]);
    assert!(!out.status.success());
    assert!(stdout(&out).contains("TokenAcquisitionFailed"), "{}", stdout(&out));
}

#[test]
fn startup_failure_on_taken_port() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = fedauth(&["resource", "serve", "--port", &port]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("StartupFailure"));
}

#[test]
fn sts_loads_trust_files_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.yaml", "foo: 1\n");
    let out = fedauth(&["sts", "serve", "--port", "0", "-f", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unrecognized document"));

    let policy = write(
        dir.path(),
        "policy.yaml",
        "RoleName: r\nStatement:\n  - Effect: Allow\n    Principal: {Federated: oidc.example}\n    Action: sts:AssumeRoleWithWebIdentity\n    Condition:\n      StringEquals: {\"oidc.example:aud\": a}\n",
    );
    let sts = Server::start(&["sts", "serve", "--port", "0", "-f", policy.to_str().unwrap()]);
    assert!(sts.banner.iter().any(|l| l.starts_with("applied")), "{:?}", sts.banner);
}
