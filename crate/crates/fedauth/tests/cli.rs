//! Offline subcommands: output shapes and exit codes.

use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fedauth");

fn fedauth(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("FEDAUTH_SECRET_KEY")
        .output()
        .expect("run fedauth")
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn scenario_list_names_every_builtin() {
    let out = fedauth(&["scenario", "list"]);
    assert!(out.status.success());
    let names: Vec<String> = text(&out)
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_owned())
        .collect();
    for required in [
        "happy-path-gcp-to-aws",
        "happy-path-aws-to-gcp",
        "confused-deputy",
        "expired-token",
        "replay-after-expiry",
        "audience-mismatch",
        "provider-revocation",
        "stolen-static-key",
        "cicd-pipeline",
    ] {
        assert!(names.iter().any(|n| n == required), "{required} missing");
    }
}

#[test]
fn scenario_run_all_json() {
    let out = fedauth(&["scenario", "run", "--all", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let reports = reports.as_array().unwrap();
    assert!(reports.len() >= 9);
    assert!(reports.iter().all(|r| r["passed"] == true));
}

#[test]
fn scenario_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let failing = dir.path().join("failing.yaml");
    std::fs::write(
        &failing,
        "name: wrong-expectation\n\
         setup:\n  idps: [{name: idp, issuer: https://idp.test}]\n  pods: [{name: p, idp: idp, namespace: ns, serviceaccount: sa}]\n\
         steps:\n  - {action: issue_token, pod: p, audience: aud, expect: 'error:UnknownPod'}\n",
    )
    .unwrap();
    let out = fedauth(&["scenario", "run", "-f", failing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).starts_with("FAIL wrong-expectation"));

    let malformed = dir.path().join("malformed.yaml");
    std::fs::write(&malformed, "name: x\nsteps: []\n").unwrap();
    let out = fedauth(&["scenario", "run", "-f", malformed.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ScenarioMalformed"));

    assert_eq!(fedauth(&["scenario", "run", "no-such"]).status.code(), Some(2));
    assert_eq!(fedauth(&["scenario", "run", "confused-deputy"]).status.code(), Some(0));
}

#[test]
fn legacy_sign_header_shape() {
    let out = fedauth(&[
        "legacy", "sign", "--key-id", "AKIDEXAMPLE", "--secret-key", "secret", "--date", "20250727",
        "--region", "us-east-1", "--service", "s3",
    ]);
    assert!(out.status.success());
    let line = text(&out);
    let prefix = "Authorization: AWS4-HMAC-SHA256 Credential=AKIDEXAMPLE/20250727/us-east-1/s3/aws4_request, SignedHeaders=host;x-amz-date, Signature=";
    let sig = line.trim_end().strip_prefix(prefix).unwrap_or_else(|| panic!("{line}"));
    assert_eq!(sig.len(), 64);
    assert!(sig.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));

    let other = fedauth(&[
        "legacy", "sign", "--key-id", "AKIDEXAMPLE", "--secret-key", "other", "--date", "20250727",
        "--region", "us-east-1", "--service", "s3",
    ]);
    assert_ne!(text(&other), line);

    let bad_date = fedauth(&[
        "legacy", "sign", "--key-id", "K", "--secret-key", "s", "--date", "2025-07-27", "--region",
        "r", "--service", "s3",
    ]);
    assert_eq!(bad_date.status.code(), Some(2));
    let no_secret = fedauth(&[
        "legacy", "sign", "--key-id", "K", "--date", "20250727", "--region", "r", "--service", "s3",
    ]);
    assert!(!no_secret.status.success());
}

#[test]
fn risk_report_text_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.yaml");
    std::fs::write(&params, "n_keys: 50\nn_auths: 50\ni_blast: 2\ni_scoped: 2\n").unwrap();
    let out = fedauth(&["risk", "report", "--params", params.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = text(&out);
    assert!(stdout.contains("Credential Lifetime"));
    let json_start = stdout.find("\n{").expect("json follows the table");
    let report: serde_json::Value = serde_json::from_str(&stdout[json_start..]).unwrap();
    // Equal counts and weights leave only the lifetime ratio: a year over an hour.
    let ratio = report["ratio"].as_f64().unwrap();
    assert_eq!(ratio, 365.25 * 24.0);

    let json_only = fedauth(&["risk", "report", "--format", "json"]);
    assert!(serde_json::from_slice::<serde_json::Value>(&json_only.stdout).is_ok());

    std::fs::write(&params, "n_keys: -1\n").unwrap();
    let out = fedauth(&["risk", "report", "--params", params.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn condition_eval_exit_codes() {
    let expr = "assertion.arn.endsWith(':assumed-role/pegasus-iam-role/pegasus-sa')";
    let arn = "arn=arn:aws:sts::123456789:assumed-role/pegasus-iam-role/pegasus-sa";
    let t = fedauth(&["condition", "eval", "--expr", expr, "--attr", arn]);
    assert_eq!((t.status.code(), text(&t).trim()), (Some(0), "true"));
    let f = fedauth(&["condition", "eval", "--expr", expr, "--attr", "assertion.arn=x"]);
    assert_eq!((f.status.code(), text(&f).trim()), (Some(1), "false"));
    let missing = fedauth(&["condition", "eval", "--expr", expr]);
    assert_eq!(missing.status.code(), Some(2));
    let syntax = fedauth(&["condition", "eval", "--expr", "assertion.arn =="]);
    assert_eq!(syntax.status.code(), Some(2));
}
