use std::path::Path;
use std::process::{Command, Output};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
const SECRET: &str = "0707070707070707070707070707070707070707070707070707070707070707";
const DETAILS: &str = "marketing/customer-details:details-sql";
const TRACKING: &str = "marketing/customer-tracking:tracking-sql";

fn meshctl(home: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshctl"))
        .args(args)
        .env("MESH_HOME", home)
        .env("MESH_SECRET", SECRET)
        .env_remove("MESH_DATA_ROOT")
        .output()
        .unwrap()
}

fn ok(home: &Path, args: &[&str]) -> String {
    let out = meshctl(home, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn setup() -> tempfile::TempDir {
    let home = tempfile::tempdir().unwrap();
    let h = home.path();
    ok(h, &["classify", "define", "internal"]);
    ok(
        h,
        &[
            "classify",
            "define",
            "sensitive-pii",
            "--obligation",
            "encrypt-at-rest",
            "--obligation",
            "subject-traceability",
        ],
    );
    ok(
        h,
        &["classify", "define", "financial", "--obligation", "insider-access-only"],
    );
    let products: Vec<String> = ["customer-tracking", "customer-details", "customer-recommendations"]
        .iter()
        .map(|p| format!("{FIXTURES}/products/{p}.dp.json"))
        .collect();
    let mut args = vec!["product", "register"];
    args.extend(products.iter().map(String::as_str));
    ok(h, &args);
    ok(h, &["dataset", "put", DETAILS, &format!("{FIXTURES}/data/details.csv")]);
    ok(
        h,
        &["dataset", "put", TRACKING, &format!("{FIXTURES}/data/tracking.csv")],
    );
    let policies: Vec<String> = ["global", "marketing", "customer-details", "exports"]
        .iter()
        .map(|p| format!("{FIXTURES}/policies/{p}.mpol"))
        .collect();
    let mut args = vec!["policy", "apply"];
    args.extend(policies.iter().map(String::as_str));
    ok(h, &args);
    home
}

#[test]
fn exit_codes_follow_outcomes() {
    let home = setup();
    let h = home.path();
    let analyst = ["--user", "ana", "--role", "analyst"];

    let out = meshctl(h, &[&["access", "request", TRACKING][..], &analyst].concat());
    assert_eq!(code(&out), 1, "untagged port is an error");
    assert!(String::from_utf8_lossy(&out.stderr).contains("UNTAGGED"));

    let out = meshctl(
        h,
        &[
            &["query"][..],
            &analyst,
            &[&format!("SELECT name, email FROM {DETAILS}")],
        ]
        .concat(),
    );
    assert_eq!(code(&out), 2);
    let csv = ok(
        h,
        &[
            &["query"][..],
            &analyst,
            &[
                "--attr",
                "insider=true",
                &format!("SELECT customer_id, email FROM {DETAILS}"),
            ],
        ]
        .concat(),
    );
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("customer_id,email"));

    let out = meshctl(h, &["policy", "explain", DETAILS, "--user", "zed", "--column", "email"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("details-columns"));

    ok(h, &["classify", "tag", TRACKING, "sensitive-pii"]);
    let out = meshctl(h, &["contracts", "run", TRACKING]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));

    let out = meshctl(h, &["classify", "check", TRACKING]);
    assert_eq!(code(&out), 3, "tracking is not encrypted but now carries pii");

    let out = meshctl(
        h,
        &[
            "product",
            "register",
            &format!("{FIXTURES}/invalid/missing-interface.dp.json"),
        ],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn tokens_round_trip_through_the_cli() {
    let home = setup();
    let h = home.path();
    let token = ok(
        h,
        &[
            "token",
            "issue",
            DETAILS,
            "--user",
            "ana",
            "--role",
            "analyst",
            "--attr",
            "insider=true",
        ],
    );
    let token = token.trim();
    assert_eq!(token.matches('.').count(), 1);
    ok(h, &["token", "verify", token, DETAILS]);
    assert_eq!(code(&meshctl(h, &["token", "verify", token, TRACKING])), 2);
    assert_eq!(code(&meshctl(h, &["token", "issue", DETAILS, "--user", "zed"])), 2);
}

#[test]
fn state_survives_restarts_and_secret_is_required() {
    let home = setup();
    let h = home.path();
    let state = ok(h, &["state"]);
    assert_eq!(ok(h, &["state"]), state);
    let listed = ok(h, &["product", "list"]);
    assert_eq!(listed.lines().filter(|l| l.contains("marketing/")).count(), 3);

    let out = Command::new(env!("CARGO_BIN_EXE_meshctl"))
        .args(["state"])
        .env("MESH_HOME", h)
        .env_remove("MESH_SECRET")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_meshctl"))
        .args(["state"])
        .env("MESH_HOME", h)
        .env("MESH_SECRET", "abcd")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);

    // Stored bytes are ciphertext; `dataset cat` decrypts.
    let raw = std::fs::read(h.join("data/marketing/details.csv")).unwrap();
    assert_ne!(raw, std::fs::read(format!("{FIXTURES}/data/details.csv")).unwrap());
    assert_eq!(
        ok(h, &["dataset", "cat", DETAILS]).as_bytes(),
        std::fs::read(format!("{FIXTURES}/data/details.csv")).unwrap()
    );
}

#[test]
fn compile_resolves_blob_prefixes_from_state() {
    let home = setup();
    let exports = format!("{FIXTURES}/policies/exports.mpol");
    let v: serde_json::Value = serde_json::from_str(&ok(home.path(), &["policy", "compile", &exports])).unwrap();
    let resources = &v[0]["statements"][0]["resources"];
    assert!(resources.to_string().contains("marketing/exports/tracking"), "{v}");

    // Without a secret there is no state to open; compilation still works.
    let empty = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_meshctl"))
        .args(["policy", "compile", &exports])
        .env("MESH_HOME", empty.path())
        .env_remove("MESH_SECRET")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["policy"], "tracking-export");
}
