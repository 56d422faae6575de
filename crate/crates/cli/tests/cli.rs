use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cvqkd"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const QAM16: &str = r#"
[constellation]
type = "qam"
L = 4
target_VA = 5.0
V_G = 4.5
"#;

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn identity_channel_keyrate() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "k.toml", &format!("{QAM16}\n[channel]\nT_C = 1.0\neps_C = 0.0\n"));
    let o = run(&["keyrate"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = &doc["result"];
    assert_eq!(r["transmittance"].as_f64(), Some(1.0));
    assert!(r["k_r"].as_f64().unwrap() > 0.0);
    assert!(r["kappa_star"]["k11"].is_number());
    assert!(r["search_iterations"].as_u64().unwrap() > 0);
    assert!(doc["source"]["cutoff"].as_u64().unwrap() >= 60);
    assert_eq!(doc["metadata"]["command"], "keyrate");
    assert!(doc["metadata"]["defaults"].as_array().unwrap().iter().any(|d| d == "protocol.beta=0.95"));
}

#[test]
fn missing_constellation_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "k.toml", "[channel]\ndistance_km = 10.0\n");
    for cmd in ["keyrate", "noise-frontier"] {
        let o = run(&[cmd], Some(&cfg));
        assert_eq!(o.status.code(), Some(2));
        let doc: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
        assert_eq!(doc["error"]["class"], "config");
    }
}

#[test]
fn unphysical_channel_reports_input_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "k.toml", &format!("{QAM16}\n[channel]\nT_C = 1.5\n"));
    let o = run(&["keyrate"], Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
    let doc: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(doc["error"]["class"], "out_of_range");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "k.toml", &format!("{QAM16}\n[channel]\nT = 0.5\n"));
    assert_eq!(run(&["keyrate"], Some(&cfg)).status.code(), Some(2));
}

#[test]
fn empty_sweep_is_header_only() {
    let o = run(&["sweep"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# tool: cvqkd "));
    assert!(text.contains("# config_sha256: "));
    assert!(data_rows(&text).is_empty());
    assert!(text.lines().any(|l| l == "distance_km,T_C,eps_C,constellation,I_AB,S_sup,K_R,K_R_clamped,error"));
}

#[test]
fn overrides_change_the_hash_and_the_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.toml",
        &format!("{QAM16}\n[channel]\nconvention = \"input_referred\"\n[sweep]\ndistances_km = [0, 10]\n"),
    );
    let a = stdout(&run(&["sweep"], Some(&cfg)));
    let b = stdout(&run(&["sweep", "--override", "sweep.eps_C=[0.0, 0.02]"], Some(&cfg)));
    assert_eq!(data_rows(&a).len(), 2);
    assert_eq!(data_rows(&b).len(), 4);
    let hash = |s: &str| s.lines().find(|l| l.starts_with("# config_sha256")).unwrap().to_string();
    assert_ne!(hash(&a), hash(&b));
}

#[test]
fn partial_sweep_exits_four() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "s.toml", &format!("{QAM16}\n[sweep]\nT_C = [0.5, 1.5]\n"));
    let o = run(&["sweep"], Some(&cfg));
    assert_eq!(o.status.code(), Some(4));
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert!(rows[0].ends_with(','));
    assert!(rows[1].contains("out_of_range"));
}

#[test]
fn eta_scan_rows_and_output_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "e.toml", "[eta_scan]\nV_A = [3.0]\n[[eta_scan.series]]\nL = 4\nV_G = [3.0]\n");
    let out = dir.path().join("eta.csv");
    let o = run(&["eta-scan", "--out", out.to_str().unwrap()], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 1);
    let eta: f64 = rows[0].split(',').nth(4).unwrap().parse().unwrap();
    assert!((eta / 3.7e-3 - 1.0).abs() < 0.2);
}

#[test]
fn frontier_without_positive_rate_gives_reason() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "f.toml", &format!("{QAM16}\n[frontier]\ndistances_km = [30.0]\n"));
    let o = run(&["noise-frontier"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("# noise_tol: 1e-4"));
    let row = data_rows(&text)[0].to_string();
    assert!(row.contains(",,,no_positive_rate"), "{row}");
}

#[test]
fn csv_keyrate_uses_sweep_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "k.toml", &format!("{QAM16}\n[channel]\ndistance_km = 50.0\neps_C = 0.01\nconvention = \"input_referred\"\n"));
    let o = run(&["keyrate", "--format", "csv"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("50,0.1,0.01,16-QAM,"));
}
