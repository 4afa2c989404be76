use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn slantkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slantkit"))
        .args(args)
        .env("SLANTKIT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gallery_spec(dir: &Path, id: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(format!("{id}.json"));
    let mut args = vec!["gallery", id, "--json", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = slantkit(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    path
}

fn edit_spec(path: &Path, f: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    let out = path.with_extension("edited.json");
    std::fs::write(&out, serde_json::to_string(&v).unwrap()).unwrap();
    out
}

#[test]
fn gallery_list_prints_six_ids() {
    let o = slantkit(&["gallery", "list"]);
    assert_eq!(code(&o), 0);
    let ids: Vec<String> = stdout(&o)
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    assert_eq!(ids, ["ex1", "ex3", "ex4", "ex5", "ex8", "ex9"]);
}

#[test]
fn gallery_unknown_id_is_usage_error() {
    assert_eq!(code(&slantkit(&["gallery", "ex2"])), 2);
}

#[test]
fn validate_gallery_spec_passes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex1", &[]);
    let o = slantkit(&["validate", spec.to_str().unwrap(), "--trials", "10"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("passed: yes"));
}

#[test]
fn epsilon_zero_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex3", &[]);
    let bad = edit_spec(&spec, |v| v["epsilon"] = 0.into());
    let o = slantkit(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));
}

#[test]
fn malformed_inputs_are_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex3", &[]);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&slantkit(&["classify", missing.to_str().unwrap()])), 2);
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{not json").unwrap();
    assert_eq!(code(&slantkit(&["classify", garbage.to_str().unwrap()])), 2);
    let empty = edit_spec(&spec, |v| {
        v["distributions"] = serde_json::json!({});
        v.as_object_mut().unwrap().remove("decomposition");
    });
    assert_eq!(code(&slantkit(&["classify", empty.to_str().unwrap()])), 2);
    let bad_expr = edit_spec(&spec, |v| v["phi_columns"][0][1] = "1 +* x1".into());
    let o = slantkit(&["validate", bad_expr.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error at byte"));
    assert_eq!(code(&slantkit(&["validate"])), 2);
    assert_eq!(code(&slantkit(&["frobnicate"])), 2);
    let o = slantkit(&["classify", spec.to_str().unwrap(), "--cluster-tol", "-1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn perturbed_phi_is_exit_1_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex3", &[]);
    let bad = edit_spec(&spec, |v| v["phi_columns"][0][1] = "1.01".into());
    let o = slantkit(&["validate", bad.to_str().unwrap(), "--trials", "10"]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("passed: no"), "{out}");
    assert!(out.contains("witness: "), "{out}");
}

#[test]
fn classify_ex1_reports_k_slant_with_angle_table() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex1", &["--k", "3"]);
    let o = slantkit(&["classify", spec.to_str().unwrap(), "--trials", "8"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("verdict: k-slant (k=3)"), "{out}");
    assert!(out.contains("theta (rad)"));
}

#[test]
fn classify_ex4_gamma_zero_verdict_line() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex4", &["--gamma", "0"]);
    let o = slantkit(&["classify", spec.to_str().unwrap(), "--trials", "8"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("k-pointwise-slant (k=2)"), "{out}");
    assert!(out.contains("NOT pointwise-k-slant (witness #0 x=(0.0000"), "{out}");
    assert!(out.contains("NOT generic"), "{out}");
}

#[test]
fn dual_ex3_passes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex3", &[]);
    let o = slantkit(&["dual", spec.to_str().unwrap(), "--trials", "8"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("round trip: pass"));
}

#[test]
fn identities_ex1_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex1", &[]);
    let json = dir.path().join("r.json");
    let o = slantkit(&["identities", spec.to_str().unwrap(), "--trials", "20", "--json", json.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["identities"]["passed"], true);
    assert!(stdout(&o).contains(" 0 fail"));
}

#[test]
fn json_report_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex9", &["--gamma", "1.5"]);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let s = spec.to_str().unwrap();
    let o = slantkit(&["dual", s, "--trials", "8", "--connection", "--json", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_slantkit"))
        .args(["dual", s, "--trials", "8", "--connection", "--json", b.to_str().unwrap()])
        .env("SLANTKIT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let v: serde_json::Value = serde_json::from_slice(&ta).unwrap();
    assert_eq!(v["identities"], "skipped");
    assert_eq!(v["connection"]["consistent"], true);
    assert_eq!(v["spec_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn bad_thread_count_is_exit_2() {
    let o = Command::new(env!("CARGO_BIN_EXE_slantkit"))
        .args(["gallery", "list"])
        .env("SLANTKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn manifest_flags() {
    let o = slantkit(&["identities", "--manifest-check"]);
    assert_eq!(code(&o), 0);
    let o = slantkit(&["identities", "--manifest-markdown"]);
    assert_eq!(code(&o), 0);
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/identities.md");
    assert_eq!(stdout(&o), std::fs::read_to_string(docs).unwrap());
}

#[test]
fn force_runs_classification_after_failed_structure() {
    let dir = tempfile::tempdir().unwrap();
    let spec = gallery_spec(dir.path(), "ex3", &[]);
    let bad = edit_spec(&spec, |v| v["phi_columns"][0][1] = "1.01".into());
    let o = slantkit(&["classify", bad.to_str().unwrap(), "--trials", "4"]);
    assert_eq!(code(&o), 1);
    assert!(!stdout(&o).contains("## Classification"));
    // forced, the classifier itself rejects the spectrum
    let o = slantkit(&["classify", bad.to_str().unwrap(), "--trials", "4", "--force"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model error"));
}
