//! The worked example in docs/spec-format.md must load and classify as described.

use std::path::Path;

use slantkit::report::{run, Command, RunOptions};
use slantkit::spec::ManifoldSpec;

fn doc_example() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/spec-format.md");
    let doc = std::fs::read_to_string(path).unwrap();
    let start = doc.find("```json\n").expect("json block") + "```json\n".len();
    let len = doc[start..].find("```").unwrap();
    doc[start..start + len].to_string()
}

#[test]
fn example_is_pointwise_slant_with_closed_form_angle() {
    let spec = ManifoldSpec::from_json(&doc_example()).unwrap();
    let loaded = spec.load().unwrap();
    assert_eq!(loaded.points.len(), 12);
    assert_eq!(loaded.tolerances.angle_const, 1e-7);

    let opts = RunOptions { trials: 8, ..RunOptions::default() };
    let r = run(&spec, Command::Classify, opts).unwrap();
    assert!(r.passed());
    let c = r.classification.get().unwrap();
    assert!(c.has("pointwise-slant"));
    assert!(!c.k_slant.holds);
    let d = &c.components[0];
    for (p, t) in c.points.iter().zip(&d.theta) {
        let want = (1.0 / (1.0 + p[0] * p[0]).sqrt()).acos();
        assert!((t - want).abs() < 1e-8, "x1 = {}: {t} vs {want}", p[0]);
    }
}

#[test]
fn digest_ignores_key_order_and_whitespace() {
    let text = doc_example();
    let a = ManifoldSpec::from_json(&text).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let b = ManifoldSpec::from_json(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(a.digest(), b.digest());
}
