use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;

fn with_module<R>(f: impl FnOnce(&Bound<'_, PyModule>) -> PyResult<R>) -> R {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "pyslantkit").unwrap();
        pyslantkit::pyslantkit(&m).unwrap();
        f(&m).unwrap()
    })
}

#[test]
fn gallery_list_has_six_ids() {
    let ids: Vec<String> = with_module(|m| m.getattr("gallery_list")?.call0()?.extract());
    assert_eq!(ids, ["ex1", "ex3", "ex4", "ex5", "ex8", "ex9"]);
}

#[test]
fn classify_through_python_matches_library() {
    let (ok, json): (bool, String) = with_module(|m| {
        let spec: String = m.getattr("gallery_spec")?.call1(("ex3",))?.extract()?;
        m.getattr("run_command")?.call1((spec, "classify"))?.extract()
    });
    assert!(ok);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v["classification"]["labels"]
        .as_array()
        .unwrap()
        .iter()
        .any(|l| l == "k-slant"));
}

#[test]
fn input_errors_raise_value_error() {
    let is_value_error = with_module(|m| {
        let err = m.getattr("run_command")?.call1(("{}", "classify")).unwrap_err();
        let py = m.py();
        Ok(err.is_instance_of::<PyValueError>(py))
    });
    assert!(is_value_error);
}
