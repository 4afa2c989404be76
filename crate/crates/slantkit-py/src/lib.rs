//! Python bindings. Specs and reports cross the boundary as JSON strings.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use slantkit::gallery::{build_fixture, FixtureId, FixtureParams, ALL_FIXTURES};
use slantkit::report::{run, Command, RunOptions, TOOL_VERSION};
use slantkit::sampling::DEFAULT_SEED;
use slantkit::spec::ManifoldSpec;
use slantkit::Error;

fn to_py(e: Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn command(name: &str) -> PyResult<Command> {
    match name {
        "validate" => Ok(Command::Validate),
        "classify" => Ok(Command::Classify),
        "dual" => Ok(Command::Dual),
        "identities" => Ok(Command::Identities),
        _ => Err(PyValueError::new_err(format!("unknown command `{name}`"))),
    }
}

/// Fixture ids of the built-in gallery.
#[pyfunction]
fn gallery_list() -> Vec<&'static str> {
    ALL_FIXTURES.iter().map(|f| f.as_str()).collect()
}

/// Canonical JSON spec of a gallery fixture.
#[pyfunction]
#[pyo3(signature = (id, k=2, epsilon=-1, gamma=None, delta=None))]
fn gallery_spec(id: &str, k: usize, epsilon: i8, gamma: Option<f64>, delta: Option<f64>) -> PyResult<String> {
    let id: FixtureId = id.parse().map_err(to_py)?;
    let mut p = FixtureParams::new(k, epsilon);
    p.gamma = gamma;
    p.delta = delta;
    let fx = build_fixture(id, p).map_err(to_py)?;
    Ok(ManifoldSpec::from_fixture(&fx).to_json())
}

/// sha256 of the canonical form of a spec.
#[pyfunction]
fn spec_digest(spec_json: &str) -> PyResult<String> {
    Ok(ManifoldSpec::from_json(spec_json).map_err(to_py)?.digest())
}

/// Runs a command and returns `(passed, report_json)`.
#[pyfunction]
#[pyo3(signature = (spec_json, command_name, seed=DEFAULT_SEED, trials=100, connection=false, force=false))]
fn run_command(
    py: Python<'_>,
    spec_json: &str,
    command_name: &str,
    seed: u64,
    trials: usize,
    connection: bool,
    force: bool,
) -> PyResult<(bool, String)> {
    let cmd = command(command_name)?;
    if trials == 0 {
        return Err(PyValueError::new_err("trials must be positive"));
    }
    let spec = ManifoldSpec::from_json(spec_json).map_err(to_py)?;
    let opts = RunOptions {
        seed,
        trials,
        connection,
        force,
    };
    let r = py.detach(|| run(&spec, cmd, opts)).map_err(to_py)?;
    let passed = if force { r.passed_beyond_structure() } else { r.passed() };
    Ok((passed, r.to_json()))
}

#[pymodule]
pub fn pyslantkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", TOOL_VERSION)?;
    m.add_function(wrap_pyfunction!(gallery_list, m)?)?;
    m.add_function(wrap_pyfunction!(gallery_spec, m)?)?;
    m.add_function(wrap_pyfunction!(spec_digest, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    Ok(())
}
