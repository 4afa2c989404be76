use clap::{Args, Parser, Subcommand};
use slantkit::gallery::{build_fixture, FixtureId, FixtureParams, ALL_FIXTURES};
use slantkit::manifest::{manifest_check, parse_manifest, render_markdown, MANIFEST};
use slantkit::report::{run_loaded, Command, RunOptions, RunReport};
use slantkit::sampling::DEFAULT_SEED;
use slantkit::spec::ManifoldSpec;
use slantkit::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "slantkit", version, about = "Slant-type distributions on epsilon-structures")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the structure axioms.
    Validate(RunArgs),
    /// Slant angles and the taxonomy verdicts.
    Classify(RunArgs),
    /// Dual decomposition and its round trip.
    Dual(RunArgs),
    /// The identity registry on sampled points.
    Identities(IdentityArgs),
    /// Built-in example fixtures.
    Gallery(GalleryArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON manifold spec.
    spec: Option<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Random trials per point.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Run the connection criterion (flat metric and a mask required).
    #[arg(long)]
    connection: bool,
    /// Keep going after a failed structure check.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    cluster_tol: Option<f64>,
    #[arg(long)]
    angle_tol: Option<f64>,
    #[arg(long)]
    distinct_tol: Option<f64>,
}

#[derive(Args)]
struct IdentityArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Print the registry manifest as Markdown and exit.
    #[arg(long, conflicts_with = "spec")]
    manifest_markdown: bool,
    /// Cross-check the manifest against the compiled registry and exit.
    #[arg(long, conflicts_with = "spec")]
    manifest_check: bool,
}

#[derive(Args)]
struct GalleryArgs {
    /// `list`, or a fixture id.
    target: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
    epsilon: i8,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Write the spec here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

enum Failure {
    Input(String),
    Math(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Math(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match dispatch(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Math(m)) => {
            eprintln!("failure: {m}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("SLANTKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("SLANTKIT_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn dispatch(cmd: Cmd) -> Result<bool, Failure> {
    match cmd {
        Cmd::Validate(a) => run_cmd(Command::Validate, &a),
        Cmd::Classify(a) => run_cmd(Command::Classify, &a),
        Cmd::Dual(a) => run_cmd(Command::Dual, &a),
        Cmd::Identities(a) => identities(a),
        Cmd::Gallery(a) => gallery(a),
    }
}

fn read_spec(path: &Path) -> Result<ManifoldSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(ManifoldSpec::from_json(&text)?)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn run_cmd(cmd: Command, a: &RunArgs) -> Result<bool, Failure> {
    if a.trials == 0 {
        return Err(Failure::Input("--trials must be positive".into()));
    }
    let path = a.spec.as_deref().ok_or_else(|| Failure::Input("a spec path is required".into()))?;
    let spec = read_spec(path)?;
    let mut loaded = spec.load()?;
    let t = &mut loaded.tolerances;
    for (flag, v, slot) in [
        ("--cluster-tol", a.cluster_tol, &mut t.cluster),
        ("--angle-tol", a.angle_tol, &mut t.angle_const),
        ("--distinct-tol", a.distinct_tol, &mut t.angle_distinct),
    ] {
        if let Some(v) = v {
            if !(v.is_finite() && v > 0.0) {
                return Err(Failure::Input(format!("{flag} must be a positive number")));
            }
            *slot = v;
        }
    }
    let opts = RunOptions {
        seed: a.seed,
        trials: a.trials,
        connection: a.connection,
        force: a.force,
    };
    let report = run_loaded(&loaded, &spec.digest(), cmd, opts)?;
    emit(&report, a.json.as_deref())?;
    Ok(if a.force { report.passed_beyond_structure() } else { report.passed() })
}

fn emit(report: &RunReport, json: Option<&Path>) -> Result<(), Failure> {
    if let Some(p) = json {
        write_file(p, &report.to_json())?;
    }
    print!("{}", report.to_markdown());
    Ok(())
}

fn identities(a: IdentityArgs) -> Result<bool, Failure> {
    if a.manifest_markdown {
        let entries = parse_manifest(MANIFEST)?;
        print!("{}", render_markdown(&entries));
        return Ok(true);
    }
    if a.manifest_check {
        let r = manifest_check()?;
        print!("{}", r.to_json());
        return Ok(r.passed);
    }
    run_cmd(Command::Identities, &a.run)
}

fn gallery(a: GalleryArgs) -> Result<bool, Failure> {
    if a.target == "list" {
        for id in ALL_FIXTURES {
            println!("{id}\t{}", id.description());
        }
        return Ok(true);
    }
    let id: FixtureId = a.target.parse()?;
    let mut params = FixtureParams::new(a.k, a.epsilon);
    params.gamma = a.gamma;
    params.delta = a.delta;
    let fx = build_fixture(id, params)?;
    let text = ManifoldSpec::from_fixture(&fx).to_json();
    match &a.json {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(true)
}
