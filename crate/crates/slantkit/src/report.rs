//! Run reports: what a CLI command computed, as deterministic JSON or Markdown.

use crate::classifier::{classify, ClassificationReport, Criterion};
use crate::connection::{connection_criterion_report, ConnectionReport, CovariantProbe};
use crate::duality::{build_dual_all, dual_roundtrip_check, DualDecomposition, RoundtripReport};
use crate::error::Result;
use crate::spec::{canonical_json, Loaded, ManifoldSpec};
use crate::structure::{validate_structure, StructureVerdict};
use crate::verifier::{run_identity_suite, SuiteReport};
use serde::Serialize;
use std::fmt::Write as _;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Classify,
    Dual,
    Identities,
}

/// A section either ran or serializes as the string "skipped".
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Section<T> {
    Done(T),
    Skipped(&'static str),
}

impl<T> Section<T> {
    pub fn get(&self) -> Option<&T> {
        match self {
            Section::Done(t) => Some(t),
            Section::Skipped(_) => None,
        }
    }
}

fn skipped<T>() -> Section<T> {
    Section::Skipped("skipped")
}

#[derive(Debug, Clone, Serialize)]
pub struct DualSection {
    pub decomposition: DualDecomposition,
    pub roundtrip: RoundtripReport,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub seed: u64,
    pub trials: usize,
    pub connection: bool,
    /// Keep going after a failed structure check.
    pub force: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: crate::sampling::DEFAULT_SEED,
            trials: 100,
            connection: false,
            force: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: Command,
    pub spec_digest: String,
    pub seed: u64,
    pub structure: Section<StructureVerdict>,
    pub classification: Section<ClassificationReport>,
    pub dual: Section<DualSection>,
    pub identities: Section<SuiteReport>,
    pub connection: Section<ConnectionReport>,
    pub tool_version: String,
}

impl RunReport {
    /// True when nothing that ran reported a mathematical failure.
    pub fn passed(&self) -> bool {
        self.structure.get().is_none_or(|s| s.passed) && self.passed_beyond_structure()
    }

    /// Verdict of everything after the structure check, for forced runs.
    pub fn passed_beyond_structure(&self) -> bool {
        self.classification
            .get()
            .is_none_or(|c| c.valid.holds && c.lattice_violations().is_empty())
            && self.dual.get().is_none_or(|d| d.roundtrip.passed)
            && self.identities.get().is_none_or(|s| s.passed)
            && self.connection.get().is_none_or(|c| c.consistent)
    }

    pub fn to_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("report serializes"))
    }

    pub fn to_markdown(&self) -> String {
        render_markdown(self)
    }
}

/// Runs one command. The structure check always runs first; the later
/// stages are skipped when it fails.
pub fn run(spec: &ManifoldSpec, cmd: Command, opts: RunOptions) -> Result<RunReport> {
    let loaded = spec.load()?;
    run_loaded(&loaded, &spec.digest(), cmd, opts)
}

pub fn run_loaded(l: &Loaded, digest: &str, cmd: Command, opts: RunOptions) -> Result<RunReport> {
    let dec = &l.decomposition;
    let tol = &l.tolerances;
    let structure = validate_structure(dec.structure(), &l.points, opts.trials, tol.structure, opts.seed)?;
    let mut r = RunReport {
        command: cmd,
        spec_digest: digest.to_string(),
        seed: opts.seed,
        structure: Section::Done(structure.clone()),
        classification: skipped(),
        dual: skipped(),
        identities: skipped(),
        connection: skipped(),
        tool_version: TOOL_VERSION.to_string(),
    };
    if (!structure.passed && !opts.force) || cmd == Command::Validate {
        return Ok(r);
    }
    if matches!(cmd, Command::Classify | Command::Dual) {
        r.classification = Section::Done(classify(dec, &l.points, tol, opts.trials.clamp(1, 16), opts.seed)?);
    }
    if cmd == Command::Dual {
        r.dual = Section::Done(DualSection {
            decomposition: build_dual_all(dec, &l.points, tol)?,
            roundtrip: dual_roundtrip_check(dec, &l.points, tol)?,
        });
    }
    if cmd == Command::Identities {
        r.identities = Section::Done(run_identity_suite(dec, &l.points, opts.trials, tol, opts.seed)?);
    }
    if opts.connection {
        let probe = CovariantProbe::from_tolerances(tol);
        r.connection = Section::Done(connection_criterion_report(dec, &probe, &l.points, tol)?);
    }
    Ok(r)
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.3e}"),
        Some(_) => "inf".into(),
        None => "-".into(),
    }
}

fn criterion_row(s: &mut String, name: &str, c: &Criterion) {
    let w = c
        .witness
        .as_ref()
        .map(|w| format!("#{} {}: {}", w.point_index, fmt_point(&w.point), w.detail))
        .unwrap_or_default();
    let _ = writeln!(s, "| {name} | {} | {w} |", yes_no(c.holds));
}

/// e.g. "k-pointwise-slant (k=2); NOT pointwise-k-slant (witness #0 ...); NOT generic (...)".
pub fn verdict_line(c: &ClassificationReport) -> String {
    let mut parts = Vec::new();
    for (name, crit) in [
        ("k-slant", &c.k_slant),
        ("k-pointwise-slant", &c.k_pointwise_slant),
        ("pointwise-k-slant", &c.pointwise_k_slant),
        ("generic", &c.generic),
    ] {
        if crit.holds {
            parts.push(format!("{name} (k={})", c.k));
        } else {
            let w = crit
                .witness
                .as_ref()
                .map(|w| format!(" (witness #{} x={})", w.point_index, fmt_point(&w.point)))
                .unwrap_or_default();
            parts.push(format!("NOT {name}{w}"));
        }
    }
    if !c.valid.holds {
        parts.insert(0, "INVALID decomposition".into());
    }
    parts.join("; ")
}

fn render_markdown(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# slantkit {:?} report\n", r.command);
    let _ = writeln!(s, "- spec digest: `{}`", r.spec_digest);
    let _ = writeln!(s, "- seed: {}", r.seed);
    let _ = writeln!(s, "- tool version: {}", r.tool_version);
    let _ = writeln!(s, "- overall: {}\n", if r.passed() { "PASS" } else { "FAIL" });

    if let Some(st) = r.structure.get() {
        let _ = writeln!(s, "## Structure\n\npassed: {} (tolerance {:e})\n", yes_no(st.passed), st.tolerance);
        let _ = writeln!(s, "| axiom | max residual | witness point |\n|---|---|---|");
        for (name, a) in &st.axioms {
            let _ = writeln!(s, "| {name} | {:.3e} | {} |", a.max_residual, fmt_point(&a.witness_point));
        }
        if let Some((name, a)) = st.worst.as_ref().filter(|_| !st.passed).and_then(|w| st.axioms.get_key_value(w)) {
            let _ = writeln!(
                s,
                "\nwitness: {name} residual {:.3e} at {} with X = {}, Y = {}",
                a.max_residual,
                fmt_point(&a.witness_point),
                fmt_point(&a.witness_x),
                fmt_point(&a.witness_y)
            );
        }
        for f in &st.eval_failures {
            let _ = writeln!(s, "\nevaluation failed at {}: {}", fmt_point(&f.point), f.message);
        }
        s.push('\n');
    }

    if let Some(c) = r.classification.get() {
        let _ = writeln!(s, "## Classification\n\nscope: {}\n", c.scope);
        let _ = writeln!(s, "verdict: {}\n", verdict_line(c));
        let _ = writeln!(s, "labels: {}\n", if c.labels.is_empty() { "(none)".into() } else { c.labels.join(", ") });
        let _ = writeln!(s, "| criterion | holds | witness |\n|---|---|---|");
        for (name, crit) in [
            ("valid", &c.valid),
            ("k-slant", &c.k_slant),
            ("k-pointwise-slant", &c.k_pointwise_slant),
            ("pointwise-k-slant", &c.pointwise_k_slant),
            ("generic", &c.generic),
            ("skew-CR", &c.skew_cr),
            ("CR", &c.cr),
            ("anti-invariant", &c.anti_invariant),
            ("proper", &c.proper),
        ] {
            criterion_row(&mut s, name, crit);
        }
        let lv = c.lattice_violations();
        if !lv.is_empty() {
            let _ = writeln!(s, "\nlattice violations: {}", lv.join("; "));
        }
        for comp in &c.components {
            let _ = writeln!(
                s,
                "\n### {} (rank {}, {:?})\n\n| # | point | lambda | theta (rad) | theta (deg) |\n|---|---|---|---|---|",
                comp.name, comp.rank, comp.kind
            );
            for (i, (t, l)) in comp.theta.iter().zip(&comp.lambda).enumerate() {
                let p = c.points.get(i).map(|p| fmt_point(p)).unwrap_or_default();
                let _ = writeln!(s, "| {i} | {p} | {l:.10} | {t:.10} | {:.6} |", t.to_degrees());
            }
        }
        s.push('\n');
    }

    if let Some(d) = r.dual.get() {
        let _ = writeln!(
            s,
            "## Dual decomposition\n\nround trip: {} (tolerance {:e})\n",
            if d.roundtrip.passed { "pass" } else { "fail" },
            d.roundtrip.tolerance
        );
        let _ = writeln!(s, "| # | point | component | dim | theta (rad) | sum residual |\n|---|---|---|---|---|---|");
        for (i, sl) in d.decomposition.slices.iter().enumerate() {
            for dc in &sl.duals {
                let _ = writeln!(
                    s,
                    "| {i} | {} | {} | {} | {:.10} | {:.1e} |",
                    fmt_point(&sl.point),
                    dc.name,
                    dc.basis.ncols(),
                    dc.theta,
                    sl.sum_residual
                );
            }
            let _ = writeln!(s, "| {i} | {} | H | {} | - | {:.1e} |", fmt_point(&sl.point), sl.h.ncols(), sl.sum_residual);
        }
        s.push('\n');
    }

    if let Some(id) = r.identities.get() {
        let count = |v: &str| id.results.iter().filter(|x| x.verdict == v).count();
        let skipped = id.results.iter().filter(|x| x.verdict.starts_with("skipped")).count();
        let _ = writeln!(
            s,
            "## Identities\n\n{} keys on {} points x {} trials at tolerance {:e}: {} pass, {} fail, {} skipped\n",
            id.results.len(),
            id.points,
            id.trials,
            id.tolerance,
            count("pass"),
            count("fail"),
            skipped
        );
        let _ = writeln!(s, "| key | setting | verdict | max residual |\n|---|---|---|---|");
        for x in &id.results {
            let _ = writeln!(s, "| {} | {} | {} | {} |", x.key, x.setting.as_str(), x.verdict, fmt_opt(x.max_residual));
        }
        for e in &id.dual_errors {
            let _ = writeln!(s, "\ndual unavailable: {e}");
        }
        s.push('\n');
    }

    if let Some(c) = r.connection.get() {
        let _ = writeln!(s, "## Connection criterion\n\nscope: {}; consistent: {}\n", c.scope, yes_no(c.consistent));
        let _ = writeln!(
            s,
            "| component | max nabla f^2 | max X(lambda) in D_i | max X(lambda) on TM | constant (derivative) | constant (classifier) |\n|---|---|---|---|---|---|"
        );
        for k in &c.components {
            let _ = writeln!(
                s,
                "| {} | {:.3e} | {:.3e} | {:.3e} | {} | {} |",
                k.name,
                k.nabla_within,
                k.dlambda_within,
                k.dlambda_tangent,
                yes_no(k.constant_by_derivative),
                k.constant_by_classifier.map(yes_no).unwrap_or("-")
            );
        }
        s.push('\n');
    }
    s
}
