//! Slant spectra and the taxonomy of decompositions.
//!
//! Every verdict is decided on the finite sample set only.

use crate::distribution::{check_f_invariance, Decomposition, InvarianceReport, LocalFrame};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_mat, AmbientPoint, Matrix};
use crate::tolerances::Tolerances;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;

/// Admissible overshoot of eps*lambda outside [0, 1].
const RANGE_SLACK: f64 = 1e-6;
/// cos(theta) below this counts as a right angle.
pub const RIGHT_ANGLE_COS: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub lambda: f64,
    pub alpha: f64,
    pub theta: f64,
    pub multiplicity: usize,
    /// Ambient g-orthonormal basis of the eigenspace.
    #[serde(skip)]
    pub eigenbasis: Matrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlantSpectrum {
    pub point: Vec<f64>,
    /// Ordered by ascending theta.
    pub clusters: Vec<Cluster>,
}

impl SlantSpectrum {
    pub fn signature(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.multiplicity).collect()
    }
}

/// Angle from cos^2 and sin^2 computed independently, accurate at both ends.
fn angle(cos2: f64, sin2: f64) -> f64 {
    sin2.max(0.0).sqrt().atan2(cos2.max(0.0).sqrt())
}

/// Mean of |w v|^2 over the orthonormal columns of `b`.
fn mean_w_sq(lf: &LocalFrame, b: &Matrix) -> f64 {
    if b.ncols() == 0 {
        return 0.0;
    }
    let pb = &lf.phi * b;
    let w = &pb - &lf.p_d * &pb;
    (w.transpose() * &lf.g * &w).trace() / b.ncols() as f64
}

fn check_range(eps: f64, lambda: f64, what: &str) -> Result<()> {
    let el = eps * lambda;
    if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&el) {
        return Err(Error::Model(format!(
            "{what}: eps*lambda = {el} lies outside [0, 1]; the structure or decomposition is invalid"
        )));
    }
    Ok(())
}

fn cluster_values(vals: &[f64], tol: f64) -> Vec<(usize, usize)> {
    // (start, len) runs of ascending eigenvalues with consecutive gaps <= tol
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=vals.len() {
        if i == vals.len() || vals[i] - vals[i - 1] > tol {
            runs.push((start, i - start));
            start = i;
        }
    }
    runs
}

pub fn spectrum_of(lf: &LocalFrame, cluster_tol: f64) -> Result<SlantSpectrum> {
    let (vals, vecs) = sym_eigen_mat(&lf.f2)?;
    let mut clusters = Vec::new();
    for (start, len) in cluster_values(&vals, cluster_tol) {
        let lambda = vals[start..start + len].iter().sum::<f64>() / len as f64;
        check_range(lf.eps, lambda, "spectrum")?;
        let basis = &lf.d * vecs.columns(start, len);
        let cos2 = (lf.eps * lambda).clamp(0.0, 1.0);
        let sin2 = mean_w_sq(lf, &basis);
        clusters.push(Cluster {
            lambda,
            alpha: cos2.sqrt(),
            theta: angle(cos2, sin2),
            multiplicity: len,
            eigenbasis: basis,
        });
    }
    clusters.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    Ok(SlantSpectrum {
        point: lf.point.to_vec(),
        clusters,
    })
}

pub fn slant_spectrum(dec: &Decomposition, p: &AmbientPoint, cluster_tol: f64) -> Result<SlantSpectrum> {
    spectrum_of(&dec.local(p)?, cluster_tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentSample {
    pub lambda: f64,
    pub alpha: f64,
    pub theta: f64,
}

/// Single-cluster data of component `i` of the local frame.
pub fn component_sample(
    lf: &LocalFrame,
    i: usize,
    cluster_tol: f64,
    name: &str,
    point_index: usize,
) -> Result<ComponentSample> {
    let (vals, _) = sym_eigen_mat(&lf.f2_block(i))?;
    let spread = vals.last().unwrap() - vals[0];
    if spread > cluster_tol {
        return Err(Error::Component {
            component: name.to_string(),
            point: point_index,
            eigenvalues: vals,
        });
    }
    let lambda = vals.iter().sum::<f64>() / vals.len() as f64;
    check_range(lf.eps, lambda, name)?;
    let cos2 = (lf.eps * lambda).clamp(0.0, 1.0);
    let sin2 = mean_w_sq(lf, &lf.bases[i]);
    Ok(ComponentSample {
        lambda,
        alpha: cos2.sqrt(),
        theta: angle(cos2, sin2),
    })
}

pub fn slant_function_table(
    dec: &Decomposition,
    i: usize,
    points: &[AmbientPoint],
    cluster_tol: f64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let comps = dec.components();
    let name = comps
        .get(i)
        .ok_or_else(|| Error::Param(format!("no component with index {i}")))?
        .name
        .clone();
    points
        .par_iter()
        .enumerate()
        .map(|(idx, p)| {
            let lf = dec.local(p)?;
            let s = component_sample(&lf, i, cluster_tol, &name, idx)?;
            Ok((p.to_vec(), s.theta))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComponentKind {
    #[serde(rename = "invariant")]
    Invariant,
    #[serde(rename = "slant")]
    Slant,
    #[serde(rename = "pointwise-slant")]
    PointwiseSlant,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentVerdict {
    pub name: String,
    pub rank: usize,
    /// True for D0.
    pub invariant_component: bool,
    pub kind: ComponentKind,
    pub lambda: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl ComponentVerdict {
    pub fn is_right_angle(&self) -> bool {
        self.theta.iter().all(|t| t.cos() < RIGHT_ANGLE_COS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub point_index: usize,
    pub point: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub holds: bool,
    pub witness: Option<Witness>,
}

impl Criterion {
    fn yes() -> Self {
        Self {
            holds: true,
            witness: None,
        }
    }

    fn no(w: Option<Witness>) -> Self {
        Self {
            holds: false,
            witness: w,
        }
    }

    fn and(self, other: &Criterion) -> Self {
        if !self.holds {
            self
        } else if !other.holds {
            Criterion::no(other.witness.clone())
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaFlag {
    pub point_index: usize,
    pub cluster: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub scope: String,
    pub discovery: bool,
    pub points: Vec<Vec<f64>>,
    pub spectra: Vec<SlantSpectrum>,
    /// D0 first, then ascending theta at the first point.
    pub components: Vec<ComponentVerdict>,
    pub k: usize,
    pub invariance: InvarianceReport,
    pub valid: Criterion,
    pub k_slant: Criterion,
    pub k_pointwise_slant: Criterion,
    pub pointwise_k_slant: Criterion,
    pub generic: Criterion,
    pub skew_cr: Criterion,
    pub cr: Criterion,
    pub anti_invariant: Criterion,
    pub proper: Criterion,
    /// Every verdict that holds, including the named special cases.
    pub labels: Vec<String>,
    pub alpha_flags: Vec<AlphaFlag>,
}

impl ClassificationReport {
    pub fn has(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn proper_components(&self) -> impl Iterator<Item = &ComponentVerdict> {
        self.components.iter().filter(|c| !c.invariant_component)
    }

    /// Broken implications of the verdict lattice; empty on a sound report.
    pub fn lattice_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let imp = |a: &Criterion, b: &Criterion, an: &str, bn: &str, v: &mut Vec<String>| {
            if a.holds && !b.holds {
                v.push(format!("{an} holds but {bn} does not"));
            }
        };
        imp(&self.pointwise_k_slant, &self.k_pointwise_slant, "pointwise-k-slant", "k-pointwise-slant", &mut v);
        imp(&self.generic, &self.pointwise_k_slant, "generic", "pointwise-k-slant", &mut v);
        imp(&self.k_slant, &self.pointwise_k_slant, "k-slant", "pointwise-k-slant", &mut v);
        imp(&self.k_slant, &self.k_pointwise_slant, "k-slant", "k-pointwise-slant", &mut v);
        imp(&self.skew_cr, &self.k_slant, "skew-CR", "k-slant", &mut v);
        imp(&self.cr, &self.k_slant, "CR", "k-slant", &mut v);
        if self.cr.holds && (self.skew_cr.holds || self.generic.holds) {
            v.push("CR together with skew-CR or generic".into());
        }
        v
    }
}

struct PointData {
    spectrum: SlantSpectrum,
    comps: Vec<ComponentSample>,
}

fn witness(points: &[AmbientPoint], idx: usize, detail: String) -> Option<Witness> {
    Some(Witness {
        point_index: idx,
        point: points[idx].to_vec(),
        detail,
    })
}

fn classify_kind(theta: &[f64], tol: &Tolerances) -> ComponentKind {
    let max = theta.iter().cloned().fold(f64::MIN, f64::max);
    let min = theta.iter().cloned().fold(f64::MAX, f64::min);
    if max <= tol.angle_const {
        ComponentKind::Invariant
    } else if max - min <= tol.angle_const {
        ComponentKind::Slant
    } else {
        ComponentKind::PointwiseSlant
    }
}

fn verdict(name: String, rank: usize, inv: bool, lambda: Vec<f64>, theta: Vec<f64>, tol: &Tolerances) -> ComponentVerdict {
    let kind = classify_kind(&theta, tol);
    ComponentVerdict {
        name,
        rank,
        invariant_component: inv,
        kind,
        theta_min: theta.iter().cloned().fold(f64::MAX, f64::min),
        theta_max: theta.iter().cloned().fold(f64::MIN, f64::max),
        lambda,
        theta,
    }
}

pub fn classify(
    dec: &Decomposition,
    points: &[AmbientPoint],
    tol: &Tolerances,
    trials: usize,
    seed: u64,
) -> Result<ClassificationReport> {
    if points.is_empty() {
        return Err(Error::Param("classification needs at least one sample point".into()));
    }
    let invariance = check_f_invariance(dec, points, trials, tol.invariance, seed);
    if let Some(e) = invariance.errors.first() {
        return Err(Error::Model(e.clone()));
    }
    if !invariance.passed {
        let w = invariance.witness.clone();
        return Err(Error::Model(format!(
            "f does not preserve the components (leak {:.3e}, cross term {:.3e}){}",
            invariance.max_leak,
            invariance.max_cross,
            w.map(|w| format!(" at {:?} in `{}`", w.point, w.component)).unwrap_or_default()
        )));
    }
    let names: Vec<String> = dec.components().iter().map(|c| c.name.clone()).collect();
    let data: Vec<PointData> = points
        .par_iter()
        .enumerate()
        .map(|(idx, p)| {
            let lf = dec.local(p)?;
            let spectrum = spectrum_of(&lf, tol.cluster)?;
            let comps = if dec.is_discovery() {
                vec![]
            } else {
                (0..lf.bases.len())
                    .map(|i| component_sample(&lf, i, tol.cluster, &names[i], idx))
                    .collect::<Result<Vec<_>>>()?
            };
            Ok(PointData { spectrum, comps })
        })
        .collect::<Result<Vec<_>>>()?;

    let spectra: Vec<SlantSpectrum> = data.iter().map(|d| d.spectrum.clone()).collect();
    let signature_ok = spectra.iter().all(|s| s.signature() == spectra[0].signature());
    let signature_witness = spectra
        .iter()
        .position(|s| s.signature() != spectra[0].signature())
        .and_then(|i| {
            witness(
                points,
                i,
                format!(
                    "eigenvalue multiplicities {:?} differ from {:?} at the first point",
                    spectra[i].signature(),
                    spectra[0].signature()
                ),
            )
        });

    let mut valid = Criterion::yes();
    let mut components: Vec<ComponentVerdict> = Vec::new();
    if dec.is_discovery() {
        if !signature_ok {
            valid = Criterion::no(signature_witness.clone());
        } else {
            let m = spectra[0].clusters.len();
            let mut proper_idx = 0;
            for c in 0..m {
                let theta: Vec<f64> = spectra.iter().map(|s| s.clusters[c].theta).collect();
                let lambda: Vec<f64> = spectra.iter().map(|s| s.clusters[c].lambda).collect();
                let inv = theta.iter().all(|t| *t <= tol.angle_const);
                let name = if inv {
                    "D0".to_string()
                } else {
                    proper_idx += 1;
                    format!("D{proper_idx}")
                };
                components.push(verdict(name, spectra[0].clusters[c].multiplicity, inv, lambda, theta, tol));
            }
        }
    } else {
        let comps = dec.components();
        for (i, c) in comps.iter().enumerate() {
            let theta: Vec<f64> = data.iter().map(|d| d.comps[i].theta).collect();
            let lambda: Vec<f64> = data.iter().map(|d| d.comps[i].lambda).collect();
            let inv = dec.has_invariant() && i == 0;
            components.push(verdict(c.name.clone(), c.rank(), inv, lambda, theta, tol));
        }
    }
    // D0 first, then ascending theta at the first point (stable)
    components.sort_by(|a, b| {
        b.invariant_component
            .cmp(&a.invariant_component)
            .then(a.theta[0].total_cmp(&b.theta[0]))
    });

    for c in &components {
        if !valid.holds {
            break;
        }
        if c.invariant_component {
            if let Some(i) = c.theta.iter().position(|t| *t > tol.angle_const) {
                valid = Criterion::no(witness(
                    points,
                    i,
                    format!("declared invariant component `{}` has angle {}", c.name, c.theta[i]),
                ));
            }
        } else if let Some(i) = c.theta.iter().position(|t| *t <= tol.angle_const) {
            valid = Criterion::no(witness(
                points,
                i,
                format!("proper component `{}` is invariant here (angle {})", c.name, c.theta[i]),
            ));
        }
    }

    let proper: Vec<&ComponentVerdict> = components.iter().filter(|c| !c.invariant_component).collect();
    let k = proper.len();
    let has_d0 = components.iter().any(|c| c.invariant_component);

    // k-pointwise-slant: pairwise distinct as functions
    let mut kps = valid.clone();
    'outer: for a in 0..k {
        for b in a + 1..k {
            let differs = (0..points.len())
                .any(|p| (proper[a].theta[p] - proper[b].theta[p]).abs() > tol.angle_distinct);
            if !differs {
                kps = Criterion::no(witness(
                    points,
                    0,
                    format!(
                        "`{}` and `{}` have the same slant function on all samples",
                        proper[a].name, proper[b].name
                    ),
                ))
                .and(&valid);
                break 'outer;
            }
        }
    }

    // pointwise-k-slant: pairwise distinct at every point
    let mut pks = valid.clone();
    'outer2: for p in 0..points.len() {
        for a in 0..k {
            for b in a + 1..k {
                if (proper[a].theta[p] - proper[b].theta[p]).abs() <= tol.angle_distinct {
                    pks = Criterion::no(witness(
                        points,
                        p,
                        format!(
                            "`{}` and `{}` share the angle {:.9}",
                            proper[a].name, proper[b].name, proper[a].theta[p]
                        ),
                    ))
                    .and(&valid);
                    break 'outer2;
                }
            }
        }
    }

    // k-slant: constant proper angles, pairwise distinct
    let mut ks = pks.clone();
    if ks.holds {
        if let Some(c) = proper.iter().find(|c| c.kind != ComponentKind::Slant) {
            let i = c
                .theta
                .iter()
                .enumerate()
                .max_by(|x, y| (x.1 - c.theta[0]).abs().total_cmp(&(y.1 - c.theta[0]).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            ks = Criterion::no(witness(
                points,
                i,
                format!(
                    "angle of `{}` varies over [{:.9}, {:.9}]",
                    c.name, c.theta_min, c.theta_max
                ),
            ));
        }
    }

    let all_right = k > 0 && proper.iter().all(|c| c.is_right_angle());
    let cr = if ks.holds && has_d0 && all_right {
        Criterion::yes()
    } else {
        Criterion::no(None)
    };
    let anti = if ks.holds && !has_d0 && all_right {
        Criterion::yes()
    } else {
        Criterion::no(None)
    };

    // eigenvalue-cluster conditions on the spectrum of f^2 on D
    let eps = dec.structure().eps();
    let special = |l: f64| {
        let el = eps * l;
        if el.abs() <= tol.cluster {
            Some(0u8)
        } else if (el - 1.0).abs() <= tol.cluster {
            Some(1u8)
        } else {
            None
        }
    };
    let mut alpha_flags = Vec::new();
    let generic = if !valid.holds {
        valid.clone()
    } else if !signature_ok {
        Criterion::no(signature_witness.clone())
    } else {
        let m = spectra[0].clusters.len();
        let mut crit = Criterion::yes();
        let mut has_pointwise_open = false;
        for c in 0..m {
            let lam: Vec<f64> = spectra.iter().map(|s| s.clusters[c].lambda).collect();
            let th: Vec<f64> = spectra.iter().map(|s| s.clusters[c].theta).collect();
            let al: Vec<f64> = spectra.iter().map(|s| s.clusters[c].alpha).collect();
            if crit.holds {
                if let Some(p) = lam.iter().position(|l| special(*l).is_some()) {
                    let class = special(lam[p]);
                    if let Some(q) = lam.iter().position(|l| special(*l) != class) {
                        crit = Criterion::no(witness(
                            points,
                            q,
                            format!(
                                "eigenvalue {} of f^2 takes the special value {} at point #{p} but {} here",
                                c + 1,
                                lam[p],
                                lam[q]
                            ),
                        ));
                    }
                }
            }
            let non_constant = classify_kind(&th, tol) == ComponentKind::PointwiseSlant;
            let open = al
                .iter()
                .all(|a| *a > tol.generic_margin && *a < 1.0 - tol.generic_margin);
            if non_constant {
                for (p, a) in al.iter().enumerate() {
                    if *a <= tol.generic_margin * 10.0 || *a >= 1.0 - tol.generic_margin * 10.0 {
                        alpha_flags.push(AlphaFlag {
                            point_index: p,
                            cluster: c,
                            alpha: *a,
                        });
                    }
                }
            }
            if non_constant && open {
                has_pointwise_open = true;
            }
        }
        if crit.holds && !has_pointwise_open {
            crit = Criterion::no(witness(
                points,
                0,
                "no non-constant eigenvalue function with alpha in (0, 1) on all samples".into(),
            ));
        }
        crit.and(&pks)
    };

    let spectrum_constant = signature_ok
        && (0..spectra[0].clusters.len()).all(|c| {
            let th: Vec<f64> = spectra.iter().map(|s| s.clusters[c].theta).collect();
            classify_kind(&th, tol) != ComponentKind::PointwiseSlant
        });
    let skew_cr = if ks.holds && spectrum_constant && !cr.holds && !anti.holds {
        Criterion::yes()
    } else if !ks.holds {
        Criterion::no(ks.witness.clone())
    } else {
        Criterion::no(None)
    };
    let proper_crit = if valid.holds && !has_d0 {
        Criterion::yes()
    } else {
        Criterion::no(None)
    };

    let mut labels = Vec::new();
    let mut push = |c: &Criterion, l: &str| {
        if c.holds {
            labels.push(l.to_string());
        }
    };
    push(&ks, "k-slant");
    push(&kps, "k-pointwise-slant");
    push(&pks, "pointwise-k-slant");
    push(&generic, "generic");
    push(&skew_cr, "skew-CR");
    push(&cr, "CR");
    push(&proper_crit, "proper");
    if ks.holds {
        let any_right = proper.iter().any(|c| c.is_right_angle());
        match (k, has_d0) {
            (1, false) => {
                labels.push("slant".into());
                if all_right {
                    labels.push("anti-invariant".into());
                }
            }
            (1, true) => labels.push(if all_right { "semi-invariant" } else { "semi-slant" }.into()),
            (2, false) => {
                labels.push("bi-slant".into());
                if any_right {
                    labels.push("hemi-slant".into());
                }
            }
            (2, true) => labels.push("almost-bi-slant".into()),
            _ => {}
        }
    } else if pks.holds {
        let any_right = proper.iter().any(|c| c.is_right_angle());
        match (k, has_d0) {
            (1, false) => labels.push("pointwise-slant".into()),
            (1, true) if !all_right => labels.push("pointwise-semi-slant".into()),
            (2, false) => {
                labels.push("pointwise-bi-slant".into());
                if any_right {
                    labels.push("pointwise-hemi-slant".into());
                }
            }
            _ => {}
        }
    }

    Ok(ClassificationReport {
        scope: "verdicts hold on the sampled points only".into(),
        discovery: dec.is_discovery(),
        points: points.iter().map(|p| p.to_vec()).collect(),
        spectra,
        components,
        k,
        invariance,
        valid,
        k_slant: ks,
        k_pointwise_slant: kps,
        pointwise_k_slant: pks,
        generic,
        skew_cr,
        cr,
        anti_invariant: anti,
        proper: proper_crit,
        labels,
        alpha_flags,
    })
}

/// theta from a cosine, for closed-form oracles.
pub fn theta_from_cos(c: f64) -> f64 {
    if c <= 0.0 {
        FRAC_PI_2
    } else {
        c.min(1.0).acos()
    }
}
