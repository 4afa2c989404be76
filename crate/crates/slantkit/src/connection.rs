//! Connection criteria for flat ambient space: finite-difference covariant
//! derivatives of f^2 and directional derivatives of the eigenvalues.
//!
//! In Euclidean coordinates the Levi-Civita connection is the coordinate
//! derivative, so (nabla_X f^2)Y with Y extended constantly is just the
//! derivative of the matrix field F^2 along X applied to Y.

use crate::classifier::{classify, component_sample, spectrum_of, ComponentKind};
use crate::distribution::Decomposition;
use crate::error::{Error, Result};
use crate::linalg::{projector_unchecked, AmbientPoint, Matrix, Vector};
use crate::tolerances::Tolerances;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovariantProbe {
    pub h: f64,
    pub zero_threshold: f64,
}

impl Default for CovariantProbe {
    fn default() -> Self {
        Self {
            h: 1e-5,
            zero_threshold: 1e-4,
        }
    }
}

impl CovariantProbe {
    pub fn from_tolerances(tol: &Tolerances) -> Self {
        Self {
            h: tol.fd_step,
            zero_threshold: tol.zero_threshold,
        }
    }
}

fn require_flat(dec: &Decomposition) -> Result<()> {
    if !dec.structure().is_euclidean() {
        return Err(Error::Unsupported(
            "connection checks need the euclidean metric (flat ambient space)".into(),
        ));
    }
    Ok(())
}

fn require_mask(dec: &Decomposition) -> Result<()> {
    if dec.mask().is_none() {
        return Err(Error::Unsupported(
            "connection checks need a submanifold mask to pick tangent directions".into(),
        ));
    }
    Ok(())
}

fn shifted(p: &AmbientPoint, x: &Vector, t: f64) -> Result<AmbientPoint> {
    AmbientPoint::from_vector(p.coords() + x * t)
}

fn f2_at(dec: &Decomposition, p: &AmbientPoint) -> Result<Matrix> {
    Ok(dec.local(p)?.f2_ambient())
}

/// (nabla_X f^2)Y at p, with Y extended constantly in ambient coordinates.
pub fn nabla_f2(
    dec: &Decomposition,
    probe: &CovariantProbe,
    p: &AmbientPoint,
    x: &Vector,
    y: &Vector,
) -> Result<Vector> {
    require_flat(dec)?;
    let n = p.dim();
    if x.len() != n || y.len() != n {
        return Err(Error::Dimension(format!("probe vectors must have length {n}")));
    }
    if probe.h <= 0.0 {
        return Err(Error::Param("finite-difference step must be positive".into()));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Ok(Vector::zeros(n));
    }
    let plus = f2_at(dec, &shifted(p, x, probe.h)?)?;
    let minus = f2_at(dec, &shifted(p, x, -probe.h)?)?;
    Ok((plus - minus) * y / (2.0 * probe.h))
}

/// One eigenvalue function being differentiated.
#[derive(Debug, Clone)]
enum Track {
    /// Declared component index.
    Declared(usize),
    /// Discovery cluster, followed by nearest eigenvalue.
    Cluster(f64),
}

fn lambda_at(dec: &Decomposition, p: &AmbientPoint, track: &Track, tol: &Tolerances) -> Result<f64> {
    let lf = dec.local(p)?;
    match track {
        Track::Declared(i) => {
            let name = &dec.components()[*i].name;
            Ok(component_sample(&lf, *i, tol.cluster, name, 0)?.lambda)
        }
        Track::Cluster(l0) => {
            let spec = spectrum_of(&lf, tol.cluster)?;
            spec.clusters
                .iter()
                .map(|c| c.lambda)
                .min_by(|a, b| (a - l0).abs().total_cmp(&(b - l0).abs()))
                .ok_or_else(|| Error::Model("empty spectrum".into()))
        }
    }
}

fn d_lambda(
    dec: &Decomposition,
    p: &AmbientPoint,
    x: &Vector,
    track: &Track,
    probe: &CovariantProbe,
    tol: &Tolerances,
) -> Result<f64> {
    let a = lambda_at(dec, &shifted(p, x, probe.h)?, track, tol)?;
    let b = lambda_at(dec, &shifted(p, x, -probe.h)?, track, tol)?;
    Ok((a - b) / (2.0 * probe.h))
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentConnection {
    pub name: String,
    /// max |(nabla_X f^2)Y| over X, Y in the component.
    pub nabla_within: f64,
    /// max |X(lambda)| over X in the component.
    pub dlambda_within: f64,
    /// max |X(lambda)| over all tangent directions.
    pub dlambda_tangent: f64,
    pub witness_point: Vec<f64>,
    /// Index into the mask of the direction attaining `dlambda_tangent`.
    pub witness_direction: Option<usize>,
    /// Sampled hypothesis: |(I - P_i) nabla_X Y| for frame fields X, Y of
    /// the component. `None` in discovery mode.
    pub frame_closure: Option<f64>,
    pub constant_by_derivative: bool,
    pub constant_by_classifier: Option<bool>,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectionReport {
    pub scope: String,
    pub probe: CovariantProbe,
    pub components: Vec<ComponentConnection>,
    /// Every component with vanishing derivatives is classified constant,
    /// and conversely.
    pub consistent: bool,
}

struct PointComp {
    nabla: f64,
    dl_in: f64,
    dl_tm: f64,
    dir: Option<usize>,
    closure: Option<f64>,
}

pub fn connection_criterion_report(
    dec: &Decomposition,
    probe: &CovariantProbe,
    points: &[AmbientPoint],
    tol: &Tolerances,
) -> Result<ConnectionReport> {
    require_flat(dec)?;
    require_mask(dec)?;
    if points.is_empty() {
        return Err(Error::Param("connection report needs at least one point".into()));
    }
    let mask = dec.mask_directions();

    // components and their tracks, fixed at the first point
    let lf0 = dec.local(&points[0])?;
    let mut names = Vec::new();
    let mut tracks = Vec::new();
    if dec.is_discovery() {
        let spec = spectrum_of(&lf0, tol.cluster)?;
        let mut proper = 0;
        for c in &spec.clusters {
            if c.theta <= tol.angle_const {
                names.push("D0".to_string());
            } else {
                proper += 1;
                names.push(format!("D{proper}"));
            }
            tracks.push(Track::Cluster(c.lambda));
        }
    } else {
        for (i, c) in dec.components().iter().enumerate() {
            names.push(c.name.clone());
            tracks.push(Track::Declared(i));
        }
    }

    let per_point: Vec<Vec<PointComp>> = points
        .par_iter()
        .map(|p| -> Result<Vec<PointComp>> {
            let lf = dec.local(p)?;
            let spec = if dec.is_discovery() {
                Some(spectrum_of(&lf, tol.cluster)?)
            } else {
                None
            };
            let mut out = Vec::new();
            for track in &tracks {
                let (basis, track_here) = match (track, &spec) {
                    (Track::Declared(i), _) => (lf.bases[*i].clone(), track.clone()),
                    (Track::Cluster(l0), Some(s)) => {
                        let c = s
                            .clusters
                            .iter()
                            .min_by(|a, b| (a.lambda - l0).abs().total_cmp(&(b.lambda - l0).abs()))
                            .ok_or_else(|| Error::Model("empty spectrum".into()))?;
                        (c.eigenbasis.clone(), Track::Cluster(c.lambda))
                    }
                    _ => unreachable!(),
                };
                let mut nabla = 0.0f64;
                let mut dl_in = 0.0f64;
                for a in 0..basis.ncols() {
                    let x = basis.column(a).into_owned();
                    dl_in = dl_in.max(d_lambda(dec, p, &x, &track_here, probe, tol)?.abs());
                    let plus = f2_at(dec, &shifted(p, &x, probe.h)?)?;
                    let minus = f2_at(dec, &shifted(p, &x, -probe.h)?)?;
                    let dm = (plus - minus) / (2.0 * probe.h);
                    for b in 0..basis.ncols() {
                        let y = basis.column(b).into_owned();
                        nabla = nabla.max((&dm * &y).amax());
                    }
                }
                let mut dl_tm = 0.0f64;
                let mut dir = None;
                for j in 0..mask.ncols() {
                    let x = mask.column(j).into_owned();
                    let v = d_lambda(dec, p, &x, &track_here, probe, tol)?.abs();
                    if dir.is_none() || v > dl_tm {
                        dl_tm = v;
                        dir = Some(j);
                    }
                }
                let closure = match track {
                    Track::Declared(i) => Some(frame_closure(dec, *i, p, probe, &lf.g)?),
                    Track::Cluster(_) => None,
                };
                out.push(PointComp {
                    nabla,
                    dl_in,
                    dl_tm,
                    dir,
                    closure,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let verdicts = classify(dec, points, tol, 8, crate::sampling::DEFAULT_SEED).ok();
    let mut components = Vec::new();
    for (ci, name) in names.iter().enumerate() {
        let mut nabla = 0.0f64;
        let mut dl_in = 0.0f64;
        let mut dl_tm = 0.0f64;
        let mut wp = 0;
        let mut wd = None;
        let mut closure: Option<f64> = None;
        for (pi, row) in per_point.iter().enumerate() {
            let c = &row[ci];
            nabla = nabla.max(c.nabla);
            dl_in = dl_in.max(c.dl_in);
            if pi == 0 || c.dl_tm > dl_tm {
                dl_tm = c.dl_tm;
                wp = pi;
                wd = c.dir;
            }
            if let Some(v) = c.closure {
                closure = Some(closure.map_or(v, |o| o.max(v)));
            }
        }
        let constant_by_derivative = dl_tm <= probe.zero_threshold;
        let constant_by_classifier = verdicts.as_ref().and_then(|r| {
            r.components
                .iter()
                .find(|c| &c.name == name)
                .map(|c| c.kind != ComponentKind::PointwiseSlant)
        });
        components.push(ComponentConnection {
            name: name.clone(),
            nabla_within: nabla,
            dlambda_within: dl_in,
            dlambda_tangent: dl_tm,
            witness_point: points[wp].to_vec(),
            witness_direction: wd,
            frame_closure: closure,
            constant_by_derivative,
            constant_by_classifier,
            consistent: constant_by_classifier.is_none_or(|c| c == constant_by_derivative),
        });
    }
    Ok(ConnectionReport {
        scope: "on sampled points".into(),
        probe: *probe,
        consistent: components.iter().all(|c| c.consistent),
        components,
    })
}

/// max |(I - P_i) d_X Y| over pairs of raw frame fields of component i.
fn frame_closure(dec: &Decomposition, i: usize, p: &AmbientPoint, probe: &CovariantProbe, g: &Matrix) -> Result<f64> {
    let frame = dec.components()[i];
    let raw = frame.raw_at(p)?;
    let q = crate::linalg::gram_schmidt_mat(g, &raw)?;
    let proj = projector_unchecked(g, &q);
    let mut worst = 0.0f64;
    for a in 0..raw.ncols() {
        let x = raw.column(a).into_owned();
        let plus = frame.raw_at(&shifted(p, &x, probe.h)?)?;
        let minus = frame.raw_at(&shifted(p, &x, -probe.h)?)?;
        let dy = (plus - minus) / (2.0 * probe.h);
        let leak = &dy - &proj * &dy;
        worst = worst.max(leak.amax());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{build_fixture, FixtureId, FixtureParams};

    fn e(n: usize, i: usize) -> Vector {
        let mut v = Vector::zeros(n);
        v[i] = 1.0;
        v
    }

    #[test]
    fn constant_fixtures_have_parallel_f2() {
        for id in [FixtureId::Ex1, FixtureId::Ex3] {
            let fx = build_fixture(id, FixtureParams::new(3, -1)).unwrap();
            let r = connection_criterion_report(
                &fx.decomposition,
                &CovariantProbe::default(),
                &fx.sample_points(5, 3),
                &Tolerances::default(),
            )
            .unwrap();
            assert!(r.consistent);
            for c in &r.components {
                assert!(c.nabla_within <= 1e-6 && c.dlambda_tangent <= 1e-6, "{id}: {c:?}");
                assert_eq!(c.constant_by_classifier, Some(true));
            }
        }
    }

    #[test]
    fn ex5_lambda_moves_along_e1() {
        let fx = build_fixture(FixtureId::Ex5, FixtureParams::new(2, 1).gamma(1.0)).unwrap();
        let n = fx.dim();
        let p = AmbientPoint::new(e(n, 0).as_slice().to_vec()).unwrap();
        let tol = Tolerances::default();
        let probe = CovariantProbe::default();
        let dl = d_lambda(&fx.decomposition, &p, &e(n, 0), &Track::Declared(1), &probe, &tol).unwrap();
        // oracle: derivative of the closed-form eigenvalue cos^2(theta_1)
        let lam = |t: f64| {
            let q = AmbientPoint::new({
                let mut v = vec![0.0; n];
                v[0] = t;
                v
            })
            .unwrap();
            fx.closed_form_theta(1, &q).unwrap().cos().powi(2)
        };
        let h = 1e-4;
        let want = (lam(1.0 + h) - lam(1.0 - h)) / (2.0 * h);
        assert!((dl - want).abs() < 1e-6, "{dl} vs {want}");
        assert!(dl.abs() > 1e-2);
    }

    #[test]
    fn pointwise_fixtures_are_consistent() {
        for (id, g) in [(FixtureId::Ex5, 1.0), (FixtureId::Ex9, 1.0), (FixtureId::Ex4, 0.5), (FixtureId::Ex8, 2.0)] {
            let fx = build_fixture(id, FixtureParams::new(2, 1).gamma(g)).unwrap();
            let r = connection_criterion_report(
                &fx.decomposition,
                &CovariantProbe::default(),
                &fx.sample_points(5, 2),
                &Tolerances::default(),
            )
            .unwrap();
            assert!(r.consistent, "{id}: {r:#?}");
            assert!(r.components.iter().any(|c| !c.constant_by_derivative));
        }
    }

    #[test]
    fn zero_direction_gives_zero() {
        let fx = build_fixture(FixtureId::Ex4, FixtureParams::new(2, -1)).unwrap();
        let n = fx.dim();
        let p = AmbientPoint::origin(n);
        let v = nabla_f2(&fx.decomposition, &CovariantProbe::default(), &p, &Vector::zeros(n), &e(n, 2)).unwrap();
        assert_eq!(v, Vector::zeros(n));
    }

    #[test]
    fn nabla_is_additive_in_x() {
        let fx = build_fixture(FixtureId::Ex9, FixtureParams::new(2, 1).gamma(2.0)).unwrap();
        let n = fx.dim();
        let mut c = vec![0.0; n];
        c[0] = 0.7;
        c[2] = -0.4;
        let p = AmbientPoint::new(c).unwrap();
        let probe = CovariantProbe::default();
        let (x1, x2, y) = (e(n, 0), e(n, 3), e(n, 2));
        let a = nabla_f2(&fx.decomposition, &probe, &p, &x1, &y).unwrap();
        let b = nabla_f2(&fx.decomposition, &probe, &p, &x2, &y).unwrap();
        let ab = nabla_f2(&fx.decomposition, &probe, &p, &(&x1 + &x2), &y).unwrap();
        assert!((ab - a - b).amax() < 1e-6);
    }

    #[test]
    fn curved_metric_is_unsupported() {
        use crate::structure::{Kind, StructureField};
        let sv = |rows: &[[&str; 2]]| -> Vec<Vec<String>> {
            rows.iter().map(|r| r.iter().map(|x| x.to_string()).collect()).collect()
        };
        let metric = sv(&[["1 + x1^2", "0"], ["0", "1 + x1^2"]]);
        let s = StructureField::new(2, -1, Kind::HermitianLike, &sv(&[["0", "1"], ["-1", "0"]]), Some(&metric), None)
            .unwrap();
        let d = crate::distribution::DistributionFrame::parse("D", &[vec!["1", "0"]], 2).unwrap();
        let dec = Decomposition::new(s, None, vec![d], None).unwrap();
        let r = nabla_f2(&dec, &CovariantProbe::default(), &AmbientPoint::origin(2), &e(2, 0), &e(2, 0));
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}
