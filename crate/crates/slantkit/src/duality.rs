//! Dual distributions: w(Di) inside the complement G, and the invariant
//! remainder H with G = (+) w(Di) (+) H.

use crate::classifier::{component_sample, spectrum_of};
use crate::distribution::{Decomposition, LocalFrame};
use crate::error::{Error, Result};
use crate::linalg::{
    extend_orthonormal, gram_schmidt_mat, hstack, orthogonal_complement, principal_angles_mat,
    projector_unchecked, AmbientPoint, Matrix,
};
use crate::tolerances::Tolerances;
use rayon::prelude::*;
use serde::Serialize;

/// One slant piece of D at a point: the declared component, or in discovery
/// mode an eigenspace cluster of f^2.
#[derive(Debug, Clone)]
pub struct SlantPart {
    pub name: String,
    pub lambda: f64,
    pub theta: f64,
    /// Ambient g-orthonormal basis.
    pub basis: Matrix,
}

/// Splits D at a point into its invariant part and slant parts.
pub fn slant_parts(
    dec: &Decomposition,
    lf: &LocalFrame,
    tol: &Tolerances,
) -> Result<(Matrix, Vec<SlantPart>)> {
    let n = lf.n();
    if dec.is_discovery() {
        let spec = spectrum_of(lf, tol.cluster)?;
        let mut inv = Vec::new();
        let mut parts = Vec::new();
        for c in spec.clusters {
            if c.theta <= tol.angle_const {
                inv.push(c.eigenbasis);
            } else {
                parts.push(SlantPart {
                    name: format!("D{}", parts.len() + 1),
                    lambda: c.lambda,
                    theta: c.theta,
                    basis: c.eigenbasis,
                });
            }
        }
        let refs: Vec<&Matrix> = inv.iter().collect();
        return Ok((hstack(&refs, n), parts));
    }
    let comps = dec.components();
    let first = usize::from(dec.has_invariant());
    let inv = if first == 1 {
        lf.bases[0].clone()
    } else {
        Matrix::zeros(n, 0)
    };
    let mut parts = Vec::new();
    for (i, c) in comps.iter().enumerate().skip(first) {
        let s = component_sample(lf, i, tol.cluster, &c.name, 0)?;
        parts.push(SlantPart {
            name: c.name.clone(),
            lambda: s.lambda,
            theta: s.theta,
            basis: lf.bases[i].clone(),
        });
    }
    Ok((inv, parts))
}

fn columns(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|j| m.column(j).iter().copied().collect()).collect()
}

fn ser_columns<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    columns(m).serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct DualComponent {
    pub name: String,
    pub theta: f64,
    #[serde(serialize_with = "ser_columns")]
    pub basis: Matrix,
}

/// The dual decomposition at one point.
#[derive(Debug, Clone, Serialize)]
pub struct DualSlice {
    pub point: Vec<f64>,
    #[serde(serialize_with = "ser_columns")]
    pub g_frame: Matrix,
    pub duals: Vec<DualComponent>,
    #[serde(serialize_with = "ser_columns")]
    pub h: Matrix,
    /// Residual of G = (+) w(Di) (+) H as projectors.
    pub sum_residual: f64,
    /// max |f u| over unit u in H.
    pub f_h_residual: f64,
}

/// Builds the dual at `p`. A proper component on which w is not injective,
/// or a leak of f on H, is a model error.
pub fn build_dual(dec: &Decomposition, p: &AmbientPoint, tol: &Tolerances) -> Result<DualSlice> {
    let lf = dec.local(p)?;
    build_dual_at(dec, &lf, tol)
}

pub(crate) fn build_dual_at(dec: &Decomposition, lf: &LocalFrame, tol: &Tolerances) -> Result<DualSlice> {
    let n = lf.n();
    let g = &lf.g;
    let (_, parts) = slant_parts(dec, lf, tol)?;

    let mut excluded = lf.d.clone();
    if let Some(xi) = &lf.xi {
        excluded = hstack(&[&lf.d, &Matrix::from_column_slice(n, 1, xi.as_slice())], n);
    }
    let g_frame = orthogonal_complement(g, &excluded);

    let mut duals = Vec::new();
    for part in &parts {
        if part.theta <= tol.angle_const {
            return Err(Error::Model(format!(
                "w is not injective on `{}` (theta = {:e})",
                part.name, part.theta
            )));
        }
        let pb = &lf.phi * &part.basis;
        let wb = &pb - &lf.p_d * &pb;
        let q = gram_schmidt_mat(g, &wb).map_err(|e| {
            Error::Model(format!("w(`{}`) lost rank: {e}", part.name))
        })?;
        duals.push(DualComponent {
            name: part.name.clone(),
            theta: part.theta,
            basis: q,
        });
    }
    let refs: Vec<&Matrix> = duals.iter().map(|d| &d.basis).collect();
    let w_all = hstack(&refs, n);
    let want = g_frame.ncols().saturating_sub(w_all.ncols());
    let h = extend_orthonormal(g, &w_all, &g_frame, want, 1e-8);
    if h.ncols() != want {
        return Err(Error::Model(format!(
            "dual does not fit in G: found {} of {want} H directions",
            h.ncols()
        )));
    }

    let p_g = projector_unchecked(g, &g_frame);
    let mut p_sum = projector_unchecked(g, &h);
    for d in &duals {
        p_sum += projector_unchecked(g, &d.basis);
    }
    let sum_residual = (&p_g - &p_sum).amax();
    let fh = &lf.p_d * (&lf.phi * &h);
    let f_h_residual = (0..fh.ncols())
        .map(|j| crate::linalg::norm_mat(g, &fh.column(j).into_owned()))
        .fold(0.0, f64::max);
    if f_h_residual > tol.identity {
        return Err(Error::Model(format!(
            "f does not vanish on H (|f u| = {f_h_residual:e})"
        )));
    }
    if sum_residual > tol.identity {
        return Err(Error::Model(format!(
            "w(Di) are not an orthogonal family inside G (residual {sum_residual:e})"
        )));
    }
    Ok(DualSlice {
        point: lf.point.to_vec(),
        g_frame,
        duals,
        h,
        sum_residual,
        f_h_residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DualDecomposition {
    pub slices: Vec<DualSlice>,
}

pub fn build_dual_all(
    dec: &Decomposition,
    points: &[AmbientPoint],
    tol: &Tolerances,
) -> Result<DualDecomposition> {
    let slices = points
        .par_iter()
        .map(|p| build_dual(dec, p, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(DualDecomposition { slices })
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundtripEntry {
    pub component: String,
    pub point_index: usize,
    pub dim: usize,
    pub dual_dim: usize,
    /// Largest principal angle between f(w(Di)) and Di.
    pub max_angle: f64,
    pub theta: f64,
    /// Slant angle of w(Di) as a part of the dual distribution.
    pub dual_theta: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundtripReport {
    pub passed: bool,
    pub tolerance: f64,
    pub entries: Vec<RoundtripEntry>,
}

/// Angle of each w(Di) inside the dual distribution (+) w(Di).
fn dual_angles(lf: &LocalFrame, slice: &DualSlice) -> Vec<f64> {
    let g = &lf.g;
    let n = lf.n();
    let refs: Vec<&Matrix> = slice.duals.iter().map(|d| &d.basis).collect();
    let w_all = hstack(&refs, n);
    let p_w = projector_unchecked(g, &w_all);
    slice
        .duals
        .iter()
        .map(|d| {
            let pb = &lf.phi * &d.basis;
            let inside = &p_w * &pb;
            let outside = &pb - &inside;
            let r = d.basis.ncols() as f64;
            let cos2 = (inside.transpose() * g * &inside).trace() / r;
            let sin2 = (outside.transpose() * g * &outside).trace() / r;
            sin2.max(0.0).sqrt().atan2(cos2.max(0.0).sqrt())
        })
        .collect()
}

/// f(w(Di)) = Di and equal slant data on the dual side.
pub fn dual_roundtrip_check(
    dec: &Decomposition,
    points: &[AmbientPoint],
    tol: &Tolerances,
) -> Result<RoundtripReport> {
    let per_point = points
        .par_iter()
        .enumerate()
        .map(|(idx, p)| -> Result<Vec<RoundtripEntry>> {
            let lf = dec.local(p)?;
            let slice = build_dual_at(dec, &lf, tol)?;
            let (_, parts) = slant_parts(dec, &lf, tol)?;
            let dual_thetas = dual_angles(&lf, &slice);
            let mut out = Vec::new();
            for ((part, dual), dual_theta) in parts.iter().zip(&slice.duals).zip(dual_thetas) {
                let fw = &lf.p_d * (&lf.phi * &dual.basis);
                let max_angle = match gram_schmidt_mat(&lf.g, &fw) {
                    Ok(q) if q.ncols() == part.basis.ncols() => principal_angles_mat(&lf.g, &q, &part.basis)?
                        .into_iter()
                        .fold(0.0, f64::max),
                    _ => std::f64::consts::FRAC_PI_2,
                };
                let passed = max_angle < tol.dual
                    && (dual_theta - part.theta).abs() <= tol.dual
                    && dual.basis.ncols() == part.basis.ncols();
                out.push(RoundtripEntry {
                    component: part.name.clone(),
                    point_index: idx,
                    dim: part.basis.ncols(),
                    dual_dim: dual.basis.ncols(),
                    max_angle,
                    theta: part.theta,
                    dual_theta,
                    passed,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let entries: Vec<RoundtripEntry> = per_point.into_iter().flatten().collect();
    Ok(RoundtripReport {
        passed: entries.iter().all(|e| e.passed),
        tolerance: tol.dual,
        entries,
    })
}

/// Runs the G-side identities of the verifier registry.
pub fn dual_identity_suite(
    dec: &Decomposition,
    points: &[AmbientPoint],
    trials: usize,
    tol: &Tolerances,
    seed: u64,
) -> Result<crate::verifier::SuiteReport> {
    crate::verifier::run_identity_subset(dec, points, trials, tol, seed, crate::verifier::is_dual_key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{build_fixture, FixtureId, FixtureParams};

    fn unit_span(n: usize, idx: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(n, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            m[(i - 1, j)] = 1.0;
        }
        m
    }

    #[test]
    fn ex1_duals_are_coordinate_planes() {
        let fx = build_fixture(FixtureId::Ex1, FixtureParams::new(3, -1)).unwrap();
        let tol = Tolerances::default();
        for p in fx.sample_points(3, 3) {
            let s = build_dual(&fx.decomposition, &p, &tol).unwrap();
            assert_eq!(s.h.ncols(), 0);
            assert_eq!(s.g_frame.ncols(), 6);
            for (d, want) in s.duals.iter().zip(&fx.expected_duals) {
                let e = unit_span(fx.dim(), want);
                let a = principal_angles_mat(&Matrix::identity(fx.dim(), fx.dim()), &d.basis, &e).unwrap();
                assert!(a.iter().all(|x| *x < 1e-12), "{a:?}");
            }
        }
    }

    #[test]
    fn roundtrip_passes_on_ex9() {
        let fx = build_fixture(FixtureId::Ex9, FixtureParams::new(3, 1).gamma(1.0)).unwrap();
        let pts = fx.default_samples(2);
        let r = dual_roundtrip_check(&fx.decomposition, &pts, &Tolerances::default()).unwrap();
        assert!(r.passed, "{:?}", r.entries.iter().find(|e| !e.passed));
        assert_eq!(r.entries.len(), 3 * pts.len());
    }

    #[test]
    fn fully_invariant_has_only_h() {
        use crate::distribution::{Decomposition, DistributionFrame};
        use crate::expr::VectorFieldExpr;
        let fx = build_fixture(FixtureId::Ex3, FixtureParams::new(2, -1)).unwrap();
        let mut e1 = vec![0.0; 10];
        e1[0] = 1.0;
        let mut e2 = vec![0.0; 10];
        e2[1] = 1.0;
        let d0 = DistributionFrame::new(
            "D0",
            vec![VectorFieldExpr::constant(&e1), VectorFieldExpr::constant(&e2)],
        )
        .unwrap();
        let dec = Decomposition::new(fx.structure.clone(), Some(d0), vec![], None).unwrap();
        let s = build_dual(&dec, &AmbientPoint::origin(10), &Tolerances::default()).unwrap();
        assert!(s.duals.is_empty());
        assert_eq!(s.h.ncols(), 8);
        assert_eq!(s.g_frame.ncols(), 8);
    }

    #[test]
    fn invariant_proper_component_is_rejected() {
        use crate::distribution::{Decomposition, DistributionFrame};
        use crate::expr::VectorFieldExpr;
        let fx = build_fixture(FixtureId::Ex3, FixtureParams::new(2, -1)).unwrap();
        let mut e1 = vec![0.0; 10];
        e1[0] = 1.0;
        let mut e2 = vec![0.0; 10];
        e2[1] = 1.0;
        let d = DistributionFrame::new(
            "D1",
            vec![VectorFieldExpr::constant(&e1), VectorFieldExpr::constant(&e2)],
        )
        .unwrap();
        let dec = Decomposition::new(fx.structure.clone(), None, vec![d], None).unwrap();
        let r = build_dual(&dec, &AmbientPoint::origin(10), &Tolerances::default());
        assert!(matches!(r, Err(Error::Model(_))));
    }

    #[test]
    fn discovery_mode_duals() {
        use crate::distribution::{Decomposition, DistributionFrame};
        use crate::expr::VectorFieldExpr;
        let fx = build_fixture(FixtureId::Ex3, FixtureParams::new(3, -1)).unwrap();
        let n = fx.dim();
        let mut fields = Vec::new();
        for i in [1, 2, 3, 4, 7, 8, 11, 12] {
            let mut e = vec![0.0; n];
            e[i - 1] = 1.0;
            fields.push(VectorFieldExpr::constant(&e));
        }
        let whole = DistributionFrame::new("D", fields).unwrap();
        let dec = Decomposition::discovery(fx.structure.clone(), whole, None).unwrap();
        let s = build_dual(&dec, &AmbientPoint::origin(n), &Tolerances::default()).unwrap();
        assert_eq!(s.duals.len(), 3);
        assert_eq!(s.h.ncols(), 0);
        let r = dual_roundtrip_check(&dec, &[AmbientPoint::origin(n)], &Tolerances::default()).unwrap();
        assert!(r.passed);
    }
}
