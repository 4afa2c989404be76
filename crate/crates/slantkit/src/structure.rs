//! Ambient structures `(phi, g, xi)` in the unified epsilon form and their
//! sampled validation.

use crate::error::{Error, Result};
use crate::expr::{parse, ScalarFieldExpr, VectorFieldExpr};
use crate::linalg::{inner_mat, norm_mat, AmbientPoint, Matrix, MetricAtPoint, TangentVector, Vector};
use crate::sampling::{point_rng, unit_vector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    /// phi^2 = eps I
    #[serde(rename = "hermitian-like")]
    HermitianLike,
    /// phi^2 = eps (I - eta (x) xi)
    #[serde(rename = "contact-like")]
    ContactLike,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::HermitianLike => "hermitian-like",
            Kind::ContactLike => "contact-like",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureField {
    n: usize,
    epsilon: i8,
    kind: Kind,
    /// Row-major: `phi[r][c]` is component r of phi(e_c).
    phi: Vec<Vec<ScalarFieldExpr>>,
    /// `None` is the Euclidean metric.
    metric: Option<Vec<Vec<ScalarFieldExpr>>>,
    xi: Option<VectorFieldExpr>,
}

impl StructureField {
    /// `phi_columns[c]` lists the components of phi(e_c).
    pub fn new(
        n: usize,
        epsilon: i8,
        kind: Kind,
        phi_columns: &[Vec<String>],
        metric: Option<&[Vec<String>]>,
        xi: Option<&[String]>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Spec("ambient dimension must be positive".into()));
        }
        if epsilon != 1 && epsilon != -1 {
            return Err(Error::Spec(format!("epsilon must be +1 or -1, got {epsilon}")));
        }
        if phi_columns.len() != n || phi_columns.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension(format!("phi must have {n} columns of {n} entries")));
        }
        let mut phi = vec![Vec::with_capacity(n); n];
        for col in phi_columns {
            for (r, src) in col.iter().enumerate() {
                phi[r].push(parse(src, n)?);
            }
        }
        let metric = match metric {
            None => None,
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension(format!("metric must be {n}x{n}")));
                }
                Some(
                    rows.iter()
                        .map(|r| r.iter().map(|s| parse(s, n)).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        let xi = match (kind, xi) {
            (Kind::ContactLike, Some(x)) => Some(VectorFieldExpr::parse(x, n)?),
            (Kind::ContactLike, None) => {
                return Err(Error::Spec("contact-like structures need xi".into()))
            }
            (Kind::HermitianLike, Some(_)) => {
                return Err(Error::Spec("hermitian-like structures take no xi".into()))
            }
            (Kind::HermitianLike, None) => None,
        };
        Ok(Self {
            n,
            epsilon,
            kind,
            phi,
            metric,
            xi,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> i8 {
        self.epsilon
    }

    pub fn eps(&self) -> f64 {
        self.epsilon as f64
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn is_euclidean(&self) -> bool {
        match &self.metric {
            None => true,
            Some(rows) => rows.iter().enumerate().all(|(r, row)| {
                row.iter().enumerate().all(|(c, e)| {
                    e.constant_value() == Some(if r == c { 1.0 } else { 0.0 })
                })
            }),
        }
    }

    pub fn phi_columns(&self) -> Vec<Vec<String>> {
        (0..self.n)
            .map(|c| (0..self.n).map(|r| self.phi[r][c].to_string()).collect())
            .collect()
    }

    pub fn metric_rows(&self) -> Option<Vec<Vec<String>>> {
        self.metric
            .as_ref()
            .map(|m| m.iter().map(|r| r.iter().map(|e| e.to_string()).collect()).collect())
    }

    pub fn xi_strings(&self) -> Option<Vec<String>> {
        self.xi.as_ref().map(|x| x.to_strings())
    }

    /// Returns a copy with one phi entry replaced (row r of column c).
    pub fn with_phi_entry(&self, r: usize, c: usize, src: &str) -> Result<Self> {
        let mut s = self.clone();
        s.phi[r][c] = parse(src, self.n)?;
        Ok(s)
    }

    pub fn phi_at(&self, p: &AmbientPoint) -> Result<Matrix> {
        self.check_point(p)?;
        let x = p.coords().as_slice();
        let mut m = Matrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for c in 0..self.n {
                m[(r, c)] = self.phi[r][c].eval_slice(x)?;
            }
        }
        Ok(m)
    }

    pub fn metric_matrix_at(&self, p: &AmbientPoint) -> Result<Matrix> {
        self.check_point(p)?;
        match &self.metric {
            None => Ok(Matrix::identity(self.n, self.n)),
            Some(rows) => {
                let x = p.coords().as_slice();
                let mut m = Matrix::zeros(self.n, self.n);
                for r in 0..self.n {
                    for c in 0..self.n {
                        m[(r, c)] = rows[r][c].eval_slice(x)?;
                    }
                }
                Ok(m)
            }
        }
    }

    pub fn metric_at(&self, p: &AmbientPoint) -> Result<MetricAtPoint> {
        MetricAtPoint::new(self.metric_matrix_at(p)?)
    }

    pub fn xi_at(&self, p: &AmbientPoint) -> Result<Option<Vector>> {
        self.check_point(p)?;
        self.xi.as_ref().map(|x| x.eval(p)).transpose()
    }

    fn check_point(&self, p: &AmbientPoint) -> Result<()> {
        if p.dim() != self.n {
            return Err(Error::Dimension(format!(
                "point has dimension {}, structure has {}",
                p.dim(),
                self.n
            )));
        }
        Ok(())
    }
}

/// eta(v) = g(v, xi).
pub fn eta(s: &StructureField, p: &AmbientPoint, v: &TangentVector) -> Result<f64> {
    if s.kind() != Kind::ContactLike {
        return Err(Error::Kind);
    }
    if v.base != *p {
        return Err(Error::BasePoint);
    }
    let g = s.metric_matrix_at(p)?;
    let xi = s.xi_at(p)?.ok_or(Error::Kind)?;
    if v.comps.len() != s.dim() {
        return Err(Error::Dimension("vector and structure dimensions differ".into()));
    }
    Ok(inner_mat(&g, &v.comps, &xi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomResult {
    pub max_residual: f64,
    pub witness_point: Vec<f64>,
    pub witness_x: Vec<f64>,
    pub witness_y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalFailure {
    pub point: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureVerdict {
    pub passed: bool,
    pub tolerance: f64,
    pub axioms: BTreeMap<String, AxiomResult>,
    /// Axiom with the largest residual overall.
    pub worst: Option<String>,
    pub eval_failures: Vec<EvalFailure>,
}

impl StructureVerdict {
    pub fn residual(&self, axiom: &str) -> Option<f64> {
        self.axioms.get(axiom).map(|a| a.max_residual)
    }
}

pub fn axiom_names(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::ContactLike => &[
            "compatibility",
            "phi-squared",
            "xi-unit",
            "phi-xi",
            "eta-phi",
            "contact-metric",
            "norm",
            "kernel-dim",
        ],
        Kind::HermitianLike => &["compatibility", "phi-squared", "isometry"],
    }
}

type PointResiduals = Vec<(&'static str, f64, Vec<f64>, Vec<f64>)>;

fn residuals_at(
    s: &StructureField,
    p: &AmbientPoint,
    trials: usize,
    seed: u64,
    idx: usize,
) -> Result<PointResiduals> {
    let g = s.metric_matrix_at(p)?;
    MetricAtPoint::new(g.clone())?;
    let phi = s.phi_at(p)?;
    let xi = s.xi_at(p)?;
    let eps = s.eps();
    let n = s.dim();
    let mut rng = point_rng(seed, idx);
    let mut out: PointResiduals = Vec::new();
    let gnorm = |v: &Vector| norm_mat(&g, v);

    if let Some(xi) = &xi {
        out.push(("xi-unit", (inner_mat(&g, xi, xi) - 1.0).abs(), xi.as_slice().to_vec(), vec![]));
        out.push(("phi-xi", gnorm(&(&phi * xi)), xi.as_slice().to_vec(), vec![]));
        let sv = phi.clone().svd(false, false).singular_values;
        let small = sv.iter().filter(|v| **v < 1e-10).count();
        out.push(("kernel-dim", (small as f64 - 1.0).abs(), vec![], vec![]));
    }

    for _ in 0..trials {
        let x = unit_vector(&g, &mut rng);
        let y = unit_vector(&g, &mut rng);
        let px = &phi * &x;
        let py = &phi * &y;
        let wx = || x.as_slice().to_vec();
        let wy = || y.as_slice().to_vec();
        out.push((
            "compatibility",
            (inner_mat(&g, &px, &y) - eps * inner_mat(&g, &x, &py)).abs(),
            wx(),
            wy(),
        ));
        let ppx = &phi * &px;
        match &xi {
            Some(xi) => {
                let ex = inner_mat(&g, &x, xi);
                let ey = inner_mat(&g, &y, xi);
                let target = eps * (&x - ex * xi);
                out.push(("phi-squared", gnorm(&(ppx - target)), wx(), vec![]));
                out.push(("eta-phi", inner_mat(&g, &px, xi).abs(), wx(), vec![]));
                out.push((
                    "contact-metric",
                    (inner_mat(&g, &px, &py) - (inner_mat(&g, &x, &y) - ex * ey)).abs(),
                    wx(),
                    wy(),
                ));
                out.push((
                    "norm",
                    (inner_mat(&g, &px, &px) - (inner_mat(&g, &x, &x) - ex * ex)).abs(),
                    wx(),
                    vec![],
                ));
            }
            None => {
                out.push(("phi-squared", gnorm(&(ppx - eps * &x)), wx(), vec![]));
                out.push((
                    "isometry",
                    (inner_mat(&g, &px, &py) - inner_mat(&g, &x, &y)).abs(),
                    wx(),
                    wy(),
                ));
            }
        }
    }
    debug_assert!(out.iter().all(|(_, _, x, _)| x.is_empty() || x.len() == n));
    Ok(out)
}

/// Checks every structure axiom on `trials` seeded random vector pairs per
/// point. Evaluation errors are recorded as failures, never raised.
pub fn validate_structure(
    s: &StructureField,
    points: &[AmbientPoint],
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<StructureVerdict> {
    if points.is_empty() {
        return Err(Error::Param("validation needs at least one point".into()));
    }
    if trials == 0 {
        return Err(Error::Param("trials must be at least 1".into()));
    }
    for p in points {
        s.check_point(p)?;
    }
    let per_point: Vec<Result<PointResiduals>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| residuals_at(s, p, trials, seed, i))
        .collect();

    let mut axioms: BTreeMap<String, AxiomResult> = BTreeMap::new();
    for name in axiom_names(s.kind()) {
        axioms.insert(
            name.to_string(),
            AxiomResult {
                max_residual: 0.0,
                witness_point: vec![],
                witness_x: vec![],
                witness_y: vec![],
            },
        );
    }
    let mut eval_failures = Vec::new();
    for (p, res) in points.iter().zip(per_point) {
        match res {
            Err(e) => eval_failures.push(EvalFailure {
                point: p.to_vec(),
                message: e.to_string(),
            }),
            Ok(rows) => {
                for (name, r, x, y) in rows {
                    let entry = axioms.get_mut(name).expect("registered axiom");
                    // NaN residuals must also register as failures
                    if r > entry.max_residual || r.is_nan() && !entry.max_residual.is_nan() {
                        *entry = AxiomResult {
                            max_residual: r,
                            witness_point: p.to_vec(),
                            witness_x: x,
                            witness_y: y,
                        };
                    }
                }
            }
        }
    }
    let worst = axioms
        .iter()
        .max_by(|a, b| a.1.max_residual.total_cmp(&b.1.max_residual))
        .map(|(k, _)| k.clone());
    let passed = eval_failures.is_empty() && axioms.values().all(|a| a.max_residual <= tol);
    Ok(StructureVerdict {
        passed,
        tolerance: tol,
        axioms,
        worst,
        eval_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(m: &[&[&str]]) -> Vec<Vec<String>> {
        m.iter().map(|c| c.iter().map(|s| s.to_string()).collect()).collect()
    }

    /// phi e1 = e2, phi e2 = eps e1, phi e3 = 0, xi = e3.
    fn contact3(eps: i8) -> StructureField {
        let e = if eps < 0 { "-1" } else { "1" };
        StructureField::new(
            3,
            eps,
            Kind::ContactLike,
            &cols(&[&["0", "1", "0"], &[e, "0", "0"], &["0", "0", "0"]]),
            None,
            Some(&["0".into(), "0".into(), "1".into()]),
        )
        .unwrap()
    }

    fn pts() -> Vec<AmbientPoint> {
        vec![AmbientPoint::origin(3), AmbientPoint::new(vec![1., -2., 0.5]).unwrap()]
    }

    #[test]
    fn small_contact_structures_pass() {
        for eps in [-1, 1] {
            let v = validate_structure(&contact3(eps), &pts(), 20, 1e-10, 7).unwrap();
            assert!(v.passed, "{v:?}");
            assert_eq!(v.axioms.len(), 8);
        }
    }

    #[test]
    fn identity_with_negative_epsilon_fails_phi_squared() {
        let s = StructureField::new(
            2,
            -1,
            Kind::HermitianLike,
            &cols(&[&["1", "0"], &["0", "1"]]),
            None,
            None,
        )
        .unwrap();
        let v = validate_structure(&s, &[AmbientPoint::origin(2)], 5, 1e-9, 1).unwrap();
        assert!(!v.passed);
        assert!((v.residual("phi-squared").unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eval_errors_become_failures() {
        let s = contact3(-1).with_phi_entry(0, 0, "1/x1").unwrap();
        let v = validate_structure(&s, &pts(), 3, 1e-9, 1).unwrap();
        assert!(!v.passed);
        assert_eq!(v.eval_failures.len(), 1);
        assert_eq!(v.eval_failures[0].point, vec![0.0; 3]);
    }

    #[test]
    fn eta_values_and_kind_error() {
        let s = contact3(-1);
        let p = AmbientPoint::origin(3);
        let v = |c: [f64; 3]| TangentVector::new(c.to_vec(), p.clone()).unwrap();
        assert_eq!(eta(&s, &p, &v([0., 0., 1.])).unwrap(), 1.0);
        assert_eq!(eta(&s, &p, &v([1., 0., 0.])).unwrap(), 0.0);
        let h = StructureField::new(2, 1, Kind::HermitianLike, &cols(&[&["0", "1"], &["1", "0"]]), None, None)
            .unwrap();
        let p2 = AmbientPoint::origin(2);
        let v2 = TangentVector::new(vec![1., 0.], p2.clone()).unwrap();
        assert_eq!(eta(&h, &p2, &v2), Err(Error::Kind));
    }

    #[test]
    fn spec_errors() {
        let c = cols(&[&["0"]]);
        assert!(matches!(
            StructureField::new(1, 0, Kind::HermitianLike, &c, None, None),
            Err(Error::Spec(_))
        ));
        assert!(matches!(
            StructureField::new(1, 1, Kind::ContactLike, &c, None, None),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn validation_is_deterministic() {
        let s = contact3(1).with_phi_entry(0, 1, "1.001").unwrap();
        let a = validate_structure(&s, &pts(), 10, 1e-9, 99).unwrap();
        let b = validate_structure(&s, &pts(), 10, 1e-9, 99).unwrap();
        assert_eq!(a, b);
        assert!(!a.passed);
    }
}
