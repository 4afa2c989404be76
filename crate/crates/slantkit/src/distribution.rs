//! Distributions, decompositions, and the f/w split of phi relative to D.

use crate::error::{Error, Result};
use crate::expr::VectorFieldExpr;
use crate::linalg::{
    gram_schmidt_mat, hstack, inner_mat, norm_mat, projector_unchecked, AmbientPoint, Matrix,
    TangentVector, Vector,
};
use crate::sampling::{point_rng, unit_in_span};
use crate::structure::{Kind, StructureField};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionFrame {
    pub name: String,
    pub fields: Vec<VectorFieldExpr>,
}

impl DistributionFrame {
    pub fn new(name: impl Into<String>, fields: Vec<VectorFieldExpr>) -> Result<Self> {
        let name = name.into();
        let first = fields
            .first()
            .ok_or_else(|| Error::Spec(format!("distribution `{name}` has no fields")))?;
        let n = first.dim();
        if fields.iter().any(|f| f.dim() != n) {
            return Err(Error::Dimension(format!(
                "fields of `{name}` have different dimensions"
            )));
        }
        Ok(Self { name, fields })
    }

    pub fn parse<S: AsRef<str>>(name: &str, fields: &[Vec<S>], n: usize) -> Result<Self> {
        let fields = fields
            .iter()
            .map(|f| VectorFieldExpr::parse(f, n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(name, fields)
    }

    pub fn rank(&self) -> usize {
        self.fields.len()
    }

    pub fn raw_at(&self, p: &AmbientPoint) -> Result<Matrix> {
        let n = p.dim();
        let mut m = Matrix::zeros(n, self.fields.len());
        for (j, f) in self.fields.iter().enumerate() {
            m.set_column(j, &f.eval(p)?);
        }
        Ok(m)
    }
}

/// Where D-perp is taken: the whole ambient tangent space, or its part
/// orthogonal to xi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComplementMode {
    #[serde(rename = "ambient")]
    Ambient,
    #[serde(rename = "xi-excluded")]
    XiExcluded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    structure: StructureField,
    invariant: Option<DistributionFrame>,
    proper: Vec<DistributionFrame>,
    /// 1-based coordinates spanning TM for linear-subspace submanifolds.
    mask: Option<Vec<usize>>,
    discovery: bool,
}

impl Decomposition {
    pub fn new(
        structure: StructureField,
        invariant: Option<DistributionFrame>,
        proper: Vec<DistributionFrame>,
        mask: Option<Vec<usize>>,
    ) -> Result<Self> {
        Self::build(structure, invariant, proper, mask, false)
    }

    /// A single distribution whose eigenstructure defines the components.
    pub fn discovery(
        structure: StructureField,
        whole: DistributionFrame,
        mask: Option<Vec<usize>>,
    ) -> Result<Self> {
        Self::build(structure, None, vec![whole], mask, true)
    }

    fn build(
        structure: StructureField,
        invariant: Option<DistributionFrame>,
        proper: Vec<DistributionFrame>,
        mask: Option<Vec<usize>>,
        discovery: bool,
    ) -> Result<Self> {
        let n = structure.dim();
        if invariant.is_none() && proper.is_empty() {
            return Err(Error::Spec("decomposition has no components".into()));
        }
        let all: Vec<&DistributionFrame> = invariant.iter().chain(proper.iter()).collect();
        for f in &all {
            if f.fields.iter().any(|v| v.dim() != n) {
                return Err(Error::Dimension(format!(
                    "distribution `{}` does not live in dimension {n}",
                    f.name
                )));
            }
        }
        let total: usize = all.iter().map(|f| f.rank()).sum();
        if total > n {
            return Err(Error::Dimension(format!("total rank {total} exceeds dimension {n}")));
        }
        if let Some(m) = &mask {
            let mut sorted = m.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != m.len() || sorted.iter().any(|&i| i == 0 || i > n) || m.is_empty() {
                return Err(Error::Spec(format!(
                    "submanifold mask must list distinct indices in 1..={n}"
                )));
            }
            for f in &all {
                for v in &f.fields {
                    for (c, comp) in v.components.iter().enumerate() {
                        if !sorted.contains(&(c + 1)) && comp.constant_value() != Some(0.0) {
                            return Err(Error::Spec(format!(
                                "distribution `{}` has a nonzero component x{} outside the mask",
                                f.name,
                                c + 1
                            )));
                        }
                    }
                }
            }
        }
        let mut names: Vec<&str> = all.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Spec("component names must be distinct".into()));
        }
        Ok(Self {
            structure,
            invariant,
            proper,
            mask,
            discovery,
        })
    }

    pub fn structure(&self) -> &StructureField {
        &self.structure
    }

    pub fn invariant(&self) -> Option<&DistributionFrame> {
        self.invariant.as_ref()
    }

    pub fn proper(&self) -> &[DistributionFrame] {
        &self.proper
    }

    pub fn mask(&self) -> Option<&[usize]> {
        self.mask.as_deref()
    }

    pub fn is_discovery(&self) -> bool {
        self.discovery
    }

    pub fn has_invariant(&self) -> bool {
        self.invariant.is_some()
    }

    /// D0 first (if declared), then the proper components.
    pub fn components(&self) -> Vec<&DistributionFrame> {
        self.invariant.iter().chain(self.proper.iter()).collect()
    }

    pub fn rank(&self) -> usize {
        self.components().iter().map(|c| c.rank()).sum()
    }

    pub fn complement_mode(&self) -> ComplementMode {
        match self.structure.kind() {
            Kind::ContactLike => ComplementMode::XiExcluded,
            Kind::HermitianLike => ComplementMode::Ambient,
        }
    }

    /// Unit coordinate vectors of the mask (all coordinates without one).
    pub fn mask_directions(&self) -> Matrix {
        let n = self.structure.dim();
        let idx: Vec<usize> = match &self.mask {
            Some(m) => m.clone(),
            None => (1..=n).collect(),
        };
        let mut m = Matrix::zeros(n, idx.len());
        for (j, i) in idx.iter().enumerate() {
            m[(i - 1, j)] = 1.0;
        }
        m
    }

    pub fn local(&self, p: &AmbientPoint) -> Result<LocalFrame> {
        LocalFrame::new(self, p, 1e-10)
    }
}

/// Everything evaluated at one point, in a g-orthonormal frame of D.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub point: AmbientPoint,
    pub eps: f64,
    pub g: Matrix,
    pub phi: Matrix,
    pub xi: Option<Vector>,
    /// g-orthonormal basis per component, in `components()` order.
    pub bases: Vec<Matrix>,
    pub offsets: Vec<usize>,
    pub d: Matrix,
    pub p_d: Matrix,
    /// Matrix of f restricted to D in the basis `d`.
    pub f: Matrix,
    /// Symmetrized matrix of f^2 restricted to D.
    pub f2: Matrix,
}

impl LocalFrame {
    pub fn new(dec: &Decomposition, p: &AmbientPoint, orth_tol: f64) -> Result<Self> {
        let s = dec.structure();
        let g = s.metric_matrix_at(p)?;
        let phi = s.phi_at(p)?;
        let xi = s.xi_at(p)?;
        let n = s.dim();
        let mut bases = Vec::new();
        let mut offsets = Vec::new();
        let mut off = 0;
        for c in dec.components() {
            let raw = c.raw_at(p)?;
            let q = gram_schmidt_mat(&g, &raw).map_err(|e| match e {
                Error::Rank(m) => Error::Rank(format!("`{}`: {m}", c.name)),
                other => other,
            })?;
            offsets.push(off);
            off += q.ncols();
            bases.push(q);
        }
        let names: Vec<&str> = dec.components().iter().map(|c| c.name.as_str()).collect();
        for i in 0..bases.len() {
            for j in i + 1..bases.len() {
                let cross = (bases[i].transpose() * &g * &bases[j]).amax();
                if cross > orth_tol {
                    return Err(Error::Invariant(format!(
                        "components `{}` and `{}` are not orthogonal ({cross:e})",
                        names[i], names[j]
                    )));
                }
            }
            if let Some(xi) = &xi {
                let c = (bases[i].transpose() * &g * xi).amax();
                if c > orth_tol {
                    return Err(Error::Invariant(format!(
                        "component `{}` is not orthogonal to xi ({c:e})",
                        names[i]
                    )));
                }
            }
        }
        let refs: Vec<&Matrix> = bases.iter().collect();
        let d = hstack(&refs, n);
        let p_d = projector_unchecked(&g, &d);
        let f = d.transpose() * &g * &phi * &d;
        let f2_raw = &f * &f;
        let asym = (&f2_raw - f2_raw.transpose()).amax();
        if asym > 1e-9 {
            return Err(Error::Model(format!(
                "f^2 on D is not symmetric (residual {asym:e}); the structure or decomposition is invalid"
            )));
        }
        let f2 = (&f2_raw + f2_raw.transpose()) * 0.5;
        Ok(Self {
            point: p.clone(),
            eps: s.eps(),
            g,
            phi,
            xi,
            bases,
            offsets,
            d,
            p_d,
            f,
            f2,
        })
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn rank(&self) -> usize {
        self.d.ncols()
    }

    pub fn component_projector(&self, i: usize) -> Matrix {
        projector_unchecked(&self.g, &self.bases[i])
    }

    /// Diagonal block of f^2 belonging to component i.
    pub fn f2_block(&self, i: usize) -> Matrix {
        let o = self.offsets[i];
        let r = self.bases[i].ncols();
        self.f2.view((o, o), (r, r)).into_owned()
    }

    pub fn f_vec(&self, v: &Vector) -> Vector {
        &self.p_d * (&self.phi * v)
    }

    pub fn w_vec(&self, v: &Vector) -> Vector {
        let pv = &self.phi * v;
        &pv - &self.p_d * &pv
    }

    /// Ambient matrix of f^2 composed with the projection onto D.
    pub fn f2_ambient(&self) -> Matrix {
        &self.d * &self.f2 * self.d.transpose() * &self.g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FWSplit {
    pub f_part: TangentVector,
    pub w_part: TangentVector,
}

pub fn fw_split(dec: &Decomposition, p: &AmbientPoint, v: &TangentVector) -> Result<FWSplit> {
    if v.base != *p {
        return Err(Error::BasePoint);
    }
    if v.comps.len() != p.dim() {
        return Err(Error::Dimension("vector and point dimensions differ".into()));
    }
    let lf = dec.local(p)?;
    Ok(FWSplit {
        f_part: TangentVector {
            comps: lf.f_vec(&v.comps),
            base: p.clone(),
        },
        w_part: TangentVector {
            comps: lf.w_vec(&v.comps),
            base: p.clone(),
        },
    })
}

pub fn f_squared_matrix(dec: &Decomposition, p: &AmbientPoint) -> Result<Matrix> {
    Ok(dec.local(p)?.f2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceWitness {
    pub point: Vec<f64>,
    pub component: String,
    pub other: Option<String>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub passed: bool,
    pub tolerance: f64,
    /// max |(I - P_i) f X_i|
    pub max_leak: f64,
    /// max |g(phi X_i, X_j)|, i != j
    pub max_cross: f64,
    pub witness: Option<InvarianceWitness>,
    pub errors: Vec<String>,
}

pub fn check_f_invariance(
    dec: &Decomposition,
    points: &[AmbientPoint],
    trials: usize,
    tol: f64,
    seed: u64,
) -> InvarianceReport {
    let names: Vec<String> = dec.components().iter().map(|c| c.name.clone()).collect();
    let per_point: Vec<std::result::Result<Vec<InvarianceWitness>, String>> = points
        .par_iter()
        .enumerate()
        .map(|(idx, p)| {
            let lf = dec.local(p).map_err(|e| e.to_string())?;
            let mut rng = point_rng(seed, idx);
            let mut out = Vec::new();
            let k = lf.bases.len();
            let projs: Vec<Matrix> = (0..k).map(|i| lf.component_projector(i)).collect();
            for _ in 0..trials.max(1) {
                for i in 0..k {
                    let x = unit_in_span(&lf.bases[i], &mut rng);
                    let fx = lf.f_vec(&x);
                    let leak = norm_mat(&lf.g, &(&fx - &projs[i] * &fx));
                    out.push(InvarianceWitness {
                        point: p.to_vec(),
                        component: names[i].clone(),
                        other: None,
                        residual: leak,
                    });
                    let px = &lf.phi * &x;
                    for j in (0..k).filter(|&j| j != i) {
                        let y = unit_in_span(&lf.bases[j], &mut rng);
                        out.push(InvarianceWitness {
                            point: p.to_vec(),
                            component: names[i].clone(),
                            other: Some(names[j].clone()),
                            residual: inner_mat(&lf.g, &px, &y).abs(),
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut max_leak: f64 = 0.0;
    let mut max_cross: f64 = 0.0;
    let mut witness: Option<InvarianceWitness> = None;
    let mut errors = Vec::new();
    for r in per_point {
        match r {
            Err(e) => errors.push(e),
            Ok(ws) => {
                for w in ws {
                    if w.other.is_none() {
                        max_leak = max_leak.max(w.residual);
                    } else {
                        max_cross = max_cross.max(w.residual);
                    }
                    if witness.as_ref().is_none_or(|b| w.residual > b.residual) {
                        witness = Some(w);
                    }
                }
            }
        }
    }
    let passed = errors.is_empty() && max_leak <= tol && max_cross <= tol;
    InvarianceReport {
        passed,
        tolerance: tol,
        max_leak,
        max_cross,
        witness: if passed { None } else { witness },
        errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Standard complex structure on R^4.
    fn hermitian4() -> StructureField {
        StructureField::new(
            4,
            -1,
            Kind::HermitianLike,
            &[
                strs(&["0", "1", "0", "0"]),
                strs(&["-1", "0", "0", "0"]),
                strs(&["0", "0", "0", "1"]),
                strs(&["0", "0", "-1", "0"]),
            ],
            None,
            None,
        )
        .unwrap()
    }

    fn frame(name: &str, cols: &[&[&str]]) -> DistributionFrame {
        DistributionFrame::parse(name, &cols.iter().map(|c| strs(c)).collect::<Vec<_>>(), 4).unwrap()
    }

    #[test]
    fn invariant_and_anti_invariant_blocks() {
        let s = hermitian4();
        let p = AmbientPoint::origin(4);
        let inv = frame("D0", &[&["1", "0", "0", "0"], &["0", "1", "0", "0"]]);
        let dec = Decomposition::new(s.clone(), Some(inv), vec![], None).unwrap();
        let f2 = f_squared_matrix(&dec, &p).unwrap();
        assert!((f2 + Matrix::identity(2, 2)).amax() < 1e-15);

        let anti = frame("D1", &[&["1", "0", "0", "0"], &["0", "0", "1", "0"]]);
        let dec = Decomposition::new(s, None, vec![anti], None).unwrap();
        assert!(f_squared_matrix(&dec, &p).unwrap().amax() < 1e-15);
        let v = TangentVector::new(vec![1., 0., 0., 0.], p.clone()).unwrap();
        let split = fw_split(&dec, &p, &v).unwrap();
        assert!(split.f_part.comps.amax() < 1e-15);
        assert_eq!(split.w_part.comps, Vector::from_vec(vec![0., 1., 0., 0.]));
    }

    #[test]
    fn slanted_plane_has_cos_squared_block() {
        // D = <cos t e1 + sin t e3, e2>: phi(e2) = -e1, projected gives cos t
        let t: f64 = 0.3;
        let s = hermitian4();
        let c = format!("{:?}", t.cos());
        let sn = format!("{:?}", t.sin());
        let d = frame("D1", &[&[&c, "0", &sn, "0"], &["0", "1", "0", "0"]]);
        let dec = Decomposition::new(s, None, vec![d], None).unwrap();
        let f2 = f_squared_matrix(&dec, &AmbientPoint::origin(4)).unwrap();
        let want = -(t.cos() * t.cos());
        assert!((f2 - Matrix::from_diagonal_element(2, 2, want)).amax() < 1e-15);
    }

    #[test]
    fn mixed_components_fail_invariance() {
        let s = hermitian4();
        let a = frame("A", &[&["1", "0", "0", "0"], &["0", "0", "1", "0"]]);
        let b = frame("B", &[&["0", "1", "0", "0"], &["0", "0", "0", "1"]]);
        let dec = Decomposition::new(s.clone(), None, vec![a, b], None).unwrap();
        let pts = [AmbientPoint::origin(4)];
        let rep = check_f_invariance(&dec, &pts, 5, 1e-10, 3);
        assert!(!rep.passed);
        assert!(rep.max_cross > 0.1);
        let whole = frame(
            "D",
            &[&["1", "0", "0", "0"], &["0", "1", "0", "0"], &["0", "0", "1", "0"]],
        );
        let dec = Decomposition::new(s, None, vec![whole], None).unwrap();
        let rep = check_f_invariance(&dec, &pts, 5, 1e-10, 3);
        // f e3 = proj(e4) = 0; f e1 = e2 in D: invariant
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn mask_and_orthogonality_are_enforced() {
        let s = hermitian4();
        let a = frame("A", &[&["1", "0", "0", "x1"]]);
        assert!(matches!(
            Decomposition::new(s.clone(), None, vec![a], Some(vec![1, 2])),
            Err(Error::Spec(_))
        ));
        let a = frame("A", &[&["1", "0", "0", "0"]]);
        let b = frame("B", &[&["1", "1", "0", "0"]]);
        let dec = Decomposition::new(s, None, vec![a, b], None).unwrap();
        assert!(matches!(dec.local(&AmbientPoint::origin(4)), Err(Error::Invariant(_))));
    }
}
