//! Dense linear algebra with respect to a (possibly non-Euclidean) metric.
//!
//! Bases are stored as `n x r` matrices whose columns are the vectors. The
//! matrix-level functions (`*_mat`) are what the rest of the crate uses; the
//! typed wrappers enforce base-point and dimension bookkeeping.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub const RANK_TOL: f64 = 1e-12;
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-9;
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint {
    coords: Vector,
}

impl AmbientPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invariant("point has non-finite coordinates".into()));
        }
        Ok(Self {
            coords: Vector::from_vec(coords),
        })
    }

    pub fn from_vector(coords: Vector) -> Result<Self> {
        Self::new(coords.as_slice().to_vec())
    }

    pub fn origin(n: usize) -> Self {
        Self {
            coords: Vector::zeros(n),
        }
    }

    pub fn coords(&self) -> &Vector {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coords.as_slice().to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub comps: Vector,
    pub base: AmbientPoint,
}

impl TangentVector {
    pub fn new(comps: Vec<f64>, base: AmbientPoint) -> Result<Self> {
        if comps.len() != base.dim() {
            return Err(Error::Dimension(format!(
                "vector has {} components at a point of dimension {}",
                comps.len(),
                base.dim()
            )));
        }
        if comps.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invariant("vector has non-finite components".into()));
        }
        Ok(Self {
            comps: Vector::from_vec(comps),
            base,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricAtPoint {
    matrix: Matrix,
}

impl MetricAtPoint {
    /// Checks symmetry and positive definiteness.
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("metric must be square".into()));
        }
        let scale = matrix.norm().max(1.0);
        let asym = (&matrix - matrix.transpose()).norm();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Symmetry { residual: asym });
        }
        if matrix.clone().cholesky().is_none() {
            return Err(Error::Invariant("metric is not positive definite".into()));
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Matrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    vectors: Matrix,
    base: AmbientPoint,
    orthonormal: bool,
}

impl SubspaceBasis {
    pub fn new(vectors: Vec<TangentVector>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::Rank("empty basis".into()))?;
        let base = first.base.clone();
        let n = base.dim();
        let mut m = Matrix::zeros(n, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            if v.base != base {
                return Err(Error::BasePoint);
            }
            m.set_column(j, &v.comps);
        }
        Self::from_matrix(m, base, false)
    }

    /// Wraps a column matrix; `orthonormal` is a claim checked later by the
    /// operations that rely on it.
    pub fn from_matrix(vectors: Matrix, base: AmbientPoint, orthonormal: bool) -> Result<Self> {
        if vectors.nrows() != base.dim() {
            return Err(Error::Dimension("basis rows differ from point dimension".into()));
        }
        Ok(Self {
            vectors,
            base,
            orthonormal,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.vectors
    }

    pub fn base(&self) -> &AmbientPoint {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn vector(&self, j: usize) -> TangentVector {
        TangentVector {
            comps: self.vectors.column(j).into_owned(),
            base: self.base.clone(),
        }
    }
}

pub fn inner(g: &MetricAtPoint, u: &TangentVector, v: &TangentVector) -> Result<f64> {
    if u.base != v.base {
        return Err(Error::BasePoint);
    }
    let n = g.dim();
    if u.comps.len() != n || v.comps.len() != n {
        return Err(Error::Dimension(format!(
            "metric is {n}x{n}, vectors have {} and {} components",
            u.comps.len(),
            v.comps.len()
        )));
    }
    Ok(inner_mat(g.matrix(), &u.comps, &v.comps))
}

pub fn gram_schmidt(g: &MetricAtPoint, raw: &SubspaceBasis) -> Result<SubspaceBasis> {
    if raw.vectors.nrows() != g.dim() {
        return Err(Error::Dimension("basis and metric dimensions differ".into()));
    }
    let q = gram_schmidt_mat(g.matrix(), &raw.vectors)?;
    SubspaceBasis::from_matrix(q, raw.base.clone(), true)
}

pub fn projector(g: &MetricAtPoint, basis: &SubspaceBasis) -> Result<Matrix> {
    if basis.vectors.nrows() != g.dim() {
        return Err(Error::Dimension("basis and metric dimensions differ".into()));
    }
    projector_mat(g.matrix(), &basis.vectors)
}

pub fn sym_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    sym_eigen_mat(a)
}

pub fn principal_angles(
    g: &MetricAtPoint,
    a: &SubspaceBasis,
    b: &SubspaceBasis,
) -> Result<Vec<f64>> {
    if a.base != b.base {
        return Err(Error::BasePoint);
    }
    if a.vectors.nrows() != g.dim() || b.vectors.nrows() != g.dim() {
        return Err(Error::Dimension("subspace and metric dimensions differ".into()));
    }
    for s in [a, b] {
        check_orthonormal(g.matrix(), &s.vectors)?;
    }
    principal_angles_mat(g.matrix(), &a.vectors, &b.vectors)
}

// ---- matrix-level kernels ----

pub fn inner_mat(g: &Matrix, u: &Vector, v: &Vector) -> f64 {
    (u.transpose() * g * v)[(0, 0)]
}

pub fn norm_mat(g: &Matrix, u: &Vector) -> f64 {
    inner_mat(g, u, u).max(0.0).sqrt()
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
pub fn gram_schmidt_mat(g: &Matrix, raw: &Matrix) -> Result<Matrix> {
    let r = raw.ncols();
    let scale = (0..r)
        .map(|j| norm_mat(g, &raw.column(j).into_owned()))
        .fold(0.0, f64::max);
    if r == 0 {
        return Ok(raw.clone());
    }
    if scale == 0.0 {
        return Err(Error::Rank("all input vectors vanish".into()));
    }
    let mut q = Matrix::zeros(raw.nrows(), r);
    for j in 0..r {
        let mut v = raw.column(j).into_owned();
        for _pass in 0..2 {
            for i in 0..j {
                let qi = q.column(i).into_owned();
                let c = inner_mat(g, &qi, &v);
                v -= c * qi;
            }
        }
        let nv = norm_mat(g, &v);
        if nv < RANK_TOL * scale {
            return Err(Error::Rank(format!(
                "vector {} is dependent on its predecessors (pivot {nv:e})",
                j + 1
            )));
        }
        q.set_column(j, &(v / nv));
    }
    Ok(q)
}

/// Extends the orthonormal columns of `existing` by orthonormalizing
/// `candidates` against them, skipping candidates that are (numerically)
/// already in the span. Stops once `want` new vectors are found.
pub fn extend_orthonormal(
    g: &Matrix,
    existing: &Matrix,
    candidates: &Matrix,
    want: usize,
    skip_tol: f64,
) -> Matrix {
    let n = g.nrows();
    let mut cols: Vec<Vector> = (0..existing.ncols())
        .map(|j| existing.column(j).into_owned())
        .collect();
    let base = cols.len();
    for c in 0..candidates.ncols() {
        if cols.len() - base >= want {
            break;
        }
        let raw = candidates.column(c).into_owned();
        let raw_norm = norm_mat(g, &raw);
        if raw_norm == 0.0 {
            continue;
        }
        let mut v = raw.clone();
        for _pass in 0..2 {
            for q in &cols {
                let coef = inner_mat(g, q, &v);
                v -= coef * q;
            }
        }
        let nv = norm_mat(g, &v);
        if nv > skip_tol * raw_norm.max(1.0) {
            cols.push(v / nv);
        }
    }
    let added = &cols[base..];
    let mut m = Matrix::zeros(n, added.len());
    for (j, v) in added.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

pub fn check_orthonormal(g: &Matrix, q: &Matrix) -> Result<()> {
    let gram = q.transpose() * g * q;
    let dev = (gram - Matrix::identity(q.ncols(), q.ncols())).amax();
    if dev > ORTHONORMAL_TOL {
        return Err(Error::Invariant(format!(
            "basis is not orthonormal (Gram deviation {dev:e})"
        )));
    }
    Ok(())
}

/// g-orthogonal projector onto the span of the orthonormal columns of `q`.
pub fn projector_mat(g: &Matrix, q: &Matrix) -> Result<Matrix> {
    check_orthonormal(g, q)?;
    Ok(projector_unchecked(g, q))
}

pub fn projector_unchecked(g: &Matrix, q: &Matrix) -> Matrix {
    q * q.transpose() * g
}

/// Symmetric eigendecomposition, eigenvalues ascending, eigenvectors with
/// their first nonzero component positive.
pub fn sym_eigen_mat(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::Dimension("eigenproblem needs a nonempty square matrix".into()));
    }
    let scale = a.norm();
    let asym = (a - a.transpose()).norm();
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(Error::Symmetry { residual: asym });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let r = a.nrows();
    let mut pairs: Vec<(f64, Vector)> = (0..r)
        .map(|j| {
            let mut v = eig.eigenvectors.column(j).into_owned();
            if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
                if *first < 0.0 {
                    v = -v;
                }
            }
            (eig.eigenvalues[j], v)
        })
        .collect();
    pairs.sort_by(|x, y| {
        x.0.partial_cmp(&y.0).unwrap().then_with(|| {
            x.1.iter()
                .zip(y.1.iter())
                .map(|(p, q)| p.partial_cmp(q).unwrap())
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut vecs = Matrix::zeros(r, r);
    let mut vals = Vec::with_capacity(r);
    for (j, (l, v)) in pairs.into_iter().enumerate() {
        let res = (&sym * &v - l * &v).norm();
        if res > EIGEN_RESIDUAL_TOL * scale.max(1e-300) && res > 1e-300 {
            return Err(Error::Invariant(format!("eigen residual {res:e} too large")));
        }
        vals.push(l);
        vecs.set_column(j, &v);
    }
    Ok((vals, vecs))
}

/// Principal angles between the spans of two g-orthonormal column sets.
///
/// Small angles come from sines, large ones from cosines, so both ends of
/// [0, pi/2] keep full precision.
pub fn principal_angles_mat(g: &Matrix, a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension("subspaces live in different spaces".into()));
    }
    let (a, b) = if a.ncols() <= b.ncols() { (a, b) } else { (b, a) };
    let p = a.ncols();
    if p == 0 {
        return Ok(vec![]);
    }
    let l = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Invariant("metric is not positive definite".into()))?
        .l();
    let at = l.transpose() * a;
    let bt = l.transpose() * b;
    let mut cos: Vec<f64> = (at.transpose() * &bt)
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    cos.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let resid = &at - &bt * (bt.transpose() * &at);
    let mut sin: Vec<f64> = resid.svd(false, false).singular_values.iter().copied().collect();
    sin.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut out: Vec<f64> = (0..p)
        .map(|i| {
            let c = cos.get(i).copied().unwrap_or(0.0).clamp(0.0, 1.0);
            let s = sin.get(i).copied().unwrap_or(1.0).clamp(0.0, 1.0);
            if c * c >= 0.5 {
                s.asin()
            } else {
                c.acos()
            }
        })
        .collect();
    out.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(out)
}

/// Orthonormal basis of the g-orthogonal complement of span(q) (q orthonormal).
pub fn orthogonal_complement(g: &Matrix, q: &Matrix) -> Matrix {
    let n = g.nrows();
    let want = n - q.ncols();
    extend_orthonormal(g, q, &Matrix::identity(n, n), want, 1e-8)
}

pub fn hstack(blocks: &[&Matrix], n: usize) -> Matrix {
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = Matrix::zeros(n, total);
    let mut c = 0;
    for b in blocks {
        for j in 0..b.ncols() {
            m.set_column(c, &b.column(j));
            c += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn pt(n: usize) -> AmbientPoint {
        AmbientPoint::origin(n)
    }

    fn tv(c: &[f64]) -> TangentVector {
        TangentVector::new(c.to_vec(), pt(c.len())).unwrap()
    }

    fn basis(cols: &[&[f64]]) -> SubspaceBasis {
        SubspaceBasis::new(cols.iter().map(|c| tv(c)).collect()).unwrap()
    }

    #[test]
    fn inner_examples() {
        let g3 = MetricAtPoint::identity(3);
        assert_eq!(inner(&g3, &tv(&[1., 0., 0.]), &tv(&[0., 1., 0.])).unwrap(), 0.0);
        assert_eq!(inner(&g3, &tv(&[1., 2., 2.]), &tv(&[1., 2., 2.])).unwrap(), 9.0);
        let g = MetricAtPoint::new(Matrix::from_diagonal(&Vector::from_vec(vec![2., 1.]))).unwrap();
        // 2*1*1 + 1*1*(-1)
        assert_eq!(inner(&g, &tv(&[1., 1.]), &tv(&[1., -1.])).unwrap(), 1.0);
    }

    #[test]
    fn inner_errors() {
        let g = MetricAtPoint::identity(2);
        assert!(matches!(
            inner(&g, &tv(&[1., 0., 0.]), &tv(&[1., 0., 0.])),
            Err(Error::Dimension(_))
        ));
        let other = TangentVector::new(vec![1., 0.], AmbientPoint::new(vec![1., 1.]).unwrap()).unwrap();
        assert_eq!(inner(&g, &tv(&[1., 0.]), &other), Err(Error::BasePoint));
    }

    #[test]
    fn metric_must_be_spd() {
        assert!(MetricAtPoint::new(Matrix::from_row_slice(2, 2, &[1., 2., 0., 1.])).is_err());
        assert!(MetricAtPoint::new(Matrix::from_row_slice(2, 2, &[1., 0., 0., -1.])).is_err());
    }

    #[test]
    fn gram_schmidt_examples() {
        let g = MetricAtPoint::identity(2);
        let q = gram_schmidt(&g, &basis(&[&[2., 0.], &[0., 3.]])).unwrap();
        assert_eq!(q.matrix(), &Matrix::identity(2, 2));
        let q = gram_schmidt(&g, &basis(&[&[1., 1.], &[1., 0.]])).unwrap();
        let gram = q.matrix().transpose() * q.matrix();
        assert!((gram - Matrix::identity(2, 2)).amax() < 1e-12);
        assert!(matches!(
            gram_schmidt(&g, &basis(&[&[1., 0.], &[2., 0.]])),
            Err(Error::Rank(_))
        ));
    }

    #[test]
    fn projector_examples() {
        let g = MetricAtPoint::identity(2);
        let p = projector(&g, &gram_schmidt(&g, &basis(&[&[1., 0.]])).unwrap()).unwrap();
        assert_eq!(p, Matrix::from_row_slice(2, 2, &[1., 0., 0., 0.]));
        let p = projector(&g, &gram_schmidt(&g, &basis(&[&[1., 1.]])).unwrap()).unwrap();
        assert!((p - Matrix::from_element(2, 2, 0.5)).amax() < 1e-15);
        assert!(matches!(projector(&g, &basis(&[&[2., 0.]])), Err(Error::Invariant(_))));
    }

    #[test]
    fn sym_eigen_examples() {
        let (l, _) = sym_eigen(&Matrix::from_diagonal_element(2, 2, -0.36)).unwrap();
        assert_eq!(l, vec![-0.36, -0.36]);
        let (l, _) = sym_eigen(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(l, vec![0.0, 0.0]);
        let (l, v) = sym_eigen(&Matrix::from_row_slice(2, 2, &[0., 1., 1., 0.])).unwrap();
        assert!((l[0] + 1.0).abs() < 1e-15 && (l[1] - 1.0).abs() < 1e-15);
        // sign convention: first nonzero component positive
        assert!(v[(0, 0)] > 0.0 && v[(0, 1)] > 0.0);
        assert!(matches!(
            sym_eigen(&Matrix::from_row_slice(2, 2, &[0., 1., 0., 0.])),
            Err(Error::Symmetry { .. })
        ));
    }

    #[test]
    fn principal_angle_examples() {
        let g = MetricAtPoint::identity(2);
        let e1 = basis(&[&[1., 0.]]);
        let e2 = basis(&[&[0., 1.]]);
        let diag = gram_schmidt(&g, &basis(&[&[1., 1.]])).unwrap();
        let e1o = gram_schmidt(&g, &e1).unwrap();
        let e2o = gram_schmidt(&g, &e2).unwrap();
        assert_eq!(principal_angles(&g, &e1o, &e1o).unwrap(), vec![0.0]);
        assert!((principal_angles(&g, &e1o, &e2o).unwrap()[0] - FRAC_PI_2).abs() < 1e-15);
        assert!((principal_angles(&g, &e1o, &diag).unwrap()[0] - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn tiny_angles_are_resolved() {
        let g = Matrix::identity(2, 2);
        let t: f64 = 1e-11;
        let a = Matrix::from_column_slice(2, 1, &[1., 0.]);
        let b = Matrix::from_column_slice(2, 1, &[t.cos(), t.sin()]);
        let ang = principal_angles_mat(&g, &a, &b).unwrap();
        assert!((ang[0] - t).abs() < 1e-20);
    }

    #[test]
    fn complement_spans_the_rest() {
        let g = Matrix::identity(3, 3);
        let q = Matrix::from_column_slice(3, 1, &[1., 1., 0.]) / 2f64.sqrt();
        let c = orthogonal_complement(&g, &q);
        assert_eq!(c.ncols(), 2);
        assert!((q.transpose() * &c).amax() < 1e-15);
        check_orthonormal(&g, &c).unwrap();
    }

    fn matrix_strategy(n: usize, r: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, n * r)
            .prop_map(move |v| Matrix::from_column_slice(n, r, &v))
    }

    fn spd_strategy(n: usize) -> impl Strategy<Value = Matrix> {
        matrix_strategy(n, n).prop_map(move |a| &a * a.transpose() + Matrix::identity(n, n) * 0.5)
    }

    proptest! {
        #[test]
        fn gram_schmidt_orthonormal((g, raw) in (spd_strategy(5), matrix_strategy(5, 3))) {
            let sv = raw.clone().svd(false, false).singular_values;
            let cond = sv.max() / sv.min();
            prop_assume!(cond <= 1e6);
            let q = gram_schmidt_mat(&g, &raw).unwrap();
            let gram = q.transpose() * &g * &q;
            prop_assert!((gram - Matrix::identity(3, 3)).amax() <= 1e-10);
            // span preserved
            let raw_o = gram_schmidt_mat(&g, &raw).unwrap();
            let ang = principal_angles_mat(&g, &raw_o, &q).unwrap();
            prop_assert!(ang.iter().all(|a| *a < 1e-10));
        }

        #[test]
        fn projector_properties((g, raw) in (spd_strategy(4), matrix_strategy(4, 2))) {
            let sv = raw.clone().svd(false, false).singular_values;
            prop_assume!(sv.min() > 1e-3);
            let q = gram_schmidt_mat(&g, &raw).unwrap();
            let p = projector_mat(&g, &q).unwrap();
            prop_assert!((&p * &p - &p).amax() <= 1e-10);
            prop_assert!((&g * &p - p.transpose() * &g).amax() <= 1e-10);
            prop_assert!((p.trace() - 2.0).abs() <= 1e-10);
            let v = raw.column(0).into_owned();
            prop_assert!((&p * &v - &v).amax() <= 1e-10);
        }

        #[test]
        fn eigen_reconstructs(a in matrix_strategy(6, 6)) {
            let s = (&a + a.transpose()) * 0.5;
            let (l, v) = sym_eigen_mat(&s).unwrap();
            prop_assert!(l.windows(2).all(|w| w[0] <= w[1]));
            let rec = &v * Matrix::from_diagonal(&Vector::from_vec(l)) * v.transpose();
            prop_assert!((rec - &s).norm() <= 1e-9 * s.norm().max(1e-300));
            prop_assert!((v.transpose() * &v - Matrix::identity(6, 6)).amax() <= 1e-10);
        }

        #[test]
        fn principal_angles_symmetric((a, b) in (matrix_strategy(5, 2), matrix_strategy(5, 3))) {
            let g = Matrix::identity(5, 5);
            prop_assume!(a.clone().svd(false, false).singular_values.min() > 1e-3);
            prop_assume!(b.clone().svd(false, false).singular_values.min() > 1e-3);
            let qa = gram_schmidt_mat(&g, &a).unwrap();
            let qb = gram_schmidt_mat(&g, &b).unwrap();
            let ab = principal_angles_mat(&g, &qa, &qb).unwrap();
            let ba = principal_angles_mat(&g, &qb, &qa).unwrap();
            prop_assert_eq!(ab.len(), 2);
            for (x, y) in ab.iter().zip(ba.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!(*x >= 0.0 && *x <= FRAC_PI_2 + 1e-15);
            }
            prop_assert!(ab.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
