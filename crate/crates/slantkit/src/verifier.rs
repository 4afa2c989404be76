//! Identity registry: every displayed identity of the theory as a residual
//! evaluated on seeded random vectors.
//!
//! Draws are g-unit, so residuals are absolute.

use crate::classifier::RIGHT_ANGLE_COS;
use crate::distribution::{Decomposition, LocalFrame};
use crate::duality::{build_dual_at, slant_parts};
use crate::error::Result;
use crate::linalg::{
    extend_orthonormal, gram_schmidt_mat, hstack, inner_mat, norm_mat, orthogonal_complement,
    principal_angles_mat, projector_unchecked, AmbientPoint, Matrix, Vector,
};
use crate::sampling::{point_rng, unit_in_span, unit_vector};
use crate::structure::Kind;
use crate::tolerances::Tolerances;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    All,
    Contact,
    Hermitian,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::All => "all",
            Setting::Contact => "contact",
            Setting::Hermitian => "hermitian",
        }
    }

    pub fn applies(self, kind: Kind) -> bool {
        match self {
            Setting::All => true,
            Setting::Contact => kind == Kind::ContactLike,
            Setting::Hermitian => kind == Kind::HermitianLike,
        }
    }
}

/// Residual of one draw, or `None` when the hypotheses do not hold at this
/// point (a right angle, an empty H, fewer than two components, ...).
type Evaluator = fn(&Ctx, &mut ChaCha8Rng) -> Option<f64>;

#[derive(Clone, Copy)]
pub struct IdentityCase {
    pub key: &'static str,
    pub setting: Setting,
    /// Needs the dual decomposition (w(Di), H).
    pub dual: bool,
    /// Draws random vectors; otherwise evaluated once per point.
    pub random: bool,
    eval: Evaluator,
}

impl std::fmt::Debug for IdentityCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IdentityCase")
            .field("key", &self.key)
            .field("setting", &self.setting)
            .finish()
    }
}

struct Part {
    cos: f64,
    sin: f64,
    lambda: f64,
    basis: Matrix,
    proj: Matrix,
}

impl Part {
    fn right(&self) -> bool {
        self.cos < RIGHT_ANGLE_COS
    }
}

struct DualCtx {
    gi: Vec<Matrix>,
    pgi: Vec<Matrix>,
    w_all: Matrix,
    h: Matrix,
    p_h: Matrix,
    sum_residual: f64,
    f_h_residual: f64,
}

/// Everything the evaluators need at one point.
pub struct Ctx {
    eps: f64,
    g: Matrix,
    phi: Matrix,
    xi: Option<Vector>,
    d: Matrix,
    p_d: Matrix,
    d_perp: Matrix,
    d0: Matrix,
    p0: Matrix,
    parts: Vec<Part>,
    proper: Matrix,
    g_frame: Matrix,
    p_g: Matrix,
    dual: Option<DualCtx>,
    /// Set when the slant data could not be extracted; only structure-level
    /// keys are meaningful then.
    slant_err: Option<String>,
}

impl Ctx {
    pub fn new(dec: &Decomposition, lf: &LocalFrame, tol: &Tolerances) -> Result<(Self, Option<String>)> {
        let n = lf.n();
        let g = lf.g.clone();
        let (d0, raw_parts, slant_err) = match slant_parts(dec, lf, tol) {
            Ok((d0, parts)) => (d0, parts, None),
            Err(e) => (Matrix::zeros(n, 0), Vec::new(), Some(e.to_string())),
        };
        let parts: Vec<Part> = raw_parts
            .into_iter()
            .map(|p| Part {
                cos: p.theta.cos(),
                sin: p.theta.sin(),
                lambda: p.lambda,
                proj: projector_unchecked(&g, &p.basis),
                basis: p.basis,
            })
            .collect();
        let refs: Vec<&Matrix> = parts.iter().map(|p| &p.basis).collect();
        let proper = hstack(&refs, n);
        let mut excluded = lf.d.clone();
        if let Some(xi) = &lf.xi {
            excluded = hstack(&[&lf.d, &Matrix::from_column_slice(n, 1, xi.as_slice())], n);
        }
        let g_frame = orthogonal_complement(&g, &excluded);
        let dual_res = match &slant_err {
            Some(e) => Err(crate::Error::Model(e.clone())),
            None => build_dual_at(dec, lf, tol),
        };
        let (dual, err) = match dual_res {
            Ok(s) => {
                let gi: Vec<Matrix> = s.duals.iter().map(|d| d.basis.clone()).collect();
                let refs: Vec<&Matrix> = gi.iter().collect();
                let w_all = hstack(&refs, n);
                (
                    Some(DualCtx {
                        pgi: gi.iter().map(|b| projector_unchecked(&g, b)).collect(),
                        gi,
                        w_all,
                        p_h: projector_unchecked(&g, &s.h),
                        h: s.h,
                        sum_residual: s.sum_residual,
                        f_h_residual: s.f_h_residual,
                    }),
                    None,
                )
            }
            Err(e) => (None, Some(e.to_string())),
        };
        Ok((
            Self {
                eps: lf.eps,
                p0: projector_unchecked(&g, &d0),
                d0,
                d_perp: orthogonal_complement(&g, &lf.d),
                p_g: projector_unchecked(&g, &g_frame),
                g_frame,
                xi: lf.xi.clone(),
                phi: lf.phi.clone(),
                d: lf.d.clone(),
                p_d: lf.p_d.clone(),
                g,
                parts,
                proper,
                dual,
                slant_err,
            },
            err,
        ))
    }

    fn phi(&self, v: &Vector) -> Vector {
        &self.phi * v
    }
    fn f(&self, v: &Vector) -> Vector {
        &self.p_d * (&self.phi * v)
    }
    fn w(&self, v: &Vector) -> Vector {
        let pv = &self.phi * v;
        &pv - &self.p_d * &pv
    }
    fn ip(&self, u: &Vector, v: &Vector) -> f64 {
        inner_mat(&self.g, u, v)
    }
    fn norm(&self, u: &Vector) -> f64 {
        norm_mat(&self.g, u)
    }
    fn eta(&self, v: &Vector) -> f64 {
        self.xi.as_ref().map_or(0.0, |xi| self.ip(v, xi))
    }
    /// Cosine of the angle; `None` for (numerically) vanishing vectors.
    fn cos(&self, u: &Vector, v: &Vector) -> Option<f64> {
        let (nu, nv) = (self.norm(u), self.norm(v));
        if nu < 1e-7 || nv < 1e-7 {
            return None;
        }
        Some(self.ip(u, v) / (nu * nv))
    }
    fn draw(&self, basis: &Matrix, rng: &mut ChaCha8Rng) -> Option<Vector> {
        (basis.ncols() > 0).then(|| unit_in_span(basis, rng))
    }
    fn ambient(&self, rng: &mut ChaCha8Rng) -> Vector {
        unit_vector(&self.g, rng)
    }
    fn xi_perp(&self, rng: &mut ChaCha8Rng) -> Vector {
        let mut v = self.ambient(rng);
        if let Some(xi) = &self.xi {
            v -= xi * self.ip(&v, xi);
        }
        let nv = self.norm(&v);
        v / nv
    }
    fn d_plus_g(&self) -> Matrix {
        hstack(&[&self.d, &self.g_frame], self.g.nrows())
    }
    fn dual(&self) -> Option<&DualCtx> {
        self.dual.as_ref()
    }
}

fn dist(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax()
}

fn max2(a: f64, b: f64) -> f64 {
    a.max(b)
}

/// Largest residual over components passing `keep`, or `None` if none does.
fn over_parts(c: &Ctx, keep: impl Fn(&Part) -> bool, mut f: impl FnMut(usize, &Part) -> Option<f64>) -> Option<f64> {
    let mut out: Option<f64> = None;
    for (i, p) in c.parts.iter().enumerate() {
        if keep(p) {
            if let Some(r) = f(i, p) {
                out = Some(out.map_or(r, |o: f64| o.max(r)));
            }
        }
    }
    out
}

fn any(_: &Part) -> bool {
    true
}

fn not_right(p: &Part) -> bool {
    !p.right()
}

/// Largest principal angle between two spans given by raw columns.
fn span_gap(g: &Matrix, a: &Matrix, b: &Matrix) -> f64 {
    match (gram_schmidt_mat(g, a), gram_schmidt_mat(g, b)) {
        (Ok(qa), Ok(qb)) if qa.ncols() == qb.ncols() => principal_angles_mat(g, &qa, &qb)
            .map(|v| v.into_iter().fold(0.0, f64::max))
            .unwrap_or(FRAC_PI_2),
        _ => FRAC_PI_2,
    }
}

fn map_cols(m: &Matrix, f: impl Fn(&Vector) -> Vector) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        out.set_column(j, &f(&m.column(j).into_owned()));
    }
    out
}

fn case(key: &'static str, setting: Setting, dual: bool, random: bool, eval: Evaluator) -> IdentityCase {
    IdentityCase {
        key,
        setting,
        dual,
        random,
        eval,
    }
}

/// The full registry, in manifest order.
pub fn registry() -> Vec<IdentityCase> {
    use Setting::*;
    vec![
        // ---- structure ----
        case("eq1.compat", All, false, true, |c, r| {
            let (x, y) = (c.ambient(r), c.ambient(r));
            Some((c.ip(&c.phi(&x), &y) - c.eps * c.ip(&x, &c.phi(&y))).abs())
        }),
        case("eq2.phi-squared", Contact, false, true, |c, r| {
            let x = c.ambient(r);
            let xi = c.xi.as_ref()?;
            Some(dist(&c.phi(&c.phi(&x)), &((&x - xi * c.eta(&x)) * c.eps)))
        }),
        case("eq3.metric", Contact, false, true, |c, r| {
            let (x, y) = (c.ambient(r), c.ambient(r));
            Some((c.ip(&c.phi(&x), &c.phi(&y)) - (c.ip(&x, &y) - c.eta(&x) * c.eta(&y))).abs())
        }),
        case("eq3.phi-xi", Contact, false, false, |c, _| Some(c.phi(c.xi.as_ref()?).amax())),
        case("eq3.eta-phi", Contact, false, true, |c, r| {
            let x = c.ambient(r);
            Some(c.eta(&c.phi(&x)).abs())
        }),
        case("eq7.phi-squared", Contact, false, true, |c, r| {
            let x = c.xi_perp(r);
            Some(dist(&c.phi(&c.phi(&x)), &(&x * c.eps)))
        }),
        case("eq7.xi-perp", Contact, false, true, |c, r| {
            let x = c.xi_perp(r);
            Some(c.eta(&c.phi(&x)).abs())
        }),
        case("eq7.norm", Contact, false, true, |c, r| {
            let x = c.xi_perp(r);
            Some((c.norm(&c.phi(&x)) - c.norm(&x)).abs())
        }),
        case("h2.phi-squared", Hermitian, false, true, |c, r| {
            let x = c.ambient(r);
            Some(dist(&c.phi(&c.phi(&x)), &(&x * c.eps)))
        }),
        case("h3.isometry", Hermitian, false, true, |c, r| {
            let (x, y) = (c.ambient(r), c.ambient(r));
            Some((c.ip(&c.phi(&x), &c.phi(&y)) - c.ip(&x, &y)).abs())
        }),
        // ---- f/w calculus on D and its complement ----
        case("lemma1.a", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.d, r)?, c.draw(&c.d, r)?);
            Some((c.ip(&x, &c.f(&y)) - c.eps * c.ip(&c.f(&x), &y)).abs())
        }),
        case("lemma1.b", All, false, true, |c, r| {
            let (x, u) = (c.draw(&c.d, r)?, c.draw(&c.d_perp, r)?);
            Some((c.ip(&x, &c.f(&u)) - c.eps * c.ip(&c.w(&x), &u)).abs())
        }),
        case("lemma1.c", All, false, true, |c, r| {
            let (u, v) = (c.draw(&c.d_perp, r)?, c.draw(&c.d_perp, r)?);
            Some((c.ip(&u, &c.w(&v)) - c.eps * c.ip(&c.w(&u), &v)).abs())
        }),
        case("lemma2.line1", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.d, r)?, c.draw(&c.d, r)?);
            let a = c.ip(&c.f(&c.f(&x)), &y);
            let b = c.eps * c.ip(&c.f(&x), &c.f(&y));
            let d = c.ip(&x, &c.f(&c.f(&y)));
            Some(max2((a - b).abs(), (b - d).abs()))
        }),
        case("lemma2.line2", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.d, r)?, c.draw(&c.d, r)?);
            let a = c.ip(&c.f(&c.w(&x)), &y);
            let b = c.eps * c.ip(&c.w(&x), &c.w(&y));
            let d = c.ip(&x, &c.f(&c.w(&y)));
            Some(max2((a - b).abs(), (b - d).abs()))
        }),
        case("lemma2.line3", All, false, true, |c, r| {
            let (u, v) = (c.draw(&c.d_perp, r)?, c.draw(&c.d_perp, r)?);
            let a = c.ip(&c.w(&c.f(&u)), &v);
            let b = c.eps * c.ip(&c.f(&u), &c.f(&v));
            let d = c.ip(&u, &c.w(&c.f(&v)));
            Some(max2((a - b).abs(), (b - d).abs()))
        }),
        case("lemma2.line4", All, false, true, |c, r| {
            let (u, v) = (c.draw(&c.d_perp, r)?, c.draw(&c.d_perp, r)?);
            let a = c.ip(&c.w(&c.w(&u)), &v);
            let b = c.eps * c.ip(&c.w(&u), &c.w(&v));
            let d = c.ip(&u, &c.w(&c.w(&v)));
            Some(max2((a - b).abs(), (b - d).abs()))
        }),
        case("lemma2.line5", All, false, true, |c, r| {
            let (x, u) = (c.draw(&c.d, r)?, c.draw(&c.d_perp, r)?);
            let a = c.ip(&c.w(&c.f(&x)), &u);
            let b = c.eps * c.ip(&c.f(&x), &c.f(&u));
            let d = c.ip(&x, &c.f(&c.f(&u)));
            Some(max2((a - b).abs(), (b - d).abs()))
        }),
        case("lemma2.line6", All, false, true, |c, r| {
            let (x, u) = (c.draw(&c.d, r)?, c.draw(&c.d_perp, r)?);
            let a = c.ip(&c.w(&c.w(&x)), &u);
            let b = c.eps * c.ip(&c.w(&x), &c.w(&u));
            let d = c.ip(&x, &c.f(&c.w(&u)));
            Some(max2((a - b).abs(), (b - d).abs()))
        }),
        // ---- slant data on D ----
        case("eq9.phi-d0", All, false, true, |c, r| {
            let x = c.draw(&c.d0, r)?;
            let px = c.phi(&x);
            Some(max2((&px - &c.p0 * &px).amax(), c.w(&x).amax()))
        }),
        case("eq18.phi-orth", All, false, true, |c, r| {
            if c.parts.len() < 2 {
                return None;
            }
            let mut worst = 0.0f64;
            for i in 0..c.parts.len() {
                for j in 0..c.parts.len() {
                    if i != j {
                        let xi = c.draw(&c.parts[i].basis, r)?;
                        let xj = c.draw(&c.parts[j].basis, r)?;
                        worst = worst.max(c.ip(&c.phi(&xi), &xj).abs());
                    }
                }
            }
            Some(worst)
        }),
        case("eq17.w-orth", All, false, true, |c, r| {
            if c.parts.len() < 2 {
                return None;
            }
            let mut worst = 0.0f64;
            for i in 0..c.parts.len() {
                for j in i + 1..c.parts.len() {
                    let xi = c.draw(&c.parts[i].basis, r)?;
                    let xj = c.draw(&c.parts[j].basis, r)?;
                    worst = worst.max(c.ip(&c.w(&xi), &c.w(&xj)).abs());
                }
            }
            Some(worst)
        }),
        case("prop-p64.w-sum", All, false, false, |c, _| {
            if c.parts.is_empty() {
                return None;
            }
            let wd = map_cols(&c.proper, |v| c.w(v));
            let refs: Vec<Matrix> = c.parts.iter().map(|p| map_cols(&p.basis, |v| c.w(v))).collect();
            let rr: Vec<&Matrix> = refs.iter().collect();
            Some(span_gap(&c.g, &wd, &hstack(&rr, c.g.nrows())))
        }),
        case("eq13.contact-invariance", Contact, false, true, |c, r| {
            let b = c.d_plus_g();
            let x = c.draw(&b, r)?;
            let px = c.phi(&x);
            let pb = projector_unchecked(&c.g, &b);
            Some((&px - &pb * &px).amax())
        }),
        case("rem-p184.i", All, false, true, |c, r| {
            let mut worst = over_parts(c, any, |_, p| {
                let x = c.draw(&p.basis, r)?;
                let y = c.phi(&c.phi(&x));
                Some((&y - &p.proj * &y).amax())
            })
            .unwrap_or(0.0);
            if let Some(u) = c.draw(&c.g_frame, r) {
                let y = c.phi(&c.phi(&u));
                worst = worst.max((&y - &c.p_g * &y).amax());
            }
            Some(worst)
        }),
        case("rem-p184.ii", All, false, true, |c, r| {
            let x = c.draw(&c.d, r)?;
            let px = c.phi(&x);
            Some(max2(dist(&c.f(&px), &(&x * c.eps)), c.w(&px).amax()))
        }),
        case("rem-p184.iii", All, false, true, |c, r| {
            let u = c.draw(&c.g_frame, r)?;
            let pu = c.phi(&u);
            Some(max2(c.f(&pu).amax(), dist(&c.w(&pu), &(&u * c.eps))))
        }),
        case("eq34", All, false, true, |c, r| {
            over_parts(c, any, |_, p| {
                let x = c.draw(&p.basis, r)?;
                Some((c.norm(&c.f(&x)) - p.cos * c.norm(&c.phi(&x))).abs())
            })
        }),
        case("eq36", All, false, true, |c, r| {
            over_parts(c, any, |_, p| {
                let (x, y) = (c.draw(&p.basis, r)?, c.draw(&p.basis, r)?);
                let lhs = c.ip(&c.f(&c.f(&x)), &y);
                let rhs = p.cos * p.cos * c.ip(&c.phi(&c.phi(&x)), &y);
                Some((lhs - rhs).abs())
            })
        }),
        case("prop-p23.f2", All, false, true, |c, r| {
            let x = c.draw(&c.d, r)?;
            let mut rhs = &c.p0 * &x;
            for p in &c.parts {
                rhs += &p.proj * &x * (p.cos * p.cos);
            }
            Some(dist(&c.f(&c.f(&x)), &(rhs * c.eps)))
        }),
        case("thm-p143.eigen", All, false, true, |c, r| {
            over_parts(c, any, |_, p| {
                let x = c.draw(&p.basis, r)?;
                let eig = dist(&c.f(&c.f(&x)), &(&x * p.lambda));
                let cosr = (p.cos - (c.eps * p.lambda).max(0.0).sqrt()).abs();
                Some(eig.max(cosr))
            })
        }),
        case("cor-p0.f-onto", All, false, false, |c, _| {
            over_parts(c, not_right, |_, p| {
                let fb = map_cols(&p.basis, |v| c.f(v));
                let leak = (&fb - &p.proj * &fb).amax();
                let sv = (p.basis.transpose() * &c.g * &fb).svd(false, false).singular_values;
                let spread = sv.iter().map(|s| (s - p.cos).abs()).fold(0.0, f64::max);
                Some(leak.max(spread))
            })
        }),
        case("cor-p69.fw", All, false, true, |c, r| {
            let x = c.draw(&c.d, r)?;
            let mut rhs = Vector::zeros(x.len());
            for p in &c.parts {
                rhs += &p.proj * &x * (p.sin * p.sin);
            }
            Some(dist(&c.f(&c.w(&x)), &(rhs * c.eps)))
        }),
        case("prop-p2.line1", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.d, r)?, c.draw(&c.d, r)?);
            let mut s = c.ip(&(&c.p0 * &x), &(&c.p0 * &y));
            for p in &c.parts {
                s += c.ip(&(&p.proj * &x), &(&p.proj * &y));
            }
            Some((c.ip(&c.phi(&x), &c.phi(&y)) - s).abs())
        }),
        case("prop-p2.line2", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.d, r)?, c.draw(&c.d, r)?);
            let mut s = c.ip(&(&c.p0 * &x), &(&c.p0 * &y));
            for p in &c.parts {
                s += p.cos * p.cos * c.ip(&(&p.proj * &x), &(&p.proj * &y));
            }
            Some((c.ip(&c.f(&x), &c.f(&y)) - s).abs())
        }),
        case("prop-p2.line3", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.d, r)?, c.draw(&c.d, r)?);
            let mut s = 0.0;
            for p in &c.parts {
                s += p.sin * p.sin * c.ip(&(&p.proj * &x), &(&p.proj * &y));
            }
            Some((c.ip(&c.w(&x), &c.w(&y)) - s).abs())
        }),
        case("prop-p4.line1", Contact, false, true, |c, r| {
            let xi = c.xi.as_ref()?;
            let b = hstack(&[&c.d, &Matrix::from_column_slice(xi.len(), 1, xi.as_slice())], xi.len());
            let x = c.draw(&b, r)?;
            let lhs = c.f(&c.f(&x)) + c.f(&c.w(&x));
            Some(dist(&lhs, &((&x - xi * c.eta(&x)) * c.eps)))
        }),
        case("prop-p4.line2", Contact, false, true, |c, r| {
            let xi = c.xi.as_ref()?;
            let b = hstack(&[&c.d, &Matrix::from_column_slice(xi.len(), 1, xi.as_slice())], xi.len());
            let x = c.draw(&b, r)?;
            Some((c.w(&c.f(&x)) + c.w(&c.w(&x))).amax())
        }),
        case("prop-p4.line3", Contact, false, true, |c, r| {
            let u = c.draw(&c.g_frame, r)?;
            Some((c.f(&c.f(&u)) + c.f(&c.w(&u))).amax())
        }),
        case("prop-p4.line4", Contact, false, true, |c, r| {
            let u = c.draw(&c.g_frame, r)?;
            Some(dist(&(c.w(&c.f(&u)) + c.w(&c.w(&u))), &(&u * c.eps)))
        }),
        case("prop-p24.line1", Hermitian, false, true, |c, r| {
            let x = c.draw(&c.d, r)?;
            Some(dist(&(c.f(&c.f(&x)) + c.f(&c.w(&x))), &(&x * c.eps)))
        }),
        case("prop-p24.line2", Hermitian, false, true, |c, r| {
            let x = c.draw(&c.d, r)?;
            Some((c.w(&c.f(&x)) + c.w(&c.w(&x))).amax())
        }),
        case("prop-p24.line3", Hermitian, false, true, |c, r| {
            let u = c.draw(&c.g_frame, r)?;
            Some((c.f(&c.f(&u)) + c.f(&c.w(&u))).amax())
        }),
        case("prop-p24.line4", Hermitian, false, true, |c, r| {
            let u = c.draw(&c.g_frame, r)?;
            Some(dist(&(c.w(&c.f(&u)) + c.w(&c.w(&u))), &(&u * c.eps)))
        }),
        case("prop-p7.f-norm", All, false, true, |c, r| {
            let x = c.draw(&c.d, r)?;
            let x0 = &c.p0 * &x;
            let mut s = c.ip(&x0, &x0);
            for p in &c.parts {
                let xi = &p.proj * &x;
                s += p.cos * p.cos * c.ip(&xi, &xi);
            }
            let fx = c.f(&x);
            Some((c.ip(&fx, &fx) - s).abs())
        }),
        case("cor-p15.w-norm", All, false, true, |c, r| {
            over_parts(c, any, |_, p| {
                let x = c.draw(&p.basis, r)?;
                Some((c.norm(&c.w(&x)) - p.sin * c.norm(&x)).abs())
            })
        }),
        case("prop-p16.w", All, false, true, |c, r| {
            let x = c.draw(&c.proper, r)?;
            let mut s = 0.0;
            for p in &c.parts {
                let xi = &p.proj * &x;
                s += p.sin * p.sin * c.ip(&xi, &xi);
            }
            let wx = c.w(&x);
            Some((c.ip(&wx, &wx) - s).abs())
        }),
        case("prop-p13.i", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.d0, r)?, c.draw(&c.d0, r)?);
            let a = c.cos(&c.f(&x), &c.f(&y))?;
            let b = c.cos(&c.phi(&x), &c.phi(&y))?;
            let d = c.cos(&x, &y)?;
            Some(max2((a - b).abs(), (b - d).abs()))
        }),
        case("prop-p13.ii", All, false, true, |c, r| {
            over_parts(c, not_right, |_, p| {
                let (x, y) = (c.draw(&p.basis, r)?, c.draw(&p.basis, r)?);
                let a = c.cos(&c.f(&x), &c.f(&y))?;
                let b = c.cos(&c.phi(&x), &c.phi(&y))?;
                let d = c.cos(&x, &y)?;
                Some(max2((a - b).abs(), (b - d).abs()))
            })
        }),
        case("prop-p14.i", All, false, true, |c, r| {
            over_parts(c, any, |_, p| {
                let (x, y) = (c.draw(&p.basis, r)?, c.draw(&p.basis, r)?);
                Some((c.ip(&c.w(&x), &c.w(&y)) - p.sin * p.sin * c.ip(&x, &y)).abs())
            })
        }),
        case("prop-p14.iii", All, false, true, |c, r| {
            over_parts(c, any, |_, p| {
                let (x, y) = (c.draw(&p.basis, r)?, c.draw(&p.basis, r)?);
                Some((c.cos(&c.w(&x), &c.w(&y))? - c.cos(&x, &y)?).abs())
            })
        }),
        case("thm-p17.i", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.proper, r)?, c.draw(&c.proper, r)?);
            let s: f64 = c
                .parts
                .iter()
                .map(|p| p.sin * p.sin * c.ip(&(&p.proj * &x), &(&p.proj * &y)))
                .sum();
            Some((c.ip(&c.w(&x), &c.w(&y)) - s).abs())
        }),
        case("thm-p17.iii", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.proper, r)?, c.draw(&c.proper, r)?);
            let sx = weighted(c, &x, |p| p.sin, None);
            let sy = weighted(c, &y, |p| p.sin, None);
            Some((c.cos(&c.w(&x), &c.w(&y))? - c.cos(&sx, &sy)?).abs())
        }),
        case("cor-p18.i", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.proper, r)?, c.draw(&c.proper, r)?);
            let mut s = 0.0;
            for p in &c.parts {
                if p.sin < 1e-6 {
                    return None;
                }
                s += c.ip(&c.w(&(&p.proj * &x)), &c.w(&(&p.proj * &y))) / (p.sin * p.sin);
            }
            Some((c.ip(&x, &y) - s).abs())
        }),
        case("cor-p18.iii", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.proper, r)?, c.draw(&c.proper, r)?);
            if c.parts.iter().any(|p| p.sin < 1e-6) {
                return None;
            }
            let wx = weighted(c, &x, |p| 1.0 / p.sin, Some(Ctx::w));
            let wy = weighted(c, &y, |p| 1.0 / p.sin, Some(Ctx::w));
            Some((c.cos(&x, &y)? - c.cos(&wx, &wy)?).abs())
        }),
        case("cor-p19.i", All, false, true, |c, r| {
            over_parts(c, any, |_, p| {
                let (x, y) = (c.draw(&p.basis, r)?, c.draw(&p.basis, r)?);
                let lhs = c.ip(&c.f(&c.w(&x)), &c.f(&c.w(&y)));
                Some((lhs - p.sin.powi(4) * c.ip(&x, &y)).abs())
            })
        }),
        case("cor-p19.iii", All, false, true, |c, r| {
            over_parts(c, any, |_, p| {
                let (x, y) = (c.draw(&p.basis, r)?, c.draw(&p.basis, r)?);
                Some((c.cos(&c.f(&c.w(&x)), &c.f(&c.w(&y)))? - c.cos(&x, &y)?).abs())
            })
        }),
        case("cor-p20.i", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.proper, r)?, c.draw(&c.proper, r)?);
            let s: f64 = c
                .parts
                .iter()
                .map(|p| p.sin.powi(4) * c.ip(&(&p.proj * &x), &(&p.proj * &y)))
                .sum();
            Some((c.ip(&c.f(&c.w(&x)), &c.f(&c.w(&y))) - s).abs())
        }),
        case("cor-p20.iii", All, false, true, |c, r| {
            let (x, y) = (c.draw(&c.proper, r)?, c.draw(&c.proper, r)?);
            let sx = weighted(c, &x, |p| p.sin * p.sin, None);
            let sy = weighted(c, &y, |p| p.sin * p.sin, None);
            Some((c.cos(&c.f(&c.w(&x)), &c.f(&c.w(&y)))? - c.cos(&sx, &sy)?).abs())
        }),
        // ---- the dual side: G = (+) w(Di) (+) H ----
        case("thm-p1.decomposition", All, true, false, |c, _| {
            let d = c.dual()?;
            Some(d.sum_residual.max(d.f_h_residual))
        }),
        case("cor-p62.phi-h", All, true, true, |c, r| {
            let d = c.dual()?;
            let u = c.draw(&d.h, r)?;
            let pu = c.phi(&u);
            let wu = c.w(&u);
            Some(max2((&pu - &d.p_h * &pu).amax(), dist(&pu, &wu)))
        }),
        case("prop-p3.fw-onto", All, true, false, |c, _| {
            let d = c.dual()?;
            over_parts(c, any, |i, p| {
                Some(span_gap(&c.g, &map_cols(&d.gi[i], |v| c.f(v)), &p.basis))
            })
        }),
        case("prop-p3.f-of-g", All, true, false, |c, _| {
            c.dual()?;
            let fg = map_cols(&c.g_frame, |v| c.f(v));
            let empty = Matrix::zeros(c.g.nrows(), 0);
            let range = extend_orthonormal(&c.g, &empty, &fg, c.g.nrows(), 1e-8);
            if range.ncols() != c.proper.ncols() {
                return Some(1.0);
            }
            if range.ncols() == 0 {
                return Some(0.0);
            }
            Some(span_gap(&c.g, &range, &c.proper))
        }),
        case("prop-p3.dim", All, true, false, |c, _| {
            let d = c.dual()?;
            over_parts(c, any, |i, p| Some((d.gi[i].ncols() as f64 - p.basis.ncols() as f64).abs()))
        }),
        case("prop-p5.w2", All, true, false, |c, _| {
            let d = c.dual()?;
            over_parts(c, any, |i, p| {
                let w2 = map_cols(&p.basis, |v| c.w(&c.w(v)));
                if p.right() {
                    Some(w2.amax())
                } else {
                    Some(span_gap(&c.g, &w2, &d.gi[i]))
                }
            })
        }),
        case("prop-p6.wf", All, true, true, |c, r| {
            let d = c.dual()?;
            let u = c.draw(&d.w_all, r)?;
            let mut rhs = Vector::zeros(u.len());
            for (i, p) in c.parts.iter().enumerate() {
                rhs += &d.pgi[i] * &u * (p.sin * p.sin);
            }
            Some(dist(&c.w(&c.f(&u)), &(rhs * c.eps)))
        }),
        case("prop-p6.w2", All, true, true, |c, r| {
            let d = c.dual()?;
            let u = c.draw(&d.w_all, r)?;
            let mut rhs = Vector::zeros(u.len());
            for (i, p) in c.parts.iter().enumerate() {
                rhs += &d.pgi[i] * &u * (p.cos * p.cos);
            }
            Some(dist(&c.w(&c.w(&u)), &(rhs * c.eps)))
        }),
        case("prop-p66.wf-onto", All, true, false, |c, _| {
            let d = c.dual()?;
            over_parts(c, any, |i, _| {
                Some(span_gap(&c.g, &map_cols(&d.gi[i], |v| c.w(&c.f(v))), &d.gi[i]))
            })
        }),
        case("prop-p66.f2", All, true, false, |c, _| {
            let d = c.dual()?;
            over_parts(c, any, |i, p| {
                let f2 = map_cols(&d.gi[i], |v| c.f(&c.f(v)));
                if p.right() {
                    Some(f2.amax())
                } else {
                    Some(span_gap(&c.g, &f2, &p.basis))
                }
            })
        }),
        case("prop-p67.line1", All, true, true, |c, r| {
            let d = c.dual()?;
            let (u, v) = (c.draw(&d.w_all, r)?, c.draw(&d.w_all, r)?);
            let s: f64 = (0..c.parts.len())
                .map(|i| c.parts[i].sin.powi(2) * c.ip(&(&d.pgi[i] * &u), &(&d.pgi[i] * &v)))
                .sum();
            Some((c.ip(&c.f(&u), &c.f(&v)) - s).abs())
        }),
        case("prop-p67.line2", All, true, true, |c, r| {
            let d = c.dual()?;
            let (u, v) = (c.draw(&d.w_all, r)?, c.draw(&d.w_all, r)?);
            let s: f64 = (0..c.parts.len())
                .map(|i| c.parts[i].cos.powi(2) * c.ip(&(&d.pgi[i] * &u), &(&d.pgi[i] * &v)))
                .sum();
            Some((c.ip(&c.w(&u), &c.w(&v)) - s).abs())
        }),
        case("prop-p67.line3", All, true, true, |c, r| {
            let d = c.dual()?;
            let (u, v) = (c.draw(&d.w_all, r)?, c.draw(&d.w_all, r)?);
            let s: f64 = (0..c.parts.len())
                .map(|i| c.ip(&(&d.pgi[i] * &u), &(&d.pgi[i] * &v)))
                .sum();
            Some((c.ip(&c.phi(&u), &c.phi(&v)) - s).abs())
        }),
        case("prop-p7.w-norm", All, true, true, |c, r| {
            let d = c.dual()?;
            let u = c.draw(&d.w_all, r)?;
            let s: f64 = (0..c.parts.len())
                .map(|i| {
                    let ui = &d.pgi[i] * &u;
                    c.parts[i].cos.powi(2) * c.ip(&ui, &ui)
                })
                .sum();
            let wu = c.w(&u);
            Some((c.ip(&wu, &wu) - s).abs())
        }),
        case("cor-p15.f-norm", All, true, true, |c, r| {
            let d = c.dual()?;
            over_parts(c, any, |i, p| {
                let u = c.draw(&d.gi[i], r)?;
                Some((c.norm(&c.f(&u)) - p.sin * c.norm(&u)).abs())
            })
        }),
        case("prop-p16.f", All, true, true, |c, r| {
            let d = c.dual()?;
            let u = c.draw(&d.w_all, r)?;
            let s: f64 = (0..c.parts.len())
                .map(|i| {
                    let ui = &d.pgi[i] * &u;
                    c.parts[i].sin.powi(2) * c.ip(&ui, &ui)
                })
                .sum();
            let fu = c.f(&u);
            Some((c.ip(&fu, &fu) - s).abs())
        }),
        case("cor-p60.w2", All, true, true, |c, r| {
            let d = c.dual()?;
            let u = c.draw(&d.h, r)?;
            Some(dist(&c.w(&c.w(&u)), &(&u * c.eps)))
        }),
        case("cor-p60.metric", All, true, true, |c, r| {
            let d = c.dual()?;
            let (u, v) = (c.draw(&d.h, r)?, c.draw(&d.h, r)?);
            Some((c.ip(&c.w(&u), &c.w(&v)) - c.ip(&u, &v)).abs())
        }),
        case("cor-p60.norm", All, true, true, |c, r| {
            let d = c.dual()?;
            let u = c.draw(&d.h, r)?;
            Some((c.norm(&c.w(&u)) - c.norm(&u)).abs())
        }),
        case("prop-p13.iii", All, true, true, |c, r| {
            let d = c.dual()?;
            over_parts(c, any, |i, p| {
                let (u, v) = (c.draw(&d.gi[i], r)?, c.draw(&d.gi[i], r)?);
                Some((c.ip(&c.w(&u), &c.w(&v)) - p.cos * p.cos * c.ip(&u, &v)).abs())
            })
        }),
        case("prop-p13.iv", All, true, true, |c, r| {
            let d = c.dual()?;
            let (u, v) = (c.draw(&d.h, r)?, c.draw(&d.h, r)?);
            let a = c.cos(&c.w(&u), &c.w(&v))?;
            let b = c.cos(&u, &v)?;
            let e = c.cos(&c.phi(&u), &c.phi(&v))?;
            Some(max2((a - b).abs(), (b - e).abs()))
        }),
        case("prop-p13.v", All, true, true, |c, r| {
            let d = c.dual()?;
            over_parts(c, not_right, |i, _| {
                let (u, v) = (c.draw(&d.gi[i], r)?, c.draw(&d.gi[i], r)?);
                let a = c.cos(&c.w(&u), &c.w(&v))?;
                let b = c.cos(&u, &v)?;
                let e = c.cos(&c.phi(&u), &c.phi(&v))?;
                Some(max2((a - b).abs(), (b - e).abs()))
            })
        }),
        case("prop-p13.vi", All, true, true, |c, r| {
            c.dual()?;
            let b = c.d_plus_g();
            let (x, y) = (c.draw(&b, r)?, c.draw(&b, r)?);
            Some((c.cos(&c.phi(&x), &c.phi(&y))? - c.cos(&x, &y)?).abs())
        }),
        case("prop-p14.ii", All, true, true, |c, r| {
            let d = c.dual()?;
            over_parts(c, any, |i, p| {
                let (u, v) = (c.draw(&d.gi[i], r)?, c.draw(&d.gi[i], r)?);
                Some((c.ip(&c.f(&u), &c.f(&v)) - p.sin * p.sin * c.ip(&u, &v)).abs())
            })
        }),
        case("prop-p14.iv", All, true, true, |c, r| {
            let d = c.dual()?;
            over_parts(c, any, |i, _| {
                let (u, v) = (c.draw(&d.gi[i], r)?, c.draw(&d.gi[i], r)?);
                Some((c.cos(&c.f(&u), &c.f(&v))? - c.cos(&u, &v)?).abs())
            })
        }),
        case("thm-p17.ii", All, true, true, |c, r| {
            let d = c.dual()?;
            let (u, v) = (c.draw(&d.w_all, r)?, c.draw(&d.w_all, r)?);
            let s: f64 = (0..c.parts.len())
                .map(|i| c.parts[i].sin.powi(2) * c.ip(&(&d.pgi[i] * &u), &(&d.pgi[i] * &v)))
                .sum();
            Some((c.ip(&c.f(&u), &c.f(&v)) - s).abs())
        }),
        case("thm-p17.iv", All, true, true, |c, r| {
            let d = c.dual()?;
            let (u, v) = (c.draw(&d.w_all, r)?, c.draw(&d.w_all, r)?);
            let su = weighted_dual(c, d, &u, |p| p.sin, None);
            let sv = weighted_dual(c, d, &v, |p| p.sin, None);
            Some((c.cos(&c.f(&u), &c.f(&v))? - c.cos(&su, &sv)?).abs())
        }),
        case("cor-p18.ii", All, true, true, |c, r| {
            let d = c.dual()?;
            if c.parts.iter().any(|p| p.sin < 1e-6) {
                return None;
            }
            let (u, v) = (c.draw(&d.w_all, r)?, c.draw(&d.w_all, r)?);
            let s: f64 = (0..c.parts.len())
                .map(|i| {
                    c.ip(&c.f(&(&d.pgi[i] * &u)), &c.f(&(&d.pgi[i] * &v))) / c.parts[i].sin.powi(2)
                })
                .sum();
            Some((c.ip(&u, &v) - s).abs())
        }),
        case("cor-p18.iv", All, true, true, |c, r| {
            let d = c.dual()?;
            if c.parts.iter().any(|p| p.sin < 1e-6) {
                return None;
            }
            let (u, v) = (c.draw(&d.w_all, r)?, c.draw(&d.w_all, r)?);
            let fu = weighted_dual(c, d, &u, |p| 1.0 / p.sin, Some(Ctx::f));
            let fv = weighted_dual(c, d, &v, |p| 1.0 / p.sin, Some(Ctx::f));
            Some((c.cos(&u, &v)? - c.cos(&fu, &fv)?).abs())
        }),
        case("cor-p19.ii", All, true, true, |c, r| {
            let d = c.dual()?;
            over_parts(c, any, |i, p| {
                let (u, v) = (c.draw(&d.gi[i], r)?, c.draw(&d.gi[i], r)?);
                let lhs = c.ip(&c.w(&c.f(&u)), &c.w(&c.f(&v)));
                Some((lhs - p.sin.powi(4) * c.ip(&u, &v)).abs())
            })
        }),
        case("cor-p19.iv", All, true, true, |c, r| {
            let d = c.dual()?;
            over_parts(c, any, |i, _| {
                let (u, v) = (c.draw(&d.gi[i], r)?, c.draw(&d.gi[i], r)?);
                Some((c.cos(&c.w(&c.f(&u)), &c.w(&c.f(&v)))? - c.cos(&u, &v)?).abs())
            })
        }),
        case("cor-p20.ii", All, true, true, |c, r| {
            let d = c.dual()?;
            let (u, v) = (c.draw(&d.w_all, r)?, c.draw(&d.w_all, r)?);
            let s: f64 = (0..c.parts.len())
                .map(|i| c.parts[i].sin.powi(4) * c.ip(&(&d.pgi[i] * &u), &(&d.pgi[i] * &v)))
                .sum();
            Some((c.ip(&c.w(&c.f(&u)), &c.w(&c.f(&v))) - s).abs())
        }),
        case("cor-p20.iv", All, true, true, |c, r| {
            let d = c.dual()?;
            let (u, v) = (c.draw(&d.w_all, r)?, c.draw(&d.w_all, r)?);
            let su = weighted_dual(c, d, &u, |p| p.sin * p.sin, None);
            let sv = weighted_dual(c, d, &v, |p| p.sin * p.sin, None);
            Some((c.cos(&c.w(&c.f(&u)), &c.w(&c.f(&v)))? - c.cos(&su, &sv)?).abs())
        }),
        case("thm-p9.dual-angle", All, true, true, |c, r| {
            let d = c.dual()?;
            over_parts(c, any, |i, p| {
                let u = c.draw(&d.gi[i], r)?;
                let pu = c.phi(&u);
                Some((c.norm(&(&c.p_g * &pu)) - p.cos * c.norm(&pu)).abs())
            })
        }),
        case("thm-p21.conformal", All, true, true, |c, r| {
            let d = c.dual()?;
            let mut worst = 0.0f64;
            let mut seen = false;
            let mut check = |a: Option<f64>, b: Option<f64>| {
                if let (Some(a), Some(b)) = (a, b) {
                    worst = worst.max((a - b).abs());
                    seen = true;
                }
            };
            for (i, p) in c.parts.iter().enumerate() {
                let (x, y) = (c.draw(&p.basis, r)?, c.draw(&p.basis, r)?);
                let (u, v) = (c.draw(&d.gi[i], r)?, c.draw(&d.gi[i], r)?);
                if !p.right() {
                    check(c.cos(&c.f(&x), &c.f(&y)), c.cos(&x, &y));
                    check(c.cos(&c.w(&u), &c.w(&v)), c.cos(&u, &v));
                }
                check(c.cos(&c.w(&x), &c.w(&y)), c.cos(&x, &y));
                check(c.cos(&c.f(&u), &c.f(&v)), c.cos(&u, &v));
            }
            if let (Some(x), Some(y)) = (c.draw(&c.d0, r), c.draw(&c.d0, r)) {
                check(c.cos(&c.f(&x), &c.f(&y)), c.cos(&x, &y));
            }
            if let (Some(u), Some(v)) = (c.draw(&d.h, r), c.draw(&d.h, r)) {
                check(c.cos(&c.w(&u), &c.w(&v)), c.cos(&u, &v));
            }
            let b = c.d_plus_g();
            if let (Some(x), Some(y)) = (c.draw(&b, r), c.draw(&b, r)) {
                check(c.cos(&c.phi(&x), &c.phi(&y)), c.cos(&x, &y));
            }
            seen.then_some(worst)
        }),
        case("rem-p70.anti-inverse", All, true, true, |c, r| {
            let d = c.dual()?;
            over_parts(c, |p| p.right(), |i, _| {
                let x = c.draw(&c.parts[i].basis, r)?;
                let u = c.draw(&d.gi[i], r)?;
                Some(max2(
                    dist(&c.f(&c.w(&x)), &(&x * c.eps)),
                    dist(&c.w(&c.f(&u)), &(&u * c.eps)),
                ))
            })
        }),
    ]
}

/// sum_i weight_i * op(pr_i x) over the proper components.
fn weighted(c: &Ctx, x: &Vector, weight: impl Fn(&Part) -> f64, op: Option<fn(&Ctx, &Vector) -> Vector>) -> Vector {
    let mut s = Vector::zeros(x.len());
    for p in &c.parts {
        let xi = &p.proj * x;
        let xi = match op {
            Some(o) => o(c, &xi),
            None => xi,
        };
        s += xi * weight(p);
    }
    s
}

fn weighted_dual(
    c: &Ctx,
    d: &DualCtx,
    u: &Vector,
    weight: impl Fn(&Part) -> f64,
    op: Option<fn(&Ctx, &Vector) -> Vector>,
) -> Vector {
    let mut s = Vector::zeros(u.len());
    for (i, p) in c.parts.iter().enumerate() {
        let ui = &d.pgi[i] * u;
        let ui = match op {
            Some(o) => o(c, &ui),
            None => ui,
        };
        s += ui * weight(p);
    }
    s
}

/// Keys that only need the structure and D, not its slant data.
fn is_basic_key(key: &str) -> bool {
    ["eq1.", "eq2.", "eq3.", "eq7.", "h2.", "h3.", "lemma1.", "lemma2."]
        .iter()
        .any(|p| key.starts_with(p))
}

pub fn registry_keys() -> Vec<&'static str> {
    registry().iter().map(|c| c.key).collect()
}

pub fn is_dual_key(key: &str) -> bool {
    registry().iter().any(|c| c.key == key && c.dual)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityResult {
    pub key: String,
    pub setting: Setting,
    /// "pass", "fail", "skipped(setting)" or "skipped(condition)".
    pub verdict: String,
    pub max_residual: Option<f64>,
    pub witness_point: Option<Vec<f64>>,
    pub evaluations: usize,
}

impl IdentityResult {
    pub fn passed(&self) -> bool {
        self.verdict != "fail"
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub tolerance: f64,
    pub trials: usize,
    pub seed: u64,
    pub points: usize,
    pub results: Vec<IdentityResult>,
    /// Points where the dual could not be built (dual keys fail there).
    pub dual_errors: Vec<String>,
}

impl SuiteReport {
    pub fn get(&self, key: &str) -> Option<&IdentityResult> {
        self.results.iter().find(|r| r.key == key)
    }

    pub fn failures(&self) -> Vec<&IdentityResult> {
        self.results.iter().filter(|r| !r.passed()).collect()
    }
}

#[derive(Default, Clone)]
struct Acc {
    max: Option<f64>,
    witness: Option<usize>,
    evaluations: usize,
    broken: bool,
}

impl Acc {
    fn add(&mut self, r: f64, point: usize) {
        self.evaluations += 1;
        let r = if r.is_nan() { f64::INFINITY } else { r };
        if self.max.is_none_or(|m| r > m) {
            self.max = Some(r);
            self.witness = Some(point);
        }
    }

    fn merge(mut self, other: Acc) -> Acc {
        self.evaluations += other.evaluations;
        self.broken |= other.broken;
        if let Some(r) = other.max {
            let better = match self.max {
                None => true,
                Some(m) => r > m || (r == m && other.witness < self.witness),
            };
            if better {
                self.max = Some(r);
                self.witness = other.witness;
            }
        }
        self
    }
}

pub fn run_identity_suite(
    dec: &Decomposition,
    points: &[AmbientPoint],
    trials: usize,
    tol: &Tolerances,
    seed: u64,
) -> Result<SuiteReport> {
    run_identity_subset(dec, points, trials, tol, seed, |_| true)
}

/// Runs the registry cases whose key passes `select`.
pub fn run_identity_subset(
    dec: &Decomposition,
    points: &[AmbientPoint],
    trials: usize,
    tol: &Tolerances,
    seed: u64,
    select: fn(&str) -> bool,
) -> Result<SuiteReport> {
    let kind = dec.structure().kind();
    let cases: Vec<IdentityCase> = registry().into_iter().filter(|c| select(c.key)).collect();
    let trials = trials.max(1);
    let per_point = points
        .par_iter()
        .enumerate()
        .map(|(pi, p)| -> Result<(Vec<Acc>, Option<String>)> {
            let lf = dec.local(p)?;
            let (ctx, dual_err) = Ctx::new(dec, &lf, tol)?;
            let mut accs = vec![Acc::default(); cases.len()];
            for (ci, case) in cases.iter().enumerate() {
                if !case.setting.applies(kind) {
                    continue;
                }
                let unusable = if is_basic_key(case.key) {
                    false
                } else {
                    ctx.slant_err.is_some() || (case.dual && ctx.dual.is_none())
                };
                if unusable {
                    accs[ci].broken = true;
                    accs[ci].add(f64::INFINITY, pi);
                    continue;
                }
                let mut rng = point_rng(seed.wrapping_add((ci as u64 + 1) << 32), pi);
                let reps = if case.random { trials } else { 1 };
                for _ in 0..reps {
                    if let Some(r) = (case.eval)(&ctx, &mut rng) {
                        accs[ci].add(r, pi);
                    }
                }
            }
            Ok((accs, dual_err.map(|e| format!("point {pi}: {e}"))))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut merged = vec![Acc::default(); cases.len()];
    let mut dual_errors = Vec::new();
    for (accs, err) in per_point {
        for (m, a) in merged.iter_mut().zip(accs) {
            *m = std::mem::take(m).merge(a);
        }
        dual_errors.extend(err);
    }
    let results: Vec<IdentityResult> = cases
        .iter()
        .zip(merged)
        .map(|(case, acc)| {
            let verdict = if !case.setting.applies(kind) {
                "skipped(setting)"
            } else if acc.max.is_none() {
                "skipped(condition)"
            } else if acc.broken || acc.max.is_some_and(|m| m > tol.identity) {
                "fail"
            } else {
                "pass"
            };
            IdentityResult {
                key: case.key.to_string(),
                setting: case.setting,
                verdict: verdict.to_string(),
                max_residual: acc.max,
                witness_point: acc.witness.map(|i| points[i].to_vec()),
                evaluations: acc.evaluations,
            }
        })
        .collect();
    Ok(SuiteReport {
        passed: results.iter().all(|r| r.passed()),
        tolerance: tol.identity,
        trials,
        seed,
        points: points.len(),
        results,
        dual_errors,
    })
}

/// Keys grouped by setting, for documentation.
pub fn keys_by_setting() -> BTreeMap<&'static str, Vec<&'static str>> {
    let mut m: BTreeMap<&'static str, Vec<&'static str>> = BTreeMap::new();
    for c in registry() {
        m.entry(c.setting.as_str()).or_default().push(c.key);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Decomposition;
    use crate::gallery::{build_fixture, FixtureId, FixtureParams};
    use std::collections::HashSet;

    #[test]
    fn keys_are_unique() {
        let keys = registry_keys();
        let set: HashSet<_> = keys.iter().collect();
        assert_eq!(set.len(), keys.len());
    }

    #[test]
    fn ex1_all_applicable_pass() {
        let fx = build_fixture(FixtureId::Ex1, FixtureParams::new(3, -1)).unwrap();
        let pts = fx.sample_points(4, 3);
        let r = run_identity_suite(&fx.decomposition, &pts, 10, &Tolerances::default(), 9).unwrap();
        assert!(r.passed, "{:#?}", r.failures());
        assert_eq!(r.get("h3.isometry").unwrap().verdict, "skipped(setting)");
        // theta_1 is a right angle in this fixture
        assert_eq!(r.get("rem-p70.anti-inverse").unwrap().verdict, "pass");
        // H is empty
        assert_eq!(r.get("cor-p60.w2").unwrap().verdict, "skipped(condition)");
    }

    #[test]
    fn ex3_skips_contact_keys() {
        let fx = build_fixture(FixtureId::Ex3, FixtureParams::new(2, 1)).unwrap();
        let pts = fx.sample_points(4, 2);
        let r = run_identity_suite(&fx.decomposition, &pts, 5, &Tolerances::default(), 9).unwrap();
        assert!(r.passed, "{:#?}", r.failures());
        for k in ["eq3.metric", "eq3.phi-xi", "prop-p4.line1", "eq13.contact-invariance"] {
            assert_eq!(r.get(k).unwrap().verdict, "skipped(setting)");
        }
    }

    #[test]
    fn pointwise_fixtures_pass() {
        for (id, g) in [(FixtureId::Ex4, 0.5), (FixtureId::Ex5, 1.0), (FixtureId::Ex8, 0.0), (FixtureId::Ex9, 2.0)] {
            let fx = build_fixture(id, FixtureParams::new(2, 1).gamma(g)).unwrap();
            let pts = fx.sample_points(7, 3);
            let r = run_identity_suite(&fx.decomposition, &pts, 5, &Tolerances::default(), 1).unwrap();
            assert!(r.passed, "{id}: {:#?}", r.failures());
        }
    }

    #[test]
    fn perturbed_phi_breaks_compatibility() {
        let fx = build_fixture(FixtureId::Ex1, FixtureParams::new(2, -1)).unwrap();
        // phi(e9) on e10 sits inside G, so D stays f-invariant
        let orig = fx.structure.phi_columns()[8][9].clone();
        let s = fx.structure.with_phi_entry(9, 8, &format!("({orig}) + 0.001")).unwrap();
        let dec = Decomposition::new(
            s,
            fx.decomposition.invariant().cloned(),
            fx.decomposition.proper().to_vec(),
            Some(fx.mask.clone()),
        )
        .unwrap();
        let r = run_identity_subset(&dec, &fx.sample_points(1, 2), 20, &Tolerances::default(), 3, |k| {
            k == "eq1.compat"
        })
        .unwrap();
        let res = r.get("eq1.compat").unwrap();
        assert_eq!(res.verdict, "fail");
        assert!(res.max_residual.unwrap() > 1e-4);
    }

    #[test]
    fn perturbed_phi_on_d_breaks_lemma1() {
        let fx = build_fixture(FixtureId::Ex1, FixtureParams::new(2, -1)).unwrap();
        let orig = fx.structure.phi_columns()[6][7].clone();
        let s = fx.structure.with_phi_entry(7, 6, &format!("({orig}) + 0.001")).unwrap();
        let dec = Decomposition::new(
            s,
            fx.decomposition.invariant().cloned(),
            fx.decomposition.proper().to_vec(),
            Some(fx.mask.clone()),
        )
        .unwrap();
        let r = run_identity_suite(&dec, &fx.sample_points(1, 2), 50, &Tolerances::default(), 3).unwrap();
        let l = r.get("lemma1.a").unwrap();
        assert_eq!(l.verdict, "fail");
        assert!(l.max_residual.unwrap() > 1e-4 && l.max_residual.unwrap() < 1e-2);
        assert_eq!(r.get("eq1.compat").unwrap().verdict, "fail");
        assert!(!r.passed);
    }

    #[test]
    fn hermitian_with_nonempty_h() {
        // D = D1 of ex3 only: G contains the H = span(e1, e2, ...) directions
        use crate::distribution::DistributionFrame;
        let fx = build_fixture(FixtureId::Ex3, FixtureParams::new(2, -1)).unwrap();
        let d = DistributionFrame::parse(
            "D2",
            &[
                vec!["0", "0", "0", "0", "0", "0", "1", "0", "0", "0"],
                vec!["0", "0", "0", "0", "0", "0", "0", "1", "0", "0"],
            ],
            10,
        )
        .unwrap();
        let dec = Decomposition::new(fx.structure.clone(), None, vec![d], None).unwrap();
        let pts = vec![AmbientPoint::origin(10)];
        let r = run_identity_suite(&dec, &pts, 10, &Tolerances::default(), 2).unwrap();
        assert!(r.passed, "{:#?}", r.failures());
        assert_eq!(r.get("cor-p60.w2").unwrap().verdict, "pass");
        assert_eq!(r.get("prop-p13.iv").unwrap().verdict, "pass");
    }
}
