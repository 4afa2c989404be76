//! Executable fixtures for the six worked examples (Euclidean ambient space,
//! linear-subspace submanifolds).
//!
//! Coordinates are 1-based. For every fixture `D0 = <e1, e2>`,
//! `Dj = <e(4j-1), e(4j)>`, and TM drops `x(4j+1), x(4j+2)`.

use crate::distribution::{Decomposition, DistributionFrame};
use crate::error::{Error, Result};
use crate::expr::{parse, ScalarFieldExpr, VectorFieldExpr};
use crate::linalg::AmbientPoint;
use crate::sampling::{point_rng, uniform_box};
use crate::structure::{Kind, StructureField};
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FixtureId {
    #[serde(rename = "ex1")]
    Ex1,
    #[serde(rename = "ex3")]
    Ex3,
    #[serde(rename = "ex4")]
    Ex4,
    #[serde(rename = "ex5")]
    Ex5,
    #[serde(rename = "ex8")]
    Ex8,
    #[serde(rename = "ex9")]
    Ex9,
}

pub const ALL_FIXTURES: [FixtureId; 6] = [
    FixtureId::Ex1,
    FixtureId::Ex3,
    FixtureId::Ex4,
    FixtureId::Ex5,
    FixtureId::Ex8,
    FixtureId::Ex9,
];

impl FixtureId {
    pub fn as_str(self) -> &'static str {
        match self {
            FixtureId::Ex1 => "ex1",
            FixtureId::Ex3 => "ex3",
            FixtureId::Ex4 => "ex4",
            FixtureId::Ex5 => "ex5",
            FixtureId::Ex8 => "ex8",
            FixtureId::Ex9 => "ex9",
        }
    }

    pub fn kind(self) -> Kind {
        match self {
            FixtureId::Ex1 | FixtureId::Ex4 | FixtureId::Ex8 => Kind::ContactLike,
            _ => Kind::HermitianLike,
        }
    }

    pub fn uses_gamma(self) -> bool {
        !matches!(self, FixtureId::Ex1 | FixtureId::Ex3)
    }

    pub fn uses_delta(self) -> bool {
        matches!(self, FixtureId::Ex4 | FixtureId::Ex8)
    }

    /// Smallest admissible gamma.
    pub fn gamma_min(self) -> f64 {
        match self {
            FixtureId::Ex5 | FixtureId::Ex9 => 1.0,
            _ => 0.0,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            FixtureId::Ex1 => "contact-like, constant angles arccos((j^2-1)/(j^2+1))",
            FixtureId::Ex3 => "hermitian-like, constant angles arccos((j-1)/sqrt(2(j^2+1)))",
            FixtureId::Ex4 => "contact-like, slant functions; generic iff gamma > 0",
            FixtureId::Ex5 => "hermitian-like, slant functions; generic iff gamma > 1",
            FixtureId::Ex8 => "contact-like, pointwise distinct slant functions; generic iff gamma > 0",
            FixtureId::Ex9 => "hermitian-like, pointwise distinct slant functions; generic iff gamma > 1",
        }
    }
}

impl fmt::Display for FixtureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FixtureId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ALL_FIXTURES
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Param(format!("unknown fixture `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixtureParams {
    pub k: usize,
    pub epsilon: i8,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
}

impl FixtureParams {
    pub fn new(k: usize, epsilon: i8) -> Self {
        Self {
            k,
            epsilon,
            gamma: None,
            delta: None,
        }
    }

    pub fn gamma(mut self, g: f64) -> Self {
        self.gamma = Some(g);
        self
    }

    pub fn delta(mut self, d: f64) -> Self {
        self.delta = Some(d);
        self
    }
}

/// A claim printed with the example, checked by the oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Claim {
    pub label: String,
    pub expected: bool,
}

#[derive(Debug, Clone)]
pub struct GalleryFixture {
    pub id: FixtureId,
    pub params: FixtureParams,
    pub structure: StructureField,
    pub decomposition: Decomposition,
    /// theta_j as expressions, one per proper component.
    pub closed_form_thetas: Vec<ScalarFieldExpr>,
    /// 1-based coordinate pairs spanning w(Dj).
    pub expected_duals: Vec<Vec<usize>>,
    pub mask: Vec<usize>,
    pub claims: Vec<Claim>,
}

fn lit(v: f64) -> String {
    if v < 0.0 {
        format!("(-{:?})", -v)
    } else {
        format!("{v:?}")
    }
}

fn signed(sign: f64, s: &str) -> String {
    if sign < 0.0 {
        format!("-({s})")
    } else {
        s.to_string()
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn fraction(num: u64, den: u64) -> String {
    if num == 0 {
        return "0".into();
    }
    let g = gcd(num, den);
    if den / g == 1 {
        format!("{}", num / g)
    } else {
        format!("{}/{}", num / g, den / g)
    }
}

/// (a_j, b_j) coefficient sources for component j.
fn coefficients(id: FixtureId, j: usize, gamma: f64, delta: f64) -> (String, String) {
    let jf = j as f64;
    match id {
        FixtureId::Ex1 => {
            let j = j as u64;
            (fraction(j * j - 1, j * j + 1), fraction(2 * j, j * j + 1))
        }
        FixtureId::Ex3 => {
            let root = format!("sqrt({})", 2 * (j * j + 1));
            let a = if j == 1 { "0".to_string() } else { format!("{}/{root}", j - 1) };
            (a, format!("{}/{root}", j + 1))
        }
        FixtureId::Ex4 => {
            let e = format!(
                "sqrt(norm2^2 + {}*norm2 + {})",
                lit(2.0 * gamma),
                lit(jf * jf * delta * delta + gamma * gamma)
            );
            (format!("(norm2 + {})/{e}", lit(gamma)), format!("{}/{e}", lit(jf * delta)))
        }
        FixtureId::Ex5 => {
            let e = format!(
                "sqrt(2*norm2^2 + {}*norm2 + {})",
                lit(2.0 * (gamma + jf - 1.0)),
                lit(gamma * gamma - 2.0 * gamma + jf * jf + 1.0)
            );
            (
                format!("(norm2 + {})/{e}", lit(gamma - 1.0)),
                format!("(norm2 + {})/{e}", lit(jf)),
            )
        }
        FixtureId::Ex8 => {
            let c = (jf - 1.0) * delta + gamma;
            let e = format!(
                "sqrt(norm2^2 + {}*norm2 + {})",
                lit(2.0 * c),
                lit(delta * delta + c * c)
            );
            (format!("(norm2 + {})/{e}", lit(c)), format!("{}/{e}", lit(delta)))
        }
        FixtureId::Ex9 => {
            let e = format!(
                "sqrt(2*norm2^2 + {}*norm2 + {})",
                lit(2.0 * (jf + gamma - 1.0)),
                lit(jf * jf + gamma * gamma + 2.0 * jf * gamma - 4.0 * (jf + gamma) + 5.0)
            );
            (
                format!("(norm2 + {})/{e}", lit(jf + gamma - 2.0)),
                format!("(norm2 + 1)/{e}"),
            )
        }
    }
}

fn unit_field(n: usize, i: usize) -> VectorFieldExpr {
    let mut v = vec![0.0; n];
    v[i - 1] = 1.0;
    VectorFieldExpr::constant(&v)
}

fn check_params(id: FixtureId, p: &FixtureParams) -> Result<(f64, f64)> {
    if p.k < 2 {
        return Err(Error::Param(format!("k must be at least 2, got {}", p.k)));
    }
    if p.k > 64 {
        return Err(Error::Param(format!("k = {} is unreasonably large", p.k)));
    }
    if p.epsilon != 1 && p.epsilon != -1 {
        return Err(Error::Param(format!("epsilon must be +1 or -1, got {}", p.epsilon)));
    }
    let gamma = match (id.uses_gamma(), p.gamma) {
        (false, Some(_)) => return Err(Error::Param(format!("{id} takes no gamma"))),
        (false, None) => 0.0,
        (true, g) => {
            let g = g.unwrap_or(id.gamma_min() + 1.0);
            if !g.is_finite() || g < id.gamma_min() {
                return Err(Error::Param(format!(
                    "{id} needs gamma >= {}, got {g}",
                    id.gamma_min()
                )));
            }
            g
        }
    };
    let delta = match (id.uses_delta(), p.delta) {
        (false, Some(_)) => return Err(Error::Param(format!("{id} takes no delta"))),
        (false, None) => 0.0,
        (true, d) => {
            let d = d.unwrap_or(1.0);
            if !d.is_finite() || d <= 0.0 {
                return Err(Error::Param(format!("{id} needs delta > 0, got {d}")));
            }
            d
        }
    };
    Ok((gamma, delta))
}

/// Builds the fixture. Unset gamma defaults to one above its minimum, unset
/// delta to 1.
pub fn build_fixture(id: FixtureId, params: FixtureParams) -> Result<GalleryFixture> {
    let (gamma, delta) = check_params(id, &params)?;
    let k = params.k;
    let eps = params.epsilon as f64;
    let contact = id.kind() == Kind::ContactLike;
    let n = if contact { 4 * k + 3 } else { 4 * k + 2 };

    let mut cols = vec![vec!["0".to_string(); n]; n];
    let mut set = |col: usize, row: usize, s: String| cols[col - 1][row - 1] = s;
    set(1, 2, "1".into());
    set(2, 1, signed(eps, "1"));
    let mut thetas = Vec::new();
    for j in 1..=k {
        let (a, b) = coefficients(id, j, gamma, delta);
        let (c1, c2, c3, c4) = (4 * j - 1, 4 * j, 4 * j + 1, 4 * j + 2);
        if contact {
            set(c1, c2, a.clone());
            set(c1, c4, signed(eps, &b));
            set(c2, c1, signed(eps, &a));
            set(c2, c3, signed(eps, &b));
            set(c3, c2, b.clone());
            set(c3, c4, signed(-eps, &a));
            set(c4, c1, b.clone());
            set(c4, c3, signed(-1.0, &a));
        } else {
            set(c1, c2, a.clone());
            set(c1, c4, b.clone());
            set(c2, c1, signed(eps, &a));
            set(c2, c3, signed(-1.0, &b));
            set(c3, c2, signed(-eps, &b));
            set(c3, c4, signed(eps, &a));
            set(c4, c1, signed(eps, &b));
            set(c4, c3, a.clone());
        }
        thetas.push(parse(&format!("arccos({a})"), n)?);
    }
    let xi: Option<Vec<String>> = contact.then(|| {
        (1..=n)
            .map(|i| if i == n { "1".to_string() } else { "0".to_string() })
            .collect()
    });
    let structure = StructureField::new(n, params.epsilon, id.kind(), &cols, None, xi.as_deref())?;

    let mut mask = vec![1, 2];
    for j in 1..=k {
        mask.push(4 * j - 1);
        mask.push(4 * j);
    }
    if contact {
        mask.push(n);
    }
    let d0 = DistributionFrame::new("D0", vec![unit_field(n, 1), unit_field(n, 2)])?;
    let proper = (1..=k)
        .map(|j| {
            DistributionFrame::new(
                format!("D{j}"),
                vec![unit_field(n, 4 * j - 1), unit_field(n, 4 * j)],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let decomposition = Decomposition::new(structure.clone(), Some(d0), proper, Some(mask.clone()))?;
    let expected_duals = (1..=k).map(|j| vec![4 * j + 1, 4 * j + 2]).collect();

    Ok(GalleryFixture {
        id,
        params: FixtureParams {
            k,
            epsilon: params.epsilon,
            gamma: id.uses_gamma().then_some(gamma),
            delta: id.uses_delta().then_some(delta),
        },
        structure,
        decomposition,
        closed_form_thetas: thetas,
        expected_duals,
        mask,
        claims: claims(id, gamma),
    })
}

/// Classification statements accompanying each example.
fn claims(id: FixtureId, gamma: f64) -> Vec<Claim> {
    let c = |label: &str, expected: bool| Claim {
        label: label.into(),
        expected,
    };
    match id {
        FixtureId::Ex1 | FixtureId::Ex3 => vec![c("k-slant", true)],
        FixtureId::Ex4 => vec![c("k-pointwise-slant", true), c("generic", gamma > 0.0)],
        FixtureId::Ex5 => vec![c("k-pointwise-slant", true), c("generic", gamma > 1.0)],
        FixtureId::Ex8 => vec![c("pointwise-k-slant", true), c("generic", gamma > 0.0)],
        FixtureId::Ex9 => vec![c("pointwise-k-slant", true), c("generic", gamma > 1.0)],
    }
}

impl GalleryFixture {
    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    /// Maps TM coordinates into the ambient space.
    pub fn embed(&self, tm: &[f64]) -> Result<AmbientPoint> {
        if tm.len() != self.mask.len() {
            return Err(Error::Dimension(format!(
                "TM has dimension {}, got {} coordinates",
                self.mask.len(),
                tm.len()
            )));
        }
        let mut x = vec![0.0; self.dim()];
        for (c, i) in tm.iter().zip(&self.mask) {
            x[i - 1] = *c;
        }
        AmbientPoint::new(x)
    }

    /// Origin, unit points on each TM axis, and `random` seeded points in
    /// the box [-2, 2]^dim(TM).
    pub fn sample_points(&self, seed: u64, random: usize) -> Vec<AmbientPoint> {
        let m = self.mask.len();
        let mut pts = vec![AmbientPoint::origin(self.dim())];
        for a in 0..m {
            let mut tm = vec![0.0; m];
            tm[a] = 1.0;
            pts.push(self.embed(&tm).expect("mask dimension"));
        }
        let mut rng = point_rng(seed, usize::MAX);
        for _ in 0..random {
            let tm = uniform_box(m, -2.0, 2.0, &mut rng);
            pts.push(self.embed(&tm).expect("mask dimension"));
        }
        pts
    }

    pub fn default_samples(&self, seed: u64) -> Vec<AmbientPoint> {
        self.sample_points(seed, 16)
    }

    /// `count` seeded points of M, the origin first.
    pub fn random_points(&self, seed: u64, count: usize) -> Vec<AmbientPoint> {
        let m = self.mask.len();
        let mut rng = point_rng(seed, usize::MAX - 1);
        let mut pts = vec![AmbientPoint::origin(self.dim())];
        while pts.len() < count {
            let tm = uniform_box(m, -2.0, 2.0, &mut rng);
            pts.push(self.embed(&tm).expect("mask dimension"));
        }
        pts.truncate(count);
        pts
    }

    pub fn closed_form_theta(&self, j: usize, p: &AmbientPoint) -> Result<f64> {
        self.closed_form_thetas
            .get(j - 1)
            .ok_or_else(|| Error::Param(format!("no proper component {j}")))?
            .eval(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::classify;
    use crate::distribution::fw_split;
    use crate::linalg::TangentVector;
    use crate::structure::{eta, validate_structure};
    use crate::tolerances::Tolerances;

    #[test]
    fn ex1_shape() {
        let fx = build_fixture(FixtureId::Ex1, FixtureParams::new(2, -1)).unwrap();
        assert_eq!(fx.dim(), 11);
        assert_eq!(fx.mask, vec![1, 2, 3, 4, 7, 8, 11]);
        let p = AmbientPoint::origin(11);
        let phi = fx.structure.phi_at(&p).unwrap();
        assert_eq!(phi[(1, 0)], 1.0);
        let xi = fx.structure.xi_at(&p).unwrap().unwrap();
        assert_eq!(xi[10], 1.0);
        assert_eq!(fx.structure.phi_columns()[6][7], "3.0/5.0");
        let v = TangentVector::new(xi.as_slice().to_vec(), p.clone()).unwrap();
        assert_eq!(eta(&fx.structure, &p, &v).unwrap(), 1.0);
    }

    #[test]
    fn ex1_fw_split_of_e3() {
        let fx = build_fixture(FixtureId::Ex1, FixtureParams::new(2, -1)).unwrap();
        let p = AmbientPoint::origin(11);
        let mut e3 = vec![0.0; 11];
        e3[2] = 1.0;
        let s = fw_split(&fx.decomposition, &p, &TangentVector::new(e3, p.clone()).unwrap()).unwrap();
        assert!(s.f_part.comps.amax() < 1e-15);
        let mut want = vec![0.0; 11];
        want[5] = -1.0;
        assert_eq!(s.w_part.comps.as_slice(), &want[..]);
    }

    #[test]
    fn ex3_fw_split_of_e7() {
        let fx = build_fixture(FixtureId::Ex3, FixtureParams::new(2, -1)).unwrap();
        let p = AmbientPoint::origin(10);
        let mut e7 = vec![0.0; 10];
        e7[6] = 1.0;
        let s = fw_split(&fx.decomposition, &p, &TangentVector::new(e7, p.clone()).unwrap()).unwrap();
        assert!((s.f_part.comps[7] - 1.0 / 10f64.sqrt()).abs() < 1e-15);
        assert!((s.w_part.comps.norm() - 3.0 / 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ex4_column_at_origin() {
        let fx = build_fixture(FixtureId::Ex4, FixtureParams::new(2, -1).gamma(0.0).delta(1.0)).unwrap();
        let phi = fx.structure.phi_at(&AmbientPoint::origin(11)).unwrap();
        let col = phi.column(2);
        assert_eq!(col[3], 0.0);
        assert_eq!(col[5], -1.0);
    }

    #[test]
    fn every_fixture_is_a_valid_structure() {
        for id in ALL_FIXTURES {
            for eps in [-1, 1] {
                let fx = build_fixture(id, FixtureParams::new(3, eps)).unwrap();
                let pts = fx.sample_points(11, 4);
                let v = validate_structure(&fx.structure, &pts, 10, 1e-10, 5).unwrap();
                assert!(v.passed, "{id} eps={eps}: {:?}", v.worst);
            }
        }
    }

    #[test]
    fn params_are_checked() {
        let bad = [
            (FixtureId::Ex1, FixtureParams::new(1, -1)),
            (FixtureId::Ex1, FixtureParams::new(2, 0)),
            (FixtureId::Ex1, FixtureParams::new(2, 1).gamma(1.0)),
            (FixtureId::Ex4, FixtureParams::new(2, 1).delta(0.0)),
            (FixtureId::Ex5, FixtureParams::new(2, 1).gamma(0.5)),
            (FixtureId::Ex9, FixtureParams::new(2, 1).gamma(0.99)),
            (FixtureId::Ex3, FixtureParams::new(2, 1).delta(1.0)),
        ];
        for (id, p) in bad {
            assert!(matches!(build_fixture(id, p), Err(Error::Param(_))), "{id} {p:?}");
        }
    }

    #[test]
    fn ex5_angle_at_unit_point() {
        let fx = build_fixture(FixtureId::Ex5, FixtureParams::new(2, 1).gamma(1.0)).unwrap();
        let mut tm = vec![0.0; fx.mask.len()];
        tm[0] = 1.0;
        let p = fx.embed(&tm).unwrap();
        let lf = fx.decomposition.local(&p).unwrap();
        let s = crate::classifier::component_sample(&lf, 1, 1e-8, "D1", 0).unwrap();
        assert!((s.lambda - 0.2).abs() < 1e-14);
        assert!((s.theta - (1.0 / 5f64.sqrt()).acos()).abs() < 1e-12);
    }

    #[test]
    fn classification_claims_hold() {
        let tol = Tolerances::default();
        let cases = [
            (FixtureId::Ex1, None),
            (FixtureId::Ex3, None),
            (FixtureId::Ex4, Some(0.0)),
            (FixtureId::Ex4, Some(0.5)),
            (FixtureId::Ex5, Some(1.0)),
            (FixtureId::Ex5, Some(2.0)),
            (FixtureId::Ex8, Some(0.0)),
            (FixtureId::Ex8, Some(2.0)),
            (FixtureId::Ex9, Some(1.0)),
            (FixtureId::Ex9, Some(3.0)),
        ];
        for (id, g) in cases {
            let mut p = FixtureParams::new(3, -1);
            p.gamma = g;
            let fx = build_fixture(id, p).unwrap();
            let r = classify(&fx.decomposition, &fx.default_samples(1), &tol, 3, 1).unwrap();
            for c in &fx.claims {
                assert_eq!(r.has(&c.label), c.expected, "{id} gamma={g:?} {}: {:?}", c.label, r.labels);
            }
            assert!(r.lattice_violations().is_empty());
        }
    }
}
