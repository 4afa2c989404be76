//! The JSON manifold spec: parsing, validation, emission and digest.

use crate::distribution::{Decomposition, DistributionFrame};
use crate::error::{Error, Result};
use crate::gallery::GalleryFixture;
use crate::linalg::AmbientPoint;
use crate::sampling::{point_rng, uniform_box, DEFAULT_SEED};
use crate::structure::{Kind, StructureField};
use crate::tolerances::Tolerances;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSpec {
    Named(String),
    Matrix(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSpec {
    #[serde(default)]
    pub invariant: Option<String>,
    #[serde(default)]
    pub proper: Vec<String>,
    /// Discovery mode on a single named distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discover: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBox {
    pub seed: u64,
    pub count: usize,
    pub r#box: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SamplePoints {
    Explicit(Vec<Vec<f64>>),
    Random(SampleBox),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub ambient_dim: usize,
    pub epsilon: i64,
    pub kind: String,
    #[serde(default = "euclidean")]
    pub metric: MetricSpec,
    pub phi_columns: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submanifold_mask: Option<Vec<usize>>,
    pub distributions: BTreeMap<String, Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionSpec>,
    pub sample_points: SamplePoints,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

fn euclidean() -> MetricSpec {
    MetricSpec::Named("euclidean".into())
}

/// Everything a command needs, built from a spec.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub decomposition: Decomposition,
    pub points: Vec<AmbientPoint>,
    pub tolerances: Tolerances,
}

impl ManifoldSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("spec serializes"))
    }

    pub fn kind(&self) -> Result<Kind> {
        match self.kind.as_str() {
            "hermitian-like" => Ok(Kind::HermitianLike),
            "contact-like" => Ok(Kind::ContactLike),
            k => Err(Error::Spec(format!(
                "kind must be \"hermitian-like\" or \"contact-like\", got \"{k}\""
            ))),
        }
    }

    pub fn structure(&self) -> Result<StructureField> {
        let eps = match self.epsilon {
            1 => 1i8,
            -1 => -1i8,
            e => return Err(Error::Spec(format!("epsilon must be +1 or -1, got {e}"))),
        };
        let metric = match &self.metric {
            MetricSpec::Named(s) if s == "euclidean" => None,
            MetricSpec::Named(s) => {
                return Err(Error::Spec(format!("unknown metric \"{s}\"; use \"euclidean\" or a matrix")))
            }
            MetricSpec::Matrix(m) => Some(m.as_slice()),
        };
        StructureField::new(
            self.ambient_dim,
            eps,
            self.kind()?,
            &self.phi_columns,
            metric,
            self.xi.as_deref(),
        )
    }

    fn frame(&self, name: &str) -> Result<DistributionFrame> {
        let fields = self
            .distributions
            .get(name)
            .ok_or_else(|| Error::Spec(format!("unknown distribution \"{name}\"")))?;
        DistributionFrame::parse(name, fields, self.ambient_dim)
    }

    pub fn decomposition(&self) -> Result<Decomposition> {
        if self.distributions.is_empty() {
            return Err(Error::Spec("no distributions given".into()));
        }
        let structure = self.structure()?;
        let mask = self.submanifold_mask.clone();
        if let Some(m) = &mask {
            if m.iter().any(|i| *i == 0 || *i > self.ambient_dim) {
                return Err(Error::Spec(format!(
                    "submanifold_mask entries must lie in 1..={}",
                    self.ambient_dim
                )));
            }
        }
        match &self.decomposition {
            None if self.distributions.len() == 1 => {
                let name = self.distributions.keys().next().unwrap();
                Decomposition::discovery(structure, self.frame(name)?, mask)
            }
            None => Err(Error::Spec(
                "several distributions but no decomposition; name one with {\"discover\": ...}".into(),
            )),
            Some(d) => {
                if let Some(name) = &d.discover {
                    if d.invariant.is_some() || !d.proper.is_empty() {
                        return Err(Error::Spec("\"discover\" excludes \"invariant\" and \"proper\"".into()));
                    }
                    return Decomposition::discovery(structure, self.frame(name)?, mask);
                }
                if d.invariant.is_none() && d.proper.is_empty() {
                    return Err(Error::Spec("the decomposition is empty".into()));
                }
                let inv = d.invariant.as_deref().map(|n| self.frame(n)).transpose()?;
                let proper = d.proper.iter().map(|n| self.frame(n)).collect::<Result<Vec<_>>>()?;
                Decomposition::new(structure, inv, proper, mask)
            }
        }
    }

    pub fn points(&self) -> Result<Vec<AmbientPoint>> {
        let n = self.ambient_dim;
        let pts = match &self.sample_points {
            SamplePoints::Explicit(v) => v
                .iter()
                .map(|c| {
                    if c.len() != n {
                        return Err(Error::Spec(format!("sample point has {} coordinates, expected {n}", c.len())));
                    }
                    AmbientPoint::new(c.clone())
                })
                .collect::<Result<Vec<_>>>()?,
            SamplePoints::Random(b) => {
                let [lo, hi] = b.r#box;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Spec("sample box must satisfy lo < hi".into()));
                }
                let coords: Vec<usize> = match &self.submanifold_mask {
                    Some(m) => m.iter().map(|i| i - 1).collect(),
                    None => (0..n).collect(),
                };
                let mut rng = point_rng(b.seed, usize::MAX);
                (0..b.count)
                    .map(|_| {
                        let v = uniform_box(coords.len(), lo, hi, &mut rng);
                        let mut x = vec![0.0; n];
                        for (c, i) in v.iter().zip(&coords) {
                            x[*i] = *c;
                        }
                        AmbientPoint::new(x)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        if pts.is_empty() {
            return Err(Error::Spec("no sample points".into()));
        }
        Ok(pts)
    }

    pub fn load(&self) -> Result<Loaded> {
        Ok(Loaded {
            decomposition: self.decomposition()?,
            points: self.points()?,
            tolerances: self.tolerances.unwrap_or_default(),
        })
    }

    /// sha256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn from_fixture(fx: &GalleryFixture) -> Self {
        let s = &fx.structure;
        let dec = &fx.decomposition;
        let mut distributions = BTreeMap::new();
        for c in dec.components() {
            distributions.insert(c.name.clone(), c.fields.iter().map(|f| f.to_strings()).collect());
        }
        Self {
            ambient_dim: s.dim(),
            epsilon: s.epsilon() as i64,
            kind: s.kind().as_str().to_string(),
            metric: match s.metric_rows() {
                None => euclidean(),
                Some(m) => MetricSpec::Matrix(m),
            },
            phi_columns: s.phi_columns(),
            xi: s.xi_strings(),
            submanifold_mask: Some(fx.mask.clone()),
            distributions,
            decomposition: Some(DecompositionSpec {
                invariant: dec.invariant().map(|d| d.name.clone()),
                proper: dec.proper().iter().map(|d| d.name.clone()).collect(),
                discover: None,
            }),
            sample_points: SamplePoints::Explicit(
                fx.default_samples(DEFAULT_SEED).iter().map(|p| p.to_vec()).collect(),
            ),
            tolerances: None,
        }
    }
}

/// Sorted keys, shortest round-trip floats, LF line endings.
pub fn canonical_json(v: &Value) -> String {
    // serde_json's default map is ordered by key
    let mut s = serde_json::to_string_pretty(&sort(v)).expect("value serializes");
    s.push('\n');
    s
}

fn sort(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let sorted: BTreeMap<String, Value> = m.iter().map(|(k, v)| (k.clone(), sort(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{build_fixture, FixtureId, FixtureParams, ALL_FIXTURES};

    #[test]
    fn fixtures_roundtrip_through_json() {
        for id in ALL_FIXTURES {
            let fx = build_fixture(id, FixtureParams::new(2, -1)).unwrap();
            let spec = ManifoldSpec::from_fixture(&fx);
            let text = spec.to_json();
            let back = ManifoldSpec::from_json(&text).unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.digest(), spec.digest());
            let l = back.load().unwrap();
            assert_eq!(l.points.len(), fx.default_samples(DEFAULT_SEED).len());
            assert_eq!(l.decomposition.components().len(), fx.decomposition.components().len());
        }
    }

    #[test]
    fn epsilon_zero_is_rejected() {
        let fx = build_fixture(FixtureId::Ex3, FixtureParams::new(2, 1)).unwrap();
        let mut spec = ManifoldSpec::from_fixture(&fx);
        spec.epsilon = 0;
        let e = spec.load().unwrap_err();
        assert!(e.is_input_error(), "{e}");
    }

    #[test]
    fn unknown_fields_and_names_are_rejected() {
        assert!(ManifoldSpec::from_json(r#"{"ambient_dim": 2, "bogus": 1}"#).is_err());
        let fx = build_fixture(FixtureId::Ex1, FixtureParams::new(2, -1)).unwrap();
        let mut spec = ManifoldSpec::from_fixture(&fx);
        spec.decomposition.as_mut().unwrap().proper.push("nope".into());
        assert!(matches!(spec.decomposition(), Err(Error::Spec(_))));
    }

    #[test]
    fn random_points_respect_the_mask() {
        let fx = build_fixture(FixtureId::Ex4, FixtureParams::new(2, -1)).unwrap();
        let mut spec = ManifoldSpec::from_fixture(&fx);
        spec.sample_points = SamplePoints::Random(SampleBox {
            seed: 5,
            count: 7,
            r#box: [-1.0, 1.0],
        });
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 7);
        for p in &pts {
            for (i, x) in p.to_vec().iter().enumerate() {
                if !fx.mask.contains(&(i + 1)) {
                    assert_eq!(*x, 0.0);
                }
            }
        }
        assert_eq!(pts, spec.points().unwrap());
    }

    #[test]
    fn single_distribution_means_discovery() {
        let text = r#"{
          "ambient_dim": 2, "epsilon": -1, "kind": "hermitian-like",
          "phi_columns": [["0","1"],["-1","0"]],
          "distributions": {"TM": [["1","0"],["0","1"]]},
          "sample_points": [[0,0],[1,1]]
        }"#;
        let spec = ManifoldSpec::from_json(text).unwrap();
        assert!(spec.decomposition().unwrap().is_discovery());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v: Value = serde_json::from_str(r#"{"b": 1, "a": {"d": 0.1, "c": 2}}"#).unwrap();
        let s = canonical_json(&v);
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.find("\"c\"").unwrap() < s.find("\"d\"").unwrap());
        assert!(s.contains("0.1"));
    }
}
