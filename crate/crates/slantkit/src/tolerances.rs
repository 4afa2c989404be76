use serde::{Deserialize, Serialize};

/// Numerical thresholds shared by every module. All are overridable from a
/// spec file or CLI flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Structure axioms, on g-unit random vectors.
    pub structure: f64,
    /// Absolute gap below which eigenvalues of f^2 are merged.
    pub cluster: f64,
    /// Radians; variation below this counts as a constant angle.
    pub angle_const: f64,
    /// Radians; two angles further apart than this are distinct.
    pub angle_distinct: f64,
    /// Open-interval margin for alpha in the generic test.
    pub generic_margin: f64,
    pub identity: f64,
    pub dual: f64,
    /// f-leak and cross-term bound for f-invariance.
    pub invariance: f64,
    /// Pairwise orthogonality of components.
    pub orthogonality: f64,
    pub zero_threshold: f64,
    pub fd_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            structure: 1e-9,
            cluster: 1e-8,
            angle_const: 1e-6,
            angle_distinct: 1e-6,
            generic_margin: 1e-6,
            identity: 1e-9,
            dual: 1e-8,
            invariance: 1e-9,
            orthogonality: 1e-10,
            zero_threshold: 1e-4,
            fd_step: 1e-5,
        }
    }
}
