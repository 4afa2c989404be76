//! Seeded random draws. Every report records the seed, and each sample point
//! gets its own stream so results do not depend on thread scheduling.

use crate::linalg::{norm_mat, Matrix, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

pub const DEFAULT_SEED: u64 = 0x5EED_2024;

pub fn point_rng(seed: u64, idx: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn normal_vector(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Gaussian direction normalized to g-length one.
pub fn unit_vector(g: &Matrix, rng: &mut ChaCha8Rng) -> Vector {
    loop {
        let v = normal_vector(g.nrows(), rng);
        let nv = norm_mat(g, &v);
        if nv > 1e-8 {
            return v / nv;
        }
    }
}

/// Random g-unit vector in the span of the g-orthonormal columns of `q`.
pub fn unit_in_span(q: &Matrix, rng: &mut ChaCha8Rng) -> Vector {
    if q.ncols() == 0 {
        return Vector::zeros(q.nrows());
    }
    loop {
        let c = normal_vector(q.ncols(), rng);
        let nc = c.norm();
        if nc > 1e-8 {
            return q * (c / nc);
        }
    }
}

pub fn uniform_box(dim: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let u = Uniform::new_inclusive(lo, hi).expect("valid box");
    (0..dim).map(|_| u.sample(rng)).collect()
}
