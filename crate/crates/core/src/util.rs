//! Small shared helpers: seeded RNG, norms, nodal positive/negative parts,
//! deterministic sphere samples.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG; `stream` separates independent uses of one seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15))
}

/// Standard normal via Box-Muller.
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| gaussian(rng))
}

/// Unit vector (Euclidean) with gaussian direction.
pub fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = gaussian_vector(rng, dim);
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Nodal positive part max(u, 0).
pub fn pos_part(u: &DVector<f64>) -> DVector<f64> {
    u.map(|x| x.max(0.0))
}

/// Nodal negative part max(-u, 0), so u = pos - neg with both nonnegative.
pub fn neg_part(u: &DVector<f64>) -> DVector<f64> {
    u.map(|x| (-x).max(0.0))
}

/// Lumped L2 norm sqrt(sum m_i u_i^2).
pub fn lumped_norm(m: &DVector<f64>, u: &DVector<f64>) -> f64 {
    m.iter()
        .zip(u.iter())
        .map(|(&mi, &ui)| mi * ui * ui)
        .sum::<f64>()
        .sqrt()
}

/// Energy norm sqrt(u^T A u).
pub fn a_norm(a: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    u.dot(&(a * u)).max(0.0).sqrt()
}

/// Dual norm of a gradient vector against the lumped mass:
/// sqrt(sum g_i^2 / m_i).
pub fn dual_norm(m: &DVector<f64>, g: &DVector<f64>) -> f64 {
    m.iter()
        .zip(g.iter())
        .map(|(&mi, &gi)| gi * gi / mi)
        .sum::<f64>()
        .sqrt()
}

/// Halton low-discrepancy sequence member in (0, 1).
fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

const HALTON_BASES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Deterministic low-discrepancy point set on the Euclidean unit sphere in
/// `dim` dimensions: Halton points pushed through Box-Muller and normalized.
pub fn sphere_samples(dim: usize, count: usize) -> Vec<DVector<f64>> {
    assert!(dim >= 1);
    let mut out = Vec::with_capacity(count);
    let mut idx = 1usize;
    while out.len() < count {
        let mut v = DVector::<f64>::zeros(dim);
        let pairs = dim.div_ceil(2);
        for pair in 0..pairs {
            let b1 = HALTON_BASES[(2 * pair) % HALTON_BASES.len()];
            let b2 = HALTON_BASES[(2 * pair + 1) % HALTON_BASES.len()];
            let u1 = halton(idx, b1).max(1e-12);
            let u2 = halton(idx, b2);
            let r = (-2.0 * u1.ln()).sqrt();
            let (sn, cs) = (std::f64::consts::TAU * u2).sin_cos();
            v[2 * pair] = r * cs;
            if 2 * pair + 1 < dim {
                v[2 * pair + 1] = r * sn;
            }
        }
        idx += 1;
        let n = v.norm();
        if n > 1e-9 {
            out.push(v / n);
        }
    }
    out
}
