//! Gauss-Legendre rules (Golub-Welsch) and graded composite quadrature for
//! endpoint-singular weights.

use nalgebra::DMatrix;

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Builds the order-`n` rule from the symmetric Jacobi matrix.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        if n == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![2.0],
            };
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let kf = k as f64;
            let beta = kf / (4.0 * kf * kf - 1.0).sqrt();
            jac[(k - 1, k)] = beta;
            jac[(k, k - 1)] = beta;
        }
        let eig = nalgebra::SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let x = eig.eigenvalues[i];
                let w = 2.0 * eig.eigenvectors[(0, i)] * eig.eigenvectors[(0, i)];
                (x, w)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Maps the rule to [a, b], yielding (node, weight) pairs.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Number of geometric refinement levels used toward a singular endpoint.
pub const GRADED_LEVELS: usize = 36;

/// Quadrature points on [a, b] geometrically graded toward `a` if
/// `singular_at_left`, else toward `b`. The integrand may blow up like a
/// negative power at the singular endpoint as long as the product with the
/// local basis stays integrable.
pub fn graded_points(
    rule: &GaussRule,
    a: f64,
    b: f64,
    singular_at_left: bool,
) -> Vec<(f64, f64)> {
    let len = b - a;
    let mut pts = Vec::with_capacity(rule.nodes.len() * GRADED_LEVELS);
    let mut hi_frac = 1.0f64;
    for level in 0..GRADED_LEVELS {
        let lo_frac = if level + 1 == GRADED_LEVELS {
            0.0
        } else {
            hi_frac * 0.5
        };
        let (lo, hi) = if singular_at_left {
            (a + lo_frac * len, a + hi_frac * len)
        } else {
            (b - hi_frac * len, b - lo_frac * len)
        };
        pts.extend(rule.mapped(lo, hi));
        hi_frac = lo_frac;
    }
    pts
}
