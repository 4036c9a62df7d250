//! Assembly of the discrete Gagliardo forms for piecewise-linear hats.
//!
//! The double integral over the plane splits into panel pairs inside the
//! domain plus a complement term: for x in the domain and y outside, the
//! integrand reduces to u(x)v(x) times the kernel, whose y-integral has a
//! closed form on every complement piece (gaps and the two rays).
//!
//! Panel-pair treatment for the kernel |x - y|^(-1-q), q = s*p:
//! * identical panels: both hats are linear there, so the pair integral is
//!   exact in closed form;
//! * panels sharing a node: Duffy split into two triangles; the radial
//!   variable integrates exactly and leaves a smooth Gauss integral in t;
//! * anything else: tensor Gauss-Legendre of order `quad_order`.
//!
//! The complement weight is integrated in x by plain Gauss on interior
//! elements and geometrically graded Gauss toward the domain boundary, where
//! the weight blows up like dist^(-q).

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quad::{graded_points, GaussRule};
use nalgebra::{DMatrix, DVector};

/// Geometry of the complement of the domain, for the closed-form weight.
#[derive(Debug, Clone)]
pub struct ComplementGeometry {
    hull_lo: f64,
    hull_hi: f64,
    /// Gaps between consecutive intervals.
    gaps: Vec<(f64, f64)>,
    /// Far-field split point from the config.
    truncation_radius: f64,
}

impl ComplementGeometry {
    pub fn new(mesh: &Mesh, truncation_radius: f64) -> Self {
        let (hull_lo, hull_hi) = mesh.hull();
        let gaps = mesh
            .intervals
            .windows(2)
            .map(|w| (w[0].1, w[1].0))
            .collect();
        Self {
            hull_lo,
            hull_hi,
            gaps,
            truncation_radius,
        }
    }

    /// Integral of |x - y|^(-1-q) over the complement of the domain, for x
    /// strictly inside the domain. Near field (within the effective radius)
    /// is summed piece by piece in closed form; the tail beyond is the
    /// analytic ray integral. The effective radius is at least the reach to
    /// the farthest hull point, so the tail never overlaps the domain.
    pub fn weight(&self, x: f64, q: f64) -> f64 {
        let reach = (x - self.hull_lo).max(self.hull_hi - x);
        let r_eff = self.truncation_radius.max(reach);
        let tail = 2.0 * r_eff.powf(-q) / q;

        // piece (c, d) entirely on one side of x
        let piece = |near: f64, far: f64| (near.powf(-q) - far.powf(-q)) / q;

        let mut total = tail;
        total += piece(x - self.hull_lo, r_eff);
        total += piece(self.hull_hi - x, r_eff);
        for &(glo, ghi) in &self.gaps {
            if ghi <= x {
                total += piece(x - ghi, x - glo);
            } else {
                total += piece(glo - x, ghi - x);
            }
        }
        total
    }
}

/// Per-element x-quadrature for the complement term: points as fractions of
/// the element together with weights already multiplied by 2 * rho(x).
pub(crate) fn complement_points(
    mesh: &Mesh,
    geom: &ComplementGeometry,
    q: f64,
    rule: &GaussRule,
) -> Vec<Vec<(f64, f64)>> {
    mesh.elements
        .iter()
        .map(|el| {
            let (a, b) = (el.x_left, el.x_right());
            let raw: Vec<(f64, f64)> = if el.at_left_boundary {
                graded_points(rule, a, b, true)
            } else if el.at_right_boundary {
                graded_points(rule, a, b, false)
            } else {
                rule.mapped(a, b).collect()
            };
            raw.into_iter()
                .map(|(x, w)| ((x - a) / el.h, 2.0 * w * geom.weight(x, q)))
                .collect()
        })
        .collect()
}

/// Moments of t^m against (1 + t)^(-1-q) on [0, 1], m = 0, 1, 2.
fn duffy_moments(q: f64, rule: &GaussRule) -> [f64; 3] {
    let mut t0 = 0.0;
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    for (t, w) in rule.mapped(0.0, 1.0) {
        let k = w * (1.0 + t).powf(-1.0 - q);
        t0 += k;
        t1 += k * t;
        t2 += k * t * t;
    }
    [t0, t1, t2]
}

/// Assembles the stiffness matrix of the Gagliardo bilinear form (p = 2),
/// kernel |x - y|^(-1-2s). Upper triangle is assembled and mirrored.
pub fn assemble_stiffness(
    mesh: &Mesh,
    s: f64,
    quad_order: u32,
    truncation_radius: f64,
) -> Result<DMatrix<f64>> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::SOutOfRange(s));
    }
    let n = mesh.n_dofs();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let chunks = stiffness_partial(mesh, s, quad_order, truncation_radius, 0, mesh.elements.len());
    a += chunks;
    mirror_upper(&mut a);
    Ok(a)
}

/// Threaded assembly: element-row ranges are independent work items; the
/// partial matrices are reduced in chunk order, so the result is bitwise
/// deterministic for a fixed thread count and agrees across thread counts to
/// rounding.
pub fn assemble_stiffness_threaded(
    mesh: &Mesh,
    s: f64,
    quad_order: u32,
    truncation_radius: f64,
    threads: usize,
) -> Result<DMatrix<f64>> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::SOutOfRange(s));
    }
    let threads = threads.max(1);
    let ne = mesh.elements.len();
    let n = mesh.n_dofs();
    if threads == 1 || ne < 2 * threads {
        return assemble_stiffness(mesh, s, quad_order, truncation_radius);
    }
    let chunk = ne.div_ceil(threads);
    let bounds: Vec<(usize, usize)> = (0..threads)
        .map(|t| (t * chunk, ((t + 1) * chunk).min(ne)))
        .filter(|(lo, hi)| lo < hi)
        .collect();
    let partials: Vec<DMatrix<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = bounds
            .iter()
            .map(|&(lo, hi)| {
                scope.spawn(move || stiffness_partial(mesh, s, quad_order, truncation_radius, lo, hi))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut a = DMatrix::<f64>::zeros(n, n);
    for p in partials {
        a += p;
    }
    mirror_upper(&mut a);
    Ok(a)
}

/// Contributions of all panel pairs (e1, e2) with e1 in [lo, hi), e2 >= e1,
/// plus the complement term for elements in [lo, hi). Only the upper triangle
/// (by dof index) is filled.
fn stiffness_partial(
    mesh: &Mesh,
    s: f64,
    quad_order: u32,
    truncation_radius: f64,
    lo: usize,
    hi: usize,
) -> DMatrix<f64> {
    let n = mesh.n_dofs();
    let q = 2.0 * s;
    let rule = GaussRule::legendre(quad_order as usize);
    let geom = ComplementGeometry::new(mesh, truncation_radius);
    let moments = duffy_moments(q, &rule);
    let mut a = DMatrix::<f64>::zeros(n, n);

    let mut add = |i: Option<usize>, j: Option<usize>, v: f64| {
        if let (Some(i), Some(j)) = (i, j) {
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            a[(r, c)] += v;
        }
    };

    for e1 in lo..hi {
        let p = &mesh.elements[e1];
        for e2 in e1..mesh.elements.len() {
            let qe = &mesh.elements[e2];
            if e1 == e2 {
                // both hats linear on the panel: exact
                let h = p.h;
                let c = 2.0 * h.powf(3.0 - q) / ((2.0 - q) * (3.0 - q));
                let slopes = [-1.0 / h, 1.0 / h];
                for (ii, &di) in p.dofs.iter().enumerate() {
                    for (jj, &dj) in p.dofs.iter().enumerate() {
                        if ii <= jj {
                            add(di, dj, slopes[ii] * slopes[jj] * c);
                        }
                    }
                }
            } else if mesh.adjacent(e1, e2) {
                // shared node: Duffy; radial part exact, smooth Gauss in t
                let h = p.h;
                let c = 2.0 * h.powf(3.0 - q) / (3.0 - q);
                // local nodes: left end of p, shared node, right end of qe
                let nodes = [p.dofs[0], p.dofs[1], qe.dofs[1]];
                let av = [1.0 / h, -1.0 / h, 0.0];
                let bv = [0.0, -1.0 / h, 1.0 / h];
                let t02 = moments[0] + moments[2];
                for ii in 0..3 {
                    for jj in ii..3 {
                        let val = c
                            * ((av[ii] * av[jj] + bv[ii] * bv[jj]) * t02
                                - 2.0 * moments[1] * (av[ii] * bv[jj] + av[jj] * bv[ii]));
                        add(nodes[ii], nodes[jj], val);
                    }
                }
            } else {
                // separated: tensor Gauss
                let nodes = [p.dofs[0], p.dofs[1], qe.dofs[0], qe.dofs[1]];
                let mut local = [[0.0f64; 4]; 4];
                for (x, wx) in rule.mapped(p.x_left, p.x_right()) {
                    let xi = (x - p.x_left) / p.h;
                    for (y, wy) in rule.mapped(qe.x_left, qe.x_right()) {
                        let eta = (y - qe.x_left) / qe.h;
                        let kern = 2.0 * wx * wy * (x - y).abs().powf(-1.0 - q);
                        let d = [1.0 - xi, xi, -(1.0 - eta), -eta];
                        for ii in 0..4 {
                            let dk = kern * d[ii];
                            for jj in ii..4 {
                                local[ii][jj] += dk * d[jj];
                            }
                        }
                    }
                }
                for ii in 0..4 {
                    for jj in ii..4 {
                        add(nodes[ii], nodes[jj], local[ii][jj]);
                    }
                }
            }
        }

        // complement term 2 * int_e phi_i phi_j rho(x) dx
        let pts = {
            let (a0, b0) = (p.x_left, p.x_right());
            let raw: Vec<(f64, f64)> = if p.at_left_boundary {
                graded_points(&rule, a0, b0, true)
            } else if p.at_right_boundary {
                graded_points(&rule, a0, b0, false)
            } else {
                rule.mapped(a0, b0).collect()
            };
            raw
        };
        let mut local = [[0.0f64; 2]; 2];
        for (x, w) in pts {
            let xi = (x - p.x_left) / p.h;
            let ww = 2.0 * w * geom.weight(x, q);
            let vals = [1.0 - xi, xi];
            for ii in 0..2 {
                for jj in ii..2 {
                    local[ii][jj] += ww * vals[ii] * vals[jj];
                }
            }
        }
        for ii in 0..2 {
            for jj in ii..2 {
                add(p.dofs[ii], p.dofs[jj], local[ii][jj]);
            }
        }
    }
    a
}

fn mirror_upper(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            a[(j, i)] = a[(i, j)];
        }
    }
}

/// Consistent mass matrix and the lumped masses (hat integrals; equals the
/// row sums of the full node mass matrix restricted to dof rows).
pub fn assemble_mass(mesh: &Mesh) -> (DMatrix<f64>, DVector<f64>) {
    let n = mesh.n_dofs();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut lumped = DVector::<f64>::zeros(n);
    for el in &mesh.elements {
        let h = el.h;
        let local = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        for ii in 0..2 {
            if let Some(di) = el.dofs[ii] {
                lumped[di] += h / 2.0;
                for jj in 0..2 {
                    if let Some(dj) = el.dofs[jj] {
                        m[(di, dj)] += local[ii][jj];
                    }
                }
            }
        }
    }
    (m, lumped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ProblemConfig;
    use crate::mesh::build_mesh;

    fn unit_mesh(n: u32) -> Mesh {
        build_mesh(&ProblemConfig::unit_interval(0.5, 2.0, n)).unwrap()
    }

    #[test]
    fn complement_weight_matches_direct_formula_single_interval() {
        // s = 0.5, q = 1: rho(x) = 1/x + 1/(1-x) on (0, 1)
        let mesh = unit_mesh(8);
        let geom = ComplementGeometry::new(&mesh, 2.0);
        for &x in &[0.1, 0.25, 0.5, 0.9, 0.999] {
            let got = geom.weight(x, 1.0);
            let want = 1.0 / x + 1.0 / (1.0 - x);
            assert!((got - want).abs() <= 1e-12 * want, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn complement_weight_two_intervals() {
        let cfg = ProblemConfig::with_intervals(vec![(0.0, 1.0), (2.0, 3.0)], 0.5, 2.0, 4);
        let mesh = build_mesh(&cfg).unwrap();
        let geom = ComplementGeometry::new(&mesh, 10.0);
        // q = 1, x = 0.5: complement pieces (-inf,0), (1,2), (3,inf)
        let want = 1.0 / 0.5 + (1.0 / 0.5 - 1.0 / 1.5) + 1.0 / 2.5;
        let got = geom.weight(0.5, 1.0);
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn complement_weight_independent_of_truncation_radius() {
        let mesh = unit_mesh(8);
        let g1 = ComplementGeometry::new(&mesh, 0.5);
        let g2 = ComplementGeometry::new(&mesh, 50.0);
        for &x in &[0.2, 0.7] {
            let (a, b) = (g1.weight(x, 0.8), g2.weight(x, 0.8));
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn stiffness_symmetric_and_positive_definite() {
        let mesh = unit_mesh(8);
        let a = assemble_stiffness(&mesh, 0.5, 12, 2.0).unwrap();
        assert_eq!(a, a.transpose());
        let eig = nalgebra::SymmetricEigen::new(a.clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "min eigenvalue {min}");
    }

    #[test]
    fn stiffness_rejects_bad_s() {
        let mesh = unit_mesh(4);
        assert!(assemble_stiffness(&mesh, 1.0, 8, 2.0).is_err());
        assert!(assemble_stiffness(&mesh, 0.0, 8, 2.0).is_err());
    }

    #[test]
    fn threaded_assembly_matches_serial() {
        let mesh = unit_mesh(16);
        let a1 = assemble_stiffness(&mesh, 0.7, 10, 2.0).unwrap();
        let a3 = assemble_stiffness_threaded(&mesh, 0.7, 10, 2.0, 3).unwrap();
        let a3b = assemble_stiffness_threaded(&mesh, 0.7, 10, 2.0, 3).unwrap();
        assert_eq!(a3, a3b, "same thread count must be bitwise deterministic");
        let scale = a1.amax();
        let diff = (&a1 - &a3).amax();
        assert!(diff <= 1e-14 * scale, "schedule-dependent drift {diff}");
    }

    #[test]
    fn mass_closed_form_uniform() {
        let mesh = unit_mesh(4); // h = 0.25, 3 dofs
        let (m, lumped) = assemble_mass(&mesh);
        let h = 0.25;
        for i in 0..3 {
            assert!((m[(i, i)] - 2.0 * h / 3.0).abs() < 1e-15);
            assert!((lumped[i] - h).abs() < 1e-15);
        }
        assert!((m[(0, 1)] - h / 6.0).abs() < 1e-15);
        assert_eq!(m[(0, 2)], 0.0);
        // partition of unity: lumped sums to |domain| minus boundary halves
        let total: f64 = lumped.iter().sum();
        assert!((total - (1.0 - h)).abs() < 1e-14);
    }

    #[test]
    fn mass_positive_definite() {
        let mesh = unit_mesh(8);
        let (m, _) = assemble_mass(&mesh);
        assert!(nalgebra::Cholesky::new(m).is_some());
    }
}
