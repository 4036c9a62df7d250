//! The piecewise-quadratic functional I(u, a, b) for p = 2 and its
//! saddle-point reduction on a square around a diagonal spectrum point:
//! the maximizer map theta over the lower block, the minimizer map tau over
//! the upper block, the sphere min/max values whose zero sets are the two
//! spectrum curves, and the null-manifold maps eta, xi, phi.
//!
//! Everything here works in the eigenbasis of the pencil (A, M) with the
//! lumped mass as the discrete L2 inner product; with that choice the
//! diagonal identities (theta = tau = 0, phi = identity at (lambda_k,
//! lambda_k)) hold to rounding, not just to discretization error.

use crate::eigen::EigenDecomposition;
use crate::error::{Error, Result};
use crate::util::{a_norm, seeded_rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::ops::Range;

/// A point (a, b) in the Fucik plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FucikPoint {
    pub a: f64,
    pub b: f64,
}

/// Inner solvers whose line search stalls at float resolution are accepted
/// when the projected gradient sits within this factor of the target
/// tolerance; the quadratic pieces put the representable neighborhood of the
/// optimum well inside it.
const STALL_FACTOR: f64 = 1e4;

/// Solver settings for the reduction maps and sphere searches.
#[derive(Debug, Clone)]
pub struct SolverParams {
    /// Iteration cap for the inner Newton solvers.
    pub max_iter: usize,
    /// Projected-gradient stopping tolerance (relative to input scale).
    pub solver_tol: f64,
    /// Number of seeded random restarts in the sphere searches.
    pub random_starts: usize,
    /// Number of eigen-direction starts past lambda_k (J).
    pub eig_starts: usize,
    /// Iteration cap for sphere projected-gradient descent.
    pub sphere_max_iter: usize,
    /// Bracket width at which curve bisection stops.
    pub bisect_tol: f64,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iter: 200,
            solver_tol: 1e-10,
            random_starts: 8,
            eig_starts: 3,
            sphere_max_iter: 500,
            bisect_tol: 1e-8,
            seed: 42,
        }
    }
}

impl SolverParams {
    pub fn from_config(cfg: &crate::config::ProblemConfig) -> Self {
        Self {
            solver_tol: cfg.tolerances.solver_tol,
            bisect_tol: cfg.tolerances.bisect_tol,
            seed: cfg.seed,
            ..Self::default()
        }
    }
}

/// Result of a sphere optimization: the best value, the unit-norm argument,
/// and the corresponding point on the reduced manifold.
#[derive(Debug, Clone)]
pub struct SphereOpt {
    pub value: f64,
    /// Argument on the energy-norm unit sphere (w for the min, v for the max).
    pub arg: DVector<f64>,
    /// sigma(w) resp. zeta(v) at the optimum.
    pub critical: DVector<f64>,
    pub best_start: usize,
}

/// Immutable state for one (k, a, b): the forms, the eigendecomposition and
/// the subspace column ranges. All methods are pure.
pub struct FucikContext<'a> {
    pub a_mat: &'a DMatrix<f64>,
    /// Lumped masses (the discrete L2 weights).
    pub m: &'a DVector<f64>,
    pub decomp: &'a EigenDecomposition,
    pub k: usize,
    pub point: FucikPoint,
    pub params: SolverParams,
    /// lambda_{k-1} and lambda_{k+1}: the square is (lo, hi)^2.
    pub lo: f64,
    pub hi: f64,
    r_nprev: Range<usize>,
    r_ek: Range<usize>,
    r_mk: Range<usize>,
}

impl<'a> FucikContext<'a> {
    pub fn new(
        a_mat: &'a DMatrix<f64>,
        m: &'a DVector<f64>,
        decomp: &'a EigenDecomposition,
        k: usize,
        point: FucikPoint,
        params: SolverParams,
    ) -> Result<Self> {
        let (r_nprev, r_ek, r_mk) = decomp.split_ranges(k)?;
        let lo = decomp.lambdas[k - 2];
        let hi = decomp.lambdas[k];
        if !(point.a > lo && point.a < hi && point.b > lo && point.b < hi) {
            return Err(Error::PointOutsideSquare {
                a: point.a,
                b: point.b,
                lo,
                hi,
            });
        }
        Ok(Self {
            a_mat,
            m,
            decomp,
            k,
            point,
            params,
            lo,
            hi,
            r_nprev,
            r_ek,
            r_mk,
        })
    }

    pub fn n(&self) -> usize {
        self.a_mat.nrows()
    }

    pub fn dim_nprev(&self) -> usize {
        self.r_nprev.len()
    }

    pub fn dim_ek(&self) -> usize {
        self.r_ek.len()
    }

    pub fn dim_mk(&self) -> usize {
        self.r_mk.len()
    }

    fn cols(&self, r: &Range<usize>) -> nalgebra::DMatrixView<'_, f64> {
        self.decomp.basis.columns(r.start, r.len())
    }

    /// Coordinates of a vector against a basis block (plain pairing with the
    /// gradient covector; basis^T g).
    fn block_pairing(&self, r: &Range<usize>, g: &DVector<f64>) -> DVector<f64> {
        self.cols(r).transpose() * g
    }

    /// Member of a basis block from coordinates.
    fn expand_coords(&self, r: &Range<usize>, c: &DVector<f64>) -> DVector<f64> {
        self.cols(r) * c
    }

    /// M-orthogonal projection of u onto a basis block.
    fn project(&self, r: &Range<usize>, u: &DVector<f64>) -> DVector<f64> {
        let mu = DVector::from_fn(u.len(), |i, _| self.m[i] * u[i]);
        let c = self.cols(r).transpose() * mu;
        self.expand_coords(r, &c)
    }

    /// I(u, a, b) = (u^T A u)/2 - (b |u+|_m^2 + a |u-|_m^2)/2.
    pub fn eval_i(&self, u: &DVector<f64>) -> f64 {
        let quad = u.dot(&(self.a_mat * u));
        let mut lower = 0.0;
        for i in 0..u.len() {
            let x = u[i];
            let c = if x > 0.0 { self.point.b } else { self.point.a };
            lower += c * self.m[i] * x * x;
        }
        0.5 * (quad - lower)
    }

    /// Euclidean gradient A u - (b m.u+ - a m.u-); satisfies
    /// <grad, u> = 2 I(u) identically.
    pub fn grad_i(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut g = self.a_mat * u;
        for i in 0..u.len() {
            let x = u[i];
            let c = if x > 0.0 { self.point.b } else { self.point.a };
            g[i] -= c * self.m[i] * x;
        }
        g
    }

    /// Piecewise-constant curvature coefficients of the sign-split term.
    fn hess_coeffs(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| {
            let x = u[i];
            if x > 0.0 {
                self.point.b
            } else if x < 0.0 {
                self.point.a
            } else {
                0.5 * (self.point.a + self.point.b)
            }
        })
    }

    fn grad_tol(&self, scale: f64) -> f64 {
        self.params.solver_tol * (1.0 + self.hi) * scale.max(1e-300)
    }


    /// theta(w): the unique maximizer of v -> I(v + w) over the span of the
    /// eigenvectors below lambda_k. Damped semismooth Newton; the restriction
    /// is strictly concave on the square.
    pub fn theta(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.theta_full(w)?.0)
    }

    /// Returns (theta(w), sigma(w), grad_I at sigma(w)).
    fn theta_full(&self, w: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let d = self.dim_nprev();
        let wnorm = a_norm(self.a_mat, w);
        let tol = self.grad_tol(wnorm);
        let mut alpha = DVector::<f64>::zeros(d);
        let mut u = w.clone();
        let mut fval = self.eval_i(&u);
        for _ in 0..self.params.max_iter {
            let g = self.grad_i(&u);
            let gamma = self.block_pairing(&self.r_nprev, &g);
            if gamma.norm() <= tol {
                let v = self.expand_coords(&self.r_nprev, &alpha);
                return Ok((v, u, g));
            }
            // projected Hessian: diag(lambda) minus the weighted Gram matrix
            let coeffs = self.hess_coeffs(&u);
            let mut hess = DMatrix::<f64>::zeros(d, d);
            let block = self.cols(&self.r_nprev);
            for i in 0..d {
                hess[(i, i)] = self.decomp.all_eigenvalues[self.r_nprev.start + i];
            }
            for l in 0..self.n() {
                let cm = coeffs[l] * self.m[l];
                if cm == 0.0 {
                    continue;
                }
                for i in 0..d {
                    let bi = block[(l, i)];
                    for j in i..d {
                        hess[(i, j)] -= cm * bi * block[(l, j)];
                    }
                }
            }
            for i in 0..d {
                for j in 0..i {
                    hess[(i, j)] = hess[(j, i)];
                }
            }
            let mut dir = hess
                .lu()
                .solve(&(-&gamma))
                .unwrap_or_else(|| gamma.clone());
            if gamma.dot(&dir) <= 0.0 {
                dir = gamma.clone(); // fall back to ascent
            }
            let slope = gamma.dot(&dir);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let alpha_t = &alpha + &dir * step;
                let u_t = w + self.expand_coords(&self.r_nprev, &alpha_t);
                let f_t = self.eval_i(&u_t);
                if f_t >= fval + 1e-4 * step * slope {
                    alpha = alpha_t;
                    u = u_t;
                    fval = f_t;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // line search at float resolution: accept if the projected
                // gradient is already far below any contract tolerance
                if gamma.norm() <= STALL_FACTOR * tol {
                    let v = self.expand_coords(&self.r_nprev, &alpha);
                    return Ok((v, u, g));
                }
                return Err(Error::NonConvergence {
                    op: "theta",
                    iters: self.params.max_iter,
                    residual: gamma.norm() / tol.max(1e-300),
                });
            }
        }
        let g = self.grad_i(&u);
        let gamma = self.block_pairing(&self.r_nprev, &g);
        if gamma.norm() <= STALL_FACTOR * tol {
            let v = self.expand_coords(&self.r_nprev, &alpha);
            return Ok((v, u, g));
        }
        Err(Error::NonConvergence {
            op: "theta",
            iters: self.params.max_iter,
            residual: gamma.norm(),
        })
    }

    /// tau(v): the unique minimizer of w -> I(v + w) over the span of the
    /// eigenvectors above lambda_k. Full-space bordered semismooth Newton on
    /// the stationarity system, with a projected-gradient fallback.
    pub fn tau(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.tau_full(v)?.0)
    }

    /// Returns (tau(v), zeta(v), grad_I at zeta(v)).
    fn tau_full(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = self.n();
        let d = self.r_ek.end; // dim N_k
        let vnorm = a_norm(self.a_mat, v);
        let tol = self.grad_tol(vnorm);
        let nk = self.decomp.basis.columns(0, d);
        // columns of m .* N_k-basis
        let mut mnk = nk.into_owned();
        for j in 0..d {
            for i in 0..n {
                mnk[(i, j)] *= self.m[i];
            }
        }
        let c_v = mnk.transpose() * v;

        let mut u = v.clone();
        let mut mu = DVector::<f64>::zeros(d);
        let mut fval = self.eval_i(&u);

        for _ in 0..self.params.max_iter {
            let g = self.grad_i(&u);
            let gamma_m = self.block_pairing(&self.r_mk, &g);
            let feas = &mnk.transpose() * &u - &c_v;
            if gamma_m.norm() <= tol && feas.norm() <= 1e-12 * (1.0 + vnorm) {
                let w = &u - v;
                let w = self.project(&self.r_mk, &w);
                let zeta = v + &w;
                let g = self.grad_i(&zeta);
                return Ok((w, zeta, g));
            }

            // bordered Newton system on [g - (m N) mu; N^T m u - c_v]
            let coeffs = self.hess_coeffs(&u);
            let mut jac = DMatrix::<f64>::zeros(n + d, n + d);
            for i in 0..n {
                for j in 0..n {
                    jac[(i, j)] = self.a_mat[(i, j)];
                }
                jac[(i, i)] -= coeffs[i] * self.m[i];
            }
            for i in 0..n {
                for j in 0..d {
                    jac[(i, n + j)] = -mnk[(i, j)];
                    jac[(n + j, i)] = mnk[(i, j)];
                }
            }
            let mut rhs = DVector::<f64>::zeros(n + d);
            let f1 = &g - &mnk * &mu;
            for i in 0..n {
                rhs[i] = -f1[i];
            }
            for j in 0..d {
                rhs[n + j] = -feas[j];
            }
            let merit0 = f1.norm_squared() + feas.norm_squared();
            let mut advanced = false;
            if let Some(delta) = jac.lu().solve(&rhs) {
                let du = delta.rows(0, n).into_owned();
                let dmu = delta.rows(n, d).into_owned();
                let mut step = 1.0;
                for _ in 0..40 {
                    let u_t = &u + &du * step;
                    let mu_t = &mu + &dmu * step;
                    let g_t = self.grad_i(&u_t);
                    let f1_t = &g_t - &mnk * &mu_t;
                    let feas_t = &mnk.transpose() * &u_t - &c_v;
                    let merit_t = f1_t.norm_squared() + feas_t.norm_squared();
                    if merit_t <= merit0 * (1.0 - 1e-4 * step) + 1e-300 {
                        u = u_t;
                        mu = mu_t;
                        fval = self.eval_i(&u);
                        advanced = true;
                        break;
                    }
                    step *= 0.5;
                }
            }
            if !advanced {
                // projected-gradient descent step on the convex restriction
                let dir = self.expand_coords(&self.r_mk, &gamma_m);
                let slope = gamma_m.norm_squared();
                let mut step = 1.0;
                for _ in 0..60 {
                    let u_t = &u - &dir * step;
                    let f_t = self.eval_i(&u_t);
                    if f_t <= fval - 1e-4 * step * slope {
                        u = u_t;
                        fval = f_t;
                        advanced = true;
                        break;
                    }
                    step *= 0.5;
                }
            }
            if !advanced {
                if gamma_m.norm() <= STALL_FACTOR * tol {
                    let w = self.project(&self.r_mk, &(&u - v));
                    let zeta = v + &w;
                    let g = self.grad_i(&zeta);
                    return Ok((w, zeta, g));
                }
                return Err(Error::NonConvergence {
                    op: "tau",
                    iters: self.params.max_iter,
                    residual: gamma_m.norm(),
                });
            }
        }
        let g = self.grad_i(&u);
        let gamma_m = self.block_pairing(&self.r_mk, &g);
        if gamma_m.norm() <= STALL_FACTOR * tol {
            let w = self.project(&self.r_mk, &(&u - v));
            let zeta = v + &w;
            let g = self.grad_i(&zeta);
            return Ok((w, zeta, g));
        }
        Err(Error::NonConvergence {
            op: "tau",
            iters: self.params.max_iter,
            residual: gamma_m.norm(),
        })
    }

    /// sigma(w) = theta(w) + w.
    pub fn sigma(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.theta_full(w)?.1)
    }

    /// zeta(v) = v + tau(v).
    pub fn zeta(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.tau_full(v)?.1)
    }

    /// Scaled coordinates: on the block of columns `r`, the energy norm of
    /// sum_j kappa_j col_j is the Euclidean norm of x_j = sqrt(lambda_j)
    /// kappa_j.
    fn expand_scaled(&self, r: &Range<usize>, x: &DVector<f64>) -> DVector<f64> {
        let kappa = DVector::from_fn(r.len(), |j, _| {
            x[j] / self.decomp.all_eigenvalues[r.start + j].sqrt()
        });
        self.expand_coords(r, &kappa)
    }

    fn grad_scaled(&self, r: &Range<usize>, g: &DVector<f64>) -> DVector<f64> {
        let gamma = self.block_pairing(r, g);
        DVector::from_fn(r.len(), |j, _| {
            gamma[j] / self.decomp.all_eigenvalues[r.start + j].sqrt()
        })
    }

    /// Sphere projected-gradient descent with Barzilai-Borwein steps. `eval`
    /// returns (value, euclidean gradient in scaled coords, payload).
    fn sphere_descent<T>(
        &self,
        x0: DVector<f64>,
        mut eval: impl FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>, T)>,
    ) -> Result<(f64, DVector<f64>, T)> {
        let gtol = (self.params.solver_tol * 10.0).max(1e-10);
        let mut x = x0.normalize();
        let (mut f, mut g, mut payload) = eval(&x)?;
        let mut gr = &g - &x * g.dot(&x);
        let mut step = 0.5f64;
        let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
        for _ in 0..self.params.sphere_max_iter {
            if gr.norm() <= gtol * (1.0 + f.abs()) {
                break;
            }
            if let Some((ref sx, ref sg)) = prev {
                let s = &x - sx;
                let y = &gr - sg;
                let sy = s.dot(&y).abs();
                if sy > 1e-300 {
                    step = (s.norm_squared() / sy).clamp(1e-7, 1e4);
                }
            }
            let slope = gr.norm_squared();
            let mut eta = step;
            let mut moved = false;
            for _ in 0..40 {
                let xt = (&x - &gr * eta).normalize();
                let (ft, gt, pt) = eval(&xt)?;
                if ft <= f - 1e-4 * eta * slope {
                    prev = Some((x.clone(), gr.clone()));
                    x = xt;
                    f = ft;
                    g = gt;
                    payload = pt;
                    gr = &g - &x * g.dot(&x);
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break; // stationary to line-search resolution
            }
        }
        Ok((f, x, payload))
    }

    /// Deterministic start set for the lower-curve sphere search: the
    /// eigen-directions of lambda_k .. lambda_{k+J} plus seeded random
    /// starts plus caller-provided warm starts.
    fn min_starts(&self, dim: usize, offset: usize, extra: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut starts = Vec::new();
        // one coordinate direction per eigenvector column of the groups
        // k..k+J (columns relative to the block start)
        let mut g = self.k; // 1-based distinct index of lambda_k
        let mut taken = 0usize;
        while g <= self.decomp.n_distinct() && taken <= self.params.eig_starts {
            for c in self.decomp.group_cols(g) {
                if c >= offset {
                    let mut e = DVector::<f64>::zeros(dim);
                    e[c - offset] = 1.0;
                    starts.push(e);
                }
            }
            g += 1;
            taken += 1;
        }
        let mut rng = seeded_rng(self.params.seed, 0xF0C1 + self.k as u64);
        for _ in 0..self.params.random_starts {
            starts.push(crate::util::random_unit(&mut rng, dim));
        }
        for w in extra {
            if w.len() == dim && w.norm() > 1e-12 {
                starts.push(w.normalize());
            }
        }
        starts
    }

    /// n_{k-1}(a, b): infimum of I(sigma(w)) over the unit sphere of the
    /// upper block M_{k-1}, by multi-start projected-gradient descent.
    /// `extra_starts` are warm starts in scaled coordinates.
    pub fn saddle_min(&self, extra_starts: &[DVector<f64>]) -> Result<SphereOpt> {
        let r = self.r_ek.start..self.n(); // M_{k-1} columns
        let dim = r.len();
        let starts = self.min_starts(dim, r.start, extra_starts);
        let mut best: Option<(f64, DVector<f64>, (DVector<f64>, DVector<f64>), usize)> = None;
        for (si, x0) in starts.into_iter().enumerate() {
            let (f, x, payload) = self.sphere_descent(x0, |x| {
                let w = self.expand_scaled(&r, x);
                let (_, sig, g) = self.theta_full(&w)?;
                let f = self.eval_i(&sig);
                let gx = self.grad_scaled(&r, &g);
                Ok((f, gx, (w, sig)))
            })?;
            if best.as_ref().is_none_or(|b| f < b.0) {
                best = Some((f, x, payload, si));
            }
        }
        let (value, _, (w, sig), best_start) = best.expect("at least one start");
        Ok(SphereOpt {
            value,
            arg: w,
            critical: sig,
            best_start,
        })
    }

    /// m_k(a, b): supremum of I(zeta(v)) over the unit sphere of the lower
    /// block N_k, by multi-start projected-gradient ascent.
    pub fn saddle_max(&self, extra_starts: &[DVector<f64>]) -> Result<SphereOpt> {
        let r = 0..self.r_ek.end; // N_k columns
        let dim = r.len();
        let mut starts: Vec<DVector<f64>> = (0..dim)
            .map(|j| {
                let mut e = DVector::<f64>::zeros(dim);
                e[j] = 1.0;
                e
            })
            .collect();
        let mut rng = seeded_rng(self.params.seed, 0xF0C2 + self.k as u64);
        for _ in 0..self.params.random_starts {
            starts.push(crate::util::random_unit(&mut rng, dim));
        }
        for v in extra_starts {
            if v.len() == dim && v.norm() > 1e-12 {
                starts.push(v.normalize());
            }
        }
        let mut best: Option<(f64, DVector<f64>, (DVector<f64>, DVector<f64>), usize)> = None;
        for (si, x0) in starts.into_iter().enumerate() {
            let (negf, x, payload) = self.sphere_descent(x0, |x| {
                let v = self.expand_scaled(&r, x);
                let (_, zet, g) = self.tau_full(&v)?;
                let f = self.eval_i(&zet);
                let gx = self.grad_scaled(&r, &g);
                Ok((-f, -gx, (v, zet)))
            })?;
            let f = -negf;
            if best.as_ref().is_none_or(|b| f > b.0) {
                best = Some((f, x, payload, si));
            }
        }
        let (value, _, (v, zet), best_start) = best.expect("at least one start");
        Ok(SphereOpt {
            value,
            arg: v,
            critical: zet,
            best_start,
        })
    }

    /// eta(y): maximizer of v -> I(zeta(v + y)) over the block below
    /// lambda_k; gradient ascent with Barzilai-Borwein steps on the concave
    /// envelope.
    pub fn eta(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.dim_nprev();
        let ynorm = a_norm(self.a_mat, y);
        let tol = self.grad_tol(ynorm);
        let mut alpha = DVector::<f64>::zeros(d);
        let mut v = DVector::<f64>::zeros(self.n());
        let (_, _, mut g) = self.tau_full(&(y + &v))?;
        let mut f = {
            let (_, zet, _) = self.tau_full(&(y + &v))?;
            self.eval_i(&zet)
        };
        let mut gamma = self.block_pairing(&self.r_nprev, &g);
        let mut step = 1.0f64;
        let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
        for _ in 0..self.params.max_iter {
            if gamma.norm() <= tol {
                return Ok(v);
            }
            if let Some((ref sa, ref sg)) = prev {
                let s = &alpha - sa;
                let yv = &gamma - sg;
                let sy = s.dot(&yv).abs();
                if sy > 1e-300 {
                    step = (s.norm_squared() / sy).clamp(1e-7, 1e6);
                }
            }
            let slope = gamma.norm_squared();
            let mut eta_s = step;
            let mut moved = false;
            for _ in 0..50 {
                let alpha_t = &alpha + &gamma * eta_s;
                let v_t = self.expand_coords(&self.r_nprev, &alpha_t);
                let (_, zet_t, g_t) = self.tau_full(&(y + &v_t))?;
                let f_t = self.eval_i(&zet_t);
                if f_t >= f + 1e-4 * eta_s * slope {
                    prev = Some((alpha.clone(), gamma.clone()));
                    alpha = alpha_t;
                    v = v_t;
                    f = f_t;
                    g = g_t;
                    gamma = self.block_pairing(&self.r_nprev, &g);
                    moved = true;
                    break;
                }
                eta_s *= 0.5;
            }
            if !moved {
                if gamma.norm() <= STALL_FACTOR * tol {
                    return Ok(v);
                }
                return Err(Error::NonConvergence {
                    op: "eta",
                    iters: self.params.max_iter,
                    residual: gamma.norm(),
                });
            }
        }
        if gamma.norm() <= STALL_FACTOR * tol {
            return Ok(v);
        }
        Err(Error::NonConvergence {
            op: "eta",
            iters: self.params.max_iter,
            residual: gamma.norm(),
        })
    }

    /// xi(y) = tau(eta(y) + y).
    pub fn xi(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let v = self.eta(y)?;
        self.tau(&(&v + y))
    }

    /// phi(y) = zeta(eta(y) + y): the null-manifold chart over the
    /// eigenspace of lambda_k.
    pub fn phi_map(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let v = self.eta(y)?;
        let (_, zet, _) = self.tau_full(&(&v + y))?;
        Ok(zet)
    }

    /// Relative defect of the chart consistency zeta(eta(y) + y) =
    /// sigma(y + xi(y)), checked through the independent theta solve.
    pub fn phi_consistency(&self, y: &DVector<f64>) -> Result<f64> {
        let v = self.eta(y)?;
        let w = self.tau(&(&v + y))?;
        let v2 = self.theta(&(y + &w))?;
        let scale = a_norm(self.a_mat, y).max(1e-300);
        Ok(a_norm(self.a_mat, &(&v2 - &v)) / scale)
    }

    /// The reduced functional on the null manifold: I(phi(y)).
    pub fn reduced_i(&self, y: &DVector<f64>) -> Result<f64> {
        let phi = self.phi_map(y)?;
        Ok(self.eval_i(&phi))
    }

    /// Unit directions in the eigenspace of lambda_k used for deterministic
    /// classification sampling: +/- the basis direction when simple, a fixed
    /// low-discrepancy sphere sample otherwise.
    pub fn classification_directions(&self, count: usize) -> Vec<DVector<f64>> {
        let e = self.dim_ek();
        if e == 1 {
            let y = self.expand_scaled(&self.r_ek.clone(), &DVector::from_element(1, 1.0));
            return vec![y.clone(), -y];
        }
        crate::util::sphere_samples(e, count)
            .into_iter()
            .map(|c| self.expand_scaled(&self.r_ek.clone(), &c))
            .collect()
    }

    /// Random vector in the span of a subspace selector, energy-normalized.
    pub fn random_in_block<R: Rng>(&self, rng: &mut R, block: Block) -> DVector<f64> {
        let r = self.block_range(block);
        let x = crate::util::random_unit(rng, r.len());
        self.expand_scaled(&r, &x)
    }

    pub fn block_range(&self, block: Block) -> Range<usize> {
        match block {
            Block::NPrev => self.r_nprev.clone(),
            Block::Ek => self.r_ek.clone(),
            Block::Mk => self.r_mk.clone(),
            Block::MPrev => self.r_ek.start..self.n(),
            Block::Nk => 0..self.r_ek.end,
        }
    }

    /// Basis member of a block from scaled coordinates (energy-normalized
    /// when the coordinates are Euclidean-normalized).
    pub fn block_member(&self, block: Block, x: &DVector<f64>) -> DVector<f64> {
        self.expand_scaled(&self.block_range(block), x)
    }
}

/// Subspace selectors relative to level k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// N_{k-1}
    NPrev,
    /// E_k
    Ek,
    /// M_k
    Mk,
    /// M_{k-1} = E_k + M_k
    MPrev,
    /// N_k = N_{k-1} + E_k
    Nk,
}
