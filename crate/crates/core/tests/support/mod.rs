//! Shared test support: independent oracles for the stiffness entries
//! (adaptive quadrature of the exact correlation reduction with explicit
//! singularity subtraction) and for the saddle quantities (nested brute-force
//! optimization), plus pipeline builders.
//!
//! Nothing here calls the assembly panel-pair code or the reduction solvers;
//! dual routes stay independent.

#![allow(dead_code)]

use fucik_core::config::ProblemConfig;
use fucik_core::eigen::EigenDecomposition;
use fucik_core::mesh::{build_mesh, Mesh};
use fucik_core::util::seeded_rng;
use fucik_core::GalerkinForms;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

// ---------------------------------------------------------------------------
// pipeline builders
// ---------------------------------------------------------------------------

pub struct Pipeline {
    pub config: ProblemConfig,
    pub mesh: Mesh,
    pub forms: GalerkinForms,
    pub decomp: EigenDecomposition,
}

pub fn pipeline(config: ProblemConfig) -> Pipeline {
    let mesh = build_mesh(&config).expect("mesh");
    let forms = GalerkinForms::assemble(&mesh, &config).expect("forms");
    let decomp = forms
        .solve_spectrum(config.tolerances.cluster_tol)
        .expect("spectrum");
    Pipeline {
        config,
        mesh,
        forms,
        decomp,
    }
}

pub fn unit_pipeline(n: u32) -> Pipeline {
    pipeline(ProblemConfig::unit_interval(0.5, 2.0, n))
}

pub fn random_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = seeded_rng(seed, 0xBEEF);
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

// ---------------------------------------------------------------------------
// adaptive quadrature
// ---------------------------------------------------------------------------

fn gauss15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    // nodes/weights for 15-point Gauss-Legendre on [-1, 1]
    const X: [f64; 8] = [
        0.0,
        0.2011940939974345,
        0.3941513470775634,
        0.5709721726085388,
        0.7244177313601700,
        0.8482065834104272,
        0.9372733924007059,
        0.9879925180204854,
    ];
    const W: [f64; 8] = [
        0.2025782419255613,
        0.1984314853271116,
        0.1861610000155622,
        0.1662692058169939,
        0.1395706779261543,
        0.1071592204671719,
        0.0703660474881081,
        0.0307532419961173,
    ];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = W[0] * f(mid);
    for i in 1..8 {
        sum += W[i] * (f(mid + half * X[i]) + f(mid - half * X[i]));
    }
    sum * half
}

/// Adaptive bisection Gauss quadrature with absolute tolerance and a node
/// budget.
pub fn adaptive_quad(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(
        f: &mut dyn FnMut(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        budget: &mut u64,
    ) -> f64 {
        let mid = 0.5 * (a + b);
        let left = gauss15(f, a, mid);
        let right = gauss15(f, mid, b);
        *budget += 1;
        if depth >= 44 || *budget > 400_000 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        rec(f, a, mid, left, 0.5 * tol, depth + 1, budget)
            + rec(f, mid, b, right, 0.5 * tol, depth + 1, budget)
    }
    let whole = gauss15(f, a, b);
    let mut budget = 0u64;
    rec(f, a, b, whole, tol, 0, &mut budget)
}

// ---------------------------------------------------------------------------
// stiffness oracle: correlation reduction + singularity subtraction
// ---------------------------------------------------------------------------

/// Hat function by its three breakpoints.
#[derive(Clone, Copy)]
pub struct Hat {
    pub left: f64,
    pub center: f64,
    pub right: f64,
}

impl Hat {
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.left || x >= self.right {
            0.0
        } else if x <= self.center {
            (x - self.left) / (self.center - self.left)
        } else {
            (self.right - x) / (self.right - self.center)
        }
    }

    fn breakpoints(&self) -> [f64; 3] {
        [self.left, self.center, self.right]
    }

    fn slope(&self, x: f64) -> f64 {
        if x <= self.left || x >= self.right {
            0.0
        } else if x < self.center {
            1.0 / (self.center - self.left)
        } else {
            -1.0 / (self.right - self.center)
        }
    }
}

/// Hats of all dofs of a mesh, rebuilt from coordinates only.
pub fn mesh_hats(mesh: &Mesh) -> Vec<Hat> {
    mesh.elements
        .iter()
        .filter_map(|el| {
            el.dofs[1].map(|_| Hat {
                left: el.x_left,
                center: el.x_right(),
                right: el.x_right() + el.h,
            })
        })
        .collect()
}

/// Cross-correlation integral of two hats at shift z, exact (2-point Gauss
/// per quadratic piece).
fn correlation(hi: &Hat, hj: &Hat, z: f64) -> f64 {
    // integrand phi_i(x) phi_j(x - z): breakpoints from both
    let mut bps: Vec<f64> = hi
        .breakpoints()
        .into_iter()
        .chain(hj.breakpoints().into_iter().map(|b| b + z))
        .collect();
    bps.sort_by(f64::total_cmp);
    let g = 1.0 / 3.0f64.sqrt();
    let mut total = 0.0;
    for w in bps.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for xi in [-g, g] {
            let x = mid + half * xi;
            total += half * hi.eval(x) * hj.eval(x - z);
        }
    }
    total
}

/// Exact integral of the slope product (the local H1 entry).
fn slope_product(hi: &Hat, hj: &Hat) -> f64 {
    let mut bps: Vec<f64> = hi
        .breakpoints()
        .into_iter()
        .chain(hj.breakpoints())
        .collect();
    bps.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in bps.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        total += (b - a) * hi.slope(mid) * hj.slope(mid);
    }
    total
}

/// The even function C(z) = 2 G(0) - G(z) - G(-z) is a piecewise cubic
/// spline in z (correlations of piecewise-linear hats); this table fits each
/// cubic piece exactly through four samples so the adaptive quadrature can
/// evaluate it cheaply.
struct CorrelationSpline {
    breaks: Vec<f64>,
    /// cubic coefficients per piece, lowest degree first, in (z - left)
    coefs: Vec<[f64; 4]>,
    g0: f64,
    /// largest |C| seen while fitting; sets the quadrature tolerance scale
    max_abs: f64,
}

impl CorrelationSpline {
    fn build(hi: &Hat, hj: &Hat) -> Self {
        let g0 = correlation(hi, hj, 0.0);
        let c_raw = |z: f64| 2.0 * g0 - correlation(hi, hj, z) - correlation(hi, hj, -z);
        // kinks of C sit at pairwise breakpoint differences
        let mut breaks: Vec<f64> = Vec::new();
        for bi in hi.breakpoints() {
            for bj in hj.breakpoints() {
                breaks.push((bi - bj).abs());
            }
        }
        breaks.push(0.0);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut coefs = Vec::with_capacity(breaks.len().saturating_sub(1));
        let mut max_abs = 2.0 * g0.abs();
        for w in breaks.windows(2) {
            let (lo, hi_b) = (w[0], w[1]);
            let len = hi_b - lo;
            if len < 1e-9 {
                let c0 = c_raw(0.5 * (lo + hi_b));
                max_abs = max_abs.max(c0.abs());
                coefs.push([c0, 0.0, 0.0, 0.0]);
                continue;
            }
            // exact cubic through 4 interior samples
            let ts = [0.15, 0.4, 0.65, 0.9];
            let mut vander = DMatrix::<f64>::zeros(4, 4);
            let mut rhs = DVector::<f64>::zeros(4);
            for (r, &t) in ts.iter().enumerate() {
                let dz = t * len;
                for c in 0..4 {
                    vander[(r, c)] = dz.powi(c as i32);
                }
                rhs[r] = c_raw(lo + dz);
                max_abs = max_abs.max(rhs[r].abs());
            }
            let sol = vander.lu().solve(&rhs).expect("cubic fit");
            coefs.push([sol[0], sol[1], sol[2], sol[3]]);
        }
        Self {
            breaks,
            coefs,
            g0,
            max_abs,
        }
    }

    fn eval(&self, z: f64) -> f64 {
        let z = z.abs();
        let last = *self.breaks.last().unwrap();
        if z >= last {
            return 2.0 * self.g0;
        }
        let idx = match self
            .breaks
            .binary_search_by(|b| b.total_cmp(&z))
        {
            Ok(i) => i.min(self.coefs.len().saturating_sub(1)),
            Err(i) => i.saturating_sub(1),
        };
        let dz = z - self.breaks[idx];
        let c = &self.coefs[idx.min(self.coefs.len() - 1)];
        ((c[3] * dz + c[2]) * dz + c[1]) * dz + c[0]
    }
}

/// Independent oracle for one stiffness entry: the planar double integral is
/// reduced exactly to the shift variable,
///   A_ij = int_R C_ij(z) |z|^(-1-2s) dz,
/// C_ij(z) = 2 G(0) - G(z) - G(-z) with G the hat cross-correlation; the
/// z^2 behavior of C at the origin is subtracted and integrated in closed
/// form, the smooth remainder adaptively, and the constant far field
/// analytically.
pub fn stiffness_entry_oracle(hi: &Hat, hj: &Hat, s: f64) -> f64 {
    let spline = CorrelationSpline::build(hi, hj);
    let g0 = spline.g0;
    let c2 = slope_product(hi, hj);
    let c_of = |z: f64| spline.eval(z);

    // beyond all overlap the correlation vanishes and C is constant
    let z_far = (hi.right - hj.left).max(hj.right - hi.left).max(1e-9);
    let feature = (hi.center - hi.left)
        .min(hi.right - hi.center)
        .min(hj.center - hj.left)
        .min(hj.right - hj.center);
    let z0 = 0.5 * feature;

    let scale = (spline.max_abs + c2.abs() * z0 * z0).max(1e-14);
    let tol = 1e-10 * scale;

    // singular part: subtract c2 z^2 and integrate it exactly. The
    // remainder is O(z^3) analytically, so below z0 * 1e-5 it is dominated
    // by rounding noise in C that the kernel would amplify; truncating there
    // discards only O(1e-12) of the entry.
    let z_min = z0 * 1e-5;
    let mut f_near = |z: f64| (c_of(z) - c2 * z * z) * z.powf(-1.0 - 2.0 * s);
    let near = adaptive_quad(&mut f_near, z_min, z0, tol)
        + c2 * z0.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);

    let mut f_mid = |z: f64| c_of(z) * z.powf(-1.0 - 2.0 * s);
    let mid = adaptive_quad(&mut f_mid, z0, z_far, tol);

    let tail = 2.0 * g0 * z_far.powf(-2.0 * s) / (2.0 * s);

    2.0 * (near + mid + tail)
}

/// Full oracle matrix (slow; meant for small meshes).
pub fn stiffness_oracle(mesh: &Mesh, s: f64) -> DMatrix<f64> {
    let hats = mesh_hats(mesh);
    let n = hats.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i <= j {
            stiffness_entry_oracle(&hats[i], &hats[j], s)
        } else {
            stiffness_entry_oracle(&hats[j], &hats[i], s)
        }
    })
}

// ---------------------------------------------------------------------------
// brute-force saddle oracles (independent of the reduction solvers)
// ---------------------------------------------------------------------------

/// Direct evaluation of I(u, a, b) from the formula.
pub fn eval_i_direct(a_mat: &DMatrix<f64>, m: &DVector<f64>, u: &DVector<f64>, a: f64, b: f64) -> f64 {
    let quad = u.dot(&(a_mat * u));
    let mut lower = 0.0;
    for i in 0..u.len() {
        let x = u[i];
        let c = if x > 0.0 { b } else { a };
        lower += c * m[i] * x * x;
    }
    0.5 * (quad - lower)
}

pub struct BruteCtx<'a> {
    pub a_mat: &'a DMatrix<f64>,
    pub m: &'a DVector<f64>,
    pub basis: &'a DMatrix<f64>,
    /// dim N_{k-1}
    pub d_prev: usize,
    /// dim N_k
    pub d_k: usize,
    pub a: f64,
    pub b: f64,
}

impl<'a> BruteCtx<'a> {
    pub fn new(p: &'a Pipeline, k: usize, a: f64, b: f64) -> Self {
        let d = &p.decomp.d;
        Self {
            a_mat: &p.forms.stiffness,
            m: &p.forms.m_lumped,
            basis: &p.decomp.basis,
            d_prev: d[k - 2],
            d_k: d[k - 1],
            a,
            b,
        }
    }

    fn n(&self) -> usize {
        self.a_mat.nrows()
    }

    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        eval_i_direct(self.a_mat, self.m, u, self.a, self.b)
    }

    pub fn a_norm(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(self.a_mat * u)).max(0.0).sqrt()
    }

    fn block(&self, lo: usize, hi: usize) -> DMatrix<f64> {
        self.basis.columns(lo, hi - lo).into_owned()
    }

    /// sup over the lower block by cyclic 1-D scans (the restriction is
    /// strictly concave).
    pub fn sup_lower(&self, w: &DVector<f64>) -> f64 {
        let nb = self.block(0, self.d_prev);
        let d = self.d_prev;
        if d == 0 {
            return self.eval(w);
        }
        let mut alpha = DVector::<f64>::zeros(d);
        let scale = self.a_norm(w).max(1e-12);
        let mut fbest = self.eval(&(w + &nb * &alpha));
        for _sweep in 0..40 {
            let before = fbest;
            for j in 0..d {
                let f1 = |t: f64, alpha: &DVector<f64>| {
                    let mut at = alpha.clone();
                    at[j] += t;
                    (self.eval(&(w + &nb * &at)), at)
                };
                // expand a bracket around 0 then golden-section maximize
                let mut radius = 0.5 * scale;
                for _ in 0..60 {
                    let (fp, _) = f1(radius, &alpha);
                    let (fm, _) = f1(-radius, &alpha);
                    if fp < fbest && fm < fbest {
                        break;
                    }
                    radius *= 2.0;
                }
                let (mut lo, mut hi) = (-radius, radius);
                let phi = 0.5 * (5.0f64.sqrt() - 1.0);
                let mut t1 = hi - phi * (hi - lo);
                let mut t2 = lo + phi * (hi - lo);
                let (mut f1v, _) = f1(t1, &alpha);
                let (mut f2v, _) = f1(t2, &alpha);
                for _ in 0..120 {
                    if f1v < f2v {
                        lo = t1;
                        t1 = t2;
                        f1v = f2v;
                        t2 = lo + phi * (hi - lo);
                        f2v = f1(t2, &alpha).0;
                    } else {
                        hi = t2;
                        t2 = t1;
                        f2v = f1v;
                        t1 = hi - phi * (hi - lo);
                        f1v = f1(t1, &alpha).0;
                    }
                    if hi - lo < 1e-13 * (1.0 + scale) {
                        break;
                    }
                }
                let t = 0.5 * (t1 + t2);
                let (fv, at) = f1(t, &alpha);
                if fv > fbest {
                    fbest = fv;
                    alpha = at;
                }
            }
            if (fbest - before).abs() <= 1e-14 * (1.0 + fbest.abs()) {
                break;
            }
        }
        fbest
    }

    /// inf over the upper block by finite-difference gradient descent (the
    /// restriction is strictly convex).
    pub fn inf_upper(&self, v: &DVector<f64>) -> f64 {
        let n = self.n();
        let mb = self.block(self.d_k, n);
        let d = n - self.d_k;
        if d == 0 {
            return self.eval(v);
        }
        let mut beta = DVector::<f64>::zeros(d);
        let scale = self.a_norm(v).max(1e-12);
        let feval = |beta: &DVector<f64>| self.eval(&(v + &mb * beta));
        let mut f = feval(&beta);
        let h = 1e-7 * scale;
        let fd_grad = |beta: &DVector<f64>| {
            let mut grad = DVector::<f64>::zeros(d);
            for j in 0..d {
                let mut bp = beta.clone();
                bp[j] += h;
                let mut bm = beta.clone();
                bm[j] -= h;
                grad[j] = (feval(&bp) - feval(&bm)) / (2.0 * h);
            }
            grad
        };
        let mut grad = fd_grad(&beta);
        let mut step = 0.1;
        let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
        for _ in 0..400 {
            let gn = grad.norm();
            if gn <= 1e-10 * (1.0 + f.abs()) {
                break;
            }
            if let Some((ref sb, ref sg)) = prev {
                let s = &beta - sb;
                let y = &grad - sg;
                let sy = s.dot(&y).abs();
                if sy > 1e-300 {
                    step = (s.norm_squared() / sy).clamp(1e-9, 1e6);
                }
            }
            let mut eta = step;
            let mut moved = false;
            for _ in 0..40 {
                let bt = &beta - &grad * eta;
                let ft = feval(&bt);
                if ft < f - 1e-6 * eta * gn * gn {
                    prev = Some((beta.clone(), grad.clone()));
                    beta = bt;
                    f = ft;
                    grad = fd_grad(&beta);
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
        }
        f
    }

    /// Brute-force n_{k-1}: sphere sampling over the upper block plus local
    /// polish of the best candidates.
    pub fn brute_n(&self, samples: usize, seed: u64) -> f64 {
        let n = self.n();
        let sb = self.block(self.d_prev, n);
        let dim = n - self.d_prev;
        let mut rng = seeded_rng(seed, 0x0B0);
        let to_w = |c: &DVector<f64>| {
            let w = &sb * c;
            let nrm = self.a_norm(&w).max(1e-300);
            w / nrm
        };
        let mut cands: Vec<(f64, DVector<f64>)> = Vec::new();
        for _ in 0..samples {
            let c = fucik_core::util::random_unit(&mut rng, dim);
            let w = to_w(&c);
            let val = self.sup_lower(&w);
            cands.push((val, c));
        }
        cands.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut best = cands[0].0;
        for (_, c0) in cands.into_iter().take(12) {
            let val = self.polish_sphere(&c0, |c| self.sup_lower(&to_w(c)), false);
            if val < best {
                best = val;
            }
        }
        best
    }

    /// Brute-force m_k: sphere sampling over the lower block plus polish.
    pub fn brute_m(&self, samples: usize, seed: u64) -> f64 {
        let nb = self.block(0, self.d_k);
        let dim = self.d_k;
        let mut rng = seeded_rng(seed, 0x0B1);
        let to_v = |c: &DVector<f64>| {
            let v = &nb * c;
            let nrm = self.a_norm(&v).max(1e-300);
            v / nrm
        };
        let mut cands: Vec<(f64, DVector<f64>)> = Vec::new();
        for _ in 0..samples {
            let c = fucik_core::util::random_unit(&mut rng, dim);
            let val = self.inf_upper(&to_v(&c));
            cands.push((val, c));
        }
        cands.sort_by(|x, y| y.0.total_cmp(&x.0));
        let mut best = cands[0].0;
        for (_, c0) in cands.into_iter().take(12) {
            let val = self.polish_sphere(&c0, |c| self.inf_upper(&to_v(c)), true);
            if val > best {
                best = val;
            }
        }
        best
    }

    /// Finite-difference projected polish on the coordinate sphere.
    fn polish_sphere(
        &self,
        c0: &DVector<f64>,
        mut feval: impl FnMut(&DVector<f64>) -> f64,
        maximize: bool,
    ) -> f64 {
        let dim = c0.len();
        let mut c = c0.normalize();
        let sign = if maximize { -1.0 } else { 1.0 };
        let mut f = sign * feval(&c);
        let h = 1e-6;
        let mut step = 0.2;
        for _ in 0..250 {
            let mut grad = DVector::<f64>::zeros(dim);
            for j in 0..dim {
                let mut cp = c.clone();
                cp[j] += h;
                grad[j] = (sign * feval(&cp.normalize()) - f) / h;
            }
            let gr = &grad - &c * grad.dot(&c);
            let gn = gr.norm();
            if gn <= 1e-11 * (1.0 + f.abs()) {
                break;
            }
            let mut eta = step;
            let mut moved = false;
            for _ in 0..40 {
                let ct = (&c - &gr * eta).normalize();
                let ft = sign * feval(&ct);
                if ft < f - 1e-7 * eta * gn * gn {
                    c = ct;
                    f = ft;
                    step = (eta * 2.0).min(1.0);
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
        }
        sign * f
    }

    /// Brute-force saddle value inf over the upper block of sup over the
    /// lower block of I(v + y + w), for y in the eigenspace.
    pub fn brute_saddle(&self, y: &DVector<f64>) -> f64 {
        let n = self.n();
        let mb = self.block(self.d_k, n);
        let d = n - self.d_k;
        let feval = |beta: &DVector<f64>| self.sup_lower(&(y + &mb * beta));
        let mut beta = DVector::<f64>::zeros(d);
        let scale = self.a_norm(y).max(1e-12);
        let mut f = feval(&beta);
        let h = 1e-6 * scale;
        let mut step = 0.1;
        for _ in 0..400 {
            let mut grad = DVector::<f64>::zeros(d);
            for j in 0..d {
                let mut bp = beta.clone();
                bp[j] += h;
                grad[j] = (feval(&bp) - f) / h;
            }
            let gn = grad.norm();
            if gn <= 1e-9 * (1.0 + f.abs()) {
                break;
            }
            let mut eta = step;
            let mut moved = false;
            for _ in 0..40 {
                let bt = &beta - &grad * eta;
                let ft = feval(&bt);
                if ft < f - 1e-7 * eta * gn * gn {
                    beta = bt;
                    f = ft;
                    step = eta * 2.0;
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
        }
        f
    }
}
