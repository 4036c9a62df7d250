//! General p in (1, inf): the first eigenvalue by constrained minimization
//! of the p-Rayleigh quotient, the weighted quotient whose critical values
//! trace spectrum points (c, ct), and the first nontrivial curve point by a
//! string-method mountain pass between the two signed ground states.

use crate::energy::{abs_pow, spow, QuadPlan};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::util::{dual_norm, lumped_norm, seeded_rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// One point of the first nontrivial spectrum curve from the mountain pass.
#[derive(Debug, Clone)]
pub struct PCurvePoint {
    pub t: f64,
    /// Minimax value; the recorded spectrum point is (c, c t).
    pub c: f64,
    /// Final path on the unit-energy manifold.
    pub path: Vec<DVector<f64>>,
    pub max_index: usize,
    /// Critical-point candidate at the path maximum, oriented to solve the
    /// problem at (a, b) = (c, c t).
    pub candidate: DVector<f64>,
    /// Weak residual of the candidate at (c, c t).
    pub residual: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone)]
pub struct Lambda1Result {
    pub lambda1: f64,
    pub minimizer: DVector<f64>,
    pub iterations: usize,
    /// Weak residual at (lambda1, lambda1).
    pub residual: f64,
}

/// Problem handle: quadrature plan plus lumped masses. For p = 2 a stiffness
/// matrix can be attached; energy and gradient then go through the matrix,
/// which is exact for the discrete form and much faster inside the mountain
/// pass.
pub struct PlapProblem<'a> {
    pub p: f64,
    pub plan: QuadPlan,
    pub m: DVector<f64>,
    pub stiffness: Option<&'a DMatrix<f64>>,
    pub solver_tol: f64,
    pub seed: u64,
}

impl<'a> PlapProblem<'a> {
    pub fn new(
        mesh: &Mesh,
        s: f64,
        p: f64,
        quad_order: u32,
        truncation_radius: f64,
        seed: u64,
    ) -> Result<Self> {
        let plan = QuadPlan::build(mesh, s, p, quad_order, truncation_radius)?;
        let (_, m) = crate::assemble::assemble_mass(mesh);
        Ok(Self {
            p,
            plan,
            m,
            stiffness: None,
            solver_tol: 1e-10,
            seed,
        })
    }

    pub fn with_stiffness(mut self, a_mat: &'a DMatrix<f64>) -> Self {
        self.stiffness = Some(a_mat);
        self
    }

    fn use_matrix(&self) -> bool {
        self.stiffness.is_some() && self.p == 2.0
    }

    /// \[u\]^p (energy of the Gagliardo seminorm to the p-th power).
    pub fn energy(&self, u: &DVector<f64>) -> Result<f64> {
        if self.use_matrix() {
            let a = self.stiffness.unwrap();
            Ok(u.dot(&(a * u)))
        } else {
            self.plan.energy(u)
        }
    }

    /// Vector of A_p(u) paired with every hat; the energy gradient is p
    /// times this.
    pub fn operator_gradient(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if self.use_matrix() {
            Ok(self.stiffness.unwrap() * u)
        } else {
            self.plan.operator_gradient(u)
        }
    }

    /// Lumped p-integral of |u|^p.
    pub fn denom(&self, u: &DVector<f64>) -> f64 {
        let p = self.p;
        self.m
            .iter()
            .zip(u.iter())
            .map(|(&mi, &ui)| mi * abs_pow(ui, p))
            .sum()
    }

    /// Lumped integral of (u+)^p + t (u-)^p.
    pub fn denom_t(&self, u: &DVector<f64>, t: f64) -> f64 {
        let p = self.p;
        self.m
            .iter()
            .zip(u.iter())
            .map(|(&mi, &ui)| {
                if ui > 0.0 {
                    mi * abs_pow(ui, p)
                } else {
                    t * mi * abs_pow(ui, p)
                }
            })
            .sum()
    }

    /// Zero-homogeneous p-Rayleigh quotient \[u\]^p / int |u|^p.
    pub fn psi(&self, u: &DVector<f64>) -> Result<f64> {
        let den = self.denom(u);
        if den <= 1e-300 {
            return Err(Error::ZeroInput);
        }
        Ok(self.energy(u)? / den)
    }

    /// Weighted quotient \[u\]^p / int [(u+)^p + t (u-)^p]; critical values c
    /// give spectrum points (c, ct).
    pub fn psi_t(&self, u: &DVector<f64>, t: f64) -> Result<f64> {
        let den = self.denom_t(u, t);
        if den <= 1e-300 {
            return Err(Error::ZeroDenominator);
        }
        Ok(self.energy(u)? / den)
    }

    /// Gradient of the zero-homogeneous psi_t; orthogonal to u by the Euler
    /// identity. t = 1 gives the gradient of psi.
    pub fn grad_psi_t(&self, u: &DVector<f64>, t: f64) -> Result<(f64, DVector<f64>)> {
        let den = self.denom_t(u, t);
        if den <= 1e-300 {
            return Err(Error::ZeroDenominator);
        }
        let val = self.energy(u)? / den;
        let apu = self.operator_gradient(u)?;
        let p = self.p;
        let g = DVector::from_fn(u.len(), |i, _| {
            let ui = u[i];
            let dden = if ui > 0.0 {
                self.m[i] * spow(ui, p)
            } else {
                t * self.m[i] * spow(ui, p)
            };
            (p / den) * (apu[i] - val * dden)
        });
        Ok((val, g))
    }

    /// Renormalizes to the unit-energy manifold.
    pub fn retract(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let e = self.energy(u)?;
        if e <= 1e-300 {
            return Err(Error::ZeroInput);
        }
        Ok(u / e.powf(1.0 / self.p))
    }

    /// Scale-invariant weak residual of u for the problem at (a, b):
    /// A_p(u) . - b m (u+)^{p-1} + a m (u-)^{p-1}, dual-normed, over
    /// energy^{(p-1)/p}.
    pub fn weak_residual(&self, u: &DVector<f64>, a: f64, b: f64) -> Result<f64> {
        let e = self.energy(u)?;
        if e <= 1e-300 {
            return Err(Error::ZeroInput);
        }
        let apu = self.operator_gradient(u)?;
        let p = self.p;
        let r = DVector::from_fn(u.len(), |i, _| {
            let ui = u[i];
            let rhs = if ui > 0.0 {
                b * self.m[i] * spow(ui, p)
            } else {
                a * self.m[i] * spow(ui, p)
            };
            apu[i] - rhs
        });
        Ok(dual_norm(&self.m, &r) / e.powf((p - 1.0) / p))
    }

    /// First eigenvalue by projected-gradient descent of psi on the
    /// unit-energy manifold, with renormalization each step. Returns the
    /// sign-normalized one-signed minimizer.
    pub fn minimize_lambda1(
        &self,
        start: Option<DVector<f64>>,
        max_iter: usize,
    ) -> Result<Lambda1Result> {
        let n = self.m.len();
        let u0 = match start {
            Some(u) => u,
            None => DVector::from_element(n, 1.0),
        };
        let mut u = self.retract(&u0)?;
        let (mut val, mut g) = self.grad_psi_t(&u, 1.0)?;
        let mut step = 0.1 / (1.0 + g.norm());
        let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
        let mut iterations = 0;
        let gtol = |v: f64| (self.solver_tol * 100.0).max(1e-12) * (1.0 + v.abs());
        let mut stall = 0usize;
        for it in 0..max_iter {
            iterations = it + 1;
            let gn = dual_norm(&self.m, &g);
            if gn <= gtol(val) {
                break;
            }
            if let Some((ref su, ref sg)) = prev {
                let sv = &u - su;
                let yv = &g - sg;
                let sy = sv.dot(&yv).abs();
                if sy > 1e-300 {
                    step = (sv.norm_squared() / sy).clamp(1e-9, 1e5);
                }
            }
            let slope = g.norm_squared();
            let mut eta = step;
            let mut moved = false;
            for _ in 0..40 {
                let ut = self.retract(&(&u - &g * eta))?;
                let (vt, gt) = self.grad_psi_t(&ut, 1.0)?;
                if vt <= val - 1e-6 * eta * slope {
                    prev = Some((u.clone(), g.clone()));
                    if (val - vt).abs() <= 1e-15 * val.abs() {
                        stall += 1;
                    } else {
                        stall = 0;
                    }
                    u = ut;
                    val = vt;
                    g = gt;
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved || stall > 20 {
                break;
            }
        }
        let gn = dual_norm(&self.m, &g);
        if gn > 1e-5 * (1.0 + val.abs()) {
            return Err(Error::NonConvergence {
                op: "minimize_lambda1",
                iters: iterations,
                residual: gn,
            });
        }
        // sign-normalize and verify one-signedness
        let mean: f64 = self.m.iter().zip(u.iter()).map(|(&mi, &ui)| mi * ui).sum();
        if mean < 0.0 {
            u.neg_mut();
        }
        let neg_frac = lumped_norm(&self.m, &crate::util::neg_part(&u))
            / lumped_norm(&self.m, &u).max(1e-300);
        if neg_frac > 1e-8 {
            return Err(Error::SignChangingMinimizer);
        }
        let residual = self.weak_residual(&u, val, val)?;
        Ok(Lambda1Result {
            lambda1: val,
            minimizer: u,
            iterations,
            residual,
        })
    }

    /// Mountain pass for the first nontrivial curve point at slope t: a
    /// discretized path between the two signed ground states is relaxed by
    /// per-node descent of psi_t (Jacobi sweeps) with arclength
    /// reparametrization every 10 sweeps; the converged maximum along the
    /// path is the minimax value c, and (c, ct) is the spectrum point.
    pub fn mountain_pass(
        &self,
        t: f64,
        path_nodes: usize,
        u1: &DVector<f64>,
        max_sweeps: usize,
    ) -> Result<PCurvePoint> {
        if path_nodes < 9 {
            return Err(Error::Config("path_nodes must be at least 9".into()));
        }
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Config("t must be positive".into()));
        }
        let n = u1.len();
        let u_start = self.retract(u1)?;
        let u_end = -&u_start;
        let low_level = self.psi_t(&u_start, t)?.max(self.psi_t(&u_end, t)?);

        // initial path: signed homotopy bent through a seeded random direction
        let mut rng = seeded_rng(self.seed, 0x3A7);
        let mut bump = crate::util::gaussian_vector(&mut rng, n);
        // keep the bump roughly transverse to the endpoints
        let cu = bump.dot(&u_start) / u_start.norm_squared();
        bump -= &u_start * cu;
        let bump_scale = u_start.norm() / bump.norm().max(1e-300);
        bump *= bump_scale;
        let mut path: Vec<DVector<f64>> = Vec::with_capacity(path_nodes);
        for i in 0..path_nodes {
            let sfrac = i as f64 / (path_nodes - 1) as f64;
            let raw = &u_start * (1.0 - sfrac) + &u_end * sfrac + &bump * (4.0 * sfrac * (1.0 - sfrac));
            path.push(self.retract(&raw)?);
        }

        let mut steps = vec![0.05f64; path_nodes];
        let mut c_prev = f64::INFINITY;
        let mut stable = 0usize;
        let mut sweeps = 0usize;
        for sweep in 0..max_sweeps {
            sweeps = sweep + 1;
            // Jacobi sweep: every node moves from the previous iterate
            let snapshot = path.clone();
            for i in 1..path_nodes - 1 {
                let (val, g) = self.grad_psi_t(&snapshot[i], t)?;
                let slope = g.norm_squared();
                if slope <= 1e-300 {
                    continue;
                }
                let mut eta = steps[i];
                let mut accepted = false;
                for _ in 0..25 {
                    let cand = self.retract(&(&snapshot[i] - &g * eta))?;
                    let vc = self.psi_t(&cand, t)?;
                    if vc <= val - 1e-6 * eta * slope {
                        path[i] = cand;
                        steps[i] = (eta * 1.8).min(10.0);
                        accepted = true;
                        break;
                    }
                    eta *= 0.5;
                }
                if !accepted {
                    steps[i] = (steps[i] * 0.5).max(1e-12);
                }
            }
            if sweep % 10 == 9 {
                path = self.reparametrize(path)?;
            }
            let c_now = self.path_max(&path, t)?.0;
            if (c_now - c_prev).abs() <= 1e-9 * (1.0 + c_now.abs()) {
                stable += 1;
                if stable >= 5 && sweep >= 60 {
                    break;
                }
            } else {
                stable = 0;
            }
            c_prev = c_now;
        }
        path = self.reparametrize(path)?;
        let (c_max, max_index) = self.path_max(&path, t)?;
        if c_max <= low_level + 1e-9 * (1.0 + low_level.abs()) {
            return Err(Error::PathCollapse);
        }

        // climbing refinement: walk the max node uphill along the path
        // tangent and downhill transverse to it, driving the gradient to
        // zero at the saddle
        let node = if max_index > 0 && max_index + 1 < path_nodes {
            let tangent = (&path[max_index + 1] - &path[max_index - 1]).normalize();
            self.climb(&path[max_index], t, &tangent)?
        } else {
            path[max_index].clone()
        };
        let c = self.psi_t(&node, t)?;

        // orient the candidate so it solves at (a, b) = (c, c t)
        let r_plus = self.weak_residual(&node, c, c * t)?;
        let r_minus = self.weak_residual(&(-&node), c, c * t)?;
        let (candidate, residual) = if r_minus < r_plus {
            (-node, r_minus)
        } else {
            (node, r_plus)
        };

        Ok(PCurvePoint {
            t,
            c,
            path,
            max_index,
            candidate,
            residual,
            sweeps,
        })
    }

    /// Climbing-image polish: gradient reversed along the (fixed) tangent
    /// direction, accepted while the dual gradient norm decreases.
    fn climb(&self, u0: &DVector<f64>, t: f64, tangent: &DVector<f64>) -> Result<DVector<f64>> {
        let mut u = u0.clone();
        let (_, mut g) = self.grad_psi_t(&u, t)?;
        let mut gn = dual_norm(&self.m, &g);
        let mut step = 0.05f64;
        for _ in 0..400 {
            let val = self.psi_t(&u, t)?;
            if gn <= 1e-10 * (1.0 + val) {
                break;
            }
            let climb_dir = &g - tangent * (2.0 * g.dot(tangent));
            let mut eta = step;
            let mut moved = false;
            for _ in 0..30 {
                let ut = self.retract(&(&u - &climb_dir * eta))?;
                let (_, gt) = self.grad_psi_t(&ut, t)?;
                let gtn = dual_norm(&self.m, &gt);
                if gtn < gn * (1.0 - 1e-4) {
                    u = ut;
                    g = gt;
                    gn = gtn;
                    step = (eta * 1.6).min(1.0);
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Ok(u)
    }

    fn path_max(&self, path: &[DVector<f64>], t: f64) -> Result<(f64, usize)> {
        let mut best = f64::NEG_INFINITY;
        let mut idx = 0;
        for (i, u) in path.iter().enumerate() {
            let v = self.psi_t(u, t)?;
            if v > best {
                best = v;
                idx = i;
            }
        }
        Ok((best, idx))
    }

    /// Redistributes nodes uniformly in chord arclength along the polygonal
    /// path, then retracts back to the manifold.
    fn reparametrize(&self, path: Vec<DVector<f64>>) -> Result<Vec<DVector<f64>>> {
        let n = path.len();
        let mut cum = vec![0.0f64; n];
        for i in 1..n {
            cum[i] = cum[i - 1] + (&path[i] - &path[i - 1]).norm();
        }
        let total = cum[n - 1];
        if total <= 1e-300 {
            return Ok(path);
        }
        let mut out = Vec::with_capacity(n);
        out.push(path[0].clone());
        let mut seg = 0usize;
        for i in 1..n - 1 {
            let target = total * i as f64 / (n - 1) as f64;
            while seg + 2 < n && cum[seg + 1] < target {
                seg += 1;
            }
            let denom = (cum[seg + 1] - cum[seg]).max(1e-300);
            let frac = (target - cum[seg]) / denom;
            let raw = &path[seg] * (1.0 - frac) + &path[seg + 1] * frac;
            out.push(self.retract(&raw)?);
        }
        out.push(path[n - 1].clone());
        Ok(out)
    }

    /// Multi-start variant of `minimize_lambda1` with seeded random starts;
    /// returns all converged values (used to cross-check stability).
    pub fn lambda1_restarts(&self, restarts: usize, max_iter: usize) -> Result<Vec<Lambda1Result>> {
        let n = self.m.len();
        let mut out = Vec::with_capacity(restarts);
        let mut rng = seeded_rng(self.seed, 0x11A);
        for _ in 0..restarts {
            let u0 = DVector::from_fn(n, |_, _| rng.gen_range(0.05..1.0));
            out.push(self.minimize_lambda1(Some(u0), max_iter)?);
        }
        Ok(out)
    }
}

/// The spow helper re-exported for tests of the odd-power kernel.
pub fn signed_power(x: f64, p: f64) -> f64 {
    spow(x, p)
}
