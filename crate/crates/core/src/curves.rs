//! Tracing of the lower and upper spectrum curves across the square, region
//! classification through the reduced functional, the eigenspace asymmetry
//! (gap) test, and weak-solution residual checks.

use crate::eigen::EigenDecomposition;
use crate::error::{Error, Result};
use crate::fucik::{FucikContext, FucikPoint, SolverParams, SphereOpt};
use crate::util::{a_norm, dual_norm, lumped_norm, neg_part, pos_part, seeded_rng};
use nalgebra::{DMatrix, DVector};

/// Fraction of the square width kept away from the boundary when bracketing:
/// the reduction solvers degrade at the edges of the square.
pub const BRACKET_MARGIN: f64 = 1e-3;

/// Dead band for sign classification of reduced-functional samples.
pub const SIGN_DEAD_BAND: f64 = 1e-8;

/// Bundles the forms, spectrum and solver settings; contexts for individual
/// points are built on demand.
pub struct FucikProblem<'a> {
    pub a_mat: &'a DMatrix<f64>,
    pub m: &'a DVector<f64>,
    pub decomp: &'a EigenDecomposition,
    pub params: SolverParams,
}

/// One traced row: the curve ordinates at a fixed abscissa, `None` where the
/// curve leaves the square (flagged, never fabricated).
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub a: f64,
    pub nu: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CurveSample {
    pub k: usize,
    pub rows: Vec<CurveRow>,
}

/// Region of a point relative to the two curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLabel {
    BelowLower,
    OnLower,
    Between,
    OnUpper,
    AboveUpper,
}

impl RegionLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionLabel::BelowLower => "below_lower",
            RegionLabel::OnLower => "on_lower",
            RegionLabel::Between => "between",
            RegionLabel::OnUpper => "on_upper",
            RegionLabel::AboveUpper => "above_upper",
        }
    }
}

/// Classification with its witnesses.
#[derive(Debug, Clone)]
pub struct Classification {
    pub label: RegionLabel,
    pub n_value: f64,
    pub m_value: f64,
    /// Reduced-functional samples over the deterministic direction set.
    pub itilde: Vec<f64>,
}

/// Result of the eigenspace asymmetry test.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub nonempty: bool,
    /// max |norm(y+) - norm(y-)| over the unit sphere of the eigenspace.
    pub asymmetry: f64,
    pub part_norms: (f64, f64),
    pub witness: DVector<f64>,
}

impl<'a> FucikProblem<'a> {
    pub fn new(
        a_mat: &'a DMatrix<f64>,
        m: &'a DVector<f64>,
        decomp: &'a EigenDecomposition,
        params: SolverParams,
    ) -> Self {
        Self {
            a_mat,
            m,
            decomp,
            params,
        }
    }

    pub fn context(&self, k: usize, a: f64, b: f64) -> Result<FucikContext<'a>> {
        FucikContext::new(
            self.a_mat,
            self.m,
            self.decomp,
            k,
            FucikPoint { a, b },
            self.params.clone(),
        )
    }

    fn square(&self, k: usize) -> Result<(f64, f64)> {
        let kmax = self.decomp.n_distinct().saturating_sub(1);
        if k < 2 || k > kmax {
            return Err(Error::KOutOfRange { k, lo: 2, hi: kmax });
        }
        Ok((self.decomp.lambdas[k - 2], self.decomp.lambdas[k]))
    }

    /// Lower curve nu_{k-1}(a): bisection on the sign of the sphere infimum,
    /// which is nonincreasing in b. Warm starts are chained through the
    /// bisection.
    pub fn find_nu(&self, k: usize, a: f64) -> Result<f64> {
        self.bisect_curve(k, a, true)
    }

    /// Upper curve mu_k(a): bisection on the sign of the sphere supremum.
    pub fn find_mu(&self, k: usize, a: f64) -> Result<f64> {
        self.bisect_curve(k, a, false)
    }

    fn bisect_curve(&self, k: usize, a: f64, lower: bool) -> Result<f64> {
        let (lo_sq, hi_sq) = self.square(k)?;
        let eps = BRACKET_MARGIN * (hi_sq - lo_sq);
        let mut lo = lo_sq + eps;
        let mut hi = hi_sq - eps;
        if !(a > lo_sq && a < hi_sq) {
            return Err(Error::PointOutsideSquare {
                a,
                b: lo,
                lo: lo_sq,
                hi: hi_sq,
            });
        }
        let which: &'static str = if lower { "nu" } else { "mu" };
        // bracket ends get the full multistart; refinement steps track the
        // optimizer branch through warm starts with a lean restart set
        let lean = SolverParams {
            random_starts: 2,
            eig_starts: 1,
            ..self.params.clone()
        };
        let mut warm: Vec<DVector<f64>> = Vec::new();
        let value_at = |b: f64, warm: &mut Vec<DVector<f64>>, full: bool| -> Result<f64> {
            let params = if full { self.params.clone() } else { lean.clone() };
            let ctx = crate::fucik::FucikContext::new(
                self.a_mat,
                self.m,
                self.decomp,
                k,
                crate::fucik::FucikPoint { a, b },
                params,
            )?;
            let opt = if lower {
                ctx.saddle_min(warm)?
            } else {
                ctx.saddle_max(warm)?
            };
            *warm = vec![scaled_coords_of(&ctx, lower, &opt)];
            Ok(opt.value)
        };
        // the saddle value is nonincreasing in b for both curves
        let f_lo = value_at(lo, &mut warm, true)?;
        if f_lo < 0.0 {
            return Err(Error::OutOfSquare { which });
        }
        let f_hi = value_at(hi, &mut warm, true)?;
        if f_hi > 0.0 {
            return Err(Error::OutOfSquare { which });
        }
        let bisect_tol = self.params.bisect_tol;
        while hi - lo > bisect_tol {
            let mid = 0.5 * (lo + hi);
            let f_mid = value_at(mid, &mut warm, false)?;
            if f_mid > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Traces both curves on a uniform grid centered at lambda_k (the grid
    /// contains lambda_k when `grid_count` is odd). Rows are independent
    /// work items; with `threads > 1` they are computed in index chunks and
    /// reassembled in grid order.
    pub fn trace_curves(&self, k: usize, grid_count: usize, threads: usize) -> Result<CurveSample> {
        if grid_count < 3 {
            return Err(Error::Config("grid_count must be at least 3".into()));
        }
        let (lo_sq, hi_sq) = self.square(k)?;
        let lambda_k = self.decomp.lambdas[k - 1];
        let eps = BRACKET_MARGIN * (hi_sq - lo_sq);
        let half_width = 0.98 * (lambda_k - lo_sq - eps).min(hi_sq - eps - lambda_k);
        let g = grid_count as f64 - 1.0;
        let grid: Vec<f64> = (0..grid_count)
            .map(|i| lambda_k + (2.0 * i as f64 - g) / g * half_width)
            .collect();

        let row_at = |&a: &f64| -> Result<CurveRow> {
            let nu = match self.find_nu(k, a) {
                Ok(v) => Some(v),
                Err(Error::OutOfSquare { .. }) => None,
                Err(e) => return Err(e),
            };
            let mu = match self.find_mu(k, a) {
                Ok(v) => Some(v),
                Err(Error::OutOfSquare { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(CurveRow { a, nu, mu })
        };

        let rows: Vec<Result<CurveRow>> = if threads <= 1 || grid.len() < 2 * threads {
            grid.iter().map(row_at).collect()
        } else {
            let chunk = grid.len().div_ceil(threads);
            std::thread::scope(|scope| {
                let handles: Vec<_> = grid
                    .chunks(chunk)
                    .map(|chunk_vals| scope.spawn(move || chunk_vals.iter().map(row_at).collect::<Vec<_>>()))
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().unwrap())
                    .collect()
            })
        };
        let rows: Result<Vec<CurveRow>> = rows.into_iter().collect();
        Ok(CurveSample { k, rows: rows? })
    }

    /// Classifies (a, b) by the signs of the reduced functional over the
    /// deterministic direction set, with the sphere min/max as witnesses.
    pub fn classify_point(&self, k: usize, a: f64, b: f64) -> Result<Classification> {
        let ctx = self.context(k, a, b)?;
        let dirs = ctx.classification_directions(64);
        let mut itilde = Vec::with_capacity(dirs.len());
        for y in &dirs {
            itilde.push(ctx.reduced_i(y)?);
        }
        let n_value = ctx.saddle_min(&[])?.value;
        let m_value = ctx.saddle_max(&[])?.value;

        let band = SIGN_DEAD_BAND;
        let has_pos = itilde.iter().any(|&v| v > band);
        let has_neg = itilde.iter().any(|&v| v < -band);
        let has_zero = itilde.iter().any(|&v| v.abs() <= band);
        let label = if has_zero {
            if n_value.abs() <= band {
                RegionLabel::OnLower
            } else if m_value.abs() <= band {
                RegionLabel::OnUpper
            } else if has_pos && has_neg {
                RegionLabel::Between
            } else if has_neg {
                RegionLabel::OnUpper
            } else {
                RegionLabel::OnLower
            }
        } else if has_pos && has_neg {
            RegionLabel::Between
        } else if has_pos {
            RegionLabel::BelowLower
        } else {
            RegionLabel::AboveUpper
        };
        Ok(Classification {
            label,
            n_value,
            m_value,
            itilde,
        })
    }
}

fn scaled_coords_of(ctx: &FucikContext, lower: bool, opt: &SphereOpt) -> DVector<f64> {
    let block = if lower {
        crate::fucik::Block::MPrev
    } else {
        crate::fucik::Block::Nk
    };
    let r = ctx.block_range(block);
    let mut x = DVector::<f64>::zeros(r.len());
    // scaled coordinates x_j = sqrt(lambda_j) kappa_j; kappa = basis^T (m .* w)
    let mu = DVector::from_fn(opt.arg.len(), |i, _| ctx.m[i] * opt.arg[i]);
    let kappa = ctx.decomp.basis.columns(r.start, r.len()).transpose() * mu;
    for j in 0..r.len() {
        x[j] = kappa[j] * ctx.decomp.all_eigenvalues[r.start + j].sqrt();
    }
    x
}

/// Asymmetry of the eigenspace of lambda_k: maximizes
/// |norm(y+)_2 - norm(y-)_2| over the unit sphere (lumped L2 normalization).
/// Nonempty-gap condition holds when the maximum exceeds 1e-6.
pub fn gap_condition(
    decomp: &EigenDecomposition,
    m_lumped: &DVector<f64>,
    k: usize,
) -> Result<GapReport> {
    let kmax = decomp.n_distinct();
    if k < 1 || k > kmax {
        return Err(Error::KOutOfRange { k, lo: 1, hi: kmax });
    }
    let cols = decomp.group_cols(k);
    let block = decomp.basis.columns(cols.start, cols.len()).into_owned();
    let dim = cols.len();

    let measure = |c: &DVector<f64>| -> (f64, DVector<f64>) {
        let y = &block * c;
        let nrm = lumped_norm(m_lumped, &y);
        let y = y / nrm;
        let plus = lumped_norm(m_lumped, &pos_part(&y));
        let minus = lumped_norm(m_lumped, &neg_part(&y));
        (plus - minus, y)
    };

    if dim == 1 {
        let (diff, y) = measure(&DVector::from_element(1, 1.0));
        let plus = lumped_norm(m_lumped, &pos_part(&y));
        let minus = lumped_norm(m_lumped, &neg_part(&y));
        return Ok(GapReport {
            nonempty: diff.abs() > 1e-6,
            asymmetry: diff.abs(),
            part_norms: (plus, minus),
            witness: if diff >= 0.0 { y } else { -y },
        });
    }

    // multi-start ascent of the signed difference; the function is odd under
    // c -> -c so maximizing the signed value suffices
    let mut best: Option<(f64, DVector<f64>)> = None;
    for c0 in crate::util::sphere_samples(dim, 64) {
        let mut c = c0;
        let mut val = measure(&c).0;
        let mut step = 0.3f64;
        for _ in 0..200 {
            // finite-difference gradient on the sphere (the objective is
            // piecewise smooth in c)
            let h = 1e-6;
            let mut grad = DVector::<f64>::zeros(dim);
            for j in 0..dim {
                let mut cp = c.clone();
                cp[j] += h;
                let vp = measure(&cp.normalize()).0;
                grad[j] = (vp - val) / h;
            }
            let gr = &grad - &c * grad.dot(&c);
            if gr.norm() <= 1e-10 {
                break;
            }
            let mut eta = step;
            let mut moved = false;
            for _ in 0..25 {
                let ct = (&c + &gr * eta).normalize();
                let vt = measure(&ct).0;
                if vt > val + 1e-12 {
                    c = ct;
                    val = vt;
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
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, c));
        }
    }
    let (val, c) = best.expect("nonempty start set");
    let (_, y) = measure(&c);
    let plus = lumped_norm(m_lumped, &pos_part(&y));
    let minus = lumped_norm(m_lumped, &neg_part(&y));
    Ok(GapReport {
        nonempty: val.abs() > 1e-6,
        asymmetry: val.abs(),
        part_norms: (plus, minus),
        witness: y,
    })
}

/// Scale-invariant weak-solution residual for the p = 2 problem at (a, b):
/// dual norm of A u - (b m.u+ - a m.u-) over the energy norm of u. A point
/// is accepted as a spectrum witness at 1e-6.
pub fn residual_check(
    a_mat: &DMatrix<f64>,
    m: &DVector<f64>,
    u: &DVector<f64>,
    a: f64,
    b: f64,
) -> Result<f64> {
    let un = a_norm(a_mat, u);
    if un <= 1e-300 {
        return Err(Error::ZeroInput);
    }
    let mut r = a_mat * u;
    for i in 0..u.len() {
        let x = u[i];
        let c = if x > 0.0 { b } else { a };
        r[i] -= c * m[i] * x;
    }
    Ok(dual_norm(m, &r) / un)
}

/// Acceptance threshold on `residual_check` for spectrum witnesses.
pub const WITNESS_TOL: f64 = 1e-6;

/// Multi-start projected Gauss-Newton search for a nontrivial critical point
/// of I at (a, b): minimizes the squared dual residual over the lumped-mass
/// unit sphere. Returns the best witness found (if any reaches the
/// acceptance threshold) together with the smallest residual seen.
pub fn witness_search(
    a_mat: &DMatrix<f64>,
    m: &DVector<f64>,
    a: f64,
    b: f64,
    n_starts: usize,
    seed: u64,
) -> (Option<DVector<f64>>, f64) {
    let n = a_mat.nrows();
    let mut rng = seeded_rng(seed, 0x57A7);
    let mut best_res = f64::INFINITY;
    let mut best_u: Option<DVector<f64>> = None;

    for _ in 0..n_starts {
        let mut u = crate::util::random_unit(&mut rng, n);
        u /= lumped_norm(m, &u).max(1e-300);
        let mut res = residual_check(a_mat, m, &u, a, b).unwrap_or(f64::INFINITY);
        for _ in 0..120 {
            // residual vector and its (a.e.) Jacobian H = A - diag(c m)
            let mut r = a_mat * &u;
            for i in 0..n {
                let c = if u[i] > 0.0 { b } else { a };
                r[i] -= c * m[i] * u[i];
            }
            // gradient of 0.5 |r|_dual^2: H (r / m)
            let rm = DVector::from_fn(n, |i, _| r[i] / m[i]);
            let mut g = a_mat * &rm;
            for i in 0..n {
                let c = if u[i] > 0.0 { b } else { a };
                g[i] -= c * m[i] * rm[i];
            }
            // project onto the tangent of the lumped sphere
            let mu = DVector::from_fn(n, |i, _| m[i] * u[i]);
            let gt = &g - &mu * (g.dot(&u) / mu.dot(&u));
            if gt.norm() <= 1e-13 {
                break;
            }
            let phi0 = rm.dot(&r);
            let mut eta = 1.0 / (1.0 + gt.norm());
            let mut moved = false;
            for _ in 0..30 {
                let mut ut = &u - &gt * eta;
                let nrm = lumped_norm(m, &ut);
                if nrm > 1e-300 {
                    ut /= nrm;
                }
                let mut rt = a_mat * &ut;
                for i in 0..n {
                    let c = if ut[i] > 0.0 { b } else { a };
                    rt[i] -= c * m[i] * ut[i];
                }
                let phit = DVector::from_fn(n, |i, _| rt[i] / m[i]).dot(&rt);
                if phit < phi0 * (1.0 - 1e-6) {
                    u = ut;
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
            res = residual_check(a_mat, m, &u, a, b).unwrap_or(f64::INFINITY);
            if res <= WITNESS_TOL * 1e-2 {
                break;
            }
        }
        if res < best_res {
            best_res = res;
            if res <= WITNESS_TOL {
                best_u = Some(u.clone());
            }
        }
    }
    (best_u, best_res)
}

impl CurveSample {
    /// CSV with header `a,nu,mu,flags`, full double precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,nu,mu,flags\n");
        for row in &self.rows {
            let fmt = |v: Option<f64>| match v {
                Some(x) => format!("{x:.16e}"),
                None => "nan".to_string(),
            };
            let mut flags: Vec<&str> = Vec::new();
            if row.nu.is_none() {
                flags.push("nu_out_of_square");
            }
            if row.mu.is_none() {
                flags.push("mu_out_of_square");
            }
            let flags = if flags.is_empty() {
                "ok".to_string()
            } else {
                flags.join(";")
            };
            out.push_str(&format!(
                "{:.16e},{},{},{}\n",
                row.a,
                fmt(row.nu),
                fmt(row.mu),
                flags
            ));
        }
        out
    }
}
