//! Dense generalized symmetric eigensolve A u = lambda M u, clustering into
//! distinct eigenvalues with eigenspace bases, and the subspace splits the
//! saddle-point reduction works with.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::ops::Range;

/// Spectrum of the pencil (A, M): distinct eigenvalues with M-orthonormal
/// eigenspace bases, grouped and ordered ascending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Distinct eigenvalues (cluster means), strictly increasing.
    pub lambdas: Vec<f64>,
    /// Multiplicity of each distinct eigenvalue.
    pub mults: Vec<usize>,
    /// Cumulative dimensions: d\[g\] = dim of the span of groups 0..=g.
    pub d: Vec<usize>,
    /// All eigenvectors as columns, grouped by cluster, M-orthonormal.
    pub basis: DMatrix<f64>,
    /// Raw eigenvalue of each column.
    pub all_eigenvalues: Vec<f64>,
    /// Euclidean residual |A v - lambda M v| / |v| per column.
    pub residuals: Vec<f64>,
}

impl EigenDecomposition {
    pub fn n_dofs(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_distinct(&self) -> usize {
        self.lambdas.len()
    }

    /// First eigenfunction (column 0), sign-normalized.
    pub fn phi1(&self) -> DVector<f64> {
        self.basis.column(0).into_owned()
    }

    /// Column range of the eigenspace of the (1-based) k-th distinct
    /// eigenvalue.
    pub fn group_cols(&self, k: usize) -> Range<usize> {
        let lo = if k >= 2 { self.d[k - 2] } else { 0 };
        lo..self.d[k - 1]
    }

    /// Column ranges (N_{k-1}, E_k, M_k) for 2 <= k <= n_distinct - 1.
    pub fn split_ranges(&self, k: usize) -> Result<(Range<usize>, Range<usize>, Range<usize>)> {
        let kmax = self.n_distinct().saturating_sub(1);
        if k < 2 || k > kmax {
            return Err(Error::KOutOfRange {
                k,
                lo: 2,
                hi: kmax,
            });
        }
        Ok((
            0..self.d[k - 2],
            self.d[k - 2]..self.d[k - 1],
            self.d[k - 1]..self.n_dofs(),
        ))
    }

    /// Basis blocks (N_{k-1}, E_k, M_k) as owned matrices.
    pub fn subspaces(&self, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let (rn, re, rm) = self.split_ranges(k)?;
        Ok((
            self.basis.columns(rn.start, rn.len()).into_owned(),
            self.basis.columns(re.start, re.len()).into_owned(),
            self.basis.columns(rm.start, rm.len()).into_owned(),
        ))
    }
}

/// Solves the dense generalized symmetric eigenproblem via Cholesky reduction
/// and merges eigenvalues closer than `cluster_tol` (relative) into one
/// distinct eigenvalue.
pub fn solve_eigen(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    cluster_tol: f64,
) -> Result<EigenDecomposition> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(m.nrows(), n);
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(Error::MassNotPositiveDefinite)?;
    let l = chol.l();

    // B = L^-1 A L^-T, symmetrized against rounding
    let z = l
        .solve_lower_triangular(a)
        .ok_or(Error::MassNotPositiveDefinite)?;
    let b = l
        .solve_lower_triangular(&z.transpose())
        .ok_or(Error::MassNotPositiveDefinite)?
        .transpose();
    let b = (&b + b.transpose()) * 0.5;

    let eig = nalgebra::SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let lt = l.transpose();
    let mut basis = DMatrix::<f64>::zeros(n, n);
    let mut all_eigenvalues = Vec::with_capacity(n);
    for (col, &idx) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(idx).into_owned();
        let u = lt
            .solve_upper_triangular(&y)
            .ok_or(Error::MassNotPositiveDefinite)?;
        basis.set_column(col, &u);
        all_eigenvalues.push(eig.eigenvalues[idx]);
    }

    // M-inner-product Gram-Schmidt pass to tighten orthonormality
    let mb = m * &basis;
    let mut mb = mb;
    for j in 0..n {
        for i in 0..j {
            let proj = basis.column(i).dot(&mb.column(j));
            let bi = basis.column(i).into_owned();
            let mbi = mb.column(i).into_owned();
            let mut bj = basis.column_mut(j);
            bj.axpy(-proj, &bi, 1.0);
            let mut mbj = mb.column_mut(j);
            mbj.axpy(-proj, &mbi, 1.0);
        }
        let nrm = basis.column(j).dot(&mb.column(j)).max(0.0).sqrt();
        if nrm > 0.0 {
            basis.column_mut(j).scale_mut(1.0 / nrm);
            mb.column_mut(j).scale_mut(1.0 / nrm);
        }
    }

    // sign conventions: phi1 has positive mass-weighted mean, other columns
    // have their largest-magnitude entry positive
    for j in 0..n {
        let flip = if j == 0 {
            mb.column(0).sum() < 0.0
        } else {
            let col = basis.column(j);
            let mut idx = 0;
            let mut best = 0.0;
            for (i, &x) in col.iter().enumerate() {
                if x.abs() > best {
                    best = x.abs();
                    idx = i;
                }
            }
            col[idx] < 0.0
        };
        if flip {
            basis.column_mut(j).neg_mut();
            mb.column_mut(j).neg_mut();
        }
    }

    // residuals
    let av = a * &basis;
    let residuals: Vec<f64> = (0..n)
        .map(|j| {
            let r = av.column(j) - mb.column(j) * all_eigenvalues[j];
            r.norm() / basis.column(j).norm()
        })
        .collect();

    // cluster by relative gaps
    let mut lambdas = Vec::new();
    let mut mults = Vec::new();
    let mut start = 0usize;
    for j in 1..=n {
        let split = j == n || {
            let prev = all_eigenvalues[j - 1];
            let cur = all_eigenvalues[j];
            (cur - prev) > cluster_tol * prev.abs().max(cur.abs()).max(1e-300)
        };
        if split {
            let group = &all_eigenvalues[start..j];
            lambdas.push(group.iter().sum::<f64>() / group.len() as f64);
            mults.push(j - start);
            start = j;
        }
    }
    let mut d = Vec::with_capacity(mults.len());
    let mut acc = 0;
    for &c in &mults {
        acc += c;
        d.push(acc);
    }

    if lambdas.first().copied().unwrap_or(0.0) <= 0.0 {
        return Err(Error::Config(
            "stiffness matrix is not positive definite on the dof space".into(),
        ));
    }

    Ok(EigenDecomposition {
        lambdas,
        mults,
        d,
        basis,
        all_eigenvalues,
        residuals,
    })
}

/// For w M-orthogonal to the first eigenfunction, both nodal parts are
/// nonzero; returns min of the two lumped part norms. Errors when w is not
/// orthogonal (relative defect above 1e-8) or is zero.
pub fn orthogonality_check(
    decomp: &EigenDecomposition,
    m_lumped: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<f64> {
    let phi1 = decomp.phi1();
    let wn = crate::util::lumped_norm(m_lumped, w);
    if wn <= 1e-14 {
        return Err(Error::ZeroInput);
    }
    let pn = crate::util::lumped_norm(m_lumped, &phi1);
    let ip: f64 = m_lumped
        .iter()
        .zip(w.iter().zip(phi1.iter()))
        .map(|(&mi, (&wi, &pi))| mi * wi * pi)
        .sum();
    let defect = ip.abs() / (wn * pn);
    if defect > 1e-8 {
        return Err(Error::NotOrthogonal(defect));
    }
    let plus = crate::util::lumped_norm(m_lumped, &crate::util::pos_part(w));
    let minus = crate::util::lumped_norm(m_lumped, &crate::util::neg_part(w));
    Ok(plus.min(minus))
}
