//! Numerical Dancer-Fucik spectrum of the fractional (p-)Laplacian on 1-D
//! multi-interval domains.
//!
//! The pipeline: assemble the Gagliardo stiffness form and mass matrices on a
//! piecewise-linear mesh ([`assemble`]), solve the generalized eigenproblem
//! against the lumped mass ([`eigen`]), then around each diagonal point
//! (lambda_k, lambda_k) run the saddle-point reduction ([`fucik`]) and trace
//! the minimal/maximal spectrum curves, classify regions and test the gap
//! condition ([`curves`]). For general p, [`plap`] computes the first
//! eigenvalue by constrained minimization and first-curve points by a
//! numerical mountain pass.
//!
//! The lumped mass is the discrete L2 inner product throughout the spectral
//! pipeline; with that choice the sign-split functional and the eigenproblem
//! share one quadratic form and the diagonal identities of the reduction
//! hold to rounding.

pub mod assemble;
pub mod config;
pub mod curves;
pub mod eigen;
pub mod energy;
pub mod error;
pub mod fucik;
pub mod mesh;
pub mod plap;
pub mod quad;
pub mod util;

pub use config::{ProblemConfig, Tolerances};
pub use error::{Error, Result};
pub use mesh::{build_mesh, Mesh};

use nalgebra::{DMatrix, DVector};

/// Assembled forms of one problem: the Gagliardo stiffness matrix for p = 2,
/// the consistent mass matrix, and the lumped masses.
#[derive(Debug, Clone)]
pub struct GalerkinForms {
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub m_lumped: DVector<f64>,
}

impl GalerkinForms {
    pub fn assemble(mesh: &Mesh, config: &ProblemConfig) -> Result<Self> {
        let stiffness = assemble::assemble_stiffness(
            mesh,
            config.s,
            config.quad_order,
            config.effective_truncation_radius(),
        )?;
        let (mass, m_lumped) = assemble::assemble_mass(mesh);
        Ok(Self {
            stiffness,
            mass,
            m_lumped,
        })
    }

    /// Eigendecomposition of the pencil (A, M_lumped): the discrete L2 inner
    /// product of the pipeline.
    pub fn solve_spectrum(&self, cluster_tol: f64) -> Result<eigen::EigenDecomposition> {
        let m = DMatrix::from_diagonal(&self.m_lumped);
        eigen::solve_eigen(&self.stiffness, &m, cluster_tol)
    }
}

/// Dense CSV of a matrix, full double precision, for debugging exports.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a dense CSV produced by [`matrix_to_csv`].
pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Config(e.to_string())))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Config("empty matrix CSV".into()));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("ragged matrix CSV".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
