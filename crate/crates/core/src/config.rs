//! Problem configuration: domain, fractional order, exponent, mesh density,
//! quadrature and solver tolerances. Read from a JSON document with keys
//! `intervals`, `s`, `p`, `n_per_unit`, `quad_order`, `truncation_radius`,
//! `tolerances` (and an optional `seed`).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Named solver tolerances.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Projected-gradient norm at which inner solvers stop.
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    /// Relative gap below which adjacent eigenvalues are merged into one cluster.
    #[serde(default = "default_cluster_tol")]
    pub cluster_tol: f64,
    /// Bracket width at which curve bisection stops.
    #[serde(default = "default_bisect_tol")]
    pub bisect_tol: f64,
}

fn default_solver_tol() -> f64 {
    1e-10
}
fn default_cluster_tol() -> f64 {
    1e-6
}
fn default_bisect_tol() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver_tol: default_solver_tol(),
            cluster_tol: default_cluster_tol(),
            bisect_tol: default_bisect_tol(),
        }
    }
}

/// Full problem configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Ordered list of disjoint open intervals `[lo, hi]` making up the domain.
    pub intervals: Vec<(f64, f64)>,
    /// Fractional order, 0 < s < 1.
    pub s: f64,
    /// Integrability exponent, 1 < p < inf.
    pub p: f64,
    /// Mesh elements per unit length.
    pub n_per_unit: u32,
    /// Gauss-Legendre order for panel-pair quadrature.
    #[serde(default = "default_quad_order")]
    pub quad_order: u32,
    /// Far-field cutoff for the complement integral; the analytic tail takes
    /// over beyond this distance (enlarged internally so the tail never
    /// overlaps the domain).
    #[serde(default)]
    pub truncation_radius: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Seed for all pseudo-random multi-starts.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_quad_order() -> u32 {
    12
}
fn default_seed() -> u64 {
    42
}

impl ProblemConfig {
    /// Single-interval configuration with default tolerances.
    pub fn unit_interval(s: f64, p: f64, n_per_unit: u32) -> Self {
        Self {
            intervals: vec![(0.0, 1.0)],
            s,
            p,
            n_per_unit,
            quad_order: default_quad_order(),
            truncation_radius: None,
            tolerances: Tolerances::default(),
            seed: default_seed(),
        }
    }

    pub fn with_intervals(intervals: Vec<(f64, f64)>, s: f64, p: f64, n_per_unit: u32) -> Self {
        Self {
            intervals,
            ..Self::unit_interval(s, p, n_per_unit)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProblemConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks all config invariants; every entry point goes through this.
    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(Error::Config("empty interval list".into()));
        }
        for &(lo, hi) in &self.intervals {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "interval ({lo}, {hi}) has nonpositive length"
                )));
            }
        }
        for w in self.intervals.windows(2) {
            let (_, hi0) = w[0];
            let (lo1, _) = w[1];
            if hi0 >= lo1 {
                return Err(Error::Config(format!(
                    "overlapping or touching intervals near x = {hi0}; \
                     intervals must be ordered with positive gaps"
                )));
            }
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::SOutOfRange(self.s));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::POutOfRange(self.p));
        }
        if self.n_per_unit == 0 {
            return Err(Error::Config("n_per_unit must be positive".into()));
        }
        if self.quad_order == 0 {
            return Err(Error::Config("quad_order must be positive".into()));
        }
        if let Some(r) = self.truncation_radius {
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::Config(format!(
                    "truncation_radius must be > 0, got {r}"
                )));
            }
        }
        let t = &self.tolerances;
        if !(t.solver_tol > 0.0 && t.cluster_tol > 0.0 && t.bisect_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Total measure of the domain.
    pub fn domain_measure(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    /// Diameter of the convex hull of the domain.
    pub fn hull_diameter(&self) -> f64 {
        self.intervals.last().unwrap().1 - self.intervals.first().unwrap().0
    }

    /// Effective far-field cutoff: at least the hull diameter so the analytic
    /// tail never overlaps the domain.
    pub fn effective_truncation_radius(&self) -> f64 {
        let d = self.hull_diameter();
        match self.truncation_radius {
            Some(r) => r.max(d),
            None => 2.0 * d,
        }
    }

    /// Stable 64-bit hash of the canonical JSON form, used as a cache key.
    pub fn hash_hex(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        // FNV-1a
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
