//! Piecewise-linear mesh on a multi-interval domain. Basis functions are the
//! nodal hats at interior nodes, extended by zero outside the domain, so the
//! degrees of freedom realize the zero exterior condition.

use crate::config::ProblemConfig;
use crate::error::{Error, Result};

/// One mesh element (panel). `dofs` holds the global dof index of the left
/// and right node, `None` for domain-boundary nodes.
#[derive(Debug, Clone)]
pub struct Element {
    pub x_left: f64,
    pub h: f64,
    pub interval: usize,
    /// Index of this element within its interval.
    pub local_index: usize,
    pub dofs: [Option<usize>; 2],
    /// Closure touches the left/right endpoint of the domain interval.
    pub at_left_boundary: bool,
    pub at_right_boundary: bool,
}

impl Element {
    pub fn x_right(&self) -> f64 {
        self.x_left + self.h
    }

    /// Nodal values of a dof-coefficient vector at the element endpoints.
    pub fn endpoint_values(&self, u: &[f64]) -> (f64, f64) {
        let v = |d: Option<usize>| d.map_or(0.0, |i| u[i]);
        (v(self.dofs[0]), v(self.dofs[1]))
    }
}

/// Mesh over the whole domain. Dofs are enumerated left to right across
/// intervals.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub intervals: Vec<(f64, f64)>,
    pub elements: Vec<Element>,
    /// Coordinates of the dof nodes (interior nodes), global order.
    pub dof_coords: Vec<f64>,
    /// Number of elements in each interval.
    pub elements_per_interval: Vec<usize>,
}

impl Mesh {
    pub fn n_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    /// True when two elements share exactly one node (only possible within
    /// one interval; intervals are separated by positive gaps).
    pub fn adjacent(&self, e: usize, f: usize) -> bool {
        let (a, b) = (&self.elements[e], &self.elements[f]);
        a.interval == b.interval && a.local_index.abs_diff(b.local_index) == 1
    }

    pub fn domain_measure(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    pub fn hull(&self) -> (f64, f64) {
        (
            self.intervals.first().unwrap().0,
            self.intervals.last().unwrap().1,
        )
    }
}

/// Builds the uniform per-interval mesh at density `n_per_unit`.
pub fn build_mesh(config: &ProblemConfig) -> Result<Mesh> {
    config.validate()?;
    let mut elements = Vec::new();
    let mut dof_coords = Vec::new();
    let mut elements_per_interval = Vec::new();

    for (iv, &(lo, hi)) in config.intervals.iter().enumerate() {
        let len = hi - lo;
        let m = ((len * config.n_per_unit as f64).round() as usize).max(1);
        if m < 2 {
            return Err(Error::Mesh(format!(
                "interval ({lo}, {hi}) yields no interior node at n_per_unit = {}; \
                 0 dofs is degenerate",
                config.n_per_unit
            )));
        }
        let h = len / m as f64;
        let first_dof = dof_coords.len();
        for j in 1..m {
            dof_coords.push(lo + h * j as f64);
        }
        for e in 0..m {
            let left_dof = if e == 0 { None } else { Some(first_dof + e - 1) };
            let right_dof = if e + 1 == m { None } else { Some(first_dof + e) };
            elements.push(Element {
                x_left: lo + h * e as f64,
                h,
                interval: iv,
                local_index: e,
                dofs: [left_dof, right_dof],
                at_left_boundary: e == 0,
                at_right_boundary: e + 1 == m,
            });
        }
        elements_per_interval.push(m);
    }

    Ok(Mesh {
        intervals: config.intervals.clone(),
        elements,
        dof_coords,
        elements_per_interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_density_four() {
        let cfg = ProblemConfig::unit_interval(0.5, 2.0, 4);
        let mesh = build_mesh(&cfg).unwrap();
        assert_eq!(mesh.dof_coords, vec![0.25, 0.5, 0.75]);
        assert_eq!(mesh.elements.len(), 4);
    }

    #[test]
    fn two_intervals_density_two() {
        let cfg = ProblemConfig::with_intervals(vec![(0.0, 1.0), (2.0, 3.0)], 0.5, 2.0, 2);
        let mesh = build_mesh(&cfg).unwrap();
        assert_eq!(mesh.dof_coords, vec![0.5, 2.5]);
        assert_eq!(mesh.elements.len(), 4);
        // elements from different intervals never count as adjacent
        assert!(mesh.adjacent(0, 1));
        assert!(!mesh.adjacent(1, 2));
    }

    #[test]
    fn degenerate_density_errors() {
        let cfg = ProblemConfig::unit_interval(0.5, 2.0, 1);
        assert!(build_mesh(&cfg).is_err());
    }

    #[test]
    fn boundary_flags() {
        let cfg = ProblemConfig::unit_interval(0.5, 2.0, 4);
        let mesh = build_mesh(&cfg).unwrap();
        assert!(mesh.elements[0].at_left_boundary);
        assert!(mesh.elements[3].at_right_boundary);
        assert!(!mesh.elements[1].at_left_boundary && !mesh.elements[1].at_right_boundary);
    }
}
