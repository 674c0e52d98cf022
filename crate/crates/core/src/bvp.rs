//! Boundary value problems for the heat equation on leaf regions.

use thiserror::Error;

use crate::heat::{solve_cauchy, HeatError, SpectralDecomposition};
use crate::spectral::OperatorMatrix;

pub const BOUNDARY_TOL: f64 = 1e-8;
pub const DIRICHLET_TOL: f64 = 1e-10;
pub const CONFINEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BvpError {
    #[error("region is empty")]
    EmptyRegion,
    #[error("leaf {0} is out of range")]
    NoSuchLeaf(usize),
    #[error(transparent)]
    Heat(#[from] HeatError),
}

/// A set of whole leaves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    members: Vec<bool>,
}

impl Region {
    pub fn new(n: usize, leaves: impl IntoIterator<Item = usize>) -> Result<Self, BvpError> {
        let mut members = vec![false; n];
        for l in leaves {
            *members.get_mut(l).ok_or(BvpError::NoSuchLeaf(l))? = true;
        }
        if !members.iter().any(|&m| m) {
            return Err(BvpError::EmptyRegion);
        }
        Ok(Region { members })
    }

    pub fn full(n: usize) -> Self {
        Region {
            members: vec![true; n],
        }
    }

    pub fn contains(&self, leaf: usize) -> bool {
        self.members[leaf]
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.members.len()).filter(|&l| self.members[l])
    }

    pub fn outside(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.members.len()).filter(|&l| !self.members[l])
    }

    /// Complement, or `None` when it is empty.
    pub fn complement(&self) -> Option<Region> {
        let members: Vec<bool> = self.members.iter().map(|m| !m).collect();
        members.iter().any(|&m| m).then_some(Region { members })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    Dirichlet,
    VonNeumann,
}

/// Leaves outside `S` coupled to some leaf of `S`.
pub fn vertex_boundary(s: &Region, m: &OperatorMatrix) -> Vec<usize> {
    s.outside()
        .filter(|&x| s.leaves().any(|y| m.matrix[(x, y)] != 0.0))
        .collect()
}

/// Coupled pairs `(x, y)` with `x ∈ S`, `y ∉ S`.
pub fn edge_boundary(s: &Region, m: &OperatorMatrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for x in s.leaves() {
        for y in s.outside() {
            if m.matrix[(x, y)] != 0.0 {
                out.push((x, y));
            }
        }
    }
    out
}

pub fn check_dirichlet(f: &[f64], s: &Region, m: &OperatorMatrix) -> bool {
    vertex_boundary(s, m)
        .iter()
        .all(|&x| f[x].abs() <= DIRICHLET_TOL)
}

/// `Σ_{y∈S} L(x,y)(f(y) - f(x))μ(y)` at every boundary leaf `x`.
pub fn von_neumann_fluxes(f: &[f64], s: &Region, m: &OperatorMatrix) -> Vec<(usize, f64)> {
    vertex_boundary(s, m)
        .into_iter()
        .map(|x| {
            (
                x,
                s.leaves().map(|y| m.matrix[(x, y)] * (f[y] - f[x])).sum(),
            )
        })
        .collect()
}

pub fn check_von_neumann(f: &[f64], s: &Region, m: &OperatorMatrix) -> bool {
    von_neumann_fluxes(f, s, m)
        .iter()
        .all(|(_, v)| v.abs() <= BOUNDARY_TOL)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Solution mass outside the region.
    Leak {
        t: f64,
        max_outside: f64,
    },
    Boundary {
        t: f64,
        condition: Condition,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvpSolution {
    pub times: Vec<f64>,
    pub solutions: Vec<Vec<f64>>,
    pub max_outside: Vec<f64>,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BvpOutcome {
    Solved(BvpSolution),
    /// Initial data is nonzero on these leaves outside the region.
    UnsupportedInitialData {
        leaves_outside: Vec<usize>,
    },
}

/// Evolve `u₀` when it is supported in `S`, checking confinement and the
/// boundary condition at every requested time.
pub fn solve_bvp(
    u0: &[f64],
    s: &Region,
    condition: Condition,
    times: &[f64],
    d: &SpectralDecomposition,
    m: &OperatorMatrix,
) -> Result<BvpOutcome, BvpError> {
    if u0.len() != s.n() {
        return Err(HeatError::DimensionMismatch {
            expected: s.n(),
            got: u0.len(),
        }
        .into());
    }
    let leaves_outside: Vec<usize> = s.outside().filter(|&x| u0[x] != 0.0).collect();
    if !leaves_outside.is_empty() {
        return Ok(BvpOutcome::UnsupportedInitialData { leaves_outside });
    }
    let mut sol = BvpSolution {
        times: times.to_vec(),
        solutions: Vec::new(),
        max_outside: Vec::new(),
        violations: Vec::new(),
    };
    for &t in times {
        let u = solve_cauchy(u0, t, d)?;
        let leak = s.outside().map(|x| u[x].abs()).fold(0.0, f64::max);
        if leak > CONFINEMENT_TOL {
            sol.violations.push(Violation::Leak {
                t,
                max_outside: leak,
            });
        }
        let ok = match condition {
            Condition::Dirichlet => check_dirichlet(&u, s, m),
            Condition::VonNeumann => check_von_neumann(&u, s, m),
        };
        if !ok {
            sol.violations.push(Violation::Boundary { t, condition });
        }
        sol.max_outside.push(leak);
        sol.solutions.push(u);
    }
    Ok(BvpOutcome::Solved(sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn three() -> OperatorMatrix {
        OperatorMatrix {
            matrix: DMatrix::from_row_slice(
                3,
                3,
                &[-2.0, 1.0, 1.0, 1.0, -2.0, 1.0, 1.0, 1.0, -2.0],
            ),
            mu: vec![1.0 / 3.0; 3],
            component_of: vec![0; 3],
            orbit_of: vec![0; 3],
            orbits: vec![(0, 0)],
        }
    }

    #[test]
    fn boundaries() {
        let m = three();
        let s = Region::new(3, [0]).unwrap();
        assert_eq!(vertex_boundary(&s, &m), vec![1, 2]);
        assert_eq!(edge_boundary(&s, &m).len(), 2);
        assert!(vertex_boundary(&Region::full(3), &m).is_empty());
        assert!(Region::new(3, []).is_err());
        let ind = [1.0, 0.0, 0.0];
        assert!(!check_von_neumann(&ind, &s, &m));
        assert!(check_dirichlet(&ind, &s, &m));
        assert!(!check_dirichlet(&[1.0; 3], &s, &m));
        assert!(check_von_neumann(&[0.0; 3], &s, &m));
    }
}
