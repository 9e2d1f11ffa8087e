//! Neumann/Dirichlet bracketing of boundary conditions with `sigma(U) in {-1, 1}`.

use std::f64::consts::PI;

use serde::Serialize;

use super::solve::eigensolve;
use crate::boundary::{cayley_decompose, unitary_from_preset, BoundaryUnitary, Preset, PHASE_SNAP_TOL};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryOps, Mesh};
use crate::operators::assemble_laplacian;

#[derive(Clone, Debug, Serialize)]
pub struct BracketRow {
    pub n: usize,
    pub neumann: f64,
    pub value: f64,
    pub dirichlet: f64,
    /// `value - neumann`
    pub lower_margin: f64,
    /// `dirichlet - value`
    pub upper_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketReport {
    pub pass: bool,
    pub tolerance: f64,
    pub rows: Vec<BracketRow>,
}

impl BracketReport {
    pub fn min_margin(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.lower_margin.min(r.upper_margin))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Neumann and Dirichlet eigenvalues of a domain, solved once for a sweep.
#[derive(Clone, Debug)]
pub struct BracketBaseline {
    pub neumann: Vec<f64>,
    pub dirichlet: Vec<f64>,
    /// `10 lambda_top^2 h^2 / 12 + 1e-9 max(1, lambda_top)` with
    /// `lambda_top` the largest Dirichlet eigenvalue: ten times the leading
    /// truncation error of the second-order stencil plus a roundoff floor.
    pub tolerance: f64,
}

fn solve(mesh: &Mesh, bops: &BoundaryOps, u: &BoundaryUnitary, k: usize) -> Result<Vec<f64>> {
    let bc = cayley_decompose(u, PHASE_SNAP_TOL)?;
    Ok(eigensolve(&assemble_laplacian(mesh, bops, &bc)?, k)?.eigenvalues)
}

impl BracketBaseline {
    pub fn new(mesh: &Mesh, bops: &BoundaryOps, k: usize) -> Result<Self> {
        let n_b = mesh.n_boundary();
        let neumann = solve(mesh, bops, &unitary_from_preset(&Preset::Neumann, n_b)?, k)?;
        let dirichlet = solve(mesh, bops, &unitary_from_preset(&Preset::Dirichlet, n_b)?, k)?;
        let top = dirichlet.iter().copied().fold(0.0, f64::max);
        let h = mesh.h();
        let tolerance = 10.0 * top * top * h * h / 12.0 + 1e-9 * top.max(1.0);
        Ok(Self {
            neumann,
            dirichlet,
            tolerance,
        })
    }

    pub fn k(&self) -> usize {
        self.neumann.len()
    }

    /// Checks `lambda_n^N - tol <= lambda_n(U) <= lambda_n^D + tol`.
    pub fn check(&self, mesh: &Mesh, bops: &BoundaryOps, u: &BoundaryUnitary) -> Result<BracketReport> {
        for &phase in u.phases() {
            let off = phase.abs().min(PI - phase.abs());
            if off > PHASE_SNAP_TOL {
                return Err(Error::Precondition(format!(
                    "eigenphase {phase:.6} is neither 0 nor pi; the bracket is only claimed for sigma(U) in {{-1, 1}}"
                )));
            }
        }
        let value = solve(mesh, bops, u, self.k())?;
        let rows: Vec<BracketRow> = (0..self.k())
            .map(|i| BracketRow {
                n: i + 1,
                neumann: self.neumann[i],
                value: value[i],
                dirichlet: self.dirichlet[i],
                lower_margin: value[i] - self.neumann[i],
                upper_margin: self.dirichlet[i] - value[i],
            })
            .collect();
        let tolerance = self.tolerance;
        let pass = rows
            .iter()
            .all(|r| r.lower_margin >= -tolerance && r.upper_margin >= -tolerance);
        Ok(BracketReport { pass, tolerance, rows })
    }
}

/// Bracket check of a single `U` for `n <= k`.
pub fn bracket_check(mesh: &Mesh, bops: &BoundaryOps, u: &BoundaryUnitary, k: usize) -> Result<BracketReport> {
    if u.dim() != mesh.n_boundary() {
        return Err(Error::Dimension(format!(
            "unitary acts on {} boundary coordinates, the mesh has {}",
            u.dim(),
            mesh.n_boundary()
        )));
    }
    BracketBaseline::new(mesh, bops, k)?.check(mesh, bops, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{boundary_operators, make_mesh, DomainSpec};
    use crate::linalg::{haar_unitary, C64};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn periodic_unit_interval() {
        let m = make_mesh(&DomainSpec::unit_interval(), 200).unwrap();
        let b = boundary_operators(&m).unwrap();
        let r = bracket_check(&m, &b, &unitary_from_preset(&Preset::Periodic, 2).unwrap(), 1).unwrap();
        assert!(r.pass);
        assert!(r.rows[0].neumann.abs() < 1e-9 && r.rows[0].value.abs() < 1e-9);
        assert!((r.rows[0].dirichlet - PI * PI).abs() / (PI * PI) < 1e-3);
    }

    #[test]
    fn two_intervals_one_circle() {
        let m = make_mesh(&DomainSpec::two_unit_intervals(), 200).unwrap();
        let b = boundary_operators(&m).unwrap();
        let r = bracket_check(&m, &b, &unitary_from_preset(&Preset::TwoIntervalU2, 4).unwrap(), 3).unwrap();
        assert!(r.pass);
        assert!(r.rows[0].value.abs() < 1e-9);
    }

    #[test]
    fn random_reflections() {
        let m = make_mesh(&DomainSpec::unit_interval(), 200).unwrap();
        let b = boundary_operators(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for signs in [[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]] {
            let v = haar_unitary(2, &mut rng);
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(2, |i, _| C64::new(signs[i], 0.0)));
            let u = BoundaryUnitary::new(&v * d * v.adjoint()).unwrap();
            assert!(bracket_check(&m, &b, &u, 10).unwrap().pass);
        }
    }

    #[test]
    fn generic_phase_is_rejected() {
        let m = make_mesh(&DomainSpec::unit_interval(), 50).unwrap();
        let b = boundary_operators(&m).unwrap();
        let u = BoundaryUnitary::new(DMatrix::identity(2, 2) * C64::from_polar(1.0, 0.7)).unwrap();
        assert!(matches!(bracket_check(&m, &b, &u, 2), Err(Error::Precondition(_))));
    }
}
