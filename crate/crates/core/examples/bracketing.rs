//! Boundary unitaries with eigenvalues +-1 only: every eigenvalue sits
//! between the Neumann and Dirichlet ones.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qbound::boundary::BoundaryUnitary;
use qbound::geometry::{boundary_operators, make_mesh, DomainSpec};
use qbound::linalg::{haar_unitary, C64};
use qbound::spectra::BracketBaseline;

fn main() -> qbound::Result<()> {
    let mesh = make_mesh(&DomainSpec::unit_interval(), 400)?;
    let bops = boundary_operators(&mesh)?;
    let baseline = BracketBaseline::new(&mesh, &bops, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let v = haar_unitary(2, &mut rng);
        let signs = DVector::from_fn(2, |_, _| C64::from(if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
        let u = BoundaryUnitary::new(&v * DMatrix::from_diagonal(&signs) * v.adjoint())?;
        let report = baseline.check(&mesh, &bops, &u)?;
        let first = &report.rows[0];
        println!(
            "signs {:?}: lambda_0 {:.4} in [{:.4}, {:.4}], min margin {:.2e}, {}",
            signs.iter().map(|s| s.re).collect::<Vec<_>>(),
            first.value,
            first.neumann,
            first.dirichlet,
            report.min_margin(),
            if report.pass { "ok" } else { "violated" }
        );
    }
    Ok(())
}
