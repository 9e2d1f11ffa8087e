//! Two intervals glued into two circles, then into one, along an
//! eigenphase path; the state is carried along the frozen domains.

use qbound::boundary::{unitary_from_preset, BCPath, PathRule, Preset};
use qbound::dynamics::frozen_domain_propagate;
use qbound::geometry::{boundary_operators, make_mesh, DomainSpec};
use qbound::operators::laplacian_for;
use qbound::spectra::{eigensolve, spectral_flow};

fn main() -> qbound::Result<()> {
    let mesh = make_mesh(&DomainSpec::two_unit_intervals(), 100)?;
    let bops = boundary_operators(&mesh)?;
    let two = unitary_from_preset(&Preset::TwoIntervalU1, 4)?;
    let one = unitary_from_preset(&Preset::TwoIntervalU2, 4)?;

    let a = eigensolve(&laplacian_for(&mesh, &two)?, 5)?;
    let b = eigensolve(&laplacian_for(&mesh, &one)?, 5)?;
    println!("two circles: {:?}", a.degeneracies());
    println!("one circle:  {:?}", b.degeneracies());

    let path = BCPath::new(two, one, PathRule::Eigenphase, 21)?;
    println!("min gap along the path {:.4}", path.min_gap());
    let flow = spectral_flow(&path, &mesh, &bops, 5, 21)?;
    println!("crossings {}", flow.exchanges().count());

    let traj = frozen_domain_propagate(&path, &mesh, &bops, &a.wavefunction(0), 0.0, 20.0, 1e-2)?;
    let lost = traj.projection_loss.last().copied().unwrap_or(0.0);
    println!("final norm {:.6}, projection loss {:.2e}", traj.final_state().norm(), lost);
    Ok(())
}
