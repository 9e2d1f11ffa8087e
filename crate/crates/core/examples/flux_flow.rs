//! Spectral flow of the ring as the flux goes once around: 0 -> 1.

use qbound::boundary::BCPath;
use qbound::geometry::{boundary_operators, make_mesh_with, DomainSpec, Resolution};
use qbound::spectra::spectral_flow;

fn main() -> qbound::Result<()> {
    let mesh = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(256))?;
    let bops = boundary_operators(&mesh)?;
    let path = BCPath::quasi_periodic_flux(0.0, 1.0, 41)?;
    let flow = spectral_flow(&path, &mesh, &bops, 5, 41)?;

    println!("start labels {:?}", flow.start_labels);
    println!("end labels   {:?}", flow.end_labels);
    println!("label shift  {:?}", flow.label_shift);
    println!("total permutation {:?}", flow.total_permutation);
    for c in flow.exchanges() {
        println!("  curves {} and {} cross near s = {:.3} at E = {:.4}", c.lower, c.upper, c.s_estimate, c.energy);
    }
    Ok(())
}
