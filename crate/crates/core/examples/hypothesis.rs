//! Regularity diagnostics along a path of boundary conditions.

use qbound::boundary::{unitary_from_preset, BCPath, PathRule, Preset};
use qbound::geometry::{boundary_operators, make_mesh, DomainSpec};
use qbound::spectra::path_hypothesis_report;

fn main() -> qbound::Result<()> {
    let mesh = make_mesh(&DomainSpec::unit_interval(), 200)?;
    let bops = boundary_operators(&mesh)?;
    let path = BCPath::new(
        unitary_from_preset(&Preset::Neumann, 2)?,
        unitary_from_preset(&Preset::Periodic, 2)?,
        PathRule::Eigenphase,
        21,
    )?;
    let r = path_hypothesis_report(&path, &mesh, &bops, 4, 21)?;
    println!("max degeneracy       {}", r.max_degeneracy_overall);
    println!("max growth ratio     {:.4}", r.max_growth_ratio);
    println!("intertwiner d/ds     {:.3e}  d2/ds2 {:.3e}", r.intertwiner.max_first, r.intertwiner.max_second);
    println!("hamiltonian d/ds     {:.3e}  d2/ds2 {:.3e}", r.hamiltonian.max_first, r.hamiltonian.max_second);
    println!("lowest eigenvalue    {:.4}", r.min_lowest);
    println!("min gap              {:.4}", r.min_gap);
    Ok(())
}
