//! A square pasted into a torus and into a cylinder.

use qbound::boundary::{cylinder_unitary, torus_unitary};
use qbound::geometry::{make_mesh_with, DomainSpec, Resolution};
use qbound::operators::laplacian_for;
use qbound::spectra::eigensolve;

fn main() -> qbound::Result<()> {
    let mesh = make_mesh_with(&DomainSpec::Rectangle { width: 1.0, height: 1.0 }, Resolution::Cells(32))?;
    for (name, u) in [("torus", torus_unitary(&mesh)?), ("cylinder", cylinder_unitary(&mesh)?)] {
        let spec = eigensolve(&laplacian_for(&mesh, &u)?, 9)?;
        let vals: Vec<String> = spec.eigenvalues.iter().map(|v| format!("{v:.2}")).collect();
        println!("{name:<9} [{}]", vals.join(", "));
        println!("{:<9} multiplicities {:?}", "", spec.degeneracies());
    }
    Ok(())
}
