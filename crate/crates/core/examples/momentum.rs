//! The momentum operator i d/dx on [0, 2 pi] with a twisted boundary.

use std::f64::consts::PI;

use qbound::geometry::{make_mesh_with, DomainSpec, Resolution};
use qbound::operators::assemble_momentum;
use qbound::spectra::momentum_modes;

fn main() -> qbound::Result<()> {
    let mesh = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(512))?;
    for alpha in [0.0, 0.5 * PI, PI] {
        let op = assemble_momentum(&mesh, alpha)?;
        let modes = momentum_modes(&op, 5)?;
        let vals: Vec<String> = modes.eigenvalues.iter().map(|v| format!("{v:+.4}")).collect();
        println!("alpha {alpha:.4}: [{}]", vals.join(", "));
    }
    Ok(())
}
