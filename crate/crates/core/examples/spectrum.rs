//! Lowest eigenvalues of -d^2/dx^2 on [0, 1] for the interval presets.

use std::f64::consts::PI;

use qbound::boundary::{alpha_for_flux, unitary_from_preset, Preset};
use qbound::geometry::{make_mesh, DomainSpec};
use qbound::operators::laplacian_for;
use qbound::spectra::eigensolve;

fn main() -> qbound::Result<()> {
    let mesh = make_mesh(&DomainSpec::unit_interval(), 1000)?;
    let cases = [
        ("dirichlet", Preset::Dirichlet),
        ("neumann", Preset::Neumann),
        ("periodic", Preset::Periodic),
        ("flux 1/4", Preset::QuasiPeriodic { alpha: alpha_for_flux(0.25) }),
    ];
    for (name, preset) in cases {
        let u = unitary_from_preset(&preset, 2)?;
        let spec = eigensolve(&laplacian_for(&mesh, &u)?, 5)?;
        let scaled: Vec<String> = spec.eigenvalues.iter().map(|l| format!("{:.4}", l / (PI * PI))).collect();
        println!("{name:<10} lambda / pi^2 = [{}]  clusters {:?}", scaled.join(", "), spec.degeneracies());
    }
    Ok(())
}
