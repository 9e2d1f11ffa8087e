//! The gauge map between a flux-eps domain and the periodic ring.

use qbound::boundary::{alpha_for_flux, unitary_from_preset, Preset};
use qbound::dynamics::{gauge_map, GaugeDirection};
use qbound::geometry::{make_mesh_with, DomainSpec, Resolution};
use qbound::operators::{assemble_faraday, laplacian_for};
use qbound::spectra::eigensolve;

fn main() -> qbound::Result<()> {
    let eps = 0.25;
    let mesh = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(512))?;
    let u = unitary_from_preset(&Preset::QuasiPeriodic { alpha: alpha_for_flux(eps) }, 2)?;
    let twisted = eigensolve(&laplacian_for(&mesh, &u)?, 4)?;
    let magnetic = eigensolve(&assemble_faraday(&mesh, eps, 0.0)?, 4)?;
    for (a, b) in twisted.eigenvalues.iter().zip(&magnetic.eigenvalues) {
        println!("twisted {a:.6}   magnetic {b:.6}");
    }

    let ground = twisted.wavefunction(0);
    let there = gauge_map(eps, &ground, GaugeDirection::ToReference)?;
    let back = gauge_map(eps, &there, GaugeDirection::FromReference)?;
    println!("fidelity with the magnetic ground state {:.10}", there.fidelity(&magnetic.wavefunction(0)));
    println!("round trip fidelity                     {:.12}", back.fidelity(&ground));
    Ok(())
}
