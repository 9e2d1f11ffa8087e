//! Drives the flux 0 -> 0.4 at several speeds and reports how well the
//! state follows the instantaneous ground state.

use qbound::boundary::BCPath;
use qbound::dynamics::{adiabatic_fidelity, run_faraday_with, PropagateOptions, SchedulerEps};
use qbound::geometry::{boundary_operators, make_mesh_with, DomainSpec, Resolution};
use qbound::operators::FaradayFamily;
use qbound::spectra::{eigensolve, spectral_flow_samples, FlowOptions};

fn main() -> qbound::Result<()> {
    let (from, to) = (0.0, 0.4);
    let mesh = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(128))?;
    let bops = boundary_operators(&mesh)?;
    let family = FaradayFamily::new(&mesh)?;
    let psi0 = eigensolve(&family.operator(from, 0.0)?, 1)?.wavefunction(0);
    let path = BCPath::quasi_periodic_flux(from, to, 2)?;

    for duration in [1.0, 10.0, 50.0] {
        let sched = SchedulerEps::smooth_ramp(from, to, duration)?;
        let dt = 1e-2;
        // 40 records per run keep the flow solve cheap
        let every = ((duration / dt) as usize / 40).max(1);
        let traj = run_faraday_with(&sched, &psi0, dt, &PropagateOptions { record_every: every })?;
        let mut grid: Vec<f64> = traj.params.iter().map(|e| ((e - from) / (to - from)).clamp(0.0, 1.0)).collect();
        grid.dedup();
        let flow = spectral_flow_samples(&path, &mesh, &bops, 3, &grid, &FlowOptions::default())?;
        let fid = adiabatic_fidelity(&traj, &flow)?;
        println!("T = {duration:>4}: final ground fidelity {:.6}, norm drift {:.1e}", fid.final_ground(), traj.norm_drift());
    }
    Ok(())
}
