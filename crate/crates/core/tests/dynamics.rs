use qbound::boundary::{alpha_for_flux, unitary_from_preset, BCPath, PathRule, Preset};
use qbound::dynamics::{
    adiabatic_fidelity, frozen_domain_propagate, gauge_map, propagate, run_faraday, run_faraday_with, FidelityCurve,
    GaugeDirection, PropagateOptions, SchedulerEps,
};
use qbound::geometry::{boundary_operators, make_mesh, make_mesh_with, DomainSpec, Mesh, Resolution};
use qbound::linalg::C64;
use qbound::operators::{laplacian_for, FaradayFamily, Wavefunction};
use qbound::spectra::{eigensolve, spectral_flow_samples, FlowOptions, FlowResult};

fn ring(cells: usize) -> Mesh {
    make_mesh_with(&DomainSpec::ring(), Resolution::Cells(cells)).unwrap()
}

fn smooth_state(mesh: &Mesh, family: &FaradayFamily) -> Wavefunction {
    let nodal = mesh.sample(|x, _| C64::from_polar(1.0, x) + C64::new(0.6, 0.2) + C64::from_polar(0.3, -2.0 * x));
    Wavefunction::from_nodal(&nodal, family.lift().clone()).unwrap().normalized()
}

/// Ground-state fidelity along a flux ramp started in the lowest mode.
fn ramp_fidelity(sched: &SchedulerEps, from: f64, to: f64, dt: f64, cells: usize) -> (FidelityCurve, FlowResult) {
    let mesh = ring(cells);
    let bops = boundary_operators(&mesh).unwrap();
    let family = FaradayFamily::new(&mesh).unwrap();
    let ground = eigensolve(&family.operator(from, 0.0).unwrap(), 1).unwrap().wavefunction(0);
    let steps = ((sched.end() - sched.start()) / dt).round() as usize;
    let traj = run_faraday_with(sched, &ground, dt, &PropagateOptions { record_every: (steps / 40).max(1) }).unwrap();
    let mut grid: Vec<f64> = if to == from {
        vec![0.0, 1.0]
    } else {
        traj.params.iter().map(|&e| ((e - from) / (to - from)).clamp(0.0, 1.0)).collect()
    };
    grid.dedup();
    let path = BCPath::quasi_periodic_flux(from, to, 2).unwrap();
    let flow = spectral_flow_samples(&path, &mesh, &bops, 4, &grid, &FlowOptions::default()).unwrap();
    (adiabatic_fidelity(&traj, &flow).unwrap(), flow)
}

#[test]
fn slower_ramps_follow_the_ground_state_better() {
    let finals: Vec<f64> = [1.0, 10.0, 100.0]
        .iter()
        .map(|&t| {
            let sched = SchedulerEps::linear_ramp(0.0, 0.4, t).unwrap();
            ramp_fidelity(&sched, 0.0, 0.4, (t * 1e-3_f64).min(1e-2), 128).0.final_ground()
        })
        .collect();
    assert!(finals[0] < finals[1] && finals[1] < finals[2], "{finals:?}");
    assert!(finals[0] < 0.95, "fast ramp should excite: {finals:?}");
    assert!(finals[2] > 0.999, "{finals:?}");
}

#[test]
fn ground_overlap_collapses_at_the_flagged_crossing() {
    let sched = SchedulerEps::smooth_ramp(0.0, 1.0, 20.0).unwrap();
    let (fid, flow) = ramp_fidelity(&sched, 0.0, 1.0, 1e-3, 128);
    let crossing = flow.exchanges().find(|c| (c.energy - 0.25).abs() < 1e-2).expect("crossing at E = 1/4");
    let drops: Vec<f64> = fid.ground.windows(2).map(|w| w[0] - w[1]).collect();
    let (at, &biggest) = drops.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let (lo, hi) = (flow.samples[at], flow.samples[at + 1]);
    assert!(biggest > 0.3, "{biggest}");
    assert!(lo <= crossing.s_estimate && crossing.s_estimate <= hi, "drop in [{lo}, {hi}], crossing {}", crossing.s_estimate);
    let continued_jump = fid.continued.windows(2).map(|w| (w[0] - w[1]).abs()).fold(0.0, f64::max);
    assert!(continued_jump < 0.1, "{continued_jump}");
}

#[test]
fn stationary_ground_state_has_unit_fidelity() {
    let sched = SchedulerEps::constant(0.3, 5.0).unwrap();
    let (fid, _) = ramp_fidelity(&sched, 0.3, 0.3, 1e-2, 64);
    for f in fid.ground.iter().chain(&fid.continued) {
        assert!((f - 1.0).abs() < 1e-9, "{f}");
    }
}

#[test]
fn constant_flux_matches_gauged_quasi_periodic_propagation() {
    let mesh = ring(128);
    let family = FaradayFamily::new(&mesh).unwrap();
    let eps = 0.3;
    let psi = smooth_state(&mesh, &family);
    let traj = run_faraday(&SchedulerEps::constant(eps, 1.0).unwrap(), &psi, 1e-3).unwrap();
    let from_ref = gauge_map(eps, &traj.states[0], GaugeDirection::FromReference).unwrap();
    let u = unitary_from_preset(&Preset::QuasiPeriodic { alpha: alpha_for_flux(eps) }, 2).unwrap();
    let op = laplacian_for(&mesh, &u).unwrap();
    let phys = Wavefunction::from_nodal(&from_ref.nodal(), op.lift().clone()).unwrap();
    let moved = propagate(&op, &phys, 0.0, 1.0, 1e-3).unwrap();
    let back = gauge_map(eps, moved.final_state(), GaugeDirection::ToReference).unwrap();
    let f = back.fidelity(traj.final_state());
    assert!(f > 1.0 - 1e-6, "{f}");
}

#[test]
fn static_energy_is_conserved() {
    let mesh = ring(128);
    let family = FaradayFamily::new(&mesh).unwrap();
    let op = family.operator(0.2, 0.0).unwrap();
    let traj = propagate(&op, &smooth_state(&mesh, &family), 0.0, 10.0, 1e-2).unwrap();
    assert!(traj.energy_drift() < 1e-8, "{}", traj.energy_drift());
    assert!(traj.norm_drift() < 1e-12, "{}", traj.norm_drift());
}

#[test]
fn ramped_flux_is_second_order_in_time() {
    // the potential jumps at the cut and excites grid-scale modes; the
    // asymptotic rate shows once dt resolves them (largest eigenvalue ~100)
    let mesh = ring(32);
    let family = FaradayFamily::new(&mesh).unwrap();
    let psi = smooth_state(&mesh, &family);
    for sched in [SchedulerEps::smooth_ramp(0.0, 0.4, 1.0).unwrap(), SchedulerEps::linear_ramp(0.0, 0.4, 1.0).unwrap()] {
        let reference = run_faraday(&sched, &psi, 1e-5).unwrap();
        let errs: Vec<f64> = [2e-3, 1e-3, 5e-4]
            .iter()
            .map(|&dt| (run_faraday(&sched, &psi, dt).unwrap().final_state().amplitudes() - reference.final_state().amplitudes()).norm())
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "{errs:?}");
        }
    }
}

#[test]
fn frozen_domain_agrees_with_faraday_on_the_flux_path() {
    let mesh = ring(128);
    let bops = boundary_operators(&mesh).unwrap();
    let family = FaradayFamily::new(&mesh).unwrap();
    let (from, to, t1) = (0.0, 0.3, 10.0);
    let psi = smooth_state(&mesh, &family);
    let faraday = run_faraday(&SchedulerEps::linear_ramp(from, to, t1).unwrap(), &psi, 1e-3).unwrap();
    let path = BCPath::quasi_periodic_flux(from, to, 2).unwrap();
    let u0 = path.at(0.0).unwrap();
    let start = Wavefunction::from_nodal(&psi.nodal(), laplacian_for(&mesh, &u0).unwrap().lift().clone()).unwrap();
    let frozen = frozen_domain_propagate(&path, &mesh, &bops, &start, 0.0, t1, 1e-3).unwrap();
    let phys = gauge_map(to, faraday.final_state(), GaugeDirection::FromReference).unwrap();
    let end = Wavefunction::from_nodal(&phys.nodal(), frozen.final_state().lift().clone()).unwrap();
    let f = end.fidelity(frozen.final_state()) / frozen.final_state().norm();
    assert!(f > 0.999, "{f}");
}

#[test]
fn reconnection_trajectory_accounts_for_its_norm() {
    let mesh = make_mesh(&DomainSpec::two_unit_intervals(), 100).unwrap();
    let bops = boundary_operators(&mesh).unwrap();
    let u1 = unitary_from_preset(&Preset::TwoIntervalU1, 4).unwrap();
    let u2 = unitary_from_preset(&Preset::TwoIntervalU2, 4).unwrap();
    let ground = eigensolve(&laplacian_for(&mesh, &u1).unwrap(), 1).unwrap().wavefunction(0);
    let path = BCPath::new(u1, u2, PathRule::Eigenphase, 51).unwrap();
    let traj = frozen_domain_propagate(&path, &mesh, &bops, &ground, 0.0, 50.0, 1e-2).unwrap();
    let loss = *traj.projection_loss.last().unwrap();
    let norm_sq = traj.final_state().norm().powi(2);
    assert!(loss < 1e-3 * traj.steps as f64);
    // each projection multiplies the norm by (1 - loss_k); CN keeps it
    assert!((1.0 - norm_sq - loss).abs() <= loss * loss + 1e-10, "norm^2 {norm_sq}, loss {loss}");
    let spec = eigensolve(&laplacian_for(&mesh, path.end()).unwrap(), 6).unwrap();
    let populations: f64 = (0..spec.len()).map(|j| spec.wavefunction(j).inner(traj.final_state()).norm_sqr()).sum();
    assert!(populations <= norm_sq + 1e-12 && populations > 0.0);
}
