//! Randomized invariants across modules.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qbound::boundary::{alpha_for_flux, cayley_decompose, spectral_gap, unitary_from_preset, BoundaryUnitary, Preset};
use qbound::dynamics::{propagate, propagate_with, FaradayGenerator, PropagateOptions, SchedulerEps};
use qbound::geometry::{boundary_operators, make_mesh, make_mesh_with, DomainSpec, Resolution};
use qbound::linalg::{haar_unitary, C64};
use qbound::operators::{assemble_faraday, laplacian_for, FaradayFamily, Wavefunction};
use qbound::spectra::{bracket_check, build_intertwiner, eigensolve};

fn random_signs(n: usize, rng: &mut ChaCha8Rng) -> BoundaryUnitary {
    let v = haar_unitary(n, rng);
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| C64::from(if rng.random_bool(0.5) { 1.0 } else { -1.0 })));
    BoundaryUnitary::new(&v * d * v.adjoint()).unwrap()
}

fn random_gapped(n: usize, min_gap: f64, rng: &mut ChaCha8Rng) -> BoundaryUnitary {
    loop {
        let u = BoundaryUnitary::new(haar_unitary(n, rng)).unwrap();
        if spectral_gap(&u).gap > min_gap && u.phases().iter().all(|t| (t.abs() - std::f64::consts::PI).abs() > 1e-9) {
            return u;
        }
    }
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn trapezoid_integrates_linear_functions(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, n in 8usize..200) {
        let m = make_mesh(&DomainSpec::unit_interval(), n).unwrap();
        let got = m.integrate(&m.sample(|x, _| C64::from(a + b * x)));
        prop_assert!((got - C64::from(a + 0.5 * b)).norm() < 1e-13);
        let r = make_mesh_with(&DomainSpec::Rectangle { width: 2.0, height: 1.0 }, Resolution::Cells(n / 8 + 2)).unwrap();
        let got = r.integrate(&r.sample(|x, y| C64::from(a + b * x + c * y)));
        prop_assert!((got - C64::from(2.0 * a + 2.0 * b + c)).norm() < 1e-12);
    }

    #[test]
    fn meshes_are_reproducible(n in 8usize..300, two in any::<bool>()) {
        let spec = if two { DomainSpec::two_unit_intervals() } else { DomainSpec::ring() };
        let a = make_mesh(&spec, n).unwrap();
        let b = make_mesh(&spec, n).unwrap();
        let bits = |m: &qbound::geometry::Mesh| -> Vec<u64> {
            m.coords().iter().flat_map(|c| [c[0].to_bits(), c[1].to_bits()]).chain(m.weights().iter().map(|w| w.to_bits())).collect()
        };
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn assembled_operators_are_hermitian(seed in any::<u64>(), two in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, nb) = if two { (DomainSpec::two_unit_intervals(), 4) } else { (DomainSpec::unit_interval(), 2) };
        let m = make_mesh(&spec, 40).unwrap();
        let u = BoundaryUnitary::new(haar_unitary(nb, &mut rng)).unwrap();
        prop_assert!(laplacian_for(&m, &u).unwrap().hermiticity_defect() < 1e-12);
        let ring = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(48)).unwrap();
        let op = assemble_faraday(&ring, rng.random::<f64>(), rng.random::<f64>() - 0.5).unwrap();
        prop_assert!(op.hermiticity_defect() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sign_unitaries_sit_between_neumann_and_dirichlet(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = make_mesh(&DomainSpec::unit_interval(), 100).unwrap();
        let b = boundary_operators(&m).unwrap();
        let r = bracket_check(&m, &b, &random_signs(2, &mut rng), 4).unwrap();
        prop_assert!(r.pass, "margin {}", r.min_margin());
    }

    #[test]
    fn intertwiners_are_unitary(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = make_mesh(&DomainSpec::unit_interval(), 100).unwrap();
        let u = random_gapped(2, 0.5, &mut rng);
        let su = eigensolve(&laplacian_for(&m, &u).unwrap(), 5).unwrap();
        let s0 = eigensolve(&laplacian_for(&m, &unitary_from_preset(&Preset::Neumann, 2).unwrap()).unwrap(), 5).unwrap();
        let v = build_intertwiner(&su, &s0).unwrap();
        prop_assert!(v.unitarity_defect() < 1e-9, "{}", v.unitarity_defect());
    }

    #[test]
    fn crank_nicolson_keeps_the_norm_each_step(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = make_mesh(&DomainSpec::unit_interval(), 60).unwrap();
        let op = laplacian_for(&m, &random_gapped(2, 0.5, &mut rng)).unwrap();
        let psi0 = Wavefunction::from_nodal(&random_state(m.n_nodes(), &mut rng), op.lift().clone()).unwrap().normalized();
        let traj = propagate_with(&op, &psi0, 0.0, 0.2, 1e-3, &PropagateOptions { record_every: 1 }).unwrap();
        prop_assert_eq!(traj.norms.len(), traj.steps + 1);
        let worst = traj.norms.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-12, "{}", worst);
    }

    #[test]
    fn propagators_compose_at_any_grid_split(seed in any::<u64>(), split in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(32)).unwrap();
        let fam = FaradayFamily::new(&m).unwrap();
        let sched = SchedulerEps::smooth_ramp(0.0, rng.random::<f64>(), 0.5).unwrap();
        let gen = FaradayGenerator { family: &fam, schedule: &sched };
        let psi0 = Wavefunction::from_nodal(&random_state(m.n_nodes(), &mut rng), fam.lift().clone()).unwrap().normalized();
        let dt = 0.01;
        let s = split as f64 * dt;
        let whole = propagate(&gen, &psi0, 0.0, 0.5, dt).unwrap();
        let a = propagate(&gen, &psi0, 0.0, s, dt).unwrap();
        let b = propagate(&gen, a.final_state(), s, 0.5, dt).unwrap();
        let d = (whole.final_state().amplitudes() - b.final_state().amplitudes()).norm();
        prop_assert!(d < 1e-12, "{}", d);
        let id = propagate(&gen, &psi0, s, s, dt).unwrap();
        prop_assert_eq!(id.final_state().amplitudes(), psi0.amplitudes());
    }
}

#[test]
fn gapped_unitaries_are_bounded_below() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = make_mesh(&DomainSpec::unit_interval(), 200).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let u = random_gapped(2, 0.5, &mut rng);
        let a = cayley_decompose(&u, 1e-10).unwrap().robin_eigenvalues().iter().fold(0.0f64, |s, x| s.max(x.abs()));
        let low = eigensolve(&laplacian_for(&m, &u).unwrap(), 1).unwrap().eigenvalues[0];
        // trace inequality on [0, 1]: |phi(0)|^2 + |phi(1)|^2 <= d |phi'|^2 + (2 + 1/d) |phi|^2
        let bound = a * a + 2.0 * a;
        assert!(low.is_finite() && low >= -bound * (1.0 + 1e-6) - 1e-9, "lambda_min {low} below -{bound}");
        worst = worst.max(-low);
    }
    println!("largest observed lower bound C = {worst:.6}");
    for _ in 0..50 {
        let low = eigensolve(&laplacian_for(&m, &random_signs(2, &mut rng)).unwrap(), 1).unwrap().eigenvalues[0];
        assert!(low >= -1e-9, "{low}");
    }
}

fn observed_orders(preset: &Preset) -> Vec<f64> {
    let vals: Vec<Vec<f64>> = [250, 500, 1000]
        .iter()
        .map(|&n| {
            let m = make_mesh(&DomainSpec::unit_interval(), n).unwrap();
            eigensolve(&laplacian_for(&m, &unitary_from_preset(preset, 2).unwrap()).unwrap(), 5).unwrap().eigenvalues
        })
        .collect();
    (0..5)
        .filter_map(|j| {
            let coarse = (vals[0][j] - vals[1][j]).abs();
            let fine = (vals[1][j] - vals[2][j]).abs();
            // modes that are exact on every grid (constants) carry no order
            (coarse > 1e-10).then(|| (coarse / fine).log2())
        })
        .collect()
}

#[test]
fn interval_presets_converge_at_second_order() {
    for preset in [
        Preset::Dirichlet,
        Preset::Neumann,
        Preset::Periodic,
        Preset::QuasiPeriodic { alpha: alpha_for_flux(0.25) },
    ] {
        let orders = observed_orders(&preset);
        assert!(orders.len() >= 4, "{preset:?}");
        for p in orders {
            assert!(p >= 1.9, "{preset:?}: order {p}");
        }
    }
}

#[test]
fn quasi_periodic_and_magnetic_spectra_agree_at_two_thousand_nodes() {
    let m = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(2000)).unwrap();
    for eps in [0.1, 0.25, 0.4] {
        let qp = unitary_from_preset(&Preset::QuasiPeriodic { alpha: alpha_for_flux(eps) }, 2).unwrap();
        let a = eigensolve(&laplacian_for(&m, &qp).unwrap(), 6).unwrap().eigenvalues;
        let b = eigensolve(&assemble_faraday(&m, eps, 0.0).unwrap(), 6).unwrap().eigenvalues;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0), "eps {eps}: {x} vs {y}");
        }
    }
}
