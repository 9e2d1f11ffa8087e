//! Unitary map between the eigenbases of two boundary conditions.

use nalgebra::{DMatrix, DVector};

use super::solve::SpectralResult;
use crate::error::{Error, Result};
use crate::linalg::{max_abs, polar_factor, weighted_inner, C64};

/// `V = sum_n phi_ref^n (phi_u^n)^dag`, stored as the two mode bases in node
/// space.
#[derive(Clone, Debug)]
pub struct Intertwiner {
    reference: DMatrix<C64>,
    modes: DMatrix<C64>,
    weights: Vec<f64>,
    /// Reference index paired with each mode.
    pairing: Vec<usize>,
    /// Phase (radians) applied to each mode before pairing.
    phases: Vec<f64>,
}

impl Intertwiner {
    pub fn len(&self) -> usize {
        self.modes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.ncols() == 0
    }

    pub fn pairing(&self) -> &[usize] {
        &self.pairing
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Phase-fixed mode `n` of the source basis, as node values.
    pub fn mode(&self, n: usize) -> Vec<C64> {
        self.modes.column(n).iter().copied().collect()
    }

    /// Reference mode paired with source mode `n`.
    pub fn reference_mode(&self, n: usize) -> Vec<C64> {
        self.reference.column(self.pairing[n]).iter().copied().collect()
    }

    fn coefficients(&self, basis: &DMatrix<C64>, psi: &[C64]) -> DVector<C64> {
        let col = DMatrix::from_column_slice(psi.len(), 1, psi);
        weighted_inner(basis, &self.weights, &col).column(0).into_owned()
    }

    /// `V psi` for node values `psi`.
    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let c = self.coefficients(&self.modes, psi);
        let mut out = DVector::zeros(self.reference.nrows());
        for (n, &r) in self.pairing.iter().enumerate() {
            out += self.reference.column(r) * c[n];
        }
        out.iter().copied().collect()
    }

    /// `V^dag psi`
    pub fn apply_adjoint(&self, psi: &[C64]) -> Vec<C64> {
        let c = self.coefficients(&self.reference, psi);
        let mut out = DVector::zeros(self.modes.nrows());
        for (n, &r) in self.pairing.iter().enumerate() {
            out += self.modes.column(n) * c[r];
        }
        out.iter().copied().collect()
    }

    /// `|V^dag V - I|` on the span of the source modes.
    pub fn unitarity_defect(&self) -> f64 {
        let k = self.len();
        let id = DMatrix::<C64>::identity(k, k);
        let a = max_abs(&(weighted_inner(&self.modes, &self.weights, &self.modes) - &id));
        let b = max_abs(&(weighted_inner(&self.reference, &self.weights, &self.reference) - &id));
        a.max(b)
    }

    /// `max_n |V phi_u^n - phi_ref^n|` in the mass norm.
    pub fn mode_defect(&self) -> f64 {
        (0..self.len())
            .map(|n| {
                let v = self.apply(&self.mode(n));
                let r = self.reference_mode(n);
                let d: Vec<C64> = v.iter().zip(&r).map(|(a, b)| a - b).collect();
                crate::linalg::weighted_vdot(&d, &self.weights, &d).re.sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Pairs the modes of `spec_u` with those of `spec_ref` by index.
///
/// Inside a degenerate reference cluster the pairing is chosen greedily by
/// overlap. When the source modes are degenerate over the same indices they
/// are first rotated onto the reference block (orthogonal Procrustes). Each
/// source mode is then multiplied by the phase making its overlap with its
/// partner real and positive.
pub fn build_intertwiner(spec_u: &SpectralResult, spec_ref: &SpectralResult) -> Result<Intertwiner> {
    if spec_u.len() != spec_ref.len() {
        return Err(Error::Dimension(format!(
            "intertwiner needs equal mode counts, got {} and {}",
            spec_u.len(),
            spec_ref.len()
        )));
    }
    let mesh_u = spec_u.lift.mesh();
    let mesh_r = spec_ref.lift.mesh();
    if mesh_u.n_nodes() != mesh_r.n_nodes() {
        return Err(Error::Dimension("intertwiner needs both bases on the same mesh".into()));
    }
    let weights = mesh_r.weights().to_vec();
    let reference = spec_ref.nodal_matrix();
    let mut modes = spec_u.nodal_matrix();
    let k = spec_u.len();
    let mut pairing: Vec<usize> = (0..k).collect();
    for g in spec_ref.clusters.iter().filter(|g| g.len() > 1) {
        if spec_u.clusters.contains(g) {
            let block = modes.columns(g.start, g.len()).into_owned();
            let target = reference.columns(g.start, g.len()).into_owned();
            let rotated = &block * polar_factor(&weighted_inner(&block, &weights, &target));
            modes.columns_mut(g.start, g.len()).copy_from(&rotated);
            continue;
        }
        let block = modes.columns(g.start, g.len()).into_owned();
        let target = reference.columns(g.start, g.len()).into_owned();
        let o = weighted_inner(&block, &weights, &target);
        let mut entries: Vec<(f64, usize, usize)> = (0..g.len())
            .flat_map(|a| (0..g.len()).map(move |b| (a, b)))
            .map(|(a, b)| (o[(a, b)].norm(), a, b))
            .collect();
        entries.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut used_a = vec![false; g.len()];
        let mut used_b = vec![false; g.len()];
        for (_, a, b) in entries {
            if !used_a[a] && !used_b[b] {
                used_a[a] = true;
                used_b[b] = true;
                pairing[g.start + a] = g.start + b;
            }
        }
    }
    let mut phases = vec![0.0; k];
    for n in 0..k {
        let r = reference.column(pairing[n]).into_owned();
        let m = modes.column(n).into_owned();
        let o = crate::linalg::weighted_vdot(m.as_slice(), &weights, r.as_slice());
        if o.norm() > 1e-12 {
            let phase = o / o.norm();
            phases[n] = phase.arg();
            modes.set_column(n, &(m * phase));
        }
    }
    Ok(Intertwiner {
        reference,
        modes,
        weights,
        pairing,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{alpha_for_flux, unitary_from_preset, Preset};
    use crate::geometry::{make_mesh_with, DomainSpec, Resolution};
    use crate::linalg::haar_unitary;
    use crate::operators::{laplacian_for, ring_angles};
    use crate::spectra::eigensolve;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn ring_spectrum(eps: f64, k: usize) -> SpectralResult {
        let m = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(256)).unwrap();
        let u = unitary_from_preset(&Preset::QuasiPeriodic { alpha: alpha_for_flux(eps) }, 2).unwrap();
        eigensolve(&laplacian_for(&m, &u).unwrap(), k).unwrap()
    }

    #[test]
    fn identical_bases_give_the_identity() {
        let s = ring_spectrum(0.0, 5);
        let v = build_intertwiner(&s, &s).unwrap();
        assert!(v.phases().iter().all(|p| p.abs() < 1e-12));
        assert_eq!(v.pairing(), &[0, 1, 2, 3, 4]);
        let psi = s.nodal(3);
        let out = v.apply(&psi);
        let err = psi.iter().zip(&out).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn quasi_periodic_to_periodic_is_a_multiplication() {
        let eps = 0.25;
        let su = ring_spectrum(eps, 5);
        let s0 = ring_spectrum(0.0, 5);
        let v = build_intertwiner(&su, &s0).unwrap();
        assert!(v.unitarity_defect() < 1e-9);
        assert!(v.mode_defect() < 1e-9);
        let theta = ring_angles(su.lift.mesh());
        let mut psi = vec![C64::new(0.0, 0.0); theta.len()];
        for (n, c) in [(0, C64::new(0.6, 0.1)), (2, C64::new(-0.3, 0.5)), (4, C64::new(0.2, 0.0))] {
            for (p, q) in psi.iter_mut().zip(v.mode(n)) {
                *p += c * q;
            }
        }
        let out = v.apply(&psi);
        for j in 1..theta.len() - 1 {
            let expect = (C64::from_polar(1.0, -eps * theta[j]) * psi[j]).norm();
            assert!((out[j].norm() - expect).abs() < 1e-6, "node {j}");
        }
    }

    #[test]
    fn random_orthonormal_bases_give_a_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = ring_spectrum(0.0, 4);
        let n = base.lift.dim();
        let make = |q: DMatrix<C64>| SpectralResult {
            eigenvalues: (0..n).map(|i| i as f64).collect(),
            vectors: q,
            clusters: (0..n).map(|i| i..i + 1).collect(),
            residuals: vec![0.0; n],
            tolerance: 1e-9,
            iterations: 0,
            lift: Arc::clone(&base.lift),
        };
        let a = make(haar_unitary(n, &mut rng));
        let b = make(haar_unitary(n, &mut rng));
        let v = build_intertwiner(&a, &b).unwrap();
        assert!(v.unitarity_defect() < 1e-10);
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        assert!(matches!(
            build_intertwiner(&ring_spectrum(0.0, 3), &ring_spectrum(0.0, 4)),
            Err(Error::Dimension(_))
        ));
    }
}
