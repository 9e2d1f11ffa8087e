//! Numerical proxies for the regularity hypotheses along a path.

use nalgebra::DMatrix;
use serde::Serialize;

use super::flow::{spectral_flow, FlowResult};
use super::reference::{nodal_mode, FourierLabel};
use crate::boundary::BCPath;
use crate::error::Result;
use crate::geometry::{BoundaryOps, Layout, Mesh};
use crate::linalg::{weighted_vdot, C64};

/// Derivatives of a family of matrix elements along the path.
#[derive(Clone, Debug, Serialize)]
pub struct DerivativeProxy {
    /// Max over probe pairs of `|d/ds|` per sample.
    pub first: Vec<f64>,
    /// Max over probe pairs of `|d^2/ds^2|` per sample.
    pub second: Vec<f64>,
    pub max_first: f64,
    pub max_second: f64,
    /// Samples where a derivative exceeds ten times its median.
    pub spikes: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub samples: Vec<f64>,
    /// Largest degeneracy per sample.
    pub max_degeneracy: Vec<usize>,
    pub max_degeneracy_overall: usize,
    /// `max_n lambda_n(s) / max(lambda_n(0), 1)` per sample.
    pub growth_ratio: Vec<f64>,
    pub max_growth_ratio: f64,
    /// Matrix elements `<psi, V_s^dag phi>`.
    pub intertwiner: DerivativeProxy,
    /// Matrix elements `<psi, V_s H_s V_s^dag phi>`.
    pub hamiltonian: DerivativeProxy,
    /// `min_s lambda_min(s)`
    pub min_lowest: f64,
    pub gap_profile: Vec<(f64, f64)>,
    pub min_gap: f64,
}

/// Runs the spectral flow and derives the report from it.
pub fn path_hypothesis_report(path: &BCPath, mesh: &Mesh, bops: &BoundaryOps, k: usize, steps: usize) -> Result<HypothesisReport> {
    let flow = spectral_flow(path, mesh, bops, k, steps)?;
    Ok(hypothesis_report_from_flow(&flow, mesh))
}

/// Fixed probe functions: the three lowest plane waves.
fn probes(mesh: &Mesh) -> Vec<Vec<C64>> {
    let labels = match mesh.layout() {
        Layout::Intervals(_) => vec![FourierLabel::Line(0), FourierLabel::Line(1), FourierLabel::Line(-1)],
        Layout::Rectangle { .. } => vec![FourierLabel::Plane(0, 0), FourierLabel::Plane(1, 0), FourierLabel::Plane(0, 1)],
    };
    labels
        .into_iter()
        .map(|l| {
            let f = nodal_mode(mesh, l);
            let norm = mesh.inner(&f, &f).re.sqrt();
            f.into_iter().map(|z| z / norm).collect()
        })
        .collect()
}

pub fn hypothesis_report_from_flow(flow: &FlowResult, mesh: &Mesh) -> HypothesisReport {
    let w = &flow.weights;
    let k = flow.k();
    let n_s = flow.samples.len();
    let probes = probes(mesh);
    let coeff = |basis: &DMatrix<C64>, f: &[C64]| -> Vec<C64> {
        (0..k)
            .map(|n| {
                let col: Vec<C64> = basis.column(n).iter().copied().collect();
                weighted_vdot(&col, w, f)
            })
            .collect()
    };
    // <phi_0^n, phi> for each probe phi, and <psi, phi_s^n> per sample
    let reference: Vec<Vec<C64>> = probes.iter().map(|f| coeff(&flow.tracked[0], f)).collect();
    let mut inter = Vec::new();
    let mut ham = Vec::new();
    for (a, psi) in probes.iter().enumerate() {
        for b in 0..probes.len() {
            let mut vi = Vec::with_capacity(n_s);
            let mut vh = Vec::with_capacity(n_s);
            for i in 0..n_s {
                let over: Vec<C64> = coeff(&flow.tracked[i], psi).into_iter().map(|z| z.conj()).collect();
                let mut e = C64::new(0.0, 0.0);
                let mut h = C64::new(0.0, 0.0);
                for n in 0..k {
                    e += over[n] * reference[b][n];
                    h += reference[a][n].conj() * reference[b][n] * flow.curves[n][i];
                }
                vi.push(e);
                vh.push(h);
            }
            inter.push(vi);
            ham.push(vh);
        }
    }
    let base: Vec<f64> = flow.sorted[0].iter().map(|l| l.max(1.0)).collect();
    let growth_ratio: Vec<f64> = flow
        .sorted
        .iter()
        .map(|row| row.iter().zip(&base).map(|(l, b)| l / b).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let min_lowest = flow.sorted.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
    HypothesisReport {
        samples: flow.samples.clone(),
        max_degeneracy_overall: flow.degeneracy.iter().copied().max().unwrap_or(0),
        max_degeneracy: flow.degeneracy.clone(),
        max_growth_ratio: growth_ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        growth_ratio,
        intertwiner: derivative_proxy(&flow.samples, &inter),
        hamiltonian: derivative_proxy(&flow.samples, &ham),
        min_lowest,
        gap_profile: flow.gap_profile.clone(),
        min_gap: flow.min_gap,
    }
}

/// First and second derivatives on a nonuniform grid by three-point formulas.
pub fn nonuniform_derivatives(s: &[f64], f: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let n = s.len();
    let mut d1 = vec![C64::new(0.0, 0.0); n];
    let mut d2 = vec![C64::new(0.0, 0.0); n];
    if n < 2 {
        return (d1, d2);
    }
    if n == 2 {
        let d = (f[1] - f[0]) / (s[1] - s[0]);
        return (vec![d, d], d2);
    }
    let three = |i0: usize, at: f64| -> (C64, C64) {
        let (x0, x1, x2) = (s[i0], s[i0 + 1], s[i0 + 2]);
        let (f0, f1, f2) = (f[i0], f[i0 + 1], f[i0 + 2]);
        // derivative of the interpolating parabola at `at`
        let l0 = (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1));
        let first = f0 * l0 + f1 * l1 + f2 * l2;
        let second = f0 * (2.0 / ((x0 - x1) * (x0 - x2))) + f1 * (2.0 / ((x1 - x0) * (x1 - x2))) + f2 * (2.0 / ((x2 - x0) * (x2 - x1)));
        (first, second)
    };
    for i in 0..n {
        let i0 = i.saturating_sub(1).min(n - 3);
        let (a, b) = three(i0, s[i]);
        d1[i] = a;
        d2[i] = b;
    }
    (d1, d2)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        0.0
    } else {
        s[s.len() / 2]
    }
}

fn derivative_proxy(samples: &[f64], series: &[Vec<C64>]) -> DerivativeProxy {
    let n = samples.len();
    let mut first = vec![0.0f64; n];
    let mut second = vec![0.0f64; n];
    for f in series {
        let (d1, d2) = nonuniform_derivatives(samples, f);
        for i in 0..n {
            first[i] = first[i].max(d1[i].norm());
            second[i] = second[i].max(d2[i].norm());
        }
    }
    let (m1, m2) = (median(&first), median(&second));
    let spikes = (0..n)
        .filter(|&i| first[i] > (10.0 * m1).max(1e-6) || second[i] > (10.0 * m2).max(1e-6))
        .map(|i| samples[i])
        .collect();
    DerivativeProxy {
        max_first: first.iter().copied().fold(0.0, f64::max),
        max_second: second.iter().copied().fold(0.0, f64::max),
        first,
        second,
        spikes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{unitary_from_preset, Preset};
    use crate::geometry::{boundary_operators, make_mesh, make_mesh_with, DomainSpec, Resolution};

    #[test]
    fn derivatives_of_a_quadratic_are_exact() {
        let s = [0.0, 0.1, 0.25, 0.3, 0.6, 1.0];
        let f: Vec<C64> = s.iter().map(|x| C64::new(x * x, -2.0 * x)).collect();
        let (d1, d2) = nonuniform_derivatives(&s, &f);
        for i in 0..s.len() {
            assert!((d1[i] - C64::new(2.0 * s[i], -2.0)).norm() < 1e-12);
            assert!((d2[i] - C64::new(2.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn constant_path_has_vanishing_derivatives() {
        let m = make_mesh(&DomainSpec::unit_interval(), 80).unwrap();
        let b = boundary_operators(&m).unwrap();
        let path = BCPath::constant(unitary_from_preset(&Preset::Periodic, 2).unwrap(), 5).unwrap();
        let r = path_hypothesis_report(&path, &m, &b, 3, 5).unwrap();
        assert!(r.intertwiner.max_first < 1e-9 && r.hamiltonian.max_second < 1e-9);
        assert!(r.intertwiner.spikes.is_empty());
        assert!((r.max_growth_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flux_path_is_nonnegative() {
        let m = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(128)).unwrap();
        let b = boundary_operators(&m).unwrap();
        let path = BCPath::quasi_periodic_flux(0.0, 1.0, 21).unwrap();
        let r = path_hypothesis_report(&path, &m, &b, 3, 21).unwrap();
        assert!(r.min_lowest.abs() < 1e-9);
        assert!(r.intertwiner.max_first.is_finite());
    }
}
