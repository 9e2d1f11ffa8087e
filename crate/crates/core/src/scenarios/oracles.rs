//! Closed-form spectra of the standard boundary conditions.

use std::f64::consts::PI;

use super::config::{BcConfig, PresetName};
use crate::geometry::DomainSpec;
use crate::spectra::clusters;

fn lowest(mut v: Vec<f64>, k: usize) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.truncate(k);
    v
}

fn range(k: usize) -> std::ops::RangeInclusive<i64> {
    -(k as i64 + 1)..=(k as i64 + 1)
}

/// `(m pi / L)^2`, `m >= 1`.
pub fn dirichlet_interval(length: f64, k: usize) -> Vec<f64> {
    (1..=k).map(|m| (m as f64 * PI / length).powi(2)).collect()
}

/// `(m pi / L)^2`, `m >= 0`.
pub fn neumann_interval(length: f64, k: usize) -> Vec<f64> {
    (0..k).map(|m| (m as f64 * PI / length).powi(2)).collect()
}

/// `((2 pi m - alpha) / L)^2` for `m` in `Z`; `alpha = 0` is periodic.
pub fn quasi_periodic_interval(length: f64, alpha: f64, k: usize) -> Vec<f64> {
    lowest(range(k).map(|m| ((2.0 * PI * m as f64 - alpha) / length).powi(2)).collect(), k)
}

/// Disjoint circles with the given circumferences.
pub fn circles(lengths: &[f64], k: usize) -> Vec<f64> {
    lowest(lengths.iter().flat_map(|&l| quasi_periodic_interval(l, 0.0, k)).collect(), k)
}

/// `c_x (a / W)^2 + c_y (b / H)^2` over the lattice of mode indices.
fn rectangle(width: f64, height: f64, k: usize, x: (f64, bool, i64), y: (f64, bool, i64)) -> Vec<f64> {
    let axis = |(scale, full, min): (f64, bool, i64), len: f64| -> Vec<f64> {
        let r = k as i64 + 1;
        let lo = if full { -r } else { min };
        (lo..=r).map(|a| scale * (a as f64 / len).powi(2)).collect()
    };
    let ax = axis(x, width);
    let ay = axis(y, height);
    lowest(ax.iter().flat_map(|a| ay.iter().map(move |b| a + b)).collect(), k)
}

pub fn torus(width: f64, height: f64, k: usize) -> Vec<f64> {
    let c = 4.0 * PI * PI;
    rectangle(width, height, k, (c, true, 0), (c, true, 0))
}

/// Periodic in `x`, Neumann in `y`.
pub fn cylinder(width: f64, height: f64, k: usize) -> Vec<f64> {
    rectangle(width, height, k, (4.0 * PI * PI, true, 0), (PI * PI, false, 0))
}

pub fn dirichlet_rectangle(width: f64, height: f64, k: usize) -> Vec<f64> {
    rectangle(width, height, k, (PI * PI, false, 1), (PI * PI, false, 1))
}

pub fn neumann_rectangle(width: f64, height: f64, k: usize) -> Vec<f64> {
    rectangle(width, height, k, (PI * PI, false, 0), (PI * PI, false, 0))
}

/// Lowest `k` eigenvalues for a preset on a domain, when known in closed form.
pub fn reference_spectrum(bc: &BcConfig, domain: &DomainSpec, k: usize) -> Option<Vec<f64>> {
    match domain {
        DomainSpec::Intervals(iv) => {
            let lengths: Vec<f64> = iv.iter().map(|s| s[1] - s[0]).collect();
            let each = |f: &dyn Fn(f64) -> Vec<f64>| lowest(lengths.iter().flat_map(|&l| f(l)).collect(), k);
            match bc.preset {
                PresetName::Dirichlet => Some(each(&|l| dirichlet_interval(l, k))),
                PresetName::Neumann => Some(each(&|l| neumann_interval(l, k))),
                PresetName::Periodic if lengths.len() == 1 => Some(circles(&lengths, k)),
                PresetName::QuasiPeriodic if lengths.len() == 1 => {
                    let alpha = bc.alpha.unwrap_or_else(|| crate::boundary::alpha_for_flux(bc.epsilon.unwrap_or(0.0)));
                    Some(quasi_periodic_interval(lengths[0], alpha, k))
                }
                PresetName::TwoIntervalU1 if lengths.len() == 2 => Some(circles(&lengths, k)),
                PresetName::TwoIntervalU2 if lengths.len() == 2 => Some(circles(&[lengths[0] + lengths[1]], k)),
                _ => None,
            }
        }
        &DomainSpec::Rectangle { width, height } => match bc.preset {
            PresetName::Dirichlet => Some(dirichlet_rectangle(width, height, k)),
            PresetName::Neumann => Some(neumann_rectangle(width, height, k)),
            PresetName::Torus => Some(torus(width, height, k)),
            PresetName::Cylinder => Some(cylinder(width, height, k)),
            _ => None,
        },
    }
}

/// Cluster sizes of an ascending list at relative tolerance `rel`.
pub fn degeneracies(values: &[f64], rel: f64) -> Vec<usize> {
    clusters(values, rel).iter().map(|g| g.len()).collect()
}

/// `max_n |computed_n - exact_n| / max(|exact_n|, floor)`.
pub fn max_relative_error(computed: &[f64], exact: &[f64], floor: f64) -> f64 {
    computed
        .iter()
        .zip(exact)
        .map(|(c, e)| (c - e).abs() / e.abs().max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_lists() {
        let p = quasi_periodic_interval(1.0, 0.0, 5);
        let q = 4.0 * PI * PI;
        assert_eq!(p, vec![0.0, q, q, 4.0 * q, 4.0 * q]);
        let t = torus(1.0, 1.0, 9);
        assert_eq!(degeneracies(&t, 1e-9), vec![1, 4, 4]);
        assert!((t[8] - 8.0 * PI * PI).abs() < 1e-12);
        let u1 = circles(&[1.0, 1.0], 6);
        assert_eq!(degeneracies(&u1, 1e-9), vec![2, 4]);
        let u2 = circles(&[2.0], 5);
        assert_eq!(u2, vec![0.0, PI * PI, PI * PI, q, q]);
        let c = cylinder(1.0, 1.0, 3);
        assert_eq!(c, vec![0.0, PI * PI, 4.0 * PI * PI]);
        assert_eq!(neumann_interval(1.0, 2), vec![0.0, PI * PI]);
    }

    #[test]
    fn flux_spectrum() {
        // alpha = -2 pi eps on [0, 2 pi] gives (n + eps)^2
        let v = quasi_periodic_interval(2.0 * PI, crate::boundary::alpha_for_flux(0.25), 4);
        let expect = [0.0625, 0.5625, 1.5625, 3.0625];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
