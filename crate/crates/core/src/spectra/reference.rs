//! Plane-wave reference modes used to fix the gauge of computed eigenvectors.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::geometry::{Layout, Mesh};
use crate::linalg::{polar_factor, C64, ZERO};
use crate::operators::Lift;

/// Wave numbers of a reference mode.
///
/// `Line(m)` is `exp(2 pi i m xi / L)` in the arc length `xi` of all
/// segments laid end to end; `Plane(m, l)` is `exp(2 pi i (m x / W + l y / H))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FourierLabel {
    Line(i64),
    Plane(i64, i64),
}

/// 0, 1, -1, 2, -2, ...
fn signed_order(max: i64) -> Vec<i64> {
    let mut out = vec![0];
    for m in 1..=max {
        out.push(m);
        out.push(-m);
    }
    out
}

/// Reference modes projected onto the reduced space of one lift.
#[derive(Clone, Debug)]
pub struct FourierReferences {
    labels: Vec<FourierLabel>,
    /// `Z^dag M f / |f|_M`, one column per label.
    reduced: DMatrix<C64>,
}

impl FourierReferences {
    /// Candidates up to `order` in each wave number, in a fixed order.
    pub fn new(lift: &Lift, order: usize) -> Self {
        let mesh = lift.mesh();
        let labels = candidate_labels(mesh, order as i64);
        let mut reduced = DMatrix::zeros(lift.dim(), labels.len());
        for (c, label) in labels.iter().enumerate() {
            let f = nodal_mode(mesh, *label);
            let norm = mesh.inner(&f, &f).re.sqrt();
            let r = lift.restrict(&f) / C64::new(norm, 0.0);
            reduced.set_column(c, &r);
        }
        Self { labels, reduced }
    }

    pub fn labels(&self) -> &[FourierLabel] {
        &self.labels
    }

    pub fn reduced(&self) -> &DMatrix<C64> {
        &self.reduced
    }

    /// Label of the candidate with the largest overlap with `x`.
    pub fn dominant(&self, x: &nalgebra::DVectorView<C64>) -> (FourierLabel, f64) {
        let mut best = (self.labels[0], -1.0);
        for c in 0..self.labels.len() {
            let o = self.reduced.column(c).dotc(x).norm();
            if o > best.1 {
                best = (self.labels[c], o);
            }
        }
        best
    }

    /// Rotates the orthonormal columns of `v` (one degenerate cluster) onto
    /// the span of the first reference modes with a significant component in
    /// the cluster, by orthogonal Procrustes.
    pub fn align_cluster(&self, v: &DMatrix<C64>) -> DMatrix<C64> {
        let c = v.ncols();
        let proj = v.adjoint() * &self.reduced;
        let mut accepted: Vec<nalgebra::DVector<C64>> = Vec::with_capacity(c);
        let mut targets = DMatrix::zeros(c, c);
        let try_add = |p: nalgebra::DVector<C64>, targets: &mut DMatrix<C64>, accepted: &mut Vec<_>| {
            let mut r = p.clone();
            for e in accepted.iter() {
                let e: &nalgebra::DVector<C64> = e;
                r -= e * e.dotc(&r);
            }
            let norm = r.norm();
            if norm > 0.1 {
                targets.set_column(accepted.len(), &p);
                accepted.push(r / C64::new(norm, 0.0));
            }
        };
        for m in 0..proj.ncols() {
            if accepted.len() == c {
                break;
            }
            try_add(proj.column(m).into_owned(), &mut targets, &mut accepted);
        }
        for i in 0..c {
            if accepted.len() == c {
                break;
            }
            let e = nalgebra::DVector::from_fn(c, |r, _| if r == i { C64::new(1.0, 0.0) } else { ZERO });
            try_add(e, &mut targets, &mut accepted);
        }
        v * polar_factor(&targets)
    }

    /// Multiplies `x` by the phase that makes its overlap with the first
    /// near-dominant reference real and positive.
    pub fn fix_phase(&self, x: &mut nalgebra::DVectorViewMut<C64>) {
        let overlaps: Vec<C64> = (0..self.labels.len())
            .map(|c| self.reduced.column(c).dotc(&*x))
            .collect();
        let max = overlaps.iter().map(|o| o.norm()).fold(0.0, f64::max);
        let pick = if max > 1e-8 {
            overlaps.iter().copied().find(|o| o.norm() >= 0.99 * max)
        } else {
            // no reference overlap: use the largest entry instead
            let big = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
            x.iter().copied().find(|z| z.norm() >= 0.99 * big).map(|z| z.conj())
        };
        if let Some(o) = pick {
            if o.norm() > 0.0 {
                let phase = o.conj() / o.norm();
                for z in x.iter_mut() {
                    *z *= phase;
                }
            }
        }
    }
}

fn candidate_labels(mesh: &Mesh, order: i64) -> Vec<FourierLabel> {
    match mesh.layout() {
        Layout::Intervals(_) => signed_order(order).into_iter().map(FourierLabel::Line).collect(),
        Layout::Rectangle { .. } => {
            let ord = signed_order(order);
            let mut pairs: Vec<(usize, usize)> = (0..ord.len())
                .flat_map(|a| (0..ord.len()).map(move |b| (a, b)))
                .collect();
            pairs.sort_by_key(|&(a, b)| (ord[a] * ord[a] + ord[b] * ord[b], a, b));
            pairs
                .into_iter()
                .map(|(a, b)| FourierLabel::Plane(ord[a], ord[b]))
                .collect()
        }
    }
}

/// Node values of a reference mode.
pub fn nodal_mode(mesh: &Mesh, label: FourierLabel) -> Vec<C64> {
    match (mesh.layout(), label) {
        (Layout::Intervals(_), FourierLabel::Line(m)) => {
            let xi = mesh.arc_length().expect("interval mesh");
            let k = 2.0 * PI * m as f64 / mesh.volume();
            xi.iter().map(|&x| C64::from_polar(1.0, k * x)).collect()
        }
        (Layout::Rectangle { width, height, .. }, FourierLabel::Plane(m, l)) => {
            let (kx, ky) = (2.0 * PI * m as f64 / width, 2.0 * PI * l as f64 / height);
            mesh.sample(|x, y| C64::from_polar(1.0, kx * x + ky * y))
        }
        _ => vec![ZERO; mesh.n_nodes()],
    }
}
