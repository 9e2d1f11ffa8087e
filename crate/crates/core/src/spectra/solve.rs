//! Lowest eigenpairs of a reduced operator.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reference::FourierReferences;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen_sorted, max_abs, normal_eigen, BorderedBanded, BorderedLu, C64, ONE};
use crate::operators::{HermitianOperator, Lift, OperatorKind, Wavefunction};

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Seed of the random start block.
    pub seed: u64,
    /// Residual at which iteration stops.
    pub tol: f64,
    /// Largest residual accepted once iteration stagnates.
    pub accept: f64,
    pub max_iter: usize,
    /// Reduced dimension up to which a dense solve is used.
    pub dense_limit: usize,
    /// Relative width of a degeneracy cluster: `|a - b| <= rel * max(1, |a|)`.
    pub cluster_rel: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            tol: 1e-10,
            accept: 1e-9,
            max_iter: 400,
            dense_limit: 200,
            cluster_rel: 1e-6,
        }
    }
}

/// Lowest eigenpairs, ascending, with orthonormal reduced eigenvectors.
#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    /// Reduced eigenvectors as columns.
    pub vectors: DMatrix<C64>,
    /// Index ranges of degeneracy clusters, covering `0..len`.
    pub clusters: Vec<std::ops::Range<usize>>,
    /// `|K v - lambda M v| / |v|` per pair.
    pub residuals: Vec<f64>,
    /// Largest residual the solver accepts for this operator: the requested
    /// tolerance, raised to a roundoff floor proportional to `|K|`.
    pub tolerance: f64,
    pub iterations: usize,
    pub lift: Arc<Lift>,
}

impl SpectralResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn nodal(&self, j: usize) -> Vec<C64> {
        self.lift.apply(&self.vectors.column(j).into_owned())
    }

    /// All eigenvectors as node values, one column per mode.
    pub fn nodal_matrix(&self) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.lift.mesh().n_nodes(), self.len());
        for j in 0..self.len() {
            out.set_column(j, &DVector::from_vec(self.nodal(j)));
        }
        out
    }

    pub fn wavefunction(&self, j: usize) -> Wavefunction {
        Wavefunction::new(self.vectors.column(j).into_owned(), self.lift.clone())
            .expect("eigenvector matches its lift")
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_degeneracy(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).max().unwrap_or(0)
    }

    /// Cluster sizes in ascending order of eigenvalue.
    pub fn degeneracies(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.len()).collect()
    }

    /// `max |<v_i, M v_j> - delta_ij|`
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.adjoint() * &self.vectors;
        max_abs(&(g - DMatrix::identity(self.len(), self.len())))
    }
}

pub fn clusters(values: &[f64], rel: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || values[i] - values[i - 1] > rel * values[i - 1].abs().max(1.0);
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// The `k` lowest eigenpairs of `op` with default options.
pub fn eigensolve(op: &HermitianOperator, k: usize) -> Result<SpectralResult> {
    eigensolve_with(op, k, &SolveOptions::default())
}

pub fn eigensolve_with(op: &HermitianOperator, k: usize, opts: &SolveOptions) -> Result<SpectralResult> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "requested {k} eigenpairs of an operator of dimension {n}"
        )));
    }
    let p = n.min(k + k.max(8));
    let floor = roundoff_floor(op.stiffness());
    let scaled = SolveOptions {
        tol: opts.tol.max(floor),
        accept: opts.accept.max(4.0 * floor),
        ..opts.clone()
    };
    let (values, vectors, iterations) = if n <= opts.dense_limit || 2 * p >= n {
        let (vals, vecs) = hermitian_eigen_sorted(&op.stiffness().to_dense());
        (vals, vecs, 0)
    } else {
        subspace_iteration(op.stiffness(), k, p, &scaled)?
    };
    finish(op, values, vectors, k, iterations, &scaled)
}

/// Keeps the `k` lowest pairs, completing a cluster cut at `k` for the
/// gauge convention, then fixes phases and degenerate bases.
fn finish(
    op: &HermitianOperator,
    values: Vec<f64>,
    vectors: DMatrix<C64>,
    k: usize,
    iterations: usize,
    opts: &SolveOptions,
) -> Result<SpectralResult> {
    let all = clusters(&values, opts.cluster_rel);
    let span = all.iter().find(|c| c.contains(&(k - 1))).map(|c| c.end).unwrap_or(k);
    let mut vecs = vectors.columns(0, span).into_owned();
    let refs = FourierReferences::new(op.lift(), span + 16);
    align(&refs, &mut vecs, &all);
    let vals: Vec<f64> = values[..k].to_vec();
    let vecs = vecs.columns(0, k).into_owned();
    let residuals = residuals(op.stiffness(), &vecs, &vals);
    Ok(SpectralResult {
        clusters: clusters(&vals, opts.cluster_rel),
        eigenvalues: vals,
        vectors: vecs,
        residuals,
        tolerance: opts.accept,
        iterations,
        lift: op.lift().clone(),
    })
}

fn align(refs: &FourierReferences, vecs: &mut DMatrix<C64>, groups: &[std::ops::Range<usize>]) {
    let cols = vecs.ncols();
    for g in groups.iter().filter(|g| g.start < cols) {
        if g.len() == 1 {
            refs.fix_phase(&mut vecs.column_mut(g.start));
        } else {
            let block = vecs.columns(g.start, g.len()).into_owned();
            let rotated = refs.align_cluster(&block);
            vecs.columns_mut(g.start, g.len()).copy_from(&rotated);
        }
    }
}

/// Residual level reachable in double precision for a matrix of this size.
fn roundoff_floor(k: &BorderedBanded) -> f64 {
    64.0 * f64::EPSILON * k.norm_inf()
}

fn residuals(k: &BorderedBanded, vecs: &DMatrix<C64>, vals: &[f64]) -> Vec<f64> {
    let kv = k.matmul(vecs);
    (0..vals.len())
        .map(|j| {
            let r = kv.column(j) - vecs.column(j) * C64::new(vals[j], 0.0);
            r.norm() / vecs.column(j).norm()
        })
        .collect()
}

fn factor_below(k: &BorderedBanded, mut sigma: f64) -> Result<(f64, BorderedLu)> {
    let ones = vec![1.0; k.dim()];
    for _ in 0..200 {
        if let Ok(lu) = k.shifted(C64::new(-sigma, 0.0), &ones, ONE).factor() {
            if lu.is_positive_definite() {
                return Ok((sigma, lu));
            }
        }
        sigma = 2.0 * sigma - 1.0;
    }
    Err(Error::Solver("no shift below the spectrum found".into()))
}

/// Factorization at `sigma` when exactly `below` eigenvalues lie under it.
fn try_factor(k: &BorderedBanded, sigma: f64, below: usize) -> Option<BorderedLu> {
    let ones = vec![1.0; k.dim()];
    let lu = k.shifted(C64::new(-sigma, 0.0), &ones, ONE).factor().ok()?;
    (lu.negative_count() == Some(below)).then_some(lu)
}

fn orthonormalize(y: DMatrix<C64>) -> DMatrix<C64> {
    let p = y.ncols();
    let q = y.qr().q();
    q.columns(0, p).into_owned()
}

/// Largest shift found at or below `target` with exactly `below` eigenvalues
/// under it, bisecting between the highest locked value and `target`.
fn shift_under_unlocked(k: &BorderedBanded, target: f64, locked_top: Option<f64>, below: usize) -> Option<(f64, BorderedLu)> {
    if let Some(f) = try_factor(k, target, below) {
        return Some((target, f));
    }
    let floor = locked_top?;
    let (mut lo, mut hi): (Option<(f64, BorderedLu)>, f64) = (None, target);
    for _ in 0..60 {
        let base = lo.as_ref().map_or(floor, |l| l.0);
        if let Some((l, _)) = &lo {
            if hi - l <= (0.05 * l.abs()).max(1.0) {
                break;
            }
        }
        let mid = 0.5 * (base + hi);
        let ones = vec![1.0; k.dim()];
        let f = k.shifted(C64::new(-mid, 0.0), &ones, ONE).factor().ok()?;
        match f.negative_count()? {
            c if c == below => lo = Some((mid, f)),
            c if c > below => hi = mid,
            _ => return None,
        }
    }
    lo
}

/// Removes the span of the orthonormal columns of `locked`.
fn deflate(y: &mut DMatrix<C64>, locked: &DMatrix<C64>) {
    if locked.ncols() == 0 {
        return;
    }
    for _ in 0..2 {
        let c = locked.adjoint() * &*y;
        *y -= locked * c;
    }
}

/// Shift-invert subspace iteration with Rayleigh-Ritz extraction.
///
/// Leading clusters that have converged are locked and projected out; the
/// shift then moves up to just below the lowest unlocked Ritz value, which
/// keeps the convergence ratio small when a few eigenvalues lie far below
/// the rest. A shift is only accepted when the inertia of `K - sigma`
/// shows exactly the locked eigenvalues below it.
fn subspace_iteration(k: &BorderedBanded, want: usize, p: usize, opts: &SolveOptions) -> Result<(Vec<f64>, DMatrix<C64>, usize)> {
    let n = k.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, p, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    x = orthonormalize(x);
    let (mut sigma, mut lu) = factor_below(k, -1.0)?;
    let mut locked = DMatrix::<C64>::zeros(n, 0);
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    let mut worst = f64::INFINITY;
    let assemble = |locked: &DMatrix<C64>, locked_vals: &[f64], theta: &[f64], x: &DMatrix<C64>| {
        let mut vals = locked_vals.to_vec();
        vals.extend_from_slice(theta);
        let mut cols = locked.clone().resize_horizontally(locked.ncols() + x.ncols(), C64::new(0.0, 0.0));
        cols.columns_mut(locked.ncols(), x.ncols()).copy_from(x);
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        let mut out = DMatrix::zeros(n, order.len());
        for (c, &i) in order.iter().enumerate() {
            out.set_column(c, &cols.column(i));
        }
        (sorted, out)
    };
    for it in 1..=opts.max_iter {
        let active = x.ncols();
        let mut y = DMatrix::zeros(n, active);
        for c in 0..active {
            y.set_column(c, &lu.solve(&x.column(c).into_owned()));
        }
        if !locked_vals.is_empty() {
            // the unpivoted factorization of an indefinite shift can lose
            // accuracy; one refinement step recovers it
            let r = &x - (k.matmul(&y) - &y * C64::new(sigma, 0.0));
            for c in 0..active {
                let d = lu.solve(&r.column(c).into_owned());
                let mut col = y.column_mut(c);
                col += d;
            }
        }
        deflate(&mut y, &locked);
        let q = orthonormalize(y);
        // Rayleigh-Ritz over locked and active together refreshes the locked
        // vectors, whose small errors would otherwise cap the active residuals
        let n_locked = locked.ncols();
        let mut basis = locked.clone().resize_horizontally(n_locked + active, C64::new(0.0, 0.0));
        basis.columns_mut(n_locked, active).copy_from(&q);
        let kb = k.matmul(&basis);
        let (all, c) = hermitian_eigen_sorted(&(basis.adjoint() * &kb));
        let ritz = &basis * &c;
        let kr = kb * &c;
        let all_res: Vec<f64> = (0..all.len())
            .map(|j| (kr.column(j) - ritz.column(j) * C64::new(all[j], 0.0)).norm())
            .collect();
        locked = ritz.columns(0, n_locked).into_owned();
        locked_vals = all[..n_locked].to_vec();
        x = ritz.columns(n_locked, active).into_owned();
        let theta = all[n_locked..].to_vec();
        let res = all_res[n_locked..].to_vec();
        let locked_worst = all_res[..n_locked].iter().copied().fold(0.0, f64::max);
        let mut merged = locked_vals.clone();
        merged.extend_from_slice(&theta);
        merged.sort_by(f64::total_cmp);
        let groups = clusters(&merged, opts.cluster_rel);
        let need = groups
            .iter()
            .find(|g| g.contains(&(want - 1)))
            .map(|g| g.end)
            .unwrap_or(want)
            .min(n_locked + active);
        let need_active = need.saturating_sub(n_locked);
        worst = res[..need_active].iter().copied().fold(locked_worst, f64::max);
        if worst <= opts.tol {
            let (vals, vecs) = assemble(&locked, &locked_vals, &theta, &x);
            return Ok((vals, vecs, it));
        }
        if worst < 0.5 * best {
            best = worst;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 8 && worst <= opts.accept {
                let (vals, vecs) = assemble(&locked, &locked_vals, &theta, &x);
                return Ok((vals, vecs, it));
            }
        }
        // lock leading clusters of the active block that have converged,
        // keeping enough active columns to finish
        let active_groups = clusters(&theta, opts.cluster_rel);
        let mut lock = 0;
        for g in &active_groups {
            if g.end >= need_active || active - g.end < p / 2 || !res[g.clone()].iter().all(|&r| r <= opts.tol) {
                break;
            }
            lock = g.end;
        }
        if lock > 0 {
            let cols = locked.ncols();
            locked = locked.resize_horizontally(cols + lock, C64::new(0.0, 0.0));
            locked.columns_mut(cols, lock).copy_from(&x.columns(0, lock));
            locked_vals.extend_from_slice(&theta[..lock]);
            x = x.columns(lock, active - lock).into_owned();
            best = f64::INFINITY;
            stalled = 0;
        }
        if it == 1 || lock > 0 {
            let next = theta[lock];
            let target = next - (0.1 * next.abs()).max(1.0);
            if target > sigma {
                let floor = locked_vals.last().copied();
                if let Some((s, f)) = shift_under_unlocked(k, target, floor, locked_vals.len()) {
                    if s > sigma {
                        sigma = s;
                        lu = f;
                    }
                }
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: worst,
        target: opts.tol,
    })
}

/// Eigenmodes of the discrete momentum operator with the smallest `|lambda|`,
/// excluding grid-scale doublers.
///
/// Central differences pair every smooth mode `exp(i k x)` with a mode of
/// wave number `pi / h - k` and the same eigenvalue. The doubler is
/// recognised by a negative real part of its nearest-neighbour
/// autocorrelation `sum_j conj(phi_j) phi_{j+1}`.
pub fn momentum_modes(op: &HermitianOperator, k: usize) -> Result<SpectralResult> {
    if !matches!(op.descriptor().kind, OperatorKind::Momentum { .. }) {
        return Err(Error::Precondition("momentum_modes needs a momentum operator".into()));
    }
    let n = op.dim();
    if 2 * k > n {
        return Err(Error::Precondition(format!(
            "requested {k} momentum modes of an operator of dimension {n}"
        )));
    }
    let lift = op.lift();
    let (vals, vecs) = hermitian_eigen_sorted(&op.stiffness().to_dense());
    let shift = |a: &DVector<C64>, b: &DVector<C64>| -> C64 {
        let (fa, fb) = (lift.apply(a), lift.apply(b));
        let segs = lift.mesh().segments().expect("momentum meshes are intervals");
        segs[0]
            .nodes
            .windows(2)
            .map(|w| fa[w[0]].conj() * fb[w[1]])
            .sum::<C64>()
            * segs[0].h
    };
    let mut keep: Vec<(f64, DVector<C64>)> = Vec::new();
    for g in clusters(&vals, 1e-9) {
        let block = vecs.columns(g.start, g.len()).into_owned();
        let cols: Vec<DVector<C64>> = (0..g.len()).map(|c| block.column(c).into_owned()).collect();
        let t = DMatrix::from_fn(g.len(), g.len(), |a, b| shift(&cols[a], &cols[b]));
        let (_, basis) = normal_eigen(&t)?;
        let rotated = &block * basis;
        for c in 0..g.len() {
            let v = rotated.column(c).into_owned();
            if shift(&v, &v).re > 0.0 {
                keep.push((vals[g.start], v));
            }
        }
    }
    keep.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(a.0.total_cmp(&b.0)));
    keep.truncate(k);
    keep.sort_by(|a, b| a.0.total_cmp(&b.0));
    let eigenvalues: Vec<f64> = keep.iter().map(|e| e.0).collect();
    let mut vectors = DMatrix::zeros(n, keep.len());
    for (c, (_, v)) in keep.iter().enumerate() {
        vectors.set_column(c, v);
    }
    let refs = FourierReferences::new(lift, k + 16);
    for c in 0..vectors.ncols() {
        refs.fix_phase(&mut vectors.column_mut(c));
    }
    let residuals = residuals(op.stiffness(), &vectors, &eigenvalues);
    Ok(SpectralResult {
        clusters: clusters(&eigenvalues, SolveOptions::default().cluster_rel),
        eigenvalues,
        vectors,
        residuals,
        tolerance: SolveOptions::default().accept.max(4.0 * roundoff_floor(op.stiffness())),
        iterations: 0,
        lift: lift.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{alpha_for_flux, unitary_from_preset, BoundaryUnitary, Preset};
    use crate::geometry::{make_mesh, make_mesh_with, DomainSpec, Resolution};
    use crate::operators::{assemble_momentum, laplacian_for};
    use std::f64::consts::PI;

    fn interval_op(preset: Preset, n: usize) -> HermitianOperator {
        let m = make_mesh(&DomainSpec::unit_interval(), n).unwrap();
        laplacian_for(&m, &unitary_from_preset(&preset, 2).unwrap()).unwrap()
    }

    #[test]
    fn cluster_grouping() {
        let c = clusters(&[0.0, 1.0, 1.0 + 1e-9, 4.0], 1e-6);
        assert_eq!(c, vec![0..1, 1..3, 3..4]);
    }

    #[test]
    fn dirichlet_unit_interval() {
        let op = interval_op(Preset::Dirichlet, 1000);
        let r = eigensolve(&op, 3).unwrap();
        for (j, lam) in r.eigenvalues.iter().enumerate() {
            let exact = ((j + 1) as f64 * PI).powi(2);
            assert!((lam - exact).abs() / exact < 1e-3);
        }
        assert!(r.max_residual() <= r.tolerance, "{:?}", r.residuals);
        assert!(r.orthonormality_defect() < 1e-10);
        assert!(r.iterations > 0);
    }

    #[test]
    fn neumann_ground_state_is_constant() {
        let op = interval_op(Preset::Neumann, 400);
        let r = eigensolve(&op, 2).unwrap();
        assert!(r.eigenvalues[0].abs() < 1e-9);
        let phi = r.nodal(0);
        let spread = phi.iter().map(|z| (z - phi[0]).norm()).fold(0.0, f64::max);
        assert!(spread < 1e-8);
        // phase convention: positive real
        assert!(phi[0].re > 0.0 && phi[0].im.abs() < 1e-10);
    }

    #[test]
    fn dense_and_iterative_routes_agree() {
        let op = interval_op(Preset::Periodic, 300);
        let it = eigensolve(&op, 5).unwrap();
        let dense = eigensolve_with(&op, 5, &SolveOptions { dense_limit: 10_000, ..Default::default() }).unwrap();
        for j in 0..5 {
            assert!((it.eigenvalues[j] - dense.eigenvalues[j]).abs() < 1e-8);
        }
        // the gauge convention makes the vectors agree too
        assert!(max_abs(&(it.vectors.clone() - dense.vectors.clone())) < 1e-6);
        assert_eq!(it.degeneracies(), vec![1, 2, 2]);
    }

    #[test]
    fn output_is_deterministic() {
        let op = interval_op(Preset::Periodic, 300);
        let a = eigensolve(&op, 4).unwrap();
        let b = eigensolve(&op, 4).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn quasi_periodic_flux_quarter() {
        let m = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(2000)).unwrap();
        let u = unitary_from_preset(&Preset::QuasiPeriodic { alpha: alpha_for_flux(0.25) }, 2).unwrap();
        let r = eigensolve(&laplacian_for(&m, &u).unwrap(), 4).unwrap();
        for (lam, exact) in r.eigenvalues.iter().zip([0.0625, 0.5625, 1.5625, 3.0625]) {
            assert!((lam - exact).abs() / exact < 1e-3);
        }
        assert!(r.max_residual() <= r.tolerance);
    }

    #[test]
    fn robin_spectrum_below_zero_is_found() {
        // U = e^{i theta} I with theta in (-pi, 0): A = -tan(theta/2) > 0
        let theta = -2.5;
        let u = BoundaryUnitary::new(DMatrix::identity(2, 2) * C64::from_polar(1.0, theta)).unwrap();
        let m = make_mesh(&DomainSpec::unit_interval(), 400).unwrap();
        let op = laplacian_for(&m, &u).unwrap();
        let r = eigensolve(&op, 3).unwrap();
        let dense = hermitian_eigen_sorted(&op.stiffness().to_dense()).0;
        assert!(r.eigenvalues[0] < 0.0);
        for j in 0..3 {
            assert!((r.eigenvalues[j] - dense[j]).abs() < 1e-7 * dense[j].abs().max(1.0));
        }
    }

    #[test]
    fn momentum_low_modes() {
        let m = make_mesh(&DomainSpec::unit_interval(), 200).unwrap();
        let r = momentum_modes(&assemble_momentum(&m, 0.0).unwrap(), 3).unwrap();
        let tol = 2e-3 * 2.0 * PI;
        assert!(r.eigenvalues[1].abs() < 1e-9);
        assert!((r.eigenvalues[0] + 2.0 * PI).abs() < tol);
        assert!((r.eigenvalues[2] - 2.0 * PI).abs() < tol);
        let r = momentum_modes(&assemble_momentum(&m, PI / 2.0).unwrap(), 2).unwrap();
        assert!((r.eigenvalues[1] - PI / 2.0).abs() < 1e-3);
        assert!((r.eigenvalues[0] - (PI / 2.0 - 2.0 * PI)).abs() < 1e-2);
    }

    #[test]
    fn too_many_modes_is_a_precondition_error() {
        let op = interval_op(Preset::Dirichlet, 10);
        assert!(matches!(eigensolve(&op, 50), Err(Error::Precondition(_))));
    }
}
