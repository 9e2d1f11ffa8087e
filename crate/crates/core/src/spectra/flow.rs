//! Eigenvalue curves along a path of boundary conditions.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::reference::{FourierLabel, FourierReferences};
use super::solve::{clusters, eigensolve_with, SolveOptions, SpectralResult};
use crate::boundary::{cayley_decompose, spectral_gap, BCPath, PHASE_SNAP_TOL};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryOps, Mesh};
use crate::linalg::{polar_factor, weighted_inner, C64};
use crate::operators::assemble_laplacian;

#[derive(Clone, Debug)]
pub struct FlowOptions {
    /// Extra eigenpairs solved beyond the tracked ones, so curves can be
    /// followed when they leave the lowest `k`.
    pub extra: usize,
    /// Best overlap below which a step is halved.
    pub overlap_threshold: f64,
    pub max_halvings: usize,
    pub solve: SolveOptions,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            extra: 4,
            overlap_threshold: 0.9,
            max_halvings: 6,
            solve: SolveOptions::default(),
        }
    }
}

/// Two tracked curves that exchange order between `s_from` and `s_to`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Crossing {
    /// Curve below before the crossing.
    pub lower: usize,
    pub upper: usize,
    pub s_from: f64,
    pub s_to: f64,
    /// Linear estimate of the crossing point.
    pub s_estimate: f64,
    pub energy: f64,
    pub min_separation: f64,
    /// False for curves that touch (within the cluster tolerance) without
    /// exchanging order.
    pub exchanged: bool,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub samples: Vec<f64>,
    /// `curves[c][i]`: eigenvalue of tracked curve `c` at sample `i`.
    /// Curves are numbered by their rank at the first sample.
    pub curves: Vec<Vec<f64>>,
    /// Lowest `k` eigenvalues at each sample in ascending order.
    pub sorted: Vec<Vec<f64>>,
    /// `steps[i][r]`: rank at sample `i + 1` of the curve with rank `r` at
    /// sample `i`, for the tracked curves.
    pub steps: Vec<Vec<(usize, usize)>>,
    /// Rank at the last sample of each curve.
    pub total_permutation: Vec<usize>,
    pub crossings: Vec<Crossing>,
    /// Largest `|dlambda/ds|` between samples over all curves.
    pub lipschitz: f64,
    /// `(s, gap of U(s))` at each sample.
    pub gap_profile: Vec<(f64, f64)>,
    pub min_gap: f64,
    pub min_ground: f64,
    /// Smallest best-overlap accepted between consecutive samples.
    pub min_overlap: f64,
    /// Samples inserted by step halving.
    pub refinements: usize,
    /// Largest degeneracy at each sample.
    pub degeneracy: Vec<usize>,
    pub start_labels: Vec<Option<FourierLabel>>,
    pub end_labels: Vec<Option<FourierLabel>>,
    /// Common shift of line labels from start to end, when every curve has
    /// a label at both ends and they agree.
    pub label_shift: Option<i64>,
    /// Tracked node values, `n_nodes x k`, per sample.
    pub tracked: Vec<DMatrix<C64>>,
    /// Node values of the instantaneous lowest mode per sample.
    pub ground: Vec<Vec<C64>>,
    pub weights: Vec<f64>,
    /// Flux at each sample when the path is a flux path.
    pub fluxes: Option<Vec<f64>>,
}

impl FlowResult {
    pub fn k(&self) -> usize {
        self.curves.len()
    }

    pub fn permutations_are_injective(&self) -> bool {
        self.steps.iter().all(|step| {
            let mut seen: Vec<usize> = step.iter().map(|&(_, b)| b).collect();
            seen.sort_unstable();
            seen.windows(2).all(|w| w[0] != w[1])
        })
    }

    pub fn total_is_identity(&self) -> bool {
        self.total_permutation.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Curve `c` as node values at sample `i`.
    pub fn tracked_vector(&self, c: usize, i: usize) -> Vec<C64> {
        self.tracked[i].column(c).iter().copied().collect()
    }

    /// Curve exchanges (not touches) in order of `s`.
    pub fn exchanges(&self) -> impl Iterator<Item = &Crossing> {
        self.crossings.iter().filter(|c| c.exchanged)
    }
}

struct Sample {
    result: SpectralResult,
    nodal: DMatrix<C64>,
    gap: f64,
}

fn solve_at(path: &BCPath, mesh: &Mesh, bops: &BoundaryOps, s: f64, count: usize, opts: &SolveOptions) -> Result<Sample> {
    let inner = || -> Result<Sample> {
        let u = path.at(s)?;
        let bc = cayley_decompose(&u, PHASE_SNAP_TOL)?;
        let op = assemble_laplacian(mesh, bops, &bc)?;
        let result = eigensolve_with(&op, count.min(op.dim()), opts)?;
        let nodal = result.nodal_matrix();
        Ok(Sample {
            result,
            nodal,
            gap: spectral_gap(&u).gap,
        })
    };
    inner().map_err(|e| Error::FlowStep { s, source: Box::new(e) })
}

/// Curves along `steps` equally spaced samples of `path`.
pub fn spectral_flow(path: &BCPath, mesh: &Mesh, bops: &BoundaryOps, k: usize, steps: usize) -> Result<FlowResult> {
    if steps < 2 {
        return Err(Error::Precondition(format!("spectral flow needs at least 2 steps, got {steps}")));
    }
    let grid: Vec<f64> = (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect();
    spectral_flow_samples(path, mesh, bops, k, &grid, &FlowOptions::default())
}

/// Curves along an explicit increasing grid of path parameters.
pub fn spectral_flow_samples(
    path: &BCPath,
    mesh: &Mesh,
    bops: &BoundaryOps,
    k: usize,
    grid: &[f64],
    opts: &FlowOptions,
) -> Result<FlowResult> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("flow samples must be strictly increasing, at least 2".into()));
    }
    if k == 0 {
        return Err(Error::Precondition("flow needs at least one curve".into()));
    }
    let count = k + opts.extra;
    let cluster_rel = opts.solve.cluster_rel;
    let w = mesh.weights().to_vec();

    let first = solve_at(path, mesh, bops, grid[0], count, &opts.solve)?;
    if first.result.len() < k {
        return Err(Error::Precondition(format!("only {} modes available, {k} requested", first.result.len())));
    }
    let mut tracked = first.nodal.columns(0, k).into_owned();
    let mut ranks: Vec<usize> = (0..k).collect();
    let mut out = FlowResult {
        samples: vec![grid[0]],
        curves: (0..k).map(|c| vec![first.result.eigenvalues[c]]).collect(),
        sorted: vec![first.result.eigenvalues[..k].to_vec()],
        steps: Vec::new(),
        total_permutation: Vec::new(),
        crossings: Vec::new(),
        lipschitz: 0.0,
        gap_profile: vec![(grid[0], first.gap)],
        min_gap: first.gap,
        min_ground: first.result.eigenvalues[0],
        min_overlap: 1.0,
        refinements: 0,
        degeneracy: vec![first.result.max_degeneracy()],
        start_labels: labels(&first, &tracked, &w),
        end_labels: Vec::new(),
        label_shift: None,
        tracked: vec![tracked.clone()],
        ground: vec![first.nodal.column(0).iter().copied().collect()],
        weights: w.clone(),
        fluxes: None,
    };
    let mut last = first;

    let mut stack: Vec<(f64, usize)> = grid[1..].iter().rev().map(|&s| (s, 0)).collect();
    let mut cache: Vec<(f64, Sample)> = Vec::new();
    while let Some((s, depth)) = stack.pop() {
        let sample = match cache.iter().position(|(cs, _)| *cs == s) {
            Some(i) => cache.swap_remove(i).1,
            None => solve_at(path, mesh, bops, s, count, &opts.solve)?,
        };
        let mut nodal = sample.nodal.clone();
        align_new_clusters(&mut nodal, &sample.result.eigenvalues, cluster_rel, &tracked, &w);
        let mut overlaps = weighted_inner(&tracked, &w, &nodal);
        let assignment = greedy_match(&overlaps);
        realign_degenerate_tracked(&mut tracked, &mut overlaps, &assignment, &ranks, &last.result.eigenvalues, cluster_rel);
        let worst = assignment
            .iter()
            .enumerate()
            .map(|(c, &j)| overlaps[(c, j)].norm())
            .fold(1.0, f64::min);
        if worst < opts.overlap_threshold && depth < opts.max_halvings {
            let s_prev = *out.samples.last().expect("non-empty");
            stack.push((s, depth + 1));
            stack.push((0.5 * (s_prev + s), depth + 1));
            out.refinements += 1;
            cache.push((s, sample));
            continue;
        }
        out.min_overlap = out.min_overlap.min(worst);
        let s_prev = *out.samples.last().expect("non-empty");
        let mut next = DMatrix::zeros(tracked.nrows(), k);
        let mut step = Vec::with_capacity(k);
        for (c, &j) in assignment.iter().enumerate() {
            let o = overlaps[(c, j)];
            let phase = if o.norm() > 0.0 { o.conj() / o.norm() } else { C64::new(1.0, 0.0) };
            next.set_column(c, &(nodal.column(j) * phase));
            let lam = sample.result.eigenvalues[j];
            let prev = *out.curves[c].last().expect("non-empty");
            out.lipschitz = out.lipschitz.max((lam - prev).abs() / (s - s_prev));
            out.curves[c].push(lam);
            step.push((ranks[c], j));
            ranks[c] = j;
        }
        out.steps.push(step);
        tracked = next;
        out.samples.push(s);
        out.sorted.push(sample.result.eigenvalues[..k].to_vec());
        out.gap_profile.push((s, sample.gap));
        out.min_gap = out.min_gap.min(sample.gap);
        out.min_ground = out.min_ground.min(sample.result.eigenvalues[0]);
        out.degeneracy.push(sample.result.max_degeneracy());
        out.tracked.push(tracked.clone());
        out.ground.push(sample.nodal.column(0).iter().copied().collect());
        last = sample;
    }
    out.total_permutation = ranks;
    out.end_labels = labels(&last, &tracked, &w);
    out.label_shift = label_shift(&out.start_labels, &out.end_labels);
    out.fluxes = out.samples.iter().map(|&s| path.flux_at(s)).collect();
    out.crossings = find_crossings(&out.samples, &out.curves, cluster_rel);
    Ok(out)
}

/// Rotates each degenerate cluster of the new sample onto the previous
/// tracked vectors it overlaps most. Directions no tracked vector reaches
/// keep their reference gauge.
fn align_new_clusters(nodal: &mut DMatrix<C64>, values: &[f64], rel: f64, tracked: &DMatrix<C64>, w: &[f64]) {
    for g in clusters(values, rel).into_iter().filter(|g| g.len() > 1) {
        let c = g.len();
        let block = nodal.columns(g.start, c).into_owned();
        let proj = weighted_inner(&block, w, tracked);
        let mut order: Vec<usize> = (0..tracked.ncols()).collect();
        // norms equal to roundoff keep index order
        order.sort_by_key(|&t| ((-proj.column(t).norm() * 1e8).round() as i64, t));
        let candidates = order
            .into_iter()
            .map(|t| proj.column(t).into_owned())
            .chain((0..c).map(|i| DVector::from_fn(c, |r, _| if r == i { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })));
        let mut basis: Vec<DVector<C64>> = Vec::with_capacity(c);
        let mut target = DMatrix::zeros(c, c);
        for p in candidates {
            if basis.len() == c {
                break;
            }
            let mut r = p.clone();
            for e in &basis {
                r -= e * e.dotc(&r);
            }
            let norm = r.norm();
            if norm > 0.1 {
                target.set_column(basis.len(), &p);
                basis.push(r / C64::new(norm, 0.0));
            }
        }
        let rotated = &block * polar_factor(&target);
        nodal.columns_mut(g.start, c).copy_from(&rotated);
    }
}

/// Curves leaving a degenerate cluster of the previous sample may use any
/// basis of its span: rotates them onto their matched new vectors.
fn realign_degenerate_tracked(
    tracked: &mut DMatrix<C64>,
    overlaps: &mut DMatrix<C64>,
    assignment: &[usize],
    ranks: &[usize],
    prev_values: &[f64],
    rel: f64,
) {
    for g in clusters(prev_values, rel).into_iter().filter(|g| g.len() > 1) {
        let members: Vec<usize> = (0..ranks.len()).filter(|&c| g.contains(&ranks[c])).collect();
        let m = members.len();
        if m < 2 {
            continue;
        }
        let b = DMatrix::from_fn(m, m, |a, c| overlaps[(members[a], assignment[members[c]])]);
        let r = polar_factor(&b);
        let block = DMatrix::from_fn(tracked.nrows(), m, |i, a| tracked[(i, members[a])]);
        let old = DMatrix::from_fn(m, overlaps.ncols(), |a, j| overlaps[(members[a], j)]);
        let rotated = &block * &r;
        // rows of the overlap matrix rotate the same way
        let new_rows = r.adjoint() * old;
        for (a, &c) in members.iter().enumerate() {
            tracked.set_column(c, &rotated.column(a));
            overlaps.set_row(c, &new_rows.row(a));
        }
    }
}

/// For each row, a distinct column: repeatedly takes the largest remaining
/// `|overlap|`.
fn greedy_match(overlaps: &DMatrix<C64>) -> Vec<usize> {
    let (rows, cols) = overlaps.shape();
    let mut entries: Vec<(f64, usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| (overlaps[(r, c)].norm(), r, c))
        .collect();
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut row_done = vec![false; rows];
    let mut col_done = vec![false; cols];
    let mut out = vec![usize::MAX; rows];
    for (_, r, c) in entries {
        if !row_done[r] && !col_done[c] {
            row_done[r] = true;
            col_done[c] = true;
            out[r] = c;
        }
    }
    out
}

fn labels(sample: &Sample, tracked: &DMatrix<C64>, w: &[f64]) -> Vec<Option<FourierLabel>> {
    let lift = &sample.result.lift;
    let refs = FourierReferences::new(lift, tracked.ncols() + 8);
    (0..tracked.ncols())
        .map(|c| {
            let col: Vec<C64> = tracked.column(c).iter().copied().collect();
            let x = lift.restrict(&col);
            let norm = crate::linalg::weighted_vdot(&col, w, &col).re.sqrt();
            let (label, overlap) = refs.dominant(&x.as_view());
            (overlap > 0.5 * norm).then_some(label)
        })
        .collect()
}

fn label_shift(start: &[Option<FourierLabel>], end: &[Option<FourierLabel>]) -> Option<i64> {
    let mut shift = None;
    for (a, b) in start.iter().zip(end) {
        match (a, b) {
            (Some(FourierLabel::Line(a)), Some(FourierLabel::Line(b))) => {
                let d = b - a;
                match shift {
                    None => shift = Some(d),
                    Some(s) if s != d => return None,
                    _ => {}
                }
            }
            _ => return None,
        }
    }
    shift
}

fn find_crossings(samples: &[f64], curves: &[Vec<f64>], rel: f64) -> Vec<Crossing> {
    let mut out = Vec::new();
    let n = samples.len();
    for a in 0..curves.len() {
        for b in (a + 1)..curves.len() {
            let d: Vec<f64> = (0..n).map(|i| curves[a][i] - curves[b][i]).collect();
            let tol = |i: usize| rel * curves[a][i].abs().max(curves[b][i].abs()).max(1.0);
            let distinct: Vec<usize> = (0..n).filter(|&i| d[i].abs() > tol(i)).collect();
            for pair in distinct.windows(2) {
                let (i, j) = (pair[0], pair[1]);
                let exchanged = d[i].signum() != d[j].signum();
                if !exchanged && j == i + 1 {
                    continue;
                }
                let min_separation = (i..=j).map(|t| d[t].abs()).fold(f64::INFINITY, f64::min);
                let s_estimate = if j == i + 1 {
                    samples[i] + (samples[j] - samples[i]) * d[i] / (d[i] - d[j])
                } else {
                    let touching: Vec<f64> = ((i + 1)..j).map(|t| samples[t]).collect();
                    touching.iter().sum::<f64>() / touching.len() as f64
                };
                let energy = {
                    let t = (s_estimate - samples[i]) / (samples[j] - samples[i]);
                    let ea = curves[a][i] + t * (curves[a][j] - curves[a][i]);
                    let eb = curves[b][i] + t * (curves[b][j] - curves[b][i]);
                    0.5 * (ea + eb)
                };
                let (lower, upper) = if d[i] < 0.0 { (a, b) } else { (b, a) };
                out.push(Crossing {
                    lower,
                    upper,
                    s_from: samples[i],
                    s_to: samples[j],
                    s_estimate,
                    energy,
                    min_separation,
                    exchanged,
                });
            }
        }
    }
    out.sort_by(|x, y| x.s_estimate.total_cmp(&y.s_estimate).then(x.lower.cmp(&y.lower)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{unitary_from_preset, PathRule, Preset};
    use crate::geometry::{boundary_operators, make_mesh, make_mesh_with, DomainSpec, Resolution};

    #[test]
    fn greedy_matching_prefers_large_overlaps() {
        let o = DMatrix::from_row_slice(2, 3, &[0.1, 0.9, 0.0, 0.2, 0.95, 0.3].map(|x| C64::new(x, 0.0)));
        assert_eq!(greedy_match(&o), vec![0, 1]);
    }

    #[test]
    fn constant_path_gives_flat_curves() {
        let m = make_mesh(&DomainSpec::unit_interval(), 100).unwrap();
        let bops = boundary_operators(&m).unwrap();
        let path = BCPath::constant(unitary_from_preset(&Preset::Periodic, 2).unwrap(), 5).unwrap();
        let f = spectral_flow(&path, &m, &bops, 4, 5).unwrap();
        for c in &f.curves {
            assert!(c.iter().all(|&x| x == c[0]));
        }
        assert!(f.crossings.iter().all(|c| !c.exchanged));
        assert!(f.total_is_identity());
        assert_eq!(f.lipschitz, 0.0);
        assert_eq!(f.label_shift, Some(0));
    }

    #[test]
    fn faraday_family_shifts_labels_and_crosses_at_half() {
        let m = make_mesh_with(&DomainSpec::ring(), Resolution::Cells(200)).unwrap();
        let bops = boundary_operators(&m).unwrap();
        let path = BCPath::quasi_periodic_flux(0.0, 1.0, 51).unwrap();
        let f = spectral_flow(&path, &m, &bops, 4, 51).unwrap();
        assert!(f.permutations_are_injective());
        assert!(!f.total_is_identity());
        assert_eq!(f.label_shift, Some(1));
        let first = f.exchanges().next().unwrap();
        assert!((first.s_estimate - 0.5).abs() <= 0.02, "{first:?}");
        assert!((first.energy - 0.25).abs() < 1e-3);
        assert!(f.min_ground >= -1e-9);
    }

    #[test]
    fn steps_below_two_are_rejected() {
        let m = make_mesh(&DomainSpec::unit_interval(), 20).unwrap();
        let bops = boundary_operators(&m).unwrap();
        let path = BCPath::new(
            unitary_from_preset(&Preset::Dirichlet, 2).unwrap(),
            unitary_from_preset(&Preset::Neumann, 2).unwrap(),
            PathRule::Eigenphase,
            3,
        )
        .unwrap();
        assert!(matches!(spectral_flow(&path, &m, &bops, 2, 1), Err(Error::Precondition(_))));
    }
}
