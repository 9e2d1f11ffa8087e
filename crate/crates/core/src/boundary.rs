//! Boundary unitaries and the boundary conditions they define.
//!
//! A unitary `U` on the boundary space fixes the condition
//! `phi - i phi_dot = U (phi + i phi_dot)`. Coordinates are weighted:
//! the vector `U` acts on is `sqrt(w_b) * phi`, so that the Euclidean
//! product of coordinates is the boundary quadrature inner product.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{Layout, Mesh};
use crate::linalg::{normal_eigen, polar_factor, polar_unitary, unitarity_defect, C64, ONE, ZERO};

/// Maximum entry of `U^dag U - I` accepted for a boundary unitary.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Eigenphases within this distance of `pi` are snapped to exactly `pi`.
pub const PHASE_SNAP_TOL: f64 = 1e-8;
/// Gaps below this are classified as [`GapKind::NoGap`].
pub const NO_GAP_THRESHOLD: f64 = 1e-6;

/// Principal argument in `(-pi, pi]`, with `-1` snapped to `+pi`.
pub fn principal_phase(z: C64, tol: f64) -> f64 {
    let theta = z.arg();
    if PI - theta.abs() < tol {
        PI
    } else {
        theta
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryUnitary {
    matrix: DMatrix<C64>,
    phases: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl PartialEq for BoundaryUnitary {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl BoundaryUnitary {
    /// Validates unitarity and caches the eigendecomposition.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension(format!(
                "boundary unitary must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation("boundary unitary has non-finite entries".into()));
        }
        let defect = unitarity_defect(&matrix);
        if defect >= UNITARITY_TOL {
            return Err(Error::NotUnitary {
                defect,
                tolerance: UNITARITY_TOL,
            });
        }
        let (values, vectors) = normal_eigen(&matrix)?;
        let phases = values.iter().map(|&z| principal_phase(z, PHASE_SNAP_TOL)).collect();
        Ok(Self {
            matrix,
            phases,
            vectors,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is unitary")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Eigenphases in `(-pi, pi]`, `-1` reported as exactly `pi`.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Orthonormal eigenvectors, one column per entry of [`Self::phases`].
    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.phases.iter().map(|&t| C64::from_polar(1.0, t)).collect()
    }

    pub fn defect(&self) -> f64 {
        unitarity_defect(&self.matrix)
    }

    /// `V U V^dag`.
    pub fn conjugated(&self, v: &DMatrix<C64>) -> Result<Self> {
        Self::new(v * &self.matrix * v.adjoint())
    }

    /// `self` then `other` on disjoint coordinate sets.
    pub fn direct_sum(&self, other: &Self) -> Result<Self> {
        let (a, b) = (self.dim(), other.dim());
        let mut m = DMatrix::zeros(a + b, a + b);
        m.view_mut((0, 0), (a, a)).copy_from(&self.matrix);
        m.view_mut((a, a), (b, b)).copy_from(&other.matrix);
        Self::new(m)
    }
}

/// Boundary condition presets.
#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    Dirichlet,
    Neumann,
    Periodic,
    QuasiPeriodic { alpha: f64 },
    /// Two circles: `a1 <-> b1`, `a2 <-> b2`.
    TwoIntervalU1,
    /// One circle: `a1 <-> b2`, `b1 <-> a2`.
    TwoIntervalU2,
    BlockPasting { first: TransferMap, second: TransferMap },
    Custom(DMatrix<C64>),
}

/// Names accepted by configuration files, with a one-line description each.
pub const PRESET_NAMES: &[(&str, &str)] = &[
    ("dirichlet", "U = -I on every boundary coordinate"),
    ("neumann", "U = I on every boundary coordinate"),
    ("periodic", "[[0,1],[1,0]] on the two endpoints of one interval"),
    ("quasi_periodic", "[[0,e^{i alpha}],[e^{-i alpha},0]]; give alpha or epsilon (alpha = -2 pi epsilon)"),
    ("two_interval_u1", "two intervals glued into two circles"),
    ("two_interval_u2", "two intervals glued into one circle"),
    ("block_pasting", "rectangle: left edge pasted to right edge through transfer maps, Neumann elsewhere"),
    ("torus", "rectangle: both pairs of opposite edges pasted, corners glued"),
    ("cylinder", "rectangle: left/right pasted, Neumann on top and bottom"),
    ("custom", "explicit matrix given as `re` and optional `im` rows"),
];

/// Quasi-periodic flux parameter: `alpha = -2 pi eps` reduced to `[0, 2 pi)`.
pub fn alpha_for_flux(eps: f64) -> f64 {
    (-2.0 * PI * eps).rem_euclid(2.0 * PI)
}

pub fn quasi_periodic_matrix(alpha: f64) -> DMatrix<C64> {
    let p = C64::from_polar(1.0, alpha);
    DMatrix::from_row_slice(2, 2, &[ZERO, p, p.conj(), ZERO])
}

fn permutation(n: usize, pairs: &[(usize, usize)]) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(n, n);
    for &(a, b) in pairs {
        m[(a, b)] = ONE;
        m[(b, a)] = ONE;
    }
    m
}

/// Builds the unitary for a preset on a boundary space of dimension `n_b`.
pub fn unitary_from_preset(preset: &Preset, n_b: usize) -> Result<BoundaryUnitary> {
    let need = |expected: usize, name: &str| {
        if n_b != expected {
            Err(Error::Dimension(format!(
                "preset `{name}` acts on {expected} boundary coordinates, the domain has {n_b}"
            )))
        } else {
            Ok(())
        }
    };
    let m = match preset {
        Preset::Dirichlet => -DMatrix::<C64>::identity(n_b, n_b),
        Preset::Neumann => DMatrix::identity(n_b, n_b),
        Preset::Periodic => {
            need(2, "periodic")?;
            quasi_periodic_matrix(0.0)
        }
        Preset::QuasiPeriodic { alpha } => {
            need(2, "quasi_periodic")?;
            quasi_periodic_matrix(*alpha)
        }
        Preset::TwoIntervalU1 => {
            need(4, "two_interval_u1")?;
            permutation(4, &[(0, 1), (2, 3)])
        }
        Preset::TwoIntervalU2 => {
            need(4, "two_interval_u2")?;
            permutation(4, &[(0, 3), (1, 2)])
        }
        Preset::BlockPasting { first, second } => {
            let u = pasting_unitary(first, second)?;
            need(u.dim(), "block_pasting")?;
            return Ok(u);
        }
        Preset::Custom(m) => {
            need(m.nrows(), "custom")?;
            m.clone()
        }
    };
    BoundaryUnitary::new(m)
}

/// Dirichlet constraints plus Robin data on their complement.
#[derive(Clone, Debug)]
pub struct SelfAdjointBC {
    dirichlet_basis: DMatrix<C64>,
    complement_basis: DMatrix<C64>,
    robin: DMatrix<C64>,
    robin_eigenvalues: Vec<f64>,
}

impl SelfAdjointBC {
    pub fn dim(&self) -> usize {
        self.dirichlet_basis.nrows()
    }

    /// Orthonormal basis of the `-1` eigenspace; `W^dag phi = 0` is imposed.
    pub fn dirichlet_basis(&self) -> &DMatrix<C64> {
        &self.dirichlet_basis
    }

    pub fn complement_basis(&self) -> &DMatrix<C64> {
        &self.complement_basis
    }

    /// Robin operator in complement-basis coordinates:
    /// `phi_dot_perp = A phi_perp`.
    pub fn robin(&self) -> &DMatrix<C64> {
        &self.robin
    }

    /// Eigenvalues of the Robin operator, `-tan(theta / 2)` per complement
    /// eigenphase.
    pub fn robin_eigenvalues(&self) -> &[f64] {
        &self.robin_eigenvalues
    }

    pub fn n_dirichlet(&self) -> usize {
        self.dirichlet_basis.ncols()
    }

    /// `|W^dag phi|`
    pub fn constraint_residual(&self, phi: &DVector<C64>) -> f64 {
        (self.dirichlet_basis.adjoint() * phi).norm()
    }

    /// `|Q^dag phi_dot - A Q^dag phi|`
    pub fn robin_residual(&self, phi: &DVector<C64>, phi_dot: &DVector<C64>) -> f64 {
        let q = &self.complement_basis;
        (q.adjoint() * phi_dot - &self.robin * (q.adjoint() * phi)).norm()
    }
}

/// Splits `U` into Dirichlet constraints (eigenvalue `-1`, within `tol` in
/// phase) and the Robin operator `i (I + U)^{-1} (U - I)` on the rest.
pub fn cayley_decompose(u: &BoundaryUnitary, tol: f64) -> Result<SelfAdjointBC> {
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::Validation(format!(
            "phase tolerance {tol} outside (0, 1e-6]"
        )));
    }
    let n = u.dim();
    let vecs = u.eigenvectors();
    let values = normal_phases(u);
    let mut dir = Vec::new();
    let mut comp = Vec::new();
    for (k, &z) in values.iter().enumerate() {
        let theta = z.arg();
        if PI - theta.abs() < tol {
            dir.push(k);
        } else {
            comp.push((k, theta));
        }
    }
    let cols = |idx: &mut dyn Iterator<Item = usize>| {
        let idx: Vec<usize> = idx.collect();
        DMatrix::from_fn(n, idx.len(), |r, c| vecs[(r, idx[c])])
    };
    let dirichlet_basis = cols(&mut dir.iter().copied());
    let complement_basis = cols(&mut comp.iter().map(|&(k, _)| k));
    let robin_eigenvalues: Vec<f64> = comp.iter().map(|&(_, t)| -(t / 2.0).tan()).collect();
    let robin = DMatrix::from_diagonal(&DVector::from_iterator(
        robin_eigenvalues.len(),
        robin_eigenvalues.iter().map(|&v| C64::new(v, 0.0)),
    ));
    Ok(SelfAdjointBC {
        dirichlet_basis,
        complement_basis,
        robin,
        robin_eigenvalues,
    })
}

/// Unsnapped eigenvalues of `U`, read off the Rayleigh quotients of its
/// cached eigenvectors.
fn normal_phases(u: &BoundaryUnitary) -> Vec<C64> {
    let v = u.eigenvectors();
    let uv = u.matrix() * v;
    (0..v.ncols())
        .map(|k| v.column(k).dotc(&uv.column(k)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    InvertibleIPlusU,
    IsolatedMinusOne,
    NoGap,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct GapReport {
    pub gap: f64,
    pub classification: GapKind,
}

/// Chordal distance from `-1` to the rest of the spectrum.
pub fn spectral_gap(u: &BoundaryUnitary) -> GapReport {
    let mut has_minus_one = false;
    let mut gap = 2.0f64;
    for &theta in u.phases() {
        if theta == PI {
            has_minus_one = true;
        } else {
            gap = gap.min((C64::from_polar(1.0, theta) + ONE).norm());
        }
    }
    let classification = if gap < NO_GAP_THRESHOLD {
        GapKind::NoGap
    } else if has_minus_one {
        GapKind::IsolatedMinusOne
    } else {
        GapKind::InvertibleIPlusU
    };
    GapReport {
        gap,
        classification,
    }
}

/// Positions and quadrature weights of the nodes along one boundary piece.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSamples {
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl EdgeSamples {
    pub fn new(positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positions.len() != weights.len() || positions.is_empty() {
            return Err(Error::Dimension(format!(
                "edge has {} positions and {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Validation("edge weights must be positive".into()));
        }
        if positions.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::Validation("edge positions must increase strictly".into()));
        }
        Ok(Self { positions, weights })
    }

    /// `n` equally spaced nodes on `[a, b]` with trapezoid weights.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Validation("an edge needs at least 2 nodes".into()));
        }
        let h = (b - a) / (n - 1) as f64;
        let positions = (0..n).map(|i| if i + 1 == n { b } else { a + i as f64 * h }).collect();
        let weights = (0..n).map(|i| if i == 0 || i + 1 == n { h / 2.0 } else { h }).collect();
        Self::new(positions, weights)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Discrete `T: L2(edge) -> L2(reference)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMap {
    /// Interpolation along `g` scaled by the square-root Jacobian, acting on
    /// nodal values.
    raw: DMatrix<C64>,
    /// Unitary acting on weighted coordinates.
    unitary: DMatrix<C64>,
}

impl TransferMap {
    pub fn identity(n: usize) -> Self {
        Self {
            raw: DMatrix::identity(n, n),
            unitary: DMatrix::identity(n, n),
        }
    }

    /// Wraps a unitary already expressed in weighted coordinates.
    pub fn from_unitary(unitary: DMatrix<C64>) -> Result<Self> {
        let defect = unitarity_defect(&unitary);
        if unitary.nrows() != unitary.ncols() || defect >= UNITARITY_TOL {
            return Err(Error::NotUnitary {
                defect,
                tolerance: UNITARITY_TOL,
            });
        }
        Ok(Self {
            raw: unitary.clone(),
            unitary,
        })
    }

    pub fn raw(&self) -> &DMatrix<C64> {
        &self.raw
    }

    pub fn unitary(&self) -> &DMatrix<C64> {
        &self.unitary
    }

    pub fn dim(&self) -> usize {
        self.unitary.nrows()
    }
}

/// Transfer map for an edge parametrized onto a reference edge by `g`.
///
/// `g[i]` is the image of `edge.positions()[i]` on the reference edge and
/// must be strictly monotone. The reference value at `y` is
/// `sqrt(|d g^{-1} / dy|) * phi(g^{-1}(y))`, interpolated linearly; the result
/// is then replaced by its polar factor in weighted coordinates.
pub fn edge_transfer_map(edge: &EdgeSamples, reference: &EdgeSamples, g: &[f64]) -> Result<TransferMap> {
    let n = edge.len();
    if g.len() != n {
        return Err(Error::Dimension(format!(
            "g has {} samples for an edge of {n} nodes",
            g.len()
        )));
    }
    if reference.len() != n {
        return Err(Error::Dimension(format!(
            "edge has {n} nodes, reference has {}; transfer maps need matched node counts",
            reference.len()
        )));
    }
    let increasing = g.windows(2).all(|p| p[1] > p[0]);
    let decreasing = g.windows(2).all(|p| p[1] < p[0]);
    if !(increasing || decreasing) {
        return Err(Error::Validation("g samples are not strictly monotone".into()));
    }
    // g^{-1} as a piecewise-linear function of y, over ascending knots
    let mut knots: Vec<(f64, f64)> = g.iter().copied().zip(edge.positions().iter().copied()).collect();
    if decreasing {
        knots.reverse();
    }
    let ginv = |y: f64| -> (f64, f64) {
        let last = knots.len() - 1;
        let mut k = knots.partition_point(|&(gy, _)| gy <= y).saturating_sub(1);
        k = k.min(last - 1);
        let (y0, x0) = knots[k];
        let (y1, x1) = knots[k + 1];
        let slope = (x1 - x0) / (y1 - y0);
        (x0 + slope * (y - y0), slope.abs())
    };
    let xs = edge.positions();
    let mut raw = DMatrix::zeros(n, n);
    for (r, &y) in reference.positions().iter().enumerate() {
        let (x, jac) = ginv(y);
        let scale = jac.sqrt();
        let x = x.clamp(xs[0], xs[n - 1]);
        let j = xs.partition_point(|&p| p <= x).saturating_sub(1).min(n - 2);
        let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
        raw[(r, j)] += C64::new(scale * (1.0 - t), 0.0);
        raw[(r, j + 1)] += C64::new(scale * t, 0.0);
    }
    let weighted = DMatrix::from_fn(n, n, |r, c| {
        raw[(r, c)] * (reference.weights()[r].sqrt() / edge.weights()[c].sqrt())
    });
    let unitary = polar_factor(&weighted);
    Ok(TransferMap { raw, unitary })
}

/// `[[0, T1^dag T2], [T2^dag T1, 0]]` on the coordinates of edge 1 followed
/// by edge 2.
pub fn pasting_unitary(t1: &TransferMap, t2: &TransferMap) -> Result<BoundaryUnitary> {
    if t1.dim() != t2.dim() {
        return Err(Error::Dimension(format!(
            "transfer maps into reference spaces of dimension {} and {}",
            t1.dim(),
            t2.dim()
        )));
    }
    let n = t1.dim();
    let x = t1.unitary().adjoint() * t2.unitary();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, n), (n, n)).copy_from(&x);
    m.view_mut((n, 0), (n, n)).copy_from(&x.adjoint());
    BoundaryUnitary::new(m)
}

/// Places unitary blocks on coordinate subsets. Every coordinate must be
/// covered exactly once.
pub fn compose_blocks(n_b: usize, blocks: &[(Vec<usize>, DMatrix<C64>)]) -> Result<BoundaryUnitary> {
    let mut seen = vec![false; n_b];
    let mut m = DMatrix::zeros(n_b, n_b);
    for (coords, block) in blocks {
        if block.nrows() != coords.len() || block.ncols() != coords.len() {
            return Err(Error::Dimension(format!(
                "block of size {}x{} placed on {} coordinates",
                block.nrows(),
                block.ncols(),
                coords.len()
            )));
        }
        for &c in coords {
            if c >= n_b || seen[c] {
                return Err(Error::Validation(format!(
                    "boundary coordinate {c} is out of range or covered twice"
                )));
            }
            seen[c] = true;
        }
        for (a, &ca) in coords.iter().enumerate() {
            for (b, &cb) in coords.iter().enumerate() {
                m[(ca, cb)] = block[(a, b)];
            }
        }
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::Validation(format!("boundary coordinate {c} is not covered")));
    }
    BoundaryUnitary::new(m)
}

/// `2 P - I` where `P` projects onto the weighted constant vector: all the
/// listed nodes share one value, with no Robin term.
pub fn vertex_gluing(weights: &[f64]) -> DMatrix<C64> {
    let n = weights.len();
    let norm: f64 = weights.iter().sum::<f64>().sqrt();
    let v: Vec<f64> = weights.iter().map(|w| w.sqrt() / norm).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let p = 2.0 * v[i] * v[j];
        C64::new(if i == j { p - 1.0 } else { p }, 0.0)
    })
}

fn rectangle_dims(mesh: &Mesh) -> Result<(usize, usize)> {
    match mesh.layout() {
        Layout::Rectangle { nx, ny, .. } => Ok((*nx, *ny)),
        _ => Err(Error::UnsupportedDomain(
            "edge pasting presets need a rectangle".into(),
        )),
    }
}

fn piece_coords(mesh: &Mesh, name: &str) -> Vec<usize> {
    mesh.piece(name).expect("rectangle pieces").coords().collect()
}

/// Transfer map of a rectangle edge onto the opposite edge, using the
/// affine reparametrization between them.
pub fn opposite_edge_maps(mesh: &Mesh, first: &str, second: &str) -> Result<(TransferMap, TransferMap)> {
    let e1 = mesh.edge_samples(first)?;
    let e2 = mesh.edge_samples(second)?;
    let t1 = edge_transfer_map(&e1, &e1, e1.positions())?;
    let t2 = edge_transfer_map(&e2, &e1, e1.positions())?;
    Ok((t1, t2))
}

/// Left edge pasted to right edge, Neumann on bottom and top.
pub fn left_right_pasting(mesh: &Mesh) -> Result<BoundaryUnitary> {
    rectangle_dims(mesh)?;
    let (t1, t2) = opposite_edge_maps(mesh, "left", "right")?;
    let paste = pasting_unitary(&t1, &t2)?;
    let mut lr = piece_coords(mesh, "left");
    lr.extend(piece_coords(mesh, "right"));
    let mut caps = piece_coords(mesh, "bottom");
    caps.extend(piece_coords(mesh, "top"));
    let n = caps.len();
    compose_blocks(
        mesh.n_boundary(),
        &[(lr, paste.matrix().clone()), (caps, DMatrix::identity(n, n))],
    )
}

/// Periodic in `x` with Neumann caps: left/right pasted and the corners
/// of each horizontal edge swapped.
pub fn cylinder_unitary(mesh: &Mesh) -> Result<BoundaryUnitary> {
    let (nx, _) = rectangle_dims(mesh)?;
    let (t1, t2) = opposite_edge_maps(mesh, "left", "right")?;
    let paste = pasting_unitary(&t1, &t2)?;
    let mut lr = piece_coords(mesh, "left");
    lr.extend(piece_coords(mesh, "right"));
    let mut blocks = vec![(lr, paste.matrix().clone())];
    let swap = quasi_periodic_matrix(0.0);
    for name in ["bottom", "top"] {
        let c = piece_coords(mesh, name);
        blocks.push((vec![c[0], c[nx]], swap.clone()));
        let inner = c[1..nx].to_vec();
        let k = inner.len();
        blocks.push((inner, DMatrix::identity(k, k)));
    }
    compose_blocks(mesh.n_boundary(), &blocks)
}

/// Both pairs of opposite edges pasted; the four corners are glued into
/// one vertex.
pub fn torus_unitary(mesh: &Mesh) -> Result<BoundaryUnitary> {
    let (nx, _) = rectangle_dims(mesh)?;
    let (l, r) = opposite_edge_maps(mesh, "left", "right")?;
    let mut lr = piece_coords(mesh, "left");
    lr.extend(piece_coords(mesh, "right"));
    let (b, t) = opposite_edge_maps(mesh, "bottom", "top")?;
    let bt_full = pasting_unitary(&b, &t)?;
    let bottom = piece_coords(mesh, "bottom");
    let top = piece_coords(mesh, "top");
    // drop the corner rows/columns from the bottom/top pasting
    let keep: Vec<usize> = (1..nx).chain(nx + 2..2 * nx + 1).collect();
    let bt = DMatrix::from_fn(keep.len(), keep.len(), |i, j| bt_full.matrix()[(keep[i], keep[j])]);
    let mut bt_coords: Vec<usize> = bottom[1..nx].to_vec();
    bt_coords.extend(&top[1..nx]);
    let corners = vec![bottom[0], bottom[nx], top[0], top[nx]];
    let cw: Vec<f64> = corners.iter().map(|&c| mesh.boundary_weights()[c]).collect();
    compose_blocks(
        mesh.n_boundary(),
        &[
            (lr, pasting_unitary(&l, &r)?.matrix().clone()),
            (bt_coords, bt),
            (corners, vertex_gluing(&cw)),
        ],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PathRule {
    /// `U_a V diag(e^{i s theta}) V^dag` from the eigendecomposition of
    /// `U_a^dag U_b`.
    Eigenphase,
    /// Spherical interpolation in the Frobenius sphere, re-unitarized by
    /// polar decomposition.
    GreatCircle,
    /// The quasi-periodic family with flux moving linearly from
    /// `eps_from` to `eps_to`.
    QuasiPeriodicFlux { eps_from: f64, eps_to: f64 },
}

/// `U(s)` for `s` in `[0, 1]`; endpoints are returned exactly.
pub fn interpolate_path(
    u_a: &BoundaryUnitary,
    u_b: &BoundaryUnitary,
    rule: PathRule,
    s: f64,
) -> Result<BoundaryUnitary> {
    if u_a.dim() != u_b.dim() {
        return Err(Error::Dimension(format!(
            "path endpoints of dimension {} and {}",
            u_a.dim(),
            u_b.dim()
        )));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Validation(format!("path parameter {s} outside [0, 1]")));
    }
    if s == 0.0 {
        return Ok(u_a.clone());
    }
    if s == 1.0 {
        return Ok(u_b.clone());
    }
    match rule {
        PathRule::Eigenphase => {
            let rel = BoundaryUnitary::new(u_a.matrix().adjoint() * u_b.matrix())?;
            let v = rel.eigenvectors();
            let d = DMatrix::from_diagonal(&DVector::from_iterator(
                rel.dim(),
                rel.phases().iter().map(|&t| C64::from_polar(1.0, s * t)),
            ));
            BoundaryUnitary::new(u_a.matrix() * v * d * v.adjoint())
        }
        PathRule::GreatCircle => {
            let n = u_a.dim() as f64;
            let cos = ((u_a.matrix().adjoint() * u_b.matrix()).trace().re / n).clamp(-1.0, 1.0);
            let omega = cos.acos();
            let (ca, cb) = if omega.sin() < 1e-12 {
                (1.0 - s, s)
            } else {
                (
                    ((1.0 - s) * omega).sin() / omega.sin(),
                    (s * omega).sin() / omega.sin(),
                )
            };
            let mix = u_a.matrix() * C64::new(ca, 0.0) + u_b.matrix() * C64::new(cb, 0.0);
            BoundaryUnitary::new(polar_unitary(&mix)?)
        }
        PathRule::QuasiPeriodicFlux { eps_from, eps_to } => {
            if u_a.dim() != 2 {
                return Err(Error::Dimension("the flux family acts on 2 endpoints".into()));
            }
            let eps = eps_from + s * (eps_to - eps_from);
            BoundaryUnitary::new(quasi_periodic_matrix(alpha_for_flux(eps)))
        }
    }
}

/// A sampled path of boundary unitaries with its gap profile.
#[derive(Clone, Debug)]
pub struct BCPath {
    u_a: BoundaryUnitary,
    u_b: BoundaryUnitary,
    rule: PathRule,
    samples: usize,
    gap_profile: Vec<(f64, f64)>,
    min_gap: f64,
}

impl BCPath {
    pub fn new(u_a: BoundaryUnitary, u_b: BoundaryUnitary, rule: PathRule, samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(Error::Validation(format!("a path needs at least 2 samples, got {samples}")));
        }
        let mut path = Self {
            u_a,
            u_b,
            rule,
            samples,
            gap_profile: Vec::with_capacity(samples),
            min_gap: f64::INFINITY,
        };
        for i in 0..samples {
            let s = i as f64 / (samples - 1) as f64;
            let g = spectral_gap(&path.at(s)?).gap;
            path.gap_profile.push((s, g));
            path.min_gap = path.min_gap.min(g);
        }
        Ok(path)
    }

    /// The flux family `eps_from -> eps_to`.
    pub fn quasi_periodic_flux(eps_from: f64, eps_to: f64, samples: usize) -> Result<Self> {
        let ua = BoundaryUnitary::new(quasi_periodic_matrix(alpha_for_flux(eps_from)))?;
        let ub = BoundaryUnitary::new(quasi_periodic_matrix(alpha_for_flux(eps_to)))?;
        Self::new(ua, ub, PathRule::QuasiPeriodicFlux { eps_from, eps_to }, samples)
    }

    pub fn constant(u: BoundaryUnitary, samples: usize) -> Result<Self> {
        Self::new(u.clone(), u, PathRule::Eigenphase, samples)
    }

    pub fn at(&self, s: f64) -> Result<BoundaryUnitary> {
        interpolate_path(&self.u_a, &self.u_b, self.rule, s)
    }

    pub fn start(&self) -> &BoundaryUnitary {
        &self.u_a
    }

    pub fn end(&self) -> &BoundaryUnitary {
        &self.u_b
    }

    pub fn rule(&self) -> PathRule {
        self.rule
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `(s, gap(U(s)))` at the uniform samples.
    pub fn gap_profile(&self) -> &[(f64, f64)] {
        &self.gap_profile
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    /// Flux value at `s` for the quasi-periodic family.
    pub fn flux_at(&self, s: f64) -> Option<f64> {
        match self.rule {
            PathRule::QuasiPeriodicFlux { eps_from, eps_to } => Some(eps_from + s * (eps_to - eps_from)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_mesh, DomainSpec};
    use crate::linalg::{haar_unitary, max_abs};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<C64> {
        use rand_distr::{Distribution, StandardNormal};
        DVector::from_fn(n, |_, _| {
            c(StandardNormal.sample(rng), StandardNormal.sample(rng))
        })
    }

    #[test]
    fn preset_matrices() {
        let d = unitary_from_preset(&Preset::Dirichlet, 2).unwrap();
        assert_eq!(d.matrix(), &(-DMatrix::<C64>::identity(2, 2)));
        let u2 = unitary_from_preset(&Preset::TwoIntervalU2, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i + j == 3 { ONE } else { ZERO };
                assert_eq!(u2.matrix()[(i, j)], expect);
            }
        }
        let qp = unitary_from_preset(&Preset::QuasiPeriodic { alpha: 0.0 }, 2).unwrap();
        let per = unitary_from_preset(&Preset::Periodic, 2).unwrap();
        assert_eq!(qp, per);
        assert!(unitary_from_preset(&Preset::Periodic, 4).is_err());
    }

    #[test]
    fn custom_non_unitary_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        match unitary_from_preset(&Preset::Custom(m), 2) {
            Err(Error::NotUnitary { defect, .. }) => assert!(defect > 0.5),
            other => panic!("expected NotUnitary, got {other:?}"),
        }
    }

    #[test]
    fn minus_one_phase_is_snapped() {
        let u = BoundaryUnitary::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::from_polar(1.0, -PI + 1e-10),
            c(-1.0, -0.0),
            ONE,
        ])))
        .unwrap();
        let mut p = u.phases().to_vec();
        p.sort_by(f64::total_cmp);
        assert_eq!(p, vec![0.0, PI, PI]);
    }

    #[test]
    fn cayley_of_identity_and_minus_identity() {
        let bc = cayley_decompose(&BoundaryUnitary::identity(3), 1e-8).unwrap();
        assert_eq!(bc.n_dirichlet(), 0);
        assert!(max_abs(bc.robin()) == 0.0);
        let minus = BoundaryUnitary::new(-DMatrix::<C64>::identity(3, 3)).unwrap();
        let bc = cayley_decompose(&minus, 1e-8).unwrap();
        assert_eq!(bc.n_dirichlet(), 3);
        assert_eq!(bc.complement_basis().ncols(), 0);
    }

    #[test]
    fn cayley_of_periodic_gives_matching_values_and_flux() {
        let per = unitary_from_preset(&Preset::Periodic, 2).unwrap();
        let bc = cayley_decompose(&per, 1e-8).unwrap();
        assert_eq!(bc.n_dirichlet(), 1);
        let w = bc.dirichlet_basis().column(0);
        // W spanned by (1, -1)/sqrt 2
        assert!((w[0] + w[1]).norm() < 1e-14);
        assert!((w[0].norm() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(bc.robin()[(0, 0)].norm() < 1e-14);
        // phi(0) = phi(1) passes; phi_dot(0) + phi_dot(1) = 0 passes
        let phi = DVector::from_vec(vec![c(0.3, 0.1), c(0.3, 0.1)]);
        let phi_dot = DVector::from_vec(vec![c(-2.0, 0.5), c(2.0, -0.5)]);
        assert!(bc.constraint_residual(&phi) < 1e-14);
        assert!(bc.robin_residual(&phi, &phi_dot) < 1e-14);
        let bad = DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(bc.robin_residual(&phi, &bad) > 0.5);
    }

    #[test]
    fn robin_eigenvalues_follow_the_half_angle() {
        for theta in [-2.5, -1.0, 0.0, 0.4, 3.0] {
            let u = BoundaryUnitary::new(DMatrix::from_element(1, 1, C64::from_polar(1.0, theta))).unwrap();
            let bc = cayley_decompose(&u, 1e-8).unwrap();
            let a = bc.robin_eigenvalues()[0];
            assert!((a + (theta / 2.0).tan()).abs() < 1e-10);
            // i (1 + u)^{-1} (u - 1)
            let z = C64::from_polar(1.0, theta);
            let direct = C64::new(0.0, 1.0) * (z - ONE) / (ONE + z);
            assert!((direct - c(a, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn cayley_rejects_bad_tolerance() {
        let u = BoundaryUnitary::identity(2);
        assert!(cayley_decompose(&u, 0.0).is_err());
        assert!(cayley_decompose(&u, 1e-3).is_err());
    }

    fn round_trip_residuals(u: &BoundaryUnitary, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let n = u.dim();
        let bc = cayley_decompose(u, PHASE_SNAP_TOL).unwrap();
        let q = bc.complement_basis();
        let w = bc.dirichlet_basis();
        // forward: decomposed data satisfies the unitary condition
        let a = random_vec(rng, q.ncols());
        let b = random_vec(rng, w.ncols());
        let phi = q * &a;
        let phi_dot = q * (bc.robin() * &a) + w * &b;
        let i = C64::new(0.0, 1.0);
        let lhs = &phi - &phi_dot * i;
        let rhs = u.matrix() * (&phi + &phi_dot * i);
        let fwd = (lhs - rhs).norm() / (phi.norm() + phi_dot.norm());
        // backward: data from the unitary condition satisfies the constraints
        let plus = random_vec(rng, n);
        let minus = u.matrix() * &plus;
        let phi = (&plus + &minus) * C64::new(0.5, 0.0);
        let phi_dot = (&plus - &minus) / C64::new(0.0, 2.0);
        let scale = plus.norm();
        let bwd = (bc.constraint_residual(&phi) + bc.robin_residual(&phi, &phi_dot)) / scale;
        (fwd, bwd)
    }

    #[test]
    fn cayley_round_trip_on_structured_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for u in [
            unitary_from_preset(&Preset::Periodic, 2).unwrap(),
            unitary_from_preset(&Preset::TwoIntervalU2, 4).unwrap(),
            unitary_from_preset(&Preset::QuasiPeriodic { alpha: 1.3 }, 2).unwrap(),
            BoundaryUnitary::new(-DMatrix::<C64>::identity(2, 2)).unwrap(),
        ] {
            let (f, b) = round_trip_residuals(&u, &mut rng);
            assert!(f < 1e-12 && b < 1e-12, "{f} {b}");
        }
    }

    #[test]
    fn gap_examples() {
        let g = spectral_gap(&BoundaryUnitary::identity(2));
        assert_eq!(g.gap, 2.0);
        assert_eq!(g.classification, GapKind::InvertibleIPlusU);
        let u = BoundaryUnitary::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(-1.0, 0.0),
            c(0.0, 1.0),
        ])))
        .unwrap();
        let g = spectral_gap(&u);
        assert!((g.gap - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(g.classification, GapKind::IsolatedMinusOne);
        for alpha in [0.0, 0.7, 2.0, 4.0] {
            let g = spectral_gap(&unitary_from_preset(&Preset::QuasiPeriodic { alpha }, 2).unwrap());
            assert!((g.gap - 2.0).abs() < 1e-12);
        }
        let only_minus = BoundaryUnitary::new(-DMatrix::<C64>::identity(3, 3)).unwrap();
        assert_eq!(spectral_gap(&only_minus).gap, 2.0);
        let tiny = BoundaryUnitary::new(DMatrix::from_element(1, 1, C64::from_polar(1.0, PI - 1e-7))).unwrap();
        assert_eq!(spectral_gap(&tiny).classification, GapKind::NoGap);
    }

    #[test]
    fn identical_edges_give_identity_transfer() {
        let e = EdgeSamples::uniform(0.0, 1.0, 11).unwrap();
        let t = edge_transfer_map(&e, &e, e.positions()).unwrap();
        assert!(max_abs(&(t.unitary() - DMatrix::<C64>::identity(11, 11))) < 1e-14);
        assert!(max_abs(&(t.raw() - DMatrix::<C64>::identity(11, 11))) < 1e-14);
    }

    #[test]
    fn affine_transfer_scales_constants_by_root_two() {
        let edge = EdgeSamples::uniform(0.0, 2.0, 9).unwrap();
        let reference = EdgeSamples::uniform(0.0, 1.0, 9).unwrap();
        let g: Vec<f64> = edge.positions().iter().map(|x| x / 2.0).collect();
        let t = edge_transfer_map(&edge, &reference, &g).unwrap();
        let ones = DVector::from_element(9, ONE);
        let image = t.raw() * ones;
        assert!(image.iter().all(|z| (z - c(2f64.sqrt(), 0.0)).norm() < 1e-14));
        assert!(unitarity_defect(t.unitary()) < 1e-12);
    }

    #[test]
    fn quadratic_reparametrization_is_unitary_after_polar() {
        let edge = EdgeSamples::uniform(0.0, 1.0, 17).unwrap();
        let g: Vec<f64> = edge.positions().iter().map(|x| x * x).collect();
        let t = edge_transfer_map(&edge, &edge, &g).unwrap();
        assert!(unitarity_defect(t.unitary()) < 1e-12);
    }

    #[test]
    fn non_monotone_g_is_rejected() {
        let edge = EdgeSamples::uniform(0.0, 1.0, 5).unwrap();
        let g = [0.0, 0.5, 0.4, 0.8, 1.0];
        assert!(matches!(edge_transfer_map(&edge, &edge, &g), Err(Error::Validation(_))));
    }

    #[test]
    fn pasting_reproduces_periodic_and_one_circle() {
        let one = TransferMap::identity(1);
        let u = pasting_unitary(&one, &one).unwrap();
        assert_eq!(u, unitary_from_preset(&Preset::Periodic, 2).unwrap());
        // Gamma_1 = (a1, b1), Gamma_2 = (a2, b2); reference points (p, q):
        // a1 -> p, b1 -> q and b2 -> p, a2 -> q
        let t1 = TransferMap::identity(2);
        let t2 = TransferMap::from_unitary(quasi_periodic_matrix(0.0)).unwrap();
        let u = pasting_unitary(&t1, &t2).unwrap();
        assert_eq!(u, unitary_from_preset(&Preset::TwoIntervalU2, 4).unwrap());
        let t3 = TransferMap::identity(3);
        assert!(matches!(pasting_unitary(&t1, &t3), Err(Error::Dimension(_))));
    }

    #[test]
    fn pasting_constraints_match_transfer_maps() {
        let edge = EdgeSamples::uniform(0.0, 1.0, 9).unwrap();
        let g: Vec<f64> = edge.positions().iter().map(|x| 0.5 * x * (1.0 + x)).collect();
        let t1 = TransferMap::identity(9);
        let t2 = edge_transfer_map(&edge, &edge, &g).unwrap();
        let u = pasting_unitary(&t1, &t2).unwrap();
        let bc = cayley_decompose(&u, 1e-8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_vec(&mut rng, bc.complement_basis().ncols());
        let phi = bc.complement_basis() * a;
        let (p1, p2) = (phi.rows(0, 9).into_owned(), phi.rows(9, 9).into_owned());
        let mismatch = (t1.unitary() * p1 - t2.unitary() * p2).norm();
        assert!(mismatch < 1e-12, "{mismatch}");
    }

    #[test]
    fn compose_blocks_checks_coverage() {
        let i2 = DMatrix::<C64>::identity(2, 2);
        assert!(compose_blocks(3, &[(vec![0, 1], i2.clone())]).is_err());
        assert!(compose_blocks(2, &[(vec![0, 0], i2.clone())]).is_err());
        assert!(compose_blocks(2, &[(vec![1, 0], i2)]).is_ok());
    }

    #[test]
    fn rectangle_gluings_are_unitary() {
        let m = make_mesh(&DomainSpec::Rectangle { width: 1.0, height: 1.0 }, 8).unwrap();
        for u in [torus_unitary(&m).unwrap(), cylinder_unitary(&m).unwrap(), left_right_pasting(&m).unwrap()] {
            assert_eq!(u.dim(), m.n_boundary());
            assert!(u.defect() < 1e-12);
        }
        let line = make_mesh(&DomainSpec::unit_interval(), 8).unwrap();
        assert!(matches!(torus_unitary(&line), Err(Error::UnsupportedDomain(_))));
    }

    #[test]
    fn vertex_gluing_has_one_free_value() {
        let g = BoundaryUnitary::new(vertex_gluing(&[0.1; 4])).unwrap();
        let bc = cayley_decompose(&g, 1e-8).unwrap();
        assert_eq!(bc.n_dirichlet(), 3);
        let v = bc.complement_basis().column(0);
        assert!(v.iter().all(|z| (z.norm() - 0.5).abs() < 1e-12));
    }

    #[test]
    fn half_way_eigenphase_path() {
        let ua = BoundaryUnitary::identity(2);
        let ub = unitary_from_preset(&Preset::Periodic, 2).unwrap();
        let u = interpolate_path(&ua, &ub, PathRule::Eigenphase, 0.5).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[c(1.0, 1.0), c(1.0, -1.0), c(1.0, -1.0), c(1.0, 1.0)])
            * c(0.5, 0.0);
        assert!(max_abs(&(u.matrix() - expect)) < 1e-14);
    }

    #[test]
    fn reconnection_path_gap_profile() {
        let u1 = unitary_from_preset(&Preset::TwoIntervalU1, 4).unwrap();
        let u2 = unitary_from_preset(&Preset::TwoIntervalU2, 4).unwrap();
        let path = BCPath::new(u1.clone(), u2.clone(), PathRule::Eigenphase, 101).unwrap();
        assert_eq!(path.gap_profile().len(), 101);
        assert_eq!(&path.at(0.0).unwrap(), &u1);
        assert_eq!(&path.at(1.0).unwrap(), &u2);
        assert!(path.min_gap() < 2.0);
        assert!(path.gap_profile().iter().all(|&(_, g)| (0.0..=2.0).contains(&g)));
    }

    #[test]
    fn flux_path_ends_and_gap() {
        let p = BCPath::quasi_periodic_flux(0.0, 1.0, 11).unwrap();
        assert!(p.gap_profile().iter().all(|&(_, g)| (g - 2.0).abs() < 1e-12));
        assert_eq!(p.flux_at(0.5), Some(0.5));
        assert!(max_abs(&(p.start().matrix() - p.end().matrix())) < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn haar_round_trip(seed in any::<u64>(), n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = BoundaryUnitary::new(haar_unitary(n, &mut rng)).unwrap();
            let (f, b) = round_trip_residuals(&u, &mut rng);
            prop_assert!(f < 1e-10 && b < 1e-10);
        }

        #[test]
        fn robin_operator_is_hermitian(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = BoundaryUnitary::new(haar_unitary(n, &mut rng)).unwrap();
            let bc = cayley_decompose(&u, 1e-8).unwrap();
            prop_assert!(max_abs(&(bc.robin() - bc.robin().adjoint())) < 1e-12);
            let mut full = bc.dirichlet_basis().clone().resize_horizontally(n, ZERO);
            full.view_mut((0, bc.n_dirichlet()), (n, n - bc.n_dirichlet())).copy_from(bc.complement_basis());
            prop_assert!(unitarity_defect(&full) < 1e-12);
        }

        #[test]
        fn gap_is_conjugation_invariant(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = BoundaryUnitary::new(haar_unitary(n, &mut rng)).unwrap();
            let v = haar_unitary(n, &mut rng);
            let g1 = spectral_gap(&u).gap;
            let g2 = spectral_gap(&u.conjugated(&v).unwrap()).gap;
            prop_assert!((g1 - g2).abs() < 1e-12);
        }

        #[test]
        fn paths_stay_unitary(seed in any::<u64>(), n in 1usize..5, s in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ua = BoundaryUnitary::new(haar_unitary(n, &mut rng)).unwrap();
            let ub = BoundaryUnitary::new(haar_unitary(n, &mut rng)).unwrap();
            for rule in [PathRule::Eigenphase, PathRule::GreatCircle] {
                let u = interpolate_path(&ua, &ub, rule, s).unwrap();
                prop_assert!(u.defect() < 1e-12);
            }
            let same = interpolate_path(&ua, &ua, PathRule::Eigenphase, s).unwrap();
            prop_assert!(max_abs(&(same.matrix() - ua.matrix())) < 1e-12);
        }
    }
}
