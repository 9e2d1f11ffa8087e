//! Reduced Hermitian operators.
//!
//! Every operator is a nodal Hermitian form restricted to the subspace
//! allowed by the Dirichlet constraints of a boundary condition. The lift
//! `Z` embeds reduced vectors into node space:
//!
//! ```text
//!     interior node i   : x_i / sqrt(m_i)
//!     boundary nodes    : S^{-1} Q G^{-1/2} y,   G = Q^dag diag(m_b / w_b) Q
//! ```
//!
//! with `S = diag(sqrt(w_b))`, `Q` the complement basis of the boundary
//! condition and `m` the nodal masses. `Z` is orthonormal for the mass
//! inner product, so the reduced mass matrix is the identity.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::boundary::{cayley_decompose, unitary_from_preset, BoundaryUnitary, Preset, SelfAdjointBC, PHASE_SNAP_TOL};
use crate::error::{Error, Result};
use crate::geometry::{boundary_operators, BoundaryOps, Layout, Mesh};
use crate::linalg::{inv_sqrt_hermitian, BorderedBanded, C64, I, ZERO};

/// Hermiticity required of every assembled operator.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Embedding of the reduced space into node space.
#[derive(Clone, Debug)]
pub struct Lift {
    mesh: Arc<Mesh>,
    interior_scale: Vec<f64>,
    boundary: DMatrix<C64>,
    g_inv_sqrt: DMatrix<C64>,
    bc: SelfAdjointBC,
}

impl Lift {
    pub fn new(mesh: Arc<Mesh>, bc: SelfAdjointBC) -> Result<Self> {
        let n_b = mesh.n_boundary();
        if bc.dim() != n_b {
            return Err(Error::Dimension(format!(
                "boundary condition acts on {} coordinates, the mesh has {n_b} boundary nodes",
                bc.dim()
            )));
        }
        let n_int = mesh.n_interior();
        let m = mesh.weights();
        let wb = mesh.boundary_weights();
        let interior_scale = m[..n_int].iter().map(|w| 1.0 / w.sqrt()).collect();
        let q = bc.complement_basis();
        let r = q.ncols();
        let (boundary, g_inv_sqrt) = if r == 0 {
            (DMatrix::zeros(n_b, 0), DMatrix::zeros(0, 0))
        } else {
            let d: Vec<f64> = (0..n_b).map(|b| m[n_int + b] / wb[b]).collect();
            let g = crate::linalg::weighted_inner(q, &d, q);
            let gis = inv_sqrt_hermitian(&g)?;
            let mut sq = q * &gis;
            for b in 0..n_b {
                let s = 1.0 / wb[b].sqrt();
                for c in 0..r {
                    sq[(b, c)] *= s;
                }
            }
            (sq, gis)
        };
        Ok(Self {
            mesh,
            interior_scale,
            boundary,
            g_inv_sqrt,
            bc,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn bc(&self) -> &SelfAdjointBC {
        &self.bc
    }

    pub fn n_interior(&self) -> usize {
        self.interior_scale.len()
    }

    /// Reduced boundary degrees of freedom.
    pub fn n_border(&self) -> usize {
        self.boundary.ncols()
    }

    pub fn dim(&self) -> usize {
        self.n_interior() + self.n_border()
    }

    /// Boundary block of `Z`: rows are boundary coordinates.
    pub fn boundary_block(&self) -> &DMatrix<C64> {
        &self.boundary
    }

    /// `Z x` as node values.
    pub fn apply(&self, x: &DVector<C64>) -> Vec<C64> {
        let n_int = self.n_interior();
        let mut out = vec![ZERO; self.mesh.n_nodes()];
        for (i, s) in self.interior_scale.iter().enumerate() {
            out[i] = x[i] * *s;
        }
        if self.n_border() > 0 {
            let y = x.rows(n_int, self.n_border());
            let b = &self.boundary * y;
            for (k, v) in b.iter().enumerate() {
                out[n_int + k] = *v;
            }
        }
        out
    }

    /// `Z^dag M phi`: the mass-orthogonal projection of node values onto the
    /// reduced space, in reduced coordinates.
    pub fn restrict(&self, nodal: &[C64]) -> DVector<C64> {
        let n_int = self.n_interior();
        let m = self.mesh.weights();
        let mut x = DVector::zeros(self.dim());
        for (i, s) in self.interior_scale.iter().enumerate() {
            x[i] = nodal[i] * (m[i] * s);
        }
        for c in 0..self.n_border() {
            let mut acc = ZERO;
            for b in 0..self.boundary.nrows() {
                acc += self.boundary[(b, c)].conj() * nodal[n_int + b] * m[n_int + b];
            }
            x[n_int + c] = acc;
        }
        x
    }

    /// `|W^dag S phi_b|` for the lifted vector.
    pub fn dirichlet_residual(&self, x: &DVector<C64>) -> f64 {
        let nodal = self.apply(x);
        self.nodal_dirichlet_residual(&nodal)
    }

    pub fn nodal_dirichlet_residual(&self, nodal: &[C64]) -> f64 {
        let n_int = self.n_interior();
        let wb = self.mesh.boundary_weights();
        let phi = DVector::from_fn(wb.len(), |b, _| nodal[n_int + b] * wb[b].sqrt());
        self.bc.constraint_residual(&phi)
    }

    /// Dense `Z` (node rows, reduced columns).
    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut z = DMatrix::zeros(self.mesh.n_nodes(), n);
        for (i, s) in self.interior_scale.iter().enumerate() {
            z[(i, i)] = C64::new(*s, 0.0);
        }
        let n_int = self.n_interior();
        z.view_mut((n_int, n_int), self.boundary.shape()).copy_from(&self.boundary);
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    Laplacian,
    Momentum { alpha: f64 },
    Faraday { eps: f64, eps_dot: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub kind: OperatorKind,
    pub n_nodes: usize,
    pub n_dirichlet: usize,
}

/// Stiffness `K`, mass `M` and lift `Z` of a reduced eigenproblem
/// `K x = lambda M x`.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    stiffness: BorderedBanded,
    mass: Vec<f64>,
    lift: Arc<Lift>,
    descriptor: Descriptor,
}

impl HermitianOperator {
    pub fn stiffness(&self) -> &BorderedBanded {
        &self.stiffness
    }

    /// Diagonal of the reduced mass matrix (all ones for an orthonormal lift).
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn lift(&self) -> &Arc<Lift> {
        &self.lift
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn mesh(&self) -> &Mesh {
        self.lift.mesh()
    }

    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        self.stiffness.matvec(x)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.stiffness.hermiticity_defect()
    }

    /// `<x, K x> / <x, M x>`
    pub fn energy(&self, x: &DVector<C64>) -> f64 {
        let kx = self.apply(x);
        x.dotc(&kx).re / self.mass_norm_sq(x)
    }

    pub fn mass_norm_sq(&self, x: &DVector<C64>) -> f64 {
        x.iter().zip(&self.mass).map(|(z, m)| z.norm_sqr() * m).sum()
    }
}

/// Nodal Hermitian form as `(row, col, value)` triplets. Duplicates add.
#[derive(Clone, Debug, Default)]
struct NodalForm {
    entries: Vec<(usize, usize, C64)>,
}

impl NodalForm {
    /// `c |phi_b - conj(p) phi_a|^2`
    fn link(&mut self, a: usize, b: usize, c: f64, p: C64) {
        let c = C64::new(c, 0.0);
        self.entries.push((a, a, c));
        self.entries.push((b, b, c));
        self.entries.push((a, b, -c * p));
        self.entries.push((b, a, -c * p.conj()));
    }

    fn push(&mut self, a: usize, b: usize, v: C64) {
        self.entries.push((a, b, v));
    }
}

/// `Z^dag (form) Z - G^{-1/2} A G^{-1/2}` in bordered-banded layout.
fn reduce(form: &NodalForm, lift: &Lift, robin: bool) -> BorderedBanded {
    let n_int = lift.n_interior();
    let r = lift.n_border();
    let s = &lift.interior_scale;
    let b = &lift.boundary;
    let bandwidth = form
        .entries
        .iter()
        .filter(|(i, j, _)| *i < n_int && *j < n_int)
        .map(|(i, j, _)| i.abs_diff(*j))
        .max()
        .unwrap_or(0);
    let mut k = BorderedBanded::zeros(n_int, bandwidth, r);
    for &(i, j, v) in &form.entries {
        match (i < n_int, j < n_int) {
            (true, true) => *k.band_entry_mut(i, j) += v * (s[i] * s[j]),
            (true, false) => {
                let row = j - n_int;
                for c in 0..r {
                    k.upper_mut()[(i, c)] += v * s[i] * b[(row, c)];
                }
            }
            (false, true) => {
                let row = i - n_int;
                for c in 0..r {
                    k.lower_mut()[(c, j)] += b[(row, c)].conj() * v * s[j];
                }
            }
            (false, false) => {
                let (ri, rj) = (i - n_int, j - n_int);
                for c1 in 0..r {
                    let left = b[(ri, c1)].conj() * v;
                    if left == ZERO {
                        continue;
                    }
                    for c2 in 0..r {
                        k.border_mut()[(c1, c2)] += left * b[(rj, c2)];
                    }
                }
            }
        }
    }
    if robin && r > 0 {
        let g = &lift.g_inv_sqrt;
        let term = g * lift.bc.robin() * g;
        *k.border_mut() -= term;
    }
    k.symmetrize();
    k
}

/// Nearest-neighbour links of the mesh: `(a, b, weight, length)`, with
/// `a -> b` pointing in the +x (or +y) direction.
fn mesh_links(mesh: &Mesh) -> Vec<(usize, usize, f64, f64)> {
    let mut links = Vec::new();
    match mesh.layout() {
        Layout::Intervals(segs) => {
            for s in segs {
                for w in s.nodes.windows(2) {
                    links.push((w[0], w[1], 1.0 / s.h, s.h));
                }
            }
        }
        Layout::Rectangle {
            nx,
            ny,
            hx,
            hy,
            grid,
            ..
        } => {
            let (nx, ny) = (*nx, *ny);
            let at = |i: usize, j: usize| grid[j * (nx + 1) + i];
            for j in 0..=ny {
                let half = if j == 0 || j == ny { 0.5 } else { 1.0 };
                for i in 0..nx {
                    links.push((at(i, j), at(i + 1, j), half * hy / hx, *hx));
                }
            }
            for i in 0..=nx {
                let half = if i == 0 || i == nx { 0.5 } else { 1.0 };
                for j in 0..ny {
                    links.push((at(i, j), at(i, j + 1), half * hx / hy, *hy));
                }
            }
        }
    }
    links
}

fn check_operator(k: &BorderedBanded) -> Result<()> {
    let defect = k.hermiticity_defect();
    if !(defect < HERMITICITY_TOL) {
        return Err(Error::Assembly(format!(
            "assembled operator is not Hermitian: defect {defect:.3e}"
        )));
    }
    Ok(())
}

fn build(form: &NodalForm, mesh: &Mesh, bc: &SelfAdjointBC, robin: bool, kind: OperatorKind) -> Result<HermitianOperator> {
    let lift = Arc::new(Lift::new(Arc::new(mesh.clone()), bc.clone())?);
    build_on(form, lift, robin, kind)
}

fn build_on(form: &NodalForm, lift: Arc<Lift>, robin: bool, kind: OperatorKind) -> Result<HermitianOperator> {
    let stiffness = reduce(form, &lift, robin);
    check_operator(&stiffness)?;
    let dim = lift.dim();
    Ok(HermitianOperator {
        stiffness,
        mass: vec![1.0; dim],
        descriptor: Descriptor {
            kind,
            n_nodes: lift.mesh().n_nodes(),
            n_dirichlet: lift.bc().n_dirichlet(),
        },
        lift,
    })
}

fn check_bc(bops: &BoundaryOps, mesh: &Mesh, bc: &SelfAdjointBC) -> Result<()> {
    if bops.len() != mesh.n_boundary() {
        return Err(Error::Dimension(format!(
            "boundary operators cover {} nodes, the mesh has {}",
            bops.len(),
            mesh.n_boundary()
        )));
    }
    if bc.dim() != mesh.n_boundary() {
        return Err(Error::Dimension(format!(
            "boundary condition acts on {} coordinates, the mesh has {} boundary nodes",
            bc.dim(),
            mesh.n_boundary()
        )));
    }
    Ok(())
}

/// `-Laplacian` from the form `int |grad phi|^2 - <phi_perp, A phi_perp>`.
pub fn assemble_laplacian(mesh: &Mesh, bops: &BoundaryOps, bc: &SelfAdjointBC) -> Result<HermitianOperator> {
    check_bc(bops, mesh, bc)?;
    let mut form = NodalForm::default();
    for (a, b, c, _) in mesh_links(mesh) {
        form.link(a, b, c, C64::new(1.0, 0.0));
    }
    build(&form, mesh, bc, true, OperatorKind::Laplacian)
}

/// Convenience: boundary operators and Cayley decomposition in one call.
pub fn laplacian_for(mesh: &Mesh, u: &BoundaryUnitary) -> Result<HermitianOperator> {
    let bops = boundary_operators(mesh)?;
    let bc = cayley_decompose(u, PHASE_SNAP_TOL)?;
    assemble_laplacian(mesh, &bops, &bc)
}

fn single_interval(mesh: &Mesh, what: &str) -> Result<(f64, f64)> {
    match mesh.segments() {
        Some([s]) => Ok((s.a, s.b)),
        _ => Err(Error::UnsupportedDomain(format!(
            "{what} is defined on a single interval"
        ))),
    }
}

/// `i d/dx` with `phi(a) = e^{i alpha} phi(b)`, central differences.
pub fn assemble_momentum(mesh: &Mesh, alpha: f64) -> Result<HermitianOperator> {
    single_interval(mesh, "the momentum operator")?;
    let u = unitary_from_preset(&Preset::QuasiPeriodic { alpha }, 2)?;
    let bc = cayley_decompose(&u, PHASE_SNAP_TOL)?;
    let mut form = NodalForm::default();
    for (a, b, _, _) in mesh_links(mesh) {
        form.push(a, b, I * 0.5);
        form.push(b, a, -I * 0.5);
    }
    build(&form, mesh, &bc, false, OperatorKind::Momentum { alpha })
}

fn require_ring(mesh: &Mesh) -> Result<()> {
    let (a, b) = single_interval(mesh, "the flux ring")?;
    if a.abs() > 1e-12 || (b - 2.0 * PI).abs() > 1e-12 {
        return Err(Error::UnsupportedDomain(format!(
            "the flux ring is [0, 2 pi], got [{a}, {b}]"
        )));
    }
    Ok(())
}

/// Angle of each node reduced to `[0, 2 pi)`; the endpoint `2 pi` maps to 0.
pub fn ring_angles(mesh: &Mesh) -> Vec<f64> {
    mesh.coords()
        .iter()
        .map(|c| {
            let t = c[0].rem_euclid(2.0 * PI);
            if 2.0 * PI - t < 1e-12 {
                0.0
            } else {
                t
            }
        })
        .collect()
}

/// The periodic reference boundary condition of the flux ring.
pub fn periodic_bc() -> Result<SelfAdjointBC> {
    cayley_decompose(&unitary_from_preset(&Preset::Periodic, 2)?, PHASE_SNAP_TOL)
}

/// Faraday operators for varying flux on one ring, sharing a single lift.
#[derive(Clone, Debug)]
pub struct FaradayFamily {
    lift: Arc<Lift>,
    links: Vec<(usize, usize, f64, f64)>,
    /// `m_j theta_j`
    potential: Vec<f64>,
}

impl FaradayFamily {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        require_ring(mesh)?;
        let lift = Arc::new(Lift::new(Arc::new(mesh.clone()), periodic_bc()?)?);
        let m = mesh.weights();
        let potential = ring_angles(mesh).iter().zip(m).map(|(t, w)| t * w).collect();
        Ok(Self {
            lift,
            links: mesh_links(mesh),
            potential,
        })
    }

    pub fn lift(&self) -> &Arc<Lift> {
        &self.lift
    }

    pub fn mesh(&self) -> &Mesh {
        self.lift.mesh()
    }

    /// `(i d/dtheta - eps)^2 + theta * eps_dot`
    pub fn operator(&self, eps: f64, eps_dot: f64) -> Result<HermitianOperator> {
        let mut form = NodalForm::default();
        for &(a, b, c, h) in &self.links {
            form.link(a, b, c, C64::from_polar(1.0, eps * h));
        }
        if eps_dot != 0.0 {
            for (j, v) in self.potential.iter().enumerate() {
                form.push(j, j, C64::new(v * eps_dot, 0.0));
            }
        }
        build_on(&form, self.lift.clone(), false, OperatorKind::Faraday { eps, eps_dot })
    }
}

/// `(i d/dtheta - eps)^2 + theta * eps_dot` on the periodic ring, with the
/// angle taken in `[0, 2 pi)`.
pub fn assemble_faraday(mesh: &Mesh, eps: f64, eps_dot: f64) -> Result<HermitianOperator> {
    FaradayFamily::new(mesh)?.operator(eps, eps_dot)
}

/// Complex amplitudes on the reduced space of some operator.
#[derive(Clone, Debug)]
pub struct Wavefunction {
    amplitudes: DVector<C64>,
    lift: Arc<Lift>,
}

impl Wavefunction {
    pub fn new(amplitudes: DVector<C64>, lift: Arc<Lift>) -> Result<Self> {
        if amplitudes.len() != lift.dim() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for a reduced space of dimension {}",
                amplitudes.len(),
                lift.dim()
            )));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation("wavefunction has non-finite amplitudes".into()));
        }
        Ok(Self { amplitudes, lift })
    }

    /// Projects node values onto the reduced space of `lift`.
    pub fn from_nodal(nodal: &[C64], lift: Arc<Lift>) -> Result<Self> {
        if nodal.len() != lift.mesh().n_nodes() {
            return Err(Error::Dimension(format!(
                "{} node values for a mesh of {} nodes",
                nodal.len(),
                lift.mesh().n_nodes()
            )));
        }
        let x = lift.restrict(nodal);
        Self::new(x, lift)
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn lift(&self) -> &Arc<Lift> {
        &self.lift
    }

    pub fn nodal(&self) -> Vec<C64> {
        self.lift.apply(&self.amplitudes)
    }

    /// Norm in the mass inner product.
    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self {
            amplitudes: &self.amplitudes / C64::new(n, 0.0),
            lift: self.lift.clone(),
        }
    }

    /// `<self, other>` in node space, valid across different lifts on the
    /// same mesh.
    pub fn inner(&self, other: &Wavefunction) -> C64 {
        if Arc::ptr_eq(&self.lift, &other.lift) {
            return self.amplitudes.dotc(&other.amplitudes);
        }
        self.lift.mesh().inner(&self.nodal(), &other.nodal())
    }

    /// `|<self, other>|^2 / (|self|^2 |other|^2)`
    pub fn fidelity(&self, other: &Wavefunction) -> f64 {
        let o = self.inner(other).norm_sqr();
        let (a, b) = (self.norm(), other.norm());
        o / (a * a * b * b)
    }
}
