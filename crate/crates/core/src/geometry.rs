//! Discretized flat domains: unions of intervals and rectangles.
//!
//! Node ordering is interior first, then boundary nodes grouped by piece.
//! For interval unions the pieces are `a1, b1, a2, b2, ...`; for rectangles
//! they are `left, right, bottom, top`, with the four corners owned by the
//! horizontal (bottom/top) edges.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::linalg::C64;

/// Smallest admissible resolution (nodes per unit length).
pub const MIN_RESOLUTION: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Intervals(Vec<[f64; 2]>),
    Rectangle {
        #[serde(rename = "L")]
        width: f64,
        #[serde(rename = "H")]
        height: f64,
    },
}

impl DomainSpec {
    pub fn unit_interval() -> Self {
        DomainSpec::Intervals(vec![[0.0, 1.0]])
    }

    /// `[0, 2 pi]`, the ring of the flux examples.
    pub fn ring() -> Self {
        DomainSpec::Intervals(vec![[0.0, 2.0 * PI]])
    }

    pub fn two_unit_intervals() -> Self {
        DomainSpec::Intervals(vec![[0.0, 1.0], [0.0, 1.0]])
    }
}

/// How finely to discretize.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Resolution {
    /// Nodes per unit length (cells per segment = round(n * length)).
    PerUnitLength(usize),
    /// Fixed number of cells on every segment / along every rectangle side.
    Cells(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    /// Global node indices in geometric order from `a` to `b`.
    pub nodes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    Intervals(Vec<Segment>),
    Rectangle {
        width: f64,
        height: f64,
        nx: usize,
        ny: usize,
        hx: f64,
        hy: f64,
        /// Global index of grid node `(i, j)` at `grid[j * (nx + 1) + i]`.
        grid: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPiece {
    pub name: String,
    /// Global node indices, ordered along the piece.
    pub nodes: Vec<usize>,
    /// Boundary-coordinate index of the first node of this piece.
    pub offset: usize,
    pub outward_normal: [f64; 2],
}

impl BoundaryPiece {
    /// Boundary-coordinate indices covered by this piece.
    pub fn coords(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.nodes.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    dimension: usize,
    layout: Layout,
    coords: Vec<[f64; 2]>,
    weights: Vec<f64>,
    n_interior: usize,
    pieces: Vec<BoundaryPiece>,
    boundary_weights: Vec<f64>,
    h: f64,
}

fn cells_for(res: Resolution, length: f64) -> usize {
    match res {
        Resolution::PerUnitLength(n) => ((n as f64) * length).round().max(1.0) as usize,
        Resolution::Cells(c) => c,
    }
}

/// Builds a mesh with `n` nodes per unit length.
pub fn make_mesh(spec: &DomainSpec, n: usize) -> Result<Mesh> {
    if n < MIN_RESOLUTION {
        return Err(config_err(
            "n",
            format!("resolution {n} is below the minimum of {MIN_RESOLUTION} nodes per unit length"),
        ));
    }
    make_mesh_with(spec, Resolution::PerUnitLength(n))
}

pub fn make_mesh_with(spec: &DomainSpec, res: Resolution) -> Result<Mesh> {
    match res {
        Resolution::PerUnitLength(n) if n < MIN_RESOLUTION => {
            return Err(config_err("n", format!("resolution {n} is below {MIN_RESOLUTION}")));
        }
        Resolution::Cells(c) if c < 2 => {
            return Err(config_err("cells", format!("{c} cells; at least 2 are required")));
        }
        _ => {}
    }
    match spec {
        DomainSpec::Intervals(list) => intervals_mesh(list, res),
        DomainSpec::Rectangle { width, height } => rectangle_mesh(*width, *height, res),
    }
}

fn intervals_mesh(list: &[[f64; 2]], res: Resolution) -> Result<Mesh> {
    if list.is_empty() {
        return Err(config_err("intervals", "at least one interval is required"));
    }
    for (k, [a, b]) in list.iter().enumerate() {
        if !(a.is_finite() && b.is_finite()) || b - a <= 0.0 {
            return Err(config_err(
                format!("intervals[{k}]"),
                format!("interval [{a}, {b}] must have positive finite length"),
            ));
        }
    }
    let cells: Vec<usize> = list.iter().map(|[a, b]| cells_for(res, b - a)).collect();
    let n_interior: usize = cells.iter().map(|c| c - 1).sum();
    let n_nodes = n_interior + 2 * list.len();

    let mut coords = vec![[0.0; 2]; n_nodes];
    let mut weights = vec![0.0; n_nodes];
    let mut segments = Vec::with_capacity(list.len());
    let mut pieces = Vec::with_capacity(2 * list.len());
    let mut next_interior = 0;
    let mut h_max = 0.0f64;
    for (k, ([a, b], &nc)) in list.iter().zip(&cells).enumerate() {
        let h = (b - a) / nc as f64;
        h_max = h_max.max(h);
        let left = n_interior + 2 * k;
        let right = left + 1;
        let mut nodes = Vec::with_capacity(nc + 1);
        nodes.push(left);
        for _ in 1..nc {
            nodes.push(next_interior);
            next_interior += 1;
        }
        nodes.push(right);
        for (j, &g) in nodes.iter().enumerate() {
            coords[g] = [if j == nc { *b } else { a + j as f64 * h }, 0.0];
            weights[g] = if j == 0 || j == nc { 0.5 * h } else { h };
        }
        pieces.push(BoundaryPiece {
            name: format!("a{}", k + 1),
            nodes: vec![left],
            offset: 2 * k,
            outward_normal: [-1.0, 0.0],
        });
        pieces.push(BoundaryPiece {
            name: format!("b{}", k + 1),
            nodes: vec![right],
            offset: 2 * k + 1,
            outward_normal: [1.0, 0.0],
        });
        segments.push(Segment { a: *a, b: *b, h, nodes });
    }
    Ok(Mesh {
        dimension: 1,
        layout: Layout::Intervals(segments),
        coords,
        weights,
        n_interior,
        pieces,
        boundary_weights: vec![1.0; 2 * list.len()],
        h: h_max,
    })
}

fn rectangle_mesh(width: f64, height: f64, res: Resolution) -> Result<Mesh> {
    if !(width.is_finite() && width > 0.0) {
        return Err(config_err("rectangle.L", format!("width {width} must be positive")));
    }
    if !(height.is_finite() && height > 0.0) {
        return Err(config_err("rectangle.H", format!("height {height} must be positive")));
    }
    let nx = cells_for(res, width);
    let ny = cells_for(res, height);
    if nx < 2 || ny < 2 {
        return Err(config_err("n", "rectangle needs at least 2 cells per side"));
    }
    let hx = width / nx as f64;
    let hy = height / ny as f64;
    let n_interior = (nx - 1) * (ny - 1);
    let n_nodes = (nx + 1) * (ny + 1);
    let mut grid = vec![usize::MAX; n_nodes];
    for j in 1..ny {
        for i in 1..nx {
            grid[j * (nx + 1) + i] = (j - 1) * (nx - 1) + (i - 1);
        }
    }
    let mut next = n_interior;
    let mut pieces = Vec::with_capacity(4);
    let mut boundary_weights = Vec::with_capacity(n_nodes - n_interior);
    let mut push_piece = |name: &str,
                          cells: Vec<(usize, usize)>,
                          normal: [f64; 2],
                          grid: &mut Vec<usize>,
                          pieces: &mut Vec<BoundaryPiece>,
                          bw: &mut Vec<f64>| {
        let offset = next - n_interior;
        let mut nodes = Vec::with_capacity(cells.len());
        for (i, j) in cells {
            grid[j * (nx + 1) + i] = next;
            nodes.push(next);
            let corner = (i == 0 || i == nx) && (j == 0 || j == ny);
            bw.push(if corner {
                0.5 * (hx + hy)
            } else if j == 0 || j == ny {
                hx
            } else {
                hy
            });
            next += 1;
        }
        pieces.push(BoundaryPiece {
            name: name.to_string(),
            nodes,
            offset,
            outward_normal: normal,
        });
    };
    push_piece(
        "left",
        (1..ny).map(|j| (0, j)).collect(),
        [-1.0, 0.0],
        &mut grid,
        &mut pieces,
        &mut boundary_weights,
    );
    push_piece(
        "right",
        (1..ny).map(|j| (nx, j)).collect(),
        [1.0, 0.0],
        &mut grid,
        &mut pieces,
        &mut boundary_weights,
    );
    push_piece(
        "bottom",
        (0..=nx).map(|i| (i, 0)).collect(),
        [0.0, -1.0],
        &mut grid,
        &mut pieces,
        &mut boundary_weights,
    );
    push_piece(
        "top",
        (0..=nx).map(|i| (i, ny)).collect(),
        [0.0, 1.0],
        &mut grid,
        &mut pieces,
        &mut boundary_weights,
    );

    let mut coords = vec![[0.0; 2]; n_nodes];
    let mut weights = vec![0.0; n_nodes];
    for j in 0..=ny {
        for i in 0..=nx {
            let g = grid[j * (nx + 1) + i];
            let x = if i == nx { width } else { i as f64 * hx };
            let y = if j == ny { height } else { j as f64 * hy };
            coords[g] = [x, y];
            let fx = if i == 0 || i == nx { 0.5 } else { 1.0 };
            let fy = if j == 0 || j == ny { 0.5 } else { 1.0 };
            weights[g] = fx * fy * hx * hy;
        }
    }
    Ok(Mesh {
        dimension: 2,
        layout: Layout::Rectangle {
            width,
            height,
            nx,
            ny,
            hx,
            hy,
            grid,
        },
        coords,
        weights,
        n_interior,
        pieces,
        boundary_weights,
        h: hx.max(hy),
    })
}

impl Mesh {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.n_nodes() - self.n_interior
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Trapezoidal quadrature weights (the diagonal mass matrix).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pieces(&self) -> &[BoundaryPiece] {
        &self.pieces
    }

    pub fn piece(&self, name: &str) -> Option<&BoundaryPiece> {
        self.pieces.iter().find(|p| p.name == name)
    }

    /// Quadrature weights of the boundary inner product, one per boundary
    /// coordinate (1 for interval endpoints).
    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    /// Largest grid spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn volume(&self) -> f64 {
        match &self.layout {
            Layout::Intervals(segs) => segs.iter().map(|s| s.b - s.a).sum(),
            Layout::Rectangle { width, height, .. } => width * height,
        }
    }

    pub fn segments(&self) -> Option<&[Segment]> {
        match &self.layout {
            Layout::Intervals(s) => Some(s),
            _ => None,
        }
    }

    /// Arc-length coordinate along the concatenated segments (1D only).
    pub fn arc_length(&self) -> Option<Vec<f64>> {
        let segs = self.segments()?;
        let mut out = vec![0.0; self.n_nodes()];
        let mut base = 0.0;
        for s in segs {
            for &g in &s.nodes {
                out[g] = base + (self.coords[g][0] - s.a);
            }
            base += s.b - s.a;
        }
        Some(out)
    }

    /// Position and quadrature samples along a boundary piece, for transfer maps.
    pub fn edge_samples(&self, piece: &str) -> Result<crate::boundary::EdgeSamples> {
        let p = self
            .piece(piece)
            .ok_or_else(|| Error::Validation(format!("no boundary piece named `{piece}`")))?;
        let tangential = if p.outward_normal[0] != 0.0 { 1 } else { 0 };
        let positions = p.nodes.iter().map(|&g| self.coords[g][tangential]).collect();
        let weights = p.coords().map(|b| self.boundary_weights[b]).collect();
        crate::boundary::EdgeSamples::new(positions, weights)
    }

    pub fn integrate(&self, values: &[C64]) -> C64 {
        values.iter().zip(&self.weights).map(|(v, &w)| v * w).sum()
    }

    /// `<f, g>` in L^2 with the trapezoidal weights.
    pub fn inner(&self, f: &[C64], g: &[C64]) -> C64 {
        crate::linalg::weighted_vdot(f, &self.weights, g)
    }

    pub fn sample<F: Fn(f64, f64) -> C64>(&self, f: F) -> Vec<C64> {
        self.coords.iter().map(|&[x, y]| f(x, y)).collect()
    }
}

/// Trace and outward normal derivative on the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryOps {
    trace: Vec<usize>,
    normal: Vec<Vec<(usize, f64)>>,
    weights: Vec<f64>,
}

impl BoundaryOps {
    pub fn len(&self) -> usize {
        self.trace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.is_empty()
    }

    /// Node selected by each row of the trace matrix.
    pub fn trace_nodes(&self) -> &[usize] {
        &self.trace
    }

    pub fn normal_stencils(&self) -> &[Vec<(usize, f64)>] {
        &self.normal
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Boundary values `phi`.
    pub fn trace(&self, values: &[C64]) -> Vec<C64> {
        self.trace.iter().map(|&g| values[g]).collect()
    }

    /// Outward normal derivative samples `phi-dot`.
    pub fn normal_derivative(&self, values: &[C64]) -> Vec<C64> {
        self.normal
            .iter()
            .map(|row| row.iter().map(|&(g, c)| values[g] * c).sum())
            .collect()
    }

    /// `<f, g>` on the boundary.
    pub fn boundary_inner(&self, f: &[C64], g: &[C64]) -> C64 {
        crate::linalg::weighted_vdot(f, &self.weights, g)
    }
}

/// One-sided three-point derivative pointing outwards from `nodes[0]`:
/// `(3 f0 - 4 f1 + f2) / (2 h)`.
fn outward_stencil(nodes: [usize; 3], h: f64) -> Vec<(usize, f64)> {
    vec![
        (nodes[0], 1.5 / h),
        (nodes[1], -2.0 / h),
        (nodes[2], 0.5 / h),
    ]
}

pub fn boundary_operators(mesh: &Mesh) -> Result<BoundaryOps> {
    let mut normal = Vec::with_capacity(mesh.n_boundary());
    match mesh.layout() {
        Layout::Intervals(segs) => {
            for (k, s) in segs.iter().enumerate() {
                if s.nodes.len() < 3 {
                    return Err(Error::Stencil(format!(
                        "segment {k} has {} nodes; the normal-derivative stencil needs 3",
                        s.nodes.len()
                    )));
                }
                let n = s.nodes.len();
                normal.push(outward_stencil([s.nodes[0], s.nodes[1], s.nodes[2]], s.h));
                normal.push(outward_stencil(
                    [s.nodes[n - 1], s.nodes[n - 2], s.nodes[n - 3]],
                    s.h,
                ));
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
            for p in mesh.pieces() {
                for &g in &p.nodes {
                    let [x, y] = mesh.coords[g];
                    let i = (x / hx).round() as usize;
                    let j = (y / hy).round() as usize;
                    let row = match p.name.as_str() {
                        "left" => outward_stencil([at(0, j), at(1, j), at(2, j)], *hx),
                        "right" => outward_stencil([at(nx, j), at(nx - 1, j), at(nx - 2, j)], *hx),
                        "bottom" => outward_stencil([at(i, 0), at(i, 1), at(i, 2)], *hy),
                        "top" => outward_stencil([at(i, ny), at(i, ny - 1), at(i, ny - 2)], *hy),
                        other => unreachable!("unknown rectangle piece {other}"),
                    };
                    normal.push(row);
                }
            }
        }
    }
    let trace = (mesh.n_interior()..mesh.n_nodes()).collect();
    Ok(BoundaryOps {
        trace,
        normal,
        weights: mesh.boundary_weights().to_vec(),
    })
}

/// Strong-form `-Laplacian` at every node, with one-sided second
/// differences on boundary nodes.
pub fn negative_laplacian(mesh: &Mesh, values: &[C64]) -> Vec<C64> {
    let second = |f0: C64, f1: C64, f2: C64, h: f64| (f0 - f1 * 2.0 + f2) / (h * h);
    let mut out = vec![C64::new(0.0, 0.0); mesh.n_nodes()];
    match mesh.layout() {
        Layout::Intervals(segs) => {
            for s in segs {
                let n = s.nodes.len();
                let v = |j: usize| values[s.nodes[j]];
                for j in 0..n {
                    let d2 = if j == 0 {
                        second(v(0), v(1), v(2), s.h)
                    } else if j == n - 1 {
                        second(v(n - 1), v(n - 2), v(n - 3), s.h)
                    } else {
                        second(v(j - 1), v(j), v(j + 1), s.h)
                    };
                    out[s.nodes[j]] = -d2;
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
            let v = |i: usize, j: usize| values[grid[j * (nx + 1) + i]];
            for j in 0..=ny {
                for i in 0..=nx {
                    let dxx = if i == 0 {
                        second(v(0, j), v(1, j), v(2, j), *hx)
                    } else if i == nx {
                        second(v(nx, j), v(nx - 1, j), v(nx - 2, j), *hx)
                    } else {
                        second(v(i - 1, j), v(i, j), v(i + 1, j), *hx)
                    };
                    let dyy = if j == 0 {
                        second(v(i, 0), v(i, 1), v(i, 2), *hy)
                    } else if j == ny {
                        second(v(i, ny), v(i, ny - 1), v(i, ny - 2), *hy)
                    } else {
                        second(v(i, j - 1), v(i, j), v(i, j + 1), *hy)
                    };
                    out[grid[j * (nx + 1) + i]] = -(dxx + dyy);
                }
            }
        }
    }
    out
}

/// Both sides of Green's formula for `-Laplacian`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreensSides {
    /// `<Phi, -Lap Psi> - <-Lap Phi, Psi>`
    pub volume: C64,
    /// `<phi-dot, psi>_bd - <phi, psi-dot>_bd`
    pub boundary: C64,
}

impl GreensSides {
    pub fn residual(&self) -> C64 {
        self.volume - self.boundary
    }
}

pub fn greens_sides(mesh: &Mesh, bops: &BoundaryOps, phi: &[C64], psi: &[C64]) -> Result<GreensSides> {
    let n = mesh.n_nodes();
    if phi.len() != n || psi.len() != n {
        return Err(Error::Dimension(format!(
            "Green's formula needs {n} node values, got {} and {}",
            phi.len(),
            psi.len()
        )));
    }
    let lap_phi = negative_laplacian(mesh, phi);
    let lap_psi = negative_laplacian(mesh, psi);
    let volume = mesh.inner(phi, &lap_psi) - mesh.inner(&lap_phi, psi);
    let (tphi, tpsi) = (bops.trace(phi), bops.trace(psi));
    let (nphi, npsi) = (bops.normal_derivative(phi), bops.normal_derivative(psi));
    let boundary = bops.boundary_inner(&nphi, &tpsi) - bops.boundary_inner(&tphi, &npsi);
    Ok(GreensSides { volume, boundary })
}

/// Volume side minus boundary side of Green's formula.
pub fn greens_residual(mesh: &Mesh, bops: &BoundaryOps, phi: &[C64], psi: &[C64]) -> Result<C64> {
    Ok(greens_sides(mesh, bops, phi, psi)?.residual())
}
