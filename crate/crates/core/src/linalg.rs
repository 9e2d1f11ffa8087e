//! Dense helpers and the bordered-banded matrix format used for every
//! reduced operator.
//!
//! Reduced operators order their degrees of freedom interior-first, so the
//! leading block is banded and the boundary couples in through a thin dense
//! border:
//!
//! ```text
//!     [ B  C ]    B: banded, bandwidth w
//!     [ E  D ]    C: n_band x r,  E: r x n_band,  D: r x r dense
//! ```
//!
//! Factorization eliminates `B` without pivoting and forms the dense Schur
//! complement `D - E B^{-1} C`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use nalgebra;

pub type C64 = nalgebra::Complex<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct BorderedBanded {
    n_band: usize,
    bandwidth: usize,
    /// Row-major band storage, `2 * bandwidth + 1` entries per row.
    band: Vec<C64>,
    upper: DMatrix<C64>,
    lower: DMatrix<C64>,
    border: DMatrix<C64>,
}

impl BorderedBanded {
    pub fn zeros(n_band: usize, bandwidth: usize, n_border: usize) -> Self {
        Self {
            n_band,
            bandwidth,
            band: vec![ZERO; n_band * (2 * bandwidth + 1)],
            upper: DMatrix::zeros(n_band, n_border),
            lower: DMatrix::zeros(n_border, n_band),
            border: DMatrix::zeros(n_border, n_border),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_band + self.border.nrows()
    }

    pub fn n_band(&self) -> usize {
        self.n_band
    }

    pub fn n_border(&self) -> usize {
        self.border.nrows()
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bandwidth + 1) + (j + self.bandwidth - i)
    }

    /// Band entry; zero outside the band.
    pub fn band_entry(&self, i: usize, j: usize) -> C64 {
        if i.abs_diff(j) > self.bandwidth {
            ZERO
        } else {
            self.band[self.slot(i, j)]
        }
    }

    pub fn band_entry_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        assert!(
            i.abs_diff(j) <= self.bandwidth,
            "({i}, {j}) outside bandwidth {}",
            self.bandwidth
        );
        let k = self.slot(i, j);
        &mut self.band[k]
    }

    pub fn upper(&self) -> &DMatrix<C64> {
        &self.upper
    }

    pub fn upper_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.upper
    }

    pub fn lower(&self) -> &DMatrix<C64> {
        &self.lower
    }

    pub fn lower_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.lower
    }

    pub fn border(&self) -> &DMatrix<C64> {
        &self.border
    }

    pub fn border_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.border
    }

    /// Element access over the full matrix.
    pub fn get(&self, i: usize, j: usize) -> C64 {
        let nb = self.n_band;
        match (i < nb, j < nb) {
            (true, true) => self.band_entry(i, j),
            (true, false) => self.upper[(i, j - nb)],
            (false, true) => self.lower[(i - nb, j)],
            (false, false) => self.border[(i - nb, j - nb)],
        }
    }

    pub fn matvec(&self, x: &DVector<C64>) -> DVector<C64> {
        assert_eq!(x.len(), self.dim());
        let nb = self.n_band;
        let w = self.bandwidth;
        let mut y = DVector::zeros(self.dim());
        for i in 0..nb {
            let lo = i.saturating_sub(w);
            let hi = (i + w + 1).min(nb);
            let mut acc = ZERO;
            for j in lo..hi {
                acc += self.band[self.slot(i, j)] * x[j];
            }
            y[i] = acc;
        }
        let xb = x.rows(nb, self.n_border());
        let xi = x.rows(0, nb);
        if self.n_border() > 0 {
            let top = &self.upper * xb;
            for i in 0..nb {
                y[i] += top[i];
            }
            let bottom = &self.lower * xi + &self.border * xb;
            y.rows_mut(nb, self.n_border()).copy_from(&bottom);
        }
        y
    }

    /// Applies the operator to every column of `x`.
    pub fn matmul(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for c in 0..x.ncols() {
            let col = self.matvec(&x.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Largest |A_ij - conj(A_ji)|.
    pub fn hermiticity_defect(&self) -> f64 {
        let nb = self.n_band;
        let mut worst = 0.0f64;
        for i in 0..nb {
            for j in i..(i + self.bandwidth + 1).min(nb) {
                worst = worst.max((self.band_entry(i, j) - self.band_entry(j, i).conj()).norm());
            }
        }
        for i in 0..nb {
            for c in 0..self.n_border() {
                worst = worst.max((self.upper[(i, c)] - self.lower[(c, i)].conj()).norm());
            }
        }
        worst.max(max_abs(&(&self.border - self.border.adjoint())))
    }

    /// Replaces every block by its Hermitian part so that the symmetry holds
    /// bit for bit.
    pub fn symmetrize(&mut self) {
        let nb = self.n_band;
        for i in 0..nb {
            for j in i..(i + self.bandwidth + 1).min(nb) {
                let a = self.band_entry(i, j);
                let b = self.band_entry(j, i);
                let avg = (a + b.conj()) * 0.5;
                *self.band_entry_mut(i, j) = avg;
                *self.band_entry_mut(j, i) = avg.conj();
            }
        }
        let avg = (&self.upper + self.lower.adjoint()) * C64::new(0.5, 0.0);
        self.lower = avg.adjoint();
        self.upper = avg;
        let d = (&self.border + self.border.adjoint()) * C64::new(0.5, 0.0);
        self.border = d;
    }

    /// Max row sum of absolute values (infinity norm).
    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut s = 0.0;
            if i < self.n_band {
                let lo = i.saturating_sub(self.bandwidth);
                let hi = (i + self.bandwidth + 1).min(self.n_band);
                for j in lo..hi {
                    s += self.band_entry(i, j).norm();
                }
                s += self.upper.row(i).iter().map(|z| z.norm()).sum::<f64>();
            } else {
                let r = i - self.n_band;
                s += self.lower.row(r).iter().map(|z| z.norm()).sum::<f64>();
                s += self.border.row(r).iter().map(|z| z.norm()).sum::<f64>();
            }
            worst = worst.max(s);
        }
        worst
    }

    /// Returns `shift * diag(d) + scale * self`.
    pub fn shifted(&self, shift: C64, diag: &[f64], scale: C64) -> Self {
        assert_eq!(diag.len(), self.dim());
        let mut out = self.clone();
        for z in out.band.iter_mut() {
            *z *= scale;
        }
        out.upper *= scale;
        out.lower *= scale;
        out.border *= scale;
        let nb = self.n_band;
        for i in 0..nb {
            *out.band_entry_mut(i, i) += shift * diag[i];
        }
        for r in 0..self.n_border() {
            out.border[(r, r)] += shift * diag[nb + r];
        }
        out
    }

    /// LU factorization, no pivoting inside the band.
    ///
    /// Stable for matrices whose Hermitian part is positive definite, which
    /// covers `K - sigma M` below the spectrum and the Crank-Nicolson step
    /// matrix `M + i dt/2 K`.
    pub fn factor(&self) -> Result<BorderedLu> {
        let nb = self.n_band;
        let w = self.bandwidth;
        let mut lu = self.band.clone();
        let stride = 2 * w + 1;
        let idx = |i: usize, j: usize| i * stride + (j + w - i);
        let scale = self.norm_inf().max(f64::MIN_POSITIVE);
        let mut pivots = Vec::with_capacity(nb);
        for k in 0..nb {
            let piv = lu[idx(k, k)];
            if piv.norm() <= 1e-14 * scale {
                return Err(Error::Solver(format!(
                    "zero pivot {piv} at band row {k} (matrix scale {scale:.3e})"
                )));
            }
            pivots.push(piv);
            let end = (k + w + 1).min(nb);
            for i in (k + 1)..end {
                let l = lu[idx(i, k)] / piv;
                lu[idx(i, k)] = l;
                if l == ZERO {
                    continue;
                }
                for j in (k + 1)..end {
                    let ukj = lu[idx(k, j)];
                    lu[idx(i, j)] -= l * ukj;
                }
            }
        }
        let mut factor = BorderedLu {
            n_band: nb,
            bandwidth: w,
            lu,
            pivots,
            lower: self.lower.clone(),
            solved_upper: DMatrix::zeros(nb, self.n_border()),
            schur: None,
            schur_matrix: DMatrix::zeros(0, 0),
        };
        if self.n_border() > 0 {
            let mut y = self.upper.clone();
            for c in 0..y.ncols() {
                let mut col: Vec<C64> = y.column(c).iter().copied().collect();
                factor.band_solve_in_place(&mut col);
                for (i, z) in col.into_iter().enumerate() {
                    y[(i, c)] = z;
                }
            }
            let schur = &self.border - &self.lower * &y;
            factor.solved_upper = y;
            let lu = schur.clone().lu();
            if !lu.is_invertible() {
                return Err(Error::Solver("singular Schur complement".into()));
            }
            factor.schur = Some(lu);
            factor.schur_matrix = schur;
        }
        Ok(factor)
    }
}

/// Factorization produced by [`BorderedBanded::factor`].
#[derive(Clone, Debug)]
pub struct BorderedLu {
    n_band: usize,
    bandwidth: usize,
    lu: Vec<C64>,
    pivots: Vec<C64>,
    lower: DMatrix<C64>,
    solved_upper: DMatrix<C64>,
    schur: Option<nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>>,
    schur_matrix: DMatrix<C64>,
}

impl BorderedLu {
    fn band_solve_in_place(&self, x: &mut [C64]) {
        let w = self.bandwidth;
        let nb = self.n_band;
        let stride = 2 * w + 1;
        let idx = |i: usize, j: usize| i * stride + (j + w - i);
        for i in 0..nb {
            let lo = i.saturating_sub(w);
            let mut acc = x[i];
            for j in lo..i {
                acc -= self.lu[idx(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..nb).rev() {
            let hi = (i + w + 1).min(nb);
            let mut acc = x[i];
            for j in (i + 1)..hi {
                acc -= self.lu[idx(i, j)] * x[j];
            }
            x[i] = acc / self.lu[idx(i, i)];
        }
    }

    pub fn solve(&self, rhs: &DVector<C64>) -> DVector<C64> {
        let nb = self.n_band;
        let mut z: Vec<C64> = rhs.rows(0, nb).iter().copied().collect();
        self.band_solve_in_place(&mut z);
        let mut out = DVector::zeros(rhs.len());
        match &self.schur {
            None => {
                for (i, v) in z.into_iter().enumerate() {
                    out[i] = v;
                }
            }
            Some(s) => {
                let zb = DVector::from_vec(z);
                let r = rhs.len() - nb;
                let reduced = rhs.rows(nb, r) - &self.lower * &zb;
                let yb = s.solve(&reduced).expect("Schur complement checked invertible");
                let xi = zb - &self.solved_upper * &yb;
                out.rows_mut(0, nb).copy_from(&xi);
                out.rows_mut(nb, r).copy_from(&yb);
            }
        }
        out
    }

    /// Number of negative eigenvalues of the factored Hermitian matrix, by
    /// Sylvester's law: negative band pivots plus negative eigenvalues of
    /// the Schur complement. `None` when a pivot is not real.
    pub fn negative_count(&self) -> Option<usize> {
        let scale = self
            .pivots
            .iter()
            .map(|p| p.norm())
            .fold(1.0f64, f64::max);
        if self.pivots.iter().any(|p| p.im.abs() > 1e-8 * scale) {
            return None;
        }
        let band = self.pivots.iter().filter(|p| p.re <= 0.0).count();
        let border = if self.schur_matrix.nrows() == 0 {
            0
        } else {
            let h = hermitian_part(&self.schur_matrix);
            h.symmetric_eigenvalues().iter().filter(|&&v| v <= 0.0).count()
        };
        Some(band + border)
    }

    /// True when the factored matrix was Hermitian positive definite.
    pub fn is_positive_definite(&self) -> bool {
        self.negative_count() == Some(0)
    }
}

/// Largest entry modulus.
pub fn max_abs<R, Cc, S>(a: &nalgebra::Matrix<C64, R, Cc, S>) -> f64
where
    R: nalgebra::Dim,
    Cc: nalgebra::Dim,
    S: nalgebra::RawStorage<C64, R, Cc>,
{
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn hermitian_part(a: &DMatrix<C64>) -> DMatrix<C64> {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// max |A^dag A - I|
pub fn unitarity_defect(a: &DMatrix<C64>) -> f64 {
    let n = a.ncols();
    max_abs(&(a.adjoint() * a - DMatrix::<C64>::identity(n, n)))
}

pub fn hermiticity_defect(a: &DMatrix<C64>) -> f64 {
    max_abs(&(a - a.adjoint()))
}

/// Nearest unitary (isometry when rectangular) in the Frobenius norm.
pub fn polar_unitary(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let svd = a.clone().svd(true, true);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 1e-12 * svd.singular_values.max().max(1.0)) {
        return Err(Error::Validation(format!(
            "matrix is rank deficient (smallest singular value {smin:.3e}); no polar factor"
        )));
    }
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    Ok(u * vt)
}

/// Unitary factor `U V^dag` of the SVD, defined even when `a` is rank
/// deficient (the factor is then not unique).
pub fn polar_factor(a: &DMatrix<C64>) -> DMatrix<C64> {
    let svd = a.clone().svd(true, true);
    svd.u.expect("requested") * svd.v_t.expect("requested")
}

/// `G^{-1/2}` for a Hermitian positive definite matrix.
pub fn inv_sqrt_hermitian(g: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let eig = hermitian_part(g).symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    if eig.eigenvalues.iter().any(|&v| v <= 1e-10 * max) {
        return Err(Error::Assembly(format!(
            "Gram matrix is rank deficient (eigenvalues {:?})",
            eig.eigenvalues.as_slice()
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| C64::new(1.0 / v.sqrt(), 0.0)));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Eigen-decomposition of a normal matrix through the complex Schur form.
/// Returns eigenvalues and orthonormal eigenvectors (columns).
pub fn normal_eigen(a: &DMatrix<C64>) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Solver("complex Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let vals = (0..n).map(|i| t[(i, i)]).collect();
    Ok((vals, q))
}

/// Orthonormal basis of the Hermitian matrix `h` as ascending eigenpairs.
pub fn hermitian_eigen_sorted(h: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = hermitian_part(h).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(h.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the
/// phases of `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let z = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) / std::f64::consts::SQRT_2
    });
    let qr = z.qr();
    let (q, r) = qr.unpack();
    let phases = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| {
        let d = r[(i, i)];
        if d.norm() > 0.0 {
            d / d.norm()
        } else {
            ONE
        }
    }));
    q * phases
}

/// `a^dag diag(w) b` for column blocks.
pub fn weighted_inner(a: &DMatrix<C64>, w: &[f64], b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut wb = b.clone();
    for (r, &wr) in w.iter().enumerate() {
        for c in 0..wb.ncols() {
            wb[(r, c)] *= wr;
        }
    }
    a.adjoint() * wb
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn weighted_vdot(a: &[C64], w: &[f64], b: &[C64]) -> C64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), &m)| x.conj() * y * m)
        .sum()
}

/// Unitary polar factor of `a^dag b` used to rotate `b` onto `a`
/// (orthogonal Procrustes).
pub fn procrustes_rotation(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let g = b.adjoint() * a;
    let svd = g.svd(true, true);
    Ok(svd.u.expect("requested") * svd.v_t.expect("requested"))
}
