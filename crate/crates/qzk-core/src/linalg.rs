//! Dense complex matrices, Hermitian eigensolvers and a matrix-free Lanczos driver.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::C64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("Lanczos did not converge: best residual {residual:e} after {restarts} restarts")]
    NotConverged { residual: f64, restarts: usize },
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real entries given row by row.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self, LinalgError> {
        Self::from_vec(rows, cols, entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// |u⟩⟨v|
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for (i, a) in u.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                m.data[i * v.len() + j] = a * b.conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut m = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out = &mut m.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for (o, b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn kron(&self, other: &Matrix) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut m = Self::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        m.data[(i * other.rows + k) * cols + j * other.cols + l] = a * other[(k, l)];
                    }
                }
            }
        }
        m
    }

    pub fn add(&self, other: &Matrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// ‖M†M − I‖_max ≤ tol
    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square() && self.adjoint().matmul(self).max_abs_diff(&Matrix::identity(self.rows)) <= tol
    }

    /// Hermitian eigendecomposition by cyclic Jacobi rotations.
    pub fn eigh(&self) -> Result<Eigen, LinalgError> {
        eigh(self)
    }

    /// Square root of a positive semidefinite Hermitian matrix; negative eigenvalues are clipped.
    pub fn sqrt_psd(&self) -> Result<Matrix, LinalgError> {
        let e = self.eigh()?;
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in e.values.iter().enumerate() {
            let s = lam.max(0.0).sqrt();
            if s == 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = e.vectors[(i, k)] * s;
                for j in 0..n {
                    out.data[i * n + j] += vi * e.vectors[(j, k)].conj();
                }
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenvalues in ascending order with eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

fn eigh(m: &Matrix) -> Result<Eigen, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows, cols: m.cols });
    }
    let n = m.rows;
    // symmetrize to kill round-off asymmetry
    let mut a = m.add(&m.adjoint()).scale(C64::new(0.5, 0.0));
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let zeta = (aqq - app) / (2.0 * mag);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = diag(1, conj(phase)) · [[c, s], [-s, c]]
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = phase.conj() * (-s);
                let g_qq = phase.conj() * c;
                // A ← A G
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * g_pp + aiq * g_qp;
                    a[(i, q)] = aip * g_pq + aiq * g_qq;
                }
                // A ← G† A
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = g_pp.conj() * apj + g_qp.conj() * aqj;
                    a[(q, j)] = g_pq.conj() * apj + g_qq.conj() * aqj;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * g_pp + viq * g_qp;
                    v[(i, q)] = vip * g_pq + viq * g_qq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new)] = v[(i, old)];
        }
    }
    Ok(Eigen { values, vectors })
}

/// Eigen-decomposition of a real symmetric tridiagonal matrix by implicit QL.
/// Returns ascending eigenvalues and the eigenvector matrix (column k ↔ value k), row-major `n × n`.
pub fn tridiagonal_eigen(diag: &[f64], offdiag: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&offdiag[..n.saturating_sub(1)]);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f2 = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f2;
                    z[k * n + i] = c * z[k * n + i] - s * f2;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + new] = z[k * n + old];
        }
    }
    (values, vecs)
}

/// Householder QR of a square matrix: returns (Q, R) with Q unitary and R upper triangular.
pub fn qr(a: &Matrix) -> Result<(Matrix, Matrix), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows, cols: a.cols });
    }
    let n = a.rows;
    let mut r = a.clone();
    let mut q = Matrix::identity(n);
    for k in 0..n {
        let norm_x: f64 = (k..n).map(|i| r[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let x0 = r[(k, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let mut v: Vec<C64> = (k..n).map(|i| r[(i, k)]).collect();
        v[0] += phase * norm_x;
        let vnorm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // R ← (I − 2vv†) R on rows k..n
        for j in 0..n {
            let dot: C64 = v.iter().enumerate().map(|(t, vt)| vt.conj() * r[(k + t, j)]).sum();
            for (t, vt) in v.iter().enumerate() {
                r[(k + t, j)] -= vt * dot * 2.0;
            }
        }
        // Q ← Q (I − 2vv†)
        for i in 0..n {
            let dot: C64 = v.iter().enumerate().map(|(t, vt)| q[(i, k + t)] * vt).sum();
            for (t, vt) in v.iter().enumerate() {
                q[(i, k + t)] -= dot * vt.conj() * 2.0;
            }
        }
    }
    Ok((q, r))
}

/// Hermitian operator known only through its action on vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// y = A x (y is overwritten)
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        self.rows
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Negated view of an operator, so the lowest-eigenvalue driver finds the top of the spectrum.
pub struct Negated<'a, A: LinearOperator + ?Sized>(pub &'a A);

impl<A: LinearOperator + ?Sized> LinearOperator for Negated<'_, A> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.0.apply(x, y);
        for z in y.iter_mut() {
            *z = -*z;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Residual target, relative to max(1, ‖A‖ estimate).
    pub tol: f64,
    pub max_krylov: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_krylov: 160, max_restarts: 5, seed: 0x5eed }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<C64>,
    pub residual: f64,
}

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let nv = norm(&v);
    for z in v.iter_mut() {
        *z /= nv;
    }
    v
}

fn orthogonalize(w: &mut [C64], basis: &[Vec<C64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, w);
            for (x, y) in w.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
    }
}

/// Lowest eigenpair of a Hermitian operator by Lanczos with full reorthogonalization
/// and explicit restarts from the current Ritz vector.
pub fn lowest_eigenpair<A: LinearOperator + ?Sized>(
    op: &A,
    opts: LanczosOptions,
) -> Result<EigenPair, LinalgError> {
    let dim = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start = random_unit(dim, &mut rng);
    let mut best: Option<EigenPair> = None;
    let mut norm_est: f64 = 0.0;
    for restart in 0..=opts.max_restarts {
        let mut basis: Vec<Vec<C64>> = Vec::new();
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut v = start.clone();
        let mut w = vec![C64::new(0.0, 0.0); dim];
        let kmax = opts.max_krylov.min(dim).max(1);
        loop {
            op.apply(&v, &mut w);
            let alpha = dot(&v, &w).re;
            basis.push(v.clone());
            alphas.push(alpha);
            orthogonalize(&mut w, &basis);
            let beta = norm(&w);
            norm_est = norm_est.max(alpha.abs() + beta);
            let k = alphas.len();
            let breakdown = beta <= 1e-13 * norm_est.max(1.0);
            if breakdown || k >= kmax {
                let (vals, vecs) = tridiagonal_eigen(&alphas, &betas);
                let mut x = vec![C64::new(0.0, 0.0); dim];
                for (j, b) in basis.iter().enumerate() {
                    let c = vecs[j * k];
                    for (xi, bi) in x.iter_mut().zip(b) {
                        *xi += bi * c;
                    }
                }
                let nx = norm(&x);
                for z in x.iter_mut() {
                    *z /= nx;
                }
                let theta = vals[0];
                op.apply(&x, &mut w);
                let res = norm(&w.iter().zip(&x).map(|(a, b)| a - b * theta).collect::<Vec<_>>());
                let pair = EigenPair { value: theta, vector: x.clone(), residual: res };
                if res <= opts.tol * norm_est.max(1.0) {
                    return Ok(pair);
                }
                if best.as_ref().map_or(true, |b| pair.residual < b.residual) {
                    best = Some(pair);
                }
                start = if breakdown && k < kmax {
                    // invariant subspace without the target accuracy: perturb the start
                    let mut s = random_unit(dim, &mut rng);
                    for (si, xi) in s.iter_mut().zip(&x) {
                        *si = *si * 1e-3 + xi;
                    }
                    let ns = norm(&s);
                    s.iter_mut().for_each(|z| *z /= ns);
                    s
                } else {
                    x
                };
                let _ = restart;
                break;
            }
            betas.push(beta);
            v = w.iter().map(|z| z / beta).collect();
        }
    }
    Err(LinalgError::NotConverged {
        residual: best.map_or(f64::INFINITY, |b| b.residual),
        restarts: opts.max_restarts,
    })
}
