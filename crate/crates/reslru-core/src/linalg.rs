//! Small dense complex linear algebra.
//!
//! Matrices here are at most a few dozen rows, so everything is a plain
//! row-major `Vec<C64>`. The Hermitian eigensolver is cyclic Jacobi: it is
//! accurate to machine precision and keeps exact zeros between blocks that
//! never couple, which the dressed-frame code relies on.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{})", self.n, self.n)?;
        for i in 0..self.n {
            for j in 0..self.n {
                let z = self[(i, j)];
                write!(f, " {:+.3e}{:+.3e}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
    }

    /// Builds from row-major data. Fails unless `data.len()` is a square.
    pub fn from_row_major(n: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let brow = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `[self, rhs] = self*rhs - rhs*self`.
    pub fn commutator(&self, rhs: &Self) -> Self {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn diag_re(&self) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, i)].re).collect()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum())
    }

    /// Max |A - A^dagger| entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                m = m.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        m
    }

    /// Max |A + A^dagger| entry.
    pub fn antihermiticity_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                m = m.max((self[(i, j)] + self[(j, i)].conj()).norm());
            }
        }
        m
    }

    /// Replaces `A` by `(A + A^dagger)/2`.
    pub fn hermitize(&mut self) {
        let n = self.n;
        for i in 0..n {
            self.data[i * n + i].im = 0.0;
            for j in i + 1..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    /// Kronecker product `a (x) b`.
    pub fn kron(a: &Self, b: &Self) -> Self {
        let (na, nb) = (a.n, b.n);
        Self::from_fn(na * nb, |i, j| a[(i / nb, j / nb)] * b[(i % nb, j % nb)])
    }

    /// Max |A - B| entry.
    pub fn max_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                self.data[i * n..(i + 1) * n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Permutes columns: column `j` of the result is column `perm[j]` of self.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.n, |i, j| self[(i, perm[j])])
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_re(-1.0)
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.n, rhs.n);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&CMatrix> for CMatrix {
    fn sub_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.n, rhs.n);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, same order as `values`.
    pub vectors: CMatrix,
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Only the Hermitian part of `a` is used. Entries that are exactly zero and
/// belong to blocks that never couple stay exactly zero in the eigenvectors.
pub fn eigh(a: &CMatrix) -> Result<HermitianEigen> {
    let n = a.dim();
    let mut m = a.clone();
    m.hermitize();
    let mut v = CMatrix::identity(n);
    let scale = m.frobenius();
    if n == 0 || scale == 0.0 {
        return Ok(HermitianEigen {
            values: m.diag_re(),
            vectors: v,
        });
    }
    let tol = f64::EPSILON * scale;
    let mut converged = false;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if libm::sqrt(off) <= tol * 1e-2 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                // Below this the rotation is a no-op in floating point.
                if r < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                    m[(p, q)] = ZERO;
                    m[(q, p)] = ZERO;
                    continue;
                }
                let phase = apq / r; // e^{i theta}
                let theta = (aqq - app) / (2.0 * r);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                // J = [[c, s], [-s e^{-i theta}, c e^{-i theta}]] on (p, q).
                let em = phase.conj();
                let jqp = -em * s;
                let jqq = em * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = akp * c + akq * jqp;
                    m[(k, q)] = akp * s + akq * jqq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = apk * c + aqk * jqp.conj();
                    m[(q, k)] = apk * s + aqk * jqq.conj();
                }
                m[(p, q)] = ZERO;
                m[(q, p)] = ZERO;
                m[(p, p)].im = 0.0;
                m[(q, q)].im = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c + vkq * jqp;
                    v[(k, q)] = vkp * s + vkq * jqq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::EigenNoConvergence);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let d = m.diag_re();
    order.sort_by(|&i, &j| {
        d[i].partial_cmp(&d[j])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = v.permute_columns(&order);
    Ok(HermitianEigen { values, vectors })
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.dim();
    let norm = a.norm1();
    let mut s = 0i32;
    if norm > 0.5 {
        s = (libm::log2(norm / 0.5)).ceil() as i32;
    }
    let b = a.scale_re(libm::pow(2.0, -(s as f64)));
    let mut result = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    for k in 1..40 {
        term = term.matmul(&b).scale_re(1.0 / k as f64);
        result += &term;
        if term.max_abs() <= f64::EPSILON * 1e-3 * result.max_abs() {
            break;
        }
    }
    for _ in 0..s {
        result = result.matmul(&result);
    }
    result
}

/// Sparse matrix in coordinate form, used for cheap products inside ODE
/// right-hand sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Sparse {
    n: usize,
    /// Row pointers into `cols`/`vals`, length `n + 1`.
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Sparse {
    /// Keeps entries with modulus above `drop_below`.
    pub fn from_dense(m: &CMatrix, drop_below: f64) -> Self {
        let n = m.dim();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let z = m[(i, j)];
                if z.norm() > drop_below {
                    cols.push(j);
                    vals.push(z);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Row `i` as (column, value) pairs.
    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n);
        for i in 0..self.n {
            for (j, z) in self.row(i) {
                m[(i, j)] = z;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut m = CMatrix::from_fn(n, |_, _| C64::new(next(), next()));
        m.hermitize();
        m
    }

    #[test]
    fn eigh_reconstructs() {
        let a = random_hermitian(12, 7);
        let e = eigh(&a).unwrap();
        let d = CMatrix::from_real_diag(&e.values);
        let back = e.vectors.matmul(&d).matmul(&e.vectors.adjoint());
        assert!(back.max_diff(&a) < 1e-13);
        let id = e.vectors.adjoint().matmul(&e.vectors);
        assert!(id.max_diff(&CMatrix::identity(12)) < 1e-13);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eigh_keeps_block_zeros() {
        let mut a = random_hermitian(6, 3);
        for i in 0..3 {
            for j in 3..6 {
                a[(i, j)] = ZERO;
                a[(j, i)] = ZERO;
            }
        }
        let e = eigh(&a).unwrap();
        for j in 0..6 {
            let col = e.vectors.column(j);
            let top = col[..3].iter().any(|z| *z != ZERO);
            let bottom = col[3..].iter().any(|z| *z != ZERO);
            assert!(!(top && bottom), "eigenvector {j} mixes blocks");
        }
    }

    #[test]
    fn expm_of_diagonal_and_rotation() {
        let d = CMatrix::from_real_diag(&[0.3, -1.2, 2.0]);
        let e = expm(&d);
        for (i, x) in [0.3f64, -1.2, 2.0].iter().enumerate() {
            assert!((e[(i, i)].re - x.exp()).abs() < 1e-13 * x.exp());
        }
        // exp(-i theta sigma_y) is a real rotation.
        let theta = 7.3;
        let mut g = CMatrix::zeros(2);
        g[(0, 1)] = C64::new(-theta, 0.0);
        g[(1, 0)] = C64::new(theta, 0.0);
        let r = expm(&g);
        assert!((r[(0, 0)].re - theta.cos()).abs() < 1e-12);
        assert!((r[(1, 0)].re - theta.sin()).abs() < 1e-12);
    }

    #[test]
    fn sparse_round_trip() {
        let a = random_hermitian(5, 1);
        let s = Sparse::from_dense(&a, 0.0);
        assert_eq!(s.to_dense(), a);
    }
}
