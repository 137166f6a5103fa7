//! Small dense linear algebra: LU solves, symmetric eigenvalues, matrix exponential.
//!
//! Matrices are square and row-major. Sizes at desk scale (a few hundred states) keep
//! the cubic routines cheap, and everything here is deterministic.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds from row-major data of length `n * n`.
    pub fn from_row_major(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                let orow = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| x * s).collect() }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + s * b).collect() }
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        let n = self.n;
        (0..n).map(|j| (0..n).map(|i| self.data[i * n + j].abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    /// Row vector times matrix, `v · A`.
    pub fn left_mul(&self, v: &[T]) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// Matrix times column vector, `A · v`.
    pub fn right_mul(&self, v: &[T]) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    /// Returns `None` when a pivot is exactly zero.
    pub fn factor(a: &DenseMatrix<T>) -> Option<Self> {
        let n = a.n;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = lu[k * n + j];
                        lu[i * n + j] -= f * u;
                    }
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix<T>) -> DenseMatrix<T> {
        let n = self.n;
        let bt = b.transpose();
        let mut cols = Vec::with_capacity(n * n);
        for j in 0..n {
            cols.extend(self.solve(bt.row(j)));
        }
        DenseMatrix { n, data: cols }.transpose()
    }
}

/// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi rotations).
pub fn symmetric_eigenvalues<T: Real>(a: &DenseMatrix<T>) -> Vec<T> {
    let n = a.n;
    let mut m = a.clone();
    let off = |m: &DenseMatrix<T>| {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s
    };
    let scale: T = m.data.iter().map(|&x| x * x).sum::<T>();
    let target = scale * T::epsilon() * T::epsilon();
    for _sweep in 0..100 {
        if off(&m) <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Result of [`expm`]: the exponential and the number of squarings applied.
#[derive(Debug, Clone)]
pub struct Expm<T> {
    pub value: DenseMatrix<T>,
    pub squarings: u32,
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
///
/// Fails with [`Error::Stiff`] when more than 60 squarings would be needed.
pub fn expm<T: Real>(a: &DenseMatrix<T>) -> Result<Expm<T>> {
    let n = a.n;
    let norm = a.norm_one().as_f64();
    if !norm.is_finite() {
        return Err(Error::InvalidInput("matrix exponential of non-finite matrix".into()));
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as u32 } else { 0 };
    if s > 60 {
        return Err(Error::Stiff { squarings: s });
    }
    let a = a.scale(T::of(0.5f64.powi(s as i32)));
    let b: Vec<T> = PADE13.iter().map(|&x| T::of(x)).collect();
    let id = DenseMatrix::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let inner_u = a6.scale(b[13]).add_scaled(&a4, b[11]).add_scaled(&a2, b[9]);
    let u = a6.matmul(&inner_u).add_scaled(&a6, b[7]).add_scaled(&a4, b[5]).add_scaled(&a2, b[3]).add_scaled(&id, b[1]);
    let u = a.matmul(&u);
    let inner_v = a6.scale(b[12]).add_scaled(&a4, b[10]).add_scaled(&a2, b[8]);
    let v = a6.matmul(&inner_v).add_scaled(&a6, b[6]).add_scaled(&a4, b[4]).add_scaled(&a2, b[2]).add_scaled(&id, b[0]);
    let p = v.add_scaled(&u, T::one());
    let q = v.add_scaled(&u, -T::one());
    let lu = Lu::factor(&q).ok_or(Error::SingularSolve { residual: f64::INFINITY, bound: 0.0 })?;
    let mut r = lu.solve_matrix(&p);
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(Expm { value: r, squarings: s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lu_solves_small_system() {
        let a = DenseMatrix::from_row_major(3, vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]).unwrap();
        let x = vec![1.0, -2.0, 0.5];
        let b = a.right_mul(&x);
        let sol = Lu::factor(&a).unwrap().solve(&b);
        for (s, e) in sol.iter().zip(&x) {
            assert_relative_eq!(s, e, epsilon = 1e-14);
        }
    }

    #[test]
    fn lu_detects_singularity() {
        let a = DenseMatrix::from_row_major(2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(Lu::factor(&a).is_none());
    }

    #[test]
    fn jacobi_matches_two_by_two_closed_form() {
        let a = DenseMatrix::from_row_major(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let ev = symmetric_eigenvalues(&a);
        assert_relative_eq!(ev[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(ev[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let d = DenseMatrix::from_row_major(2, vec![-1.0, 0.0, 0.0, 30.0]).unwrap();
        let e = expm(&d).unwrap();
        assert_relative_eq!(e.value[(0, 0)], (-1.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(e.value[(1, 1)], 30.0f64.exp(), max_relative = 1e-12);
        let nil = DenseMatrix::from_row_major(2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let e = expm(&nil).unwrap();
        assert_relative_eq!(e.value[(0, 1)], 1.0, epsilon = 1e-15);
        assert_eq!(e.squarings, 0);
    }

    #[test]
    fn expm_reports_stiffness() {
        let d = DenseMatrix::from_row_major(1, vec![-1e30]).unwrap();
        assert!(matches!(expm(&d), Err(Error::Stiff { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let a = DenseMatrix::<f32>::from_row_major(2, vec![-0.5, 0.5, 0.25, -0.25]).unwrap();
        let e = expm(&a).unwrap().value;
        let row: f32 = e.row(0).iter().sum();
        assert!((row - 1.0).abs() < 1e-5);
    }
}
