//! Dense linear algebra for the small channel matrices and the larger
//! Marchenko systems.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Field operations needed by [`Lu`].
pub trait Scalar:
    Copy
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    fn scale(self, s: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// LU factorization with partial pivoting of a row-major square matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    a: Vec<T>,
    piv: Vec<usize>,
    sign: f64,
    norm1: f64,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(mut a: Vec<T>, n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: a.len() });
        }
        let mut norm1 = 0.0_f64;
        for c in 0..n {
            let s: f64 = (0..n).map(|r| a[r * n + c].modulus()).sum();
            norm1 = norm1.max(s);
        }
        let mut piv: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].modulus();
            for r in k + 1..n {
                let v = a[r * n + k].modulus();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularMatrix);
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                piv.swap(k, p);
                sign = -sign;
            }
            let pivot = a[k * n + k];
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let row_k = &head[k * n..];
            for r in 0..n - k - 1 {
                let row = &mut tail[r * n..(r + 1) * n];
                let f = row[k] / pivot;
                if f == T::zero() {
                    continue;
                }
                row[k] = f;
                for c in k + 1..n {
                    let u = row_k[c];
                    row[c] -= f * u;
                }
            }
        }
        Ok(Self { n, a, piv, sign, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let mut x: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let row = &self.a[r * n..r * n + r];
            let mut s = x[r];
            for (c, &l) in row.iter().enumerate() {
                s -= l * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let row = &self.a[r * n..(r + 1) * n];
            let mut s = x[r];
            for c in r + 1..n {
                s -= row[c] * x[c];
            }
            x[r] = s / row[r];
        }
        b.copy_from_slice(&x);
    }

    /// Solves `A^H x = b` in place.
    pub fn solve_adjoint_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let mut x: Vec<T> = b.to_vec();
        // U^H z = b
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.a[c * n + r].conj() * x[c];
            }
            x[r] = s / self.a[r * n + r].conj();
        }
        // L^H w = z
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.a[c * n + r].conj() * x[c];
            }
            x[r] = s;
        }
        for (i, &p) in self.piv.iter().enumerate() {
            b[p] = x[i];
        }
    }

    pub fn det(&self) -> T {
        let mut d = if self.sign < 0.0 { -T::one() } else { T::one() };
        for k in 0..self.n {
            d *= self.a[k * self.n + k];
        }
        d
    }

    /// 1-norm condition number estimate (Hager's method).
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let inv_n = 1.0 / n as f64;
        let mut x = vec![T::zero(); n];
        for v in x.iter_mut() {
            *v = T::one().scale(inv_n);
        }
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let mut y = x.clone();
            self.solve_in_place(&mut y);
            let norm_y: f64 = y.iter().map(|v| v.modulus()).sum();
            if norm_y <= est {
                break;
            }
            est = norm_y;
            let mut z: Vec<T> = y
                .iter()
                .map(|&v| {
                    let m = v.modulus();
                    if m == 0.0 {
                        T::one()
                    } else {
                        v.scale(1.0 / m)
                    }
                })
                .collect();
            self.solve_adjoint_in_place(&mut z);
            let (j, zmax) =
                z.iter()
                    .enumerate()
                    .map(|(i, v)| (i, v.modulus()))
                    .fold((0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if j == last_j || zmax <= 0.0 {
                break;
            }
            last_j = j;
            for v in x.iter_mut() {
                *v = T::zero();
            }
            x[j] = T::one();
        }
        est * self.norm1
    }
}

/// Small dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    n: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(d: &[Complex64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Builds from row-major entries.
    pub fn from_rows(n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        Ok(Self { n, data })
    }

    pub fn from_real(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        Ok(Self { n, data: data.iter().map(|&v| Complex64::new(v, 0.0)).collect() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn adjoint(&self) -> Self {
        let mut t = self.transpose();
        for v in t.data.iter_mut() {
            *v = v.conj();
        }
        t
    }

    pub fn conj(&self) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v.conj()).collect() }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| v * s).collect() }
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn det(&self) -> Complex64 {
        match Lu::factor(self.data.clone(), self.n) {
            Ok(lu) => lu.det(),
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let lu = Lu::factor(self.data.clone(), n)?;
        let mut inv = Self::zeros(n);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            col[j] = Complex64::new(1.0, 0.0);
            lu.solve_in_place(&mut col);
            for i in 0..n {
                inv.data[i * n + j] = col[i];
            }
        }
        Ok(inv)
    }

    /// Adjugate via cofactors; well defined for singular matrices.
    pub fn adjugate(&self) -> Self {
        let n = self.n;
        let mut adj = Self::zeros(n);
        if n == 1 {
            adj.data[0] = Complex64::new(1.0, 0.0);
            return adj;
        }
        let mut minor = Self::zeros(n - 1);
        for i in 0..n {
            for j in 0..n {
                let mut r = 0;
                for a in 0..n {
                    if a == i {
                        continue;
                    }
                    let mut c = 0;
                    for b in 0..n {
                        if b == j {
                            continue;
                        }
                        minor.data[r * (n - 1) + c] = self.data[a * n + b];
                        c += 1;
                    }
                    r += 1;
                }
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                // adj = transpose of cofactor matrix
                adj.data[j * n + i] = minor.det() * sign;
            }
        }
        adj
    }

    /// `self * diag(d)`.
    pub fn mul_diag_right(&self, d: &[Complex64]) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] *= d[j];
            }
        }
        out
    }

    /// `diag(d) * self`.
    pub fn mul_diag_left(&self, d: &[Complex64]) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] *= d[i];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        CMat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        CMat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

/// Least squares `min ||A c - b||` for a tall complex design matrix given by
/// columns, via modified Gram-Schmidt. Returns the coefficients.
pub fn least_squares(columns: &[Vec<Complex64>], b: &[Complex64]) -> Result<Vec<Complex64>> {
    let m = b.len();
    let p = columns.len();
    if p == 0 {
        return Ok(Vec::new());
    }
    if columns.iter().any(|c| c.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, found: columns[0].len() });
    }
    let mut q: Vec<Vec<Complex64>> = columns.to_vec();
    let mut r = vec![Complex64::new(0.0, 0.0); p * p];
    let scale: f64 = columns.iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()).fold(0.0, f64::max);
    for k in 0..p {
        for j in 0..k {
            let dot: Complex64 = q[j].iter().zip(&q[k]).map(|(a, b)| a.conj() * b).sum();
            r[j * p + k] = dot;
            let qj = q[j].clone();
            for (v, w) in q[k].iter_mut().zip(&qj) {
                *v -= dot * w;
            }
        }
        let norm: f64 = q[k].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient);
        }
        r[k * p + k] = Complex64::new(norm, 0.0);
        for v in q[k].iter_mut() {
            *v /= norm;
        }
    }
    let mut rhs: Vec<Complex64> = (0..p).map(|k| q[k].iter().zip(b).map(|(a, v)| a.conj() * v).sum()).collect();
    for k in (0..p).rev() {
        let mut s = rhs[k];
        for j in k + 1..p {
            s -= r[k * p + j] * rhs[j];
        }
        rhs[k] = s / r[k * p + k];
    }
    Ok(rhs)
}
