//! Marchenko integral equation for the transformation kernel `B(x, y)` and
//! recovery of the potential from its diagonal.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::InputKernel;
use crate::linalg::{CMat, Lu, Scalar};
use crate::profiles::PotentialGrid;

/// Lower limit of the `z` integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LowerLimit {
    /// `[-x, x]`: the transformation kernel vanishes below `-x` when the
    /// potential vanishes on the negative axis.
    Goursat,
    /// The left edge of the kernel grid, for potentials with a tail on the
    /// negative axis.
    GridStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarchenkoOptions {
    pub lower_limit: LowerLimit,
    pub condition_limit: f64,
    /// Largest accepted `max |V - V^T| / max |V|` before symmetrization.
    pub asymmetry_limit: f64,
    /// Largest accepted `max |Im V| / max |V|`.
    pub imaginary_limit: f64,
}

impl Default for MarchenkoOptions {
    fn default() -> Self {
        Self { lower_limit: LowerLimit::Goursat, condition_limit: 1e12, asymmetry_limit: 0.05, imaginary_limit: 0.01 }
    }
}

/// One row `B(x, y)` of the transformation kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformationKernel {
    pub x: f64,
    pub y: Vec<f64>,
    pub b: Vec<CMat>,
    pub condition: f64,
}

impl TransformationKernel {
    /// `B(x, x^-)`, the last node.
    pub fn diagonal(&self) -> &CMat {
        self.b.last().expect("row has at least one node")
    }
}

/// Reconstructed potential and quality metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub potential: PotentialGrid,
    /// `B(x, x)` at every output node.
    pub diagonal: Vec<CMat>,
    /// `max |V - V^T| / max |V|` before symmetrization.
    pub asymmetry: f64,
    /// `max |Im V| / max |V|`.
    pub imaginary: f64,
    /// `max |B(x,x) - (1/2) int V| / max |B(x,x)|`.
    pub diagonal_residual: f64,
    pub max_condition: f64,
}

trait KernelScalar: Scalar {
    fn from_c(c: Complex64) -> Self;
    fn to_c(self) -> Complex64;
}

impl KernelScalar for f64 {
    fn from_c(c: Complex64) -> Self {
        c.re
    }
    fn to_c(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl KernelScalar for Complex64 {
    fn from_c(c: Complex64) -> Self {
        c
    }
    fn to_c(self) -> Complex64 {
        self
    }
}

fn use_real(kernel: &InputKernel) -> bool {
    kernel.imaginary_ratio() <= 1e-10
}

/// Solves the row of the Marchenko equation at grid point `x`.
pub fn solve_row(kernel: &InputKernel, x: f64, opts: &MarchenkoOptions) -> Result<TransformationKernel> {
    let grid = kernel.grid;
    let p = grid.index(x).ok_or(Error::OutsideKernelBox { x, y: x })?;
    let first = match opts.lower_limit {
        LowerLimit::Goursat => {
            let mirror = grid.index(-x).ok_or(Error::OutsideKernelBox { x, y: -x })?;
            if mirror > p {
                // x < 0: B vanishes identically
                let n = kernel.n_channels();
                return Ok(TransformationKernel { x, y: vec![x], b: vec![CMat::zeros(n)], condition: 1.0 });
            }
            mirror
        }
        LowerLimit::GridStart => 0,
    };
    if use_real(kernel) {
        dense_row::<f64>(kernel, first, p, opts)
    } else {
        dense_row::<Complex64>(kernel, first, p, opts)
    }
}

/// Trapezoid weights on nodes `first..=last`.
fn trapezoid(h: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let mut w = vec![h; count];
            w[0] = 0.5 * h;
            w[count - 1] = 0.5 * h;
            w
        }
    }
}

fn dense_row<T: KernelScalar>(
    kernel: &InputKernel,
    first: usize,
    p: usize,
    opts: &MarchenkoOptions,
) -> Result<TransformationKernel> {
    let n = kernel.n_channels();
    let h = kernel.grid.h;
    let nodes = p - first + 1;
    let size = n * nodes;
    let w = trapezoid(h, nodes);
    // A[(m,c),(l,d)] = delta + w_l rho_dc(y_l, y_m)
    let mut a = vec![T::zero(); size * size];
    for m in 0..nodes {
        for c in 0..n {
            let row = (m * n + c) * size;
            for l in 0..nodes {
                for d in 0..n {
                    a[row + l * n + d] = T::from_c(kernel.entry(first + l, first + m, d, c)).scale(w[l]);
                }
            }
            a[row + m * n + c] += T::one();
        }
    }
    let lu =
        Lu::factor(a, size).map_err(|_| Error::IllConditioned { x: kernel.grid.x(p), condition: f64::INFINITY })?;
    let condition = lu.condition_estimate();
    if !(condition <= opts.condition_limit) {
        return Err(Error::IllConditioned { x: kernel.grid.x(p), condition });
    }
    let mut b = vec![CMat::zeros(n); nodes];
    let mut rhs = vec![T::zero(); size];
    for i in 0..n {
        for m in 0..nodes {
            for c in 0..n {
                rhs[m * n + c] = -T::from_c(kernel.entry(p, first + m, i, c));
            }
        }
        lu.solve_in_place(&mut rhs);
        for m in 0..nodes {
            for c in 0..n {
                b[m][(i, c)] = rhs[m * n + c].to_c();
            }
        }
    }
    let y = (0..nodes).map(|m| kernel.grid.x(first + m)).collect();
    Ok(TransformationKernel { x: kernel.grid.x(p), y, b, condition })
}

/// Solves every row and differentiates the diagonal: `V = 2 dB(x,x)/dx`.
pub fn reconstruct(kernel: &InputKernel, opts: &MarchenkoOptions) -> Result<Reconstruction> {
    let grid = kernel.grid;
    let n = kernel.n_channels();
    let (start, diag, max_condition) = match opts.lower_limit {
        LowerLimit::Goursat => {
            let zero = grid.index(0.0).ok_or(Error::OutsideKernelBox { x: 0.0, y: 0.0 })?;
            if grid.index(-grid.x_hi()).is_none() {
                return Err(Error::InvalidInput("kernel grid must be symmetric about zero".into()));
            }
            let mut diag = Vec::with_capacity(grid.count - zero);
            let mut worst = 1.0_f64;
            for p in zero..grid.count {
                let row = solve_row(kernel, grid.x(p), opts)?;
                worst = worst.max(row.condition);
                diag.push(row.diagonal().clone());
            }
            // B(0, 0) is an empty integral of a kernel that vanishes there
            (zero, diag, worst)
        }
        LowerLimit::GridStart => {
            let (diag, cond) = if use_real(kernel) {
                nested_rows::<f64>(kernel, opts)?
            } else {
                nested_rows::<Complex64>(kernel, opts)?
            };
            (0, diag, cond)
        }
    };
    finish(kernel, start, diag, max_condition, opts, n)
}

fn finish(
    kernel: &InputKernel,
    start: usize,
    diag: Vec<CMat>,
    max_condition: f64,
    opts: &MarchenkoOptions,
    n: usize,
) -> Result<Reconstruction> {
    let h = kernel.grid.h;
    let count = diag.len();
    let mut v = vec![CMat::zeros(n); count];
    for e in 0..n * n {
        let d: Vec<Complex64> = diag.iter().map(|m| m.as_slice()[e]).collect();
        let dv = derivative(&d, h);
        for (p, val) in dv.into_iter().enumerate() {
            v[p].as_mut_slice()[e] = val * 2.0;
        }
    }
    let vmax = v.iter().map(|m| m.max_norm()).fold(0.0, f64::max);
    let mut asym = 0.0_f64;
    let mut imag = 0.0_f64;
    for m in &v {
        asym = asym.max((m - &m.transpose()).max_norm());
        imag = imag.max(m.as_slice().iter().map(|z| z.im.abs()).fold(0.0, f64::max));
    }
    let (asymmetry, imaginary) = if vmax > 0.0 { (asym / vmax, imag / vmax) } else { (0.0, 0.0) };
    if asymmetry > opts.asymmetry_limit {
        return Err(Error::AsymmetricReconstruction { ratio: asymmetry });
    }
    if imaginary > opts.imaginary_limit {
        return Err(Error::ComplexReconstruction { ratio: imaginary });
    }
    let mut values = vec![0.0; count * n * n];
    for (p, m) in v.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                values[(p * n + i) * n + j] = 0.5 * (m[(i, j)].re + m[(j, i)].re);
            }
        }
    }
    let potential = PotentialGrid::new(n, kernel.grid.x(start), h, values)?;

    // B(x,x) against half the running integral of V
    let mut worst = 0.0_f64;
    let mut integral = vec![0.0; n * n];
    let dscale = diag.iter().map(|m| m.max_norm()).fold(0.0, f64::max);
    for p in 0..count {
        if p > 0 {
            let (a, b) = (potential.at(p - 1), potential.at(p));
            for e in 0..n * n {
                integral[e] += 0.5 * h * (a[e] + b[e]);
            }
        }
        let d0 = &diag[0];
        for e in 0..n * n {
            let lhs = diag[p].as_slice()[e] - d0.as_slice()[e];
            worst = worst.max((lhs.re - 0.5 * integral[e]).abs());
        }
    }
    let diagonal_residual = if dscale > 0.0 { worst / dscale } else { 0.0 };
    Ok(Reconstruction { potential, diagonal: diag, asymmetry, imaginary, diagonal_residual, max_condition })
}

/// Fourth-order central differences inside, second order near the ends.
fn derivative(d: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = d.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n < 3 {
        if n == 2 {
            let s = (d[1] - d[0]) / h;
            out[0] = s;
            out[1] = s;
        }
        return out;
    }
    if n < 5 {
        out[0] = (d[0] * -3.0 + d[1] * 4.0 - d[2]) / (2.0 * h);
        out[n - 1] = (d[n - 1] * 3.0 - d[n - 2] * 4.0 + d[n - 3]) / (2.0 * h);
        for p in 1..n - 1 {
            out[p] = (d[p + 1] - d[p - 1]) / (2.0 * h);
        }
        return out;
    }
    // five-point stencils throughout, one-sided at the two end nodes
    let w = 12.0 * h;
    out[0] = (d[0] * -25.0 + d[1] * 48.0 - d[2] * 36.0 + d[3] * 16.0 - d[4] * 3.0) / w;
    out[1] = (d[0] * -3.0 - d[1] * 10.0 + d[2] * 18.0 - d[3] * 6.0 + d[4]) / w;
    out[n - 1] = (d[n - 1] * 25.0 - d[n - 2] * 48.0 + d[n - 3] * 36.0 - d[n - 4] * 16.0 + d[n - 5] * 3.0) / w;
    out[n - 2] = (d[n - 1] * 3.0 + d[n - 2] * 10.0 - d[n - 3] * 18.0 + d[n - 4] * 6.0 - d[n - 5]) / w;
    for p in 2..n - 2 {
        out[p] = (d[p - 2] - d[p - 1] * 8.0 + d[p + 1] * 8.0 - d[p + 2]) / w;
    }
    out
}

/// All rows with a fixed lower limit. Every row's system is a leading block
/// of one matrix except for the weight of its last node, so one LU serves
/// them all and each row only refactors its last block column.
fn nested_rows<T: KernelScalar>(kernel: &InputKernel, opts: &MarchenkoOptions) -> Result<(Vec<CMat>, f64)> {
    let n = kernel.n_channels();
    let h = kernel.grid.h;
    let nodes = kernel.grid.count;
    let size = n * nodes;
    let mut a = vec![T::zero(); size * size];
    for m in 0..nodes {
        for c in 0..n {
            let row = (m * n + c) * size;
            for l in 0..nodes {
                let wl = if l == 0 { 0.5 * h } else { h };
                for d in 0..n {
                    a[row + l * n + d] = T::from_c(kernel.entry(l, m, d, c)).scale(wl);
                }
            }
            a[row + m * n + c] += T::one();
        }
    }
    let norm1 = (0..size).map(|c| (0..size).map(|r| a[r * size + c].modulus()).sum::<f64>()).fold(0.0, f64::max);
    lu_no_pivot(&mut a, size)?;
    let condition = hager_no_pivot(&a, size) * norm1;
    if !(condition <= opts.condition_limit) {
        return Err(Error::IllConditioned { x: kernel.grid.x(0), condition });
    }

    let mut diag = Vec::with_capacity(nodes);
    let mut cols = vec![T::zero(); n * size];
    let mut rhs = vec![T::zero(); n * size];
    for r in 0..nodes {
        let nx = n * (r + 1);
        let w_last = if r == 0 { 0.0 } else { 0.5 * h };
        // modified last block column, L^{-1} applied
        for d in 0..n {
            let col = &mut cols[d * size..d * size + nx];
            for m in 0..=r {
                for c in 0..n {
                    let mut v = T::from_c(kernel.entry(r, m, d, c)).scale(w_last);
                    if m == r && c == d {
                        v += T::one();
                    }
                    col[m * n + c] = v;
                }
            }
            forward_unit(&a, size, col);
        }
        for i in 0..n {
            let b = &mut rhs[i * size..i * size + nx];
            for m in 0..=r {
                for c in 0..n {
                    b[m * n + c] = -T::from_c(kernel.entry(r, m, i, c));
                }
            }
            forward_unit(&a, size, b);
        }
        // trailing N x N block
        let top = nx - n;
        let mut z = vec![T::zero(); n * n];
        for rr in 0..n {
            for d in 0..n {
                z[rr * n + d] = cols[d * size + top + rr];
            }
        }
        let zlu =
            Lu::factor(z, n).map_err(|_| Error::IllConditioned { x: kernel.grid.x(r), condition: f64::INFINITY })?;
        let mut d_row = CMat::zeros(n);
        for i in 0..n {
            let b = &mut rhs[i * size..i * size + nx];
            let mut u2: Vec<T> = b[top..nx].to_vec();
            zlu.solve_in_place(&mut u2);
            for rr in 0..top {
                let mut s = b[rr];
                for d in 0..n {
                    s -= cols[d * size + rr] * u2[d];
                }
                b[rr] = s;
            }
            backward(&a, size, &mut b[..top]);
            for c in 0..n {
                d_row[(i, c)] = u2[c].to_c();
            }
        }
        diag.push(d_row);
    }
    Ok((diag, condition))
}

fn lu_no_pivot<T: Scalar>(a: &mut [T], n: usize) -> Result<()> {
    let scale = a.iter().map(|v| v.modulus()).fold(0.0, f64::max);
    for k in 0..n {
        let pivot = a[k * n + k];
        if !(pivot.modulus() > 1e-10 * scale) {
            return Err(Error::SingularMatrix);
        }
        let (head, tail) = a.split_at_mut((k + 1) * n);
        let row_k = &head[k * n..];
        for r in 0..n - k - 1 {
            let row = &mut tail[r * n..(r + 1) * n];
            let f = row[k] / pivot;
            row[k] = f;
            if f == T::zero() {
                continue;
            }
            for c in k + 1..n {
                let u = row_k[c];
                row[c] -= f * u;
            }
        }
    }
    Ok(())
}

/// Unit lower-triangular solve on the leading `b.len()` block.
fn forward_unit<T: Scalar>(lu: &[T], ld: usize, b: &mut [T]) {
    for r in 0..b.len() {
        let row = &lu[r * ld..r * ld + r];
        let mut s = b[r];
        for (c, &l) in row.iter().enumerate() {
            s -= l * b[c];
        }
        b[r] = s;
    }
}

/// Upper-triangular solve on the leading `b.len()` block.
fn backward<T: Scalar>(lu: &[T], ld: usize, b: &mut [T]) {
    let n = b.len();
    for r in (0..n).rev() {
        let row = &lu[r * ld..r * ld + n];
        let mut s = b[r];
        for c in r + 1..n {
            s -= row[c] * b[c];
        }
        b[r] = s / row[r];
    }
}

/// `||A^{-1}||_1` estimate for an unpivoted LU.
fn hager_no_pivot<T: Scalar>(lu: &[T], n: usize) -> f64 {
    let solve = |b: &mut [T]| {
        forward_unit(lu, n, b);
        backward(lu, n, b);
    };
    let solve_adj = |b: &mut [T]| {
        // U^H z = b, then L^H w = z
        for r in 0..n {
            let mut s = b[r];
            for c in 0..r {
                s -= lu[c * n + r].conj() * b[c];
            }
            b[r] = s / lu[r * n + r].conj();
        }
        for r in (0..n).rev() {
            let mut s = b[r];
            for c in r + 1..n {
                s -= lu[c * n + r].conj() * b[c];
            }
            b[r] = s;
        }
    };
    let mut x = vec![T::one().scale(1.0 / n as f64); n];
    let mut est = 0.0;
    let mut last = usize::MAX;
    for _ in 0..5 {
        let mut y = x.clone();
        solve(&mut y);
        let ny: f64 = y.iter().map(|v| v.modulus()).sum();
        if ny <= est {
            break;
        }
        est = ny;
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
        solve_adj(&mut z);
        let (j, _) =
            z.iter()
                .enumerate()
                .map(|(i, v)| (i, v.modulus()))
                .fold((0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if j == last {
            break;
        }
        last = j;
        x.iter_mut().for_each(|v| *v = T::zero());
        x[j] = T::one();
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::ChannelSystem;
    use crate::kernel::KernelGrid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let grid = KernelGrid::symmetric(1.0, 0.1).unwrap();
        let k = InputKernel::from_fn(ChannelSystem::degenerate(2), grid, |_, _| CMat::zeros(2));
        let row = solve_row(&k, 0.5, &MarchenkoOptions::default()).unwrap();
        assert!(row.b.iter().all(|m| m.max_norm() == 0.0));
        let rec = reconstruct(&k, &MarchenkoOptions::default()).unwrap();
        assert_eq!(rec.potential.max_abs(), 0.0);
    }

    #[test]
    fn born_limit() {
        let delta = 1e-4;
        let grid = KernelGrid::symmetric(2.0, 0.05).unwrap();
        let f = |x: f64, y: f64| {
            let s = x + y;
            CMat::from_real(
                2,
                &[
                    delta * (-s * s).exp(),
                    0.5 * delta * (-(s - 0.3) * (s - 0.3)).exp() * (1.0 + 0.1 * x),
                    0.5 * delta * (-(s - 0.3) * (s - 0.3)).exp() * (1.0 + 0.1 * y),
                    -delta * (-2.0 * s * s).exp(),
                ],
            )
            .unwrap()
        };
        let k = InputKernel::from_fn(ChannelSystem::degenerate(2), grid, f);
        let row = solve_row(&k, 1.5, &MarchenkoOptions::default()).unwrap();
        for (y, b) in row.y.iter().zip(&row.b) {
            let lin = f(1.5, *y).scale(c(-1.0, 0.0));
            assert!((b - &lin).max_norm() <= 1e-7, "y = {y}");
        }
    }

    #[test]
    fn nested_rows_match_dense_rows() {
        let grid = KernelGrid::new(-2.0, 1.0, 0.1).unwrap();
        let f = |x: f64, y: f64| {
            CMat::from_real(
                2,
                &[
                    0.3 * (0.4 * (x + y)).exp(),
                    0.1 * (0.3 * x + 0.5 * y).exp(),
                    0.1 * (0.5 * x + 0.3 * y).exp(),
                    -0.2 * (0.5 * (x + y)).exp(),
                ],
            )
            .unwrap()
        };
        let k = InputKernel::from_fn(ChannelSystem::degenerate(2), grid, f);
        let opts = MarchenkoOptions { lower_limit: LowerLimit::GridStart, ..Default::default() };
        let rec = reconstruct(&k, &opts).unwrap();
        for p in [0usize, 1, 5, 17, 30] {
            let row = solve_row(&k, grid.x(p), &opts).unwrap();
            assert!((row.diagonal() - &rec.diagonal[p]).max_norm() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn derivative_is_exact_for_quartics() {
        let h = 0.1;
        let d: Vec<Complex64> = (0..20).map(|p| c((p as f64 * h).powi(4), 0.0)).collect();
        let dv = derivative(&d, h);
        for p in 0..20 {
            let x = p as f64 * h;
            assert!((dv[p].re - 4.0 * x * x * x).abs() < 1e-10);
        }
    }
}
