//! Supersymmetric partners: by dropping the bound-state kernel before
//! inversion, or by factorization with a superpotential.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::channels::{ChannelMomenta, ChannelSystem};
use crate::error::{Error, Result};
use crate::forward::{ForwardSolver, ReflectionTable, SolverOptions};
use crate::kernel::{InputKernel, KernelGrid, KernelOptions};
use crate::linalg::{CMat, I};
use crate::marchenko::{reconstruct, LowerLimit, MarchenkoOptions, Reconstruction};
use crate::profiles::{MatrixPotential, PotentialGrid};

/// Inverts the continuum kernel alone. The partner has no bound states and a
/// tail on the negative axis, so `grid` should reach well left of zero; the
/// integral runs from the grid start.
pub fn partner_via_omission(
    table: &ReflectionTable,
    grid: KernelGrid,
    kernel_opts: &KernelOptions,
    opts: &MarchenkoOptions,
) -> Result<Reconstruction> {
    let kernel = InputKernel::build(table, &[], grid, kernel_opts)?;
    let opts = MarchenkoOptions { lower_limit: LowerLimit::GridStart, ..opts.clone() };
    reconstruct(&kernel, &opts)
}

/// `W = Phi' Phi^{-1}` on a uniform grid, with `Phi` the matrix solution at
/// `E = -kappa_bar^2` that decays to the left.
#[derive(Debug, Clone, PartialEq)]
pub struct Superpotential {
    pub n: usize,
    pub x_lo: f64,
    pub h: f64,
    pub kappa_bar: f64,
    /// One row-major real block per node.
    pub values: Vec<f64>,
    /// `max |W' + W^2 - V - E - kappa_bar^2|` from 4th-order differences,
    /// skipping stencils that straddle a breakpoint of the potential.
    pub riccati_residual: f64,
    thresholds: Vec<f64>,
}

impl Superpotential {
    pub fn len(&self) -> usize {
        self.values.len() / (self.n * self.n)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, p: usize) -> f64 {
        self.x_lo + p as f64 * self.h
    }

    pub fn at(&self, p: usize) -> &[f64] {
        let b = self.n * self.n;
        &self.values[p * b..(p + 1) * b]
    }

    /// `W` left of the potential: `diag(sqrt(kappa_bar^2 + eps_j))`.
    pub fn left_value(&self) -> CMat {
        let d: Vec<f64> = self.thresholds.iter().map(|e| (self.kappa_bar * self.kappa_bar + e).sqrt()).collect();
        CMat::from_real_diag(&d)
    }

    /// `V1 = V0 - 2 W'`, with `W'` eliminated through the Riccati equation:
    /// `V1 = 2 W^2 - V0 - 2 E - 2 kappa_bar^2`.
    pub fn partner<P: MatrixPotential + ?Sized>(&self, pot: &P) -> Result<PotentialGrid> {
        let n = self.n;
        let mut v = vec![0.0; n * n];
        let mut out = vec![0.0; self.values.len()];
        let shift = self.kappa_bar * self.kappa_bar;
        for p in 0..self.len() {
            pot.eval_into(self.x(p), &mut v);
            let w = self.at(p);
            let o = &mut out[p * n * n..(p + 1) * n * n];
            for i in 0..n {
                for j in 0..n {
                    let w2: f64 = (0..n).map(|l| w[i * n + l] * w[l * n + j]).sum();
                    let mut val = 2.0 * w2 - v[i * n + j];
                    if i == j {
                        val -= 2.0 * (self.thresholds[i] + shift);
                    }
                    o[i * n + j] = val;
                }
            }
            // W is symmetric up to rounding
            for i in 0..n {
                for j in i + 1..n {
                    let m = 0.5 * (o[i * n + j] + o[j * n + i]);
                    o[i * n + j] = m;
                    o[j * n + i] = m;
                }
            }
        }
        PotentialGrid::new(n, self.x_lo, self.h, out)
    }
}

/// Builds `W` on `x_lo + p h`, `p = 0..count`. `x_lo` must lie left of the
/// potential's support, and `-kappa_bar^2` at or below the lowest bound
/// state, otherwise `Phi` has a node and `FactorizationNode` is returned.
pub fn superpotential<P: MatrixPotential + ?Sized>(
    pot: &P,
    sys: &ChannelSystem,
    kappa_bar: f64,
    x_lo: f64,
    h: f64,
    count: usize,
    opts: &SolverOptions,
) -> Result<Superpotential> {
    if !(kappa_bar > 0.0) {
        return Err(Error::InvalidInput(alloc::format!("kappa_bar must be positive, got {kappa_bar}")));
    }
    if count < 5 {
        return Err(Error::InvalidInput("superpotential grid needs at least 5 nodes".into()));
    }
    if x_lo > pot.support().0 {
        return Err(Error::InvalidInput("grid must start left of the potential".into()));
    }
    let n = sys.n_channels();
    let solver = ForwardSolver::new(pot, sys, opts.clone())?;
    let sols = solver.jost_minus_on_grid(Complex64::new(0.0, kappa_bar), x_lo, h, count - 1)?;
    let mut values = vec![0.0; count * n * n];
    for (p, s) in sols.iter().enumerate() {
        // rescale columns to keep Phi well scaled; W is invariant
        let scale: Vec<Complex64> = (0..n)
            .map(|c| {
                let m = (0..n).map(|r| s.psi[(r, c)].norm()).fold(0.0, f64::max);
                Complex64::new(if m > 0.0 { 1.0 / m } else { 1.0 }, 0.0)
            })
            .collect();
        let phi = s.psi.mul_diag_right(&scale);
        let dphi = s.dpsi.mul_diag_right(&scale);
        let lu = crate::linalg::Lu::factor(phi.transpose().as_slice().to_vec(), n)
            .map_err(|_| Error::FactorizationNode { x: s.x })?;
        if !(lu.condition_estimate() < 1e10) {
            return Err(Error::FactorizationNode { x: s.x });
        }
        // W^T = Phi^{-T} Phi'^T, column by column
        let dt = dphi.transpose();
        for c in 0..n {
            let mut col: Vec<Complex64> = (0..n).map(|r| dt[(r, c)]).collect();
            lu.solve_in_place(&mut col);
            for r in 0..n {
                // col[r] = (W^T)[r][c] = W[c][r]
                values[(p * n + c) * n + r] = col[r].re;
            }
        }
    }
    let mut w =
        Superpotential { n, x_lo, h, kappa_bar, values, riccati_residual: 0.0, thresholds: sys.thresholds().to_vec() };
    w.riccati_residual = riccati_residual(&w, pot);
    Ok(w)
}

fn riccati_residual<P: MatrixPotential + ?Sized>(w: &Superpotential, pot: &P) -> f64 {
    let n = w.n;
    let h = w.h;
    let shift = w.kappa_bar * w.kappa_bar;
    let mut v = vec![0.0; n * n];
    let breaks = pot.breakpoints();
    let mut worst = 0.0_f64;
    for p in 2..w.len().saturating_sub(2) {
        // the stencil is only 4th order where W' is smooth
        let x = w.x(p);
        if breaks.iter().any(|&b| (b - x).abs() < 2.0 * h + 1e-12) {
            continue;
        }
        pot.eval_into(x, &mut v);
        let (a, b, c, d) = (w.at(p - 2), w.at(p - 1), w.at(p + 1), w.at(p + 2));
        let here = w.at(p);
        for i in 0..n {
            for j in 0..n {
                let e = i * n + j;
                let dw = (a[e] - 8.0 * b[e] + 8.0 * c[e] - d[e]) / (12.0 * h);
                let w2: f64 = (0..n).map(|l| here[i * n + l] * here[l * n + j]).sum();
                let mut r = dw + w2 - v[e];
                if i == j {
                    r -= w.thresholds[i] + shift;
                }
                worst = worst.max(r.abs());
            }
        }
    }
    worst
}

/// `R1 = (W- + iK) R0 (W- - iK)^{-1}` for a superpotential with left value
/// `W-`.
pub fn transform_reflection(r0: &CMat, w_left: &CMat, km: &ChannelMomenta) -> Result<CMat> {
    let n = km.n_channels();
    if r0.dim() != n || w_left.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: r0.dim().min(w_left.dim()) });
    }
    let ik = CMat::from_diag(&km.kj).scale(I);
    let plus = w_left + &ik;
    let minus = w_left - &ik;
    let inv = minus.inverse()?;
    Ok(&(&plus * r0) * &inv)
}
