//! Bound-state parameters from the scattering part of the input kernel.
//!
//! For `y < x < 0` the scattering kernel must cancel the bound-state kernel,
//! so there it is a finite sum of exponentials whose rates and amplitudes
//! give `kappa` and the residue matrices.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::forward::BoundState;
use crate::kernel::InputKernel;
use crate::linalg::{least_squares, CMat, Lu, I};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Fit window in `s = x + y`; `None` means `2 x_lo` of the kernel grid.
    pub s_lo: Option<f64>,
    pub s_hi: f64,
    /// Relative residual above which the `N_b` hypothesis is rejected.
    pub residual_gate: f64,
    /// Smallest share `||c_a e^{kappa_a s}|| / ||y||` of the channel-1 data
    /// a fitted term must carry; weaker terms mean too many states.
    pub min_contribution: f64,
    pub collision: f64,
    /// Exponent search range for the initial scan.
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub scan_points: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            s_lo: None,
            s_hi: -0.2,
            residual_gate: 1e-3,
            min_contribution: 1e-2,
            collision: 1e-4,
            kappa_min: 1e-3,
            kappa_max: 5.0,
            scan_points: 240,
        }
    }
}

/// Exponents and diagonal residues from the one-dimensional fits.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalFit {
    /// Ascending.
    pub kappas: Vec<f64>,
    /// `diag[a][j] = M_a[j][j]` (residue convention, purely imaginary).
    pub diag: Vec<Vec<Complex64>>,
    /// `||r|| / ||y||` of the channel-1 fit.
    pub residual: f64,
}

/// Samples `(x, y)` node pairs with `y <= x < 0` and `s` in the window.
fn sample_pairs(kernel: &InputKernel, opts: &FitOptions) -> Result<Vec<(usize, usize)>> {
    let g = kernel.grid;
    let s_lo = opts.s_lo.unwrap_or(2.0 * g.x_lo);
    if !(s_lo < opts.s_hi && opts.s_hi < 0.0) {
        return Err(Error::InvalidInput(alloc::format!("fit window [{s_lo}, {}] must be negative", opts.s_hi)));
    }
    let tol = 1e-9 * g.h;
    let mut out = Vec::new();
    for p in 0..g.count {
        let x = g.x(p);
        if x >= -tol {
            break;
        }
        for q in 0..=p {
            let s = x + g.x(q);
            if s >= s_lo - tol && s <= opts.s_hi + tol {
                out.push((p, q));
            }
        }
    }
    Ok(out)
}

/// One sample per distinct `s`, taken closest to `x = y`.
fn diagonal_line(kernel: &InputKernel, opts: &FitOptions) -> Result<Vec<(usize, usize)>> {
    let pairs = sample_pairs(kernel, opts)?;
    let mut best: Vec<(usize, usize)> = Vec::new();
    for (p, q) in pairs {
        match best.iter_mut().find(|(bp, bq)| bp + bq == p + q) {
            Some(b) => {
                if p - q < b.0 - b.1 {
                    *b = (p, q);
                }
            }
            None => best.push((p, q)),
        }
    }
    best.sort_by_key(|&(p, q)| p + q);
    Ok(best)
}

/// Amplitudes of `sum c_a e^{k_a s}` by linear least squares and the
/// relative residual.
fn project(s: &[f64], y: &[Complex64], rates: &[f64]) -> Result<(Vec<Complex64>, f64)> {
    let cols: Vec<Vec<Complex64>> =
        rates.iter().map(|&k| s.iter().map(|&v| Complex64::new((k * v).exp(), 0.0)).collect()).collect();
    let c = least_squares(&cols, y)?;
    let mut r2 = 0.0;
    let mut y2 = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let mut f = Complex64::new(0.0, 0.0);
        for (a, col) in cols.iter().enumerate() {
            f += c[a] * col[i];
        }
        r2 += (yi - f).norm_sqr();
        y2 += yi.norm_sqr();
    }
    let rel = if y2 > 0.0 { (r2 / y2).sqrt() } else { 0.0 };
    Ok((c, rel))
}

fn objective(s: &[f64], y: &[Complex64], rates: &[f64]) -> f64 {
    project(s, y, rates).map_or(f64::INFINITY, |(_, r)| r)
}

/// Variable projection over `ln kappa`: greedy scan for each new exponent,
/// then a damped Gauss-Newton polish of all of them.
fn varpro(s: &[f64], y: &[Complex64], n_b: usize, opts: &FitOptions) -> Result<(Vec<f64>, Vec<Complex64>, f64)> {
    let lo = opts.kappa_min.ln();
    let hi = opts.kappa_max.ln();
    let m = opts.scan_points.max(2);
    let mut rates: Vec<f64> = Vec::with_capacity(n_b);
    for _ in 0..n_b {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..m {
            let k = (lo + (hi - lo) * i as f64 / (m - 1) as f64).exp();
            if rates.iter().any(|&r| (r - k).abs() < 2.0 * opts.collision) {
                continue;
            }
            let mut trial = rates.clone();
            trial.push(k);
            let f = objective(s, y, &trial);
            if f < best.0 {
                best = (f, k);
            }
        }
        rates.push(best.1);
        rates = polish(s, y, rates);
    }
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in rates.windows(2) {
        if w[1] - w[0] < opts.collision {
            return Err(Error::ExponentCollision { a: w[0], b: w[1] });
        }
    }
    let (c, res) = if n_b == 0 {
        let y2: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        (Vec::new(), if y2 > 0.0 { 1.0 } else { 0.0 })
    } else {
        project(s, y, &rates)?
    };
    Ok((rates, c, res))
}

/// Levenberg-Marquardt on the projected residual with a finite-difference
/// Jacobian in `ln kappa`.
fn polish(s: &[f64], y: &[Complex64], rates: Vec<f64>) -> Vec<f64> {
    let n = rates.len();
    let resid = |t: &[f64]| -> Option<Vec<f64>> {
        let r: Vec<f64> = t.iter().map(|v| v.exp()).collect();
        let (c, _) = project(s, y, &r).ok()?;
        let mut out = Vec::with_capacity(2 * s.len());
        for (i, &sv) in s.iter().enumerate() {
            let mut f = Complex64::new(0.0, 0.0);
            for a in 0..n {
                f += c[a] * (r[a] * sv).exp();
            }
            let d = y[i] - f;
            out.push(d.re);
            out.push(d.im);
        }
        Some(out)
    };
    let norm2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    let mut t: Vec<f64> = rates.iter().map(|v| v.ln()).collect();
    let Some(mut r) = resid(&t) else { return rates };
    let mut f = norm2(&r);
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let mut jac = vec![vec![0.0; r.len()]; n];
        for a in 0..n {
            let d = 1e-6;
            let mut tp = t.clone();
            tp[a] += d;
            let mut tm = t.clone();
            tm[a] -= d;
            let (Some(rp), Some(rm)) = (resid(&tp), resid(&tm)) else { return t.iter().map(|v| v.exp()).collect() };
            for i in 0..r.len() {
                jac[a][i] = (rp[i] - rm[i]) / (2.0 * d);
            }
        }
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for a in 0..n {
            for b in 0..n {
                jtj[a * n + b] = jac[a].iter().zip(&jac[b]).map(|(u, v)| u * v).sum();
            }
            jtr[a] = jac[a].iter().zip(&r).map(|(u, v)| u * v).sum();
        }
        let mut improved = false;
        while lambda < 1e10 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[d * n + d] *= 1.0 + lambda;
                a[d * n + d] += 1e-300;
            }
            let Ok(lu) = Lu::factor(a, n) else { break };
            let mut step: Vec<f64> = jtr.iter().map(|v| -v).collect();
            lu.solve_in_place(&mut step);
            let trial: Vec<f64> = t.iter().zip(&step).map(|(u, v)| u + v.clamp(-1.0, 1.0)).collect();
            if let Some(rt) = resid(&trial) {
                let ft = norm2(&rt);
                if ft < f {
                    let done = (f - ft) <= 1e-14 * f || step.iter().all(|v| v.abs() < 1e-12);
                    t = trial;
                    r = rt;
                    f = ft;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if done {
                        return t.iter().map(|v| v.exp()).collect();
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    t.iter().map(|v| v.exp()).collect()
}

/// Fits `rho_11(s)` to `N_b` exponentials and the remaining diagonal entries
/// with the implied rates `sqrt(kappa^2 + eps_j)`.
pub fn fit_diagonal(kernel: &InputKernel, n_b: usize, opts: &FitOptions) -> Result<DiagonalFit> {
    let n = kernel.n_channels();
    let eps = kernel.sys.thresholds().to_vec();
    let line = diagonal_line(kernel, opts)?;
    if line.len() < 2 * n_b + 1 {
        return Err(Error::InvalidInput("fit window holds too few samples".into()));
    }
    let g = kernel.grid;
    let s: Vec<f64> = line.iter().map(|&(p, q)| g.x(p) + g.x(q)).collect();
    let y: Vec<Complex64> = line.iter().map(|&(p, q)| kernel.scattering_entry(p, q, 0, 0)).collect();
    let (kappas, c, residual) = varpro(&s, &y, n_b, opts)?;
    if residual > opts.residual_gate {
        return Err(Error::FitRejected { n_bound: n_b, residual });
    }
    let y_norm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    for (&k, ca) in kappas.iter().zip(&c) {
        let term = s.iter().map(|&sv| (ca * (k * sv).exp()).norm_sqr()).sum::<f64>().sqrt();
        let share = if y_norm > 0.0 { term / y_norm } else { 0.0 };
        if k < opts.kappa_min || share < opts.min_contribution {
            return Err(Error::SpuriousExponent { kappa: k, share, n_bound: n_b });
        }
    }
    // rho_jj = i sum_a M_a,jj (kappa_a / kt_aj) e^{kt_aj s}
    let mut diag = vec![vec![Complex64::new(0.0, 0.0); n]; n_b];
    for a in 0..n_b {
        diag[a][0] = -I * c[a];
    }
    for j in 1..n {
        let rates: Vec<f64> = kappas.iter().map(|k| (k * k + eps[j]).sqrt()).collect();
        let yj: Vec<Complex64> = line.iter().map(|&(p, q)| kernel.scattering_entry(p, q, j, j)).collect();
        if n_b == 0 {
            continue;
        }
        let (cj, _) = project(&s, &yj, &rates)?;
        for a in 0..n_b {
            diag[a][j] = -I * cj[a] * rates[a] / kappas[a];
        }
    }
    Ok(DiagonalFit { kappas, diag, residual })
}

/// Completes the residue matrices: each off-diagonal entry is linear in the
/// data once the exponents are known.
pub fn fit_offdiagonal(kernel: &InputKernel, fit: &DiagonalFit, opts: &FitOptions) -> Result<Vec<BoundState>> {
    let n = kernel.n_channels();
    let sys = &kernel.sys;
    let eps = sys.thresholds();
    let pairs = sample_pairs(kernel, opts)?;
    let g = kernel.grid;
    let nb = fit.kappas.len();
    let mut ms: Vec<CMat> = fit.diag.iter().map(|d| CMat::from_diag(d)).collect();
    for i in 0..n {
        for j in 0..n {
            if i == j || nb == 0 {
                continue;
            }
            // both (x, y) and the mirrored (y, x) carry information on M_ij
            let mut cols = vec![Vec::with_capacity(2 * pairs.len()); nb];
            let mut rhs = Vec::with_capacity(2 * pairs.len());
            for &(p, q) in &pairs {
                let (x, y) = (g.x(p), g.x(q));
                for a in 0..nb {
                    let k = fit.kappas[a];
                    let (ki, kj) = ((k * k + eps[i]).sqrt(), (k * k + eps[j]).sqrt());
                    cols[a].push(I * (ki * x + kj * y).exp() * (k / kj));
                }
                rhs.push(kernel.scattering_entry(p, q, i, j));
            }
            let m = least_squares(&cols, &rhs)?;
            for a in 0..nb {
                ms[a][(i, j)] = m[a];
            }
        }
    }
    fit.kappas.iter().zip(ms).map(|(&k, m)| BoundState::new(sys, k, m)).collect()
}

/// Both fitting steps under the `N_b` hypothesis.
pub fn fit_bound_states(kernel: &InputKernel, n_b: usize, opts: &FitOptions) -> Result<Vec<BoundState>> {
    let d = fit_diagonal(kernel, n_b, opts)?;
    fit_offdiagonal(kernel, &d, opts)
}
