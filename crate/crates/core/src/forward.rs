//! Direct problem: Jost solutions, reflection/transmission matrices, bound
//! states and the residues of the reflection matrix at them.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::channels::{reflection_symmetry_residual, ChannelMomenta, ChannelSystem};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::profiles::MatrixPotential;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Integration and validation settings for the forward solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Upper bound on the RK4 step regardless of the potential.
    pub max_step: f64,
    /// Target phase advance `k_eff * dx` per step.
    pub phase_step: f64,
    /// Largest allowed growth of the solution before reporting overflow.
    pub overflow: f64,
    /// Tolerance on `max |R^T K - K R|` for table entries.
    pub symmetry_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_step: 0.05, phase_step: 0.01, overflow: 1e150, symmetry_tol: 1e-6 }
    }
}

impl SolverOptions {
    /// Same settings with every step divided by `factor`.
    pub fn refined(&self, factor: f64) -> Self {
        Self { max_step: self.max_step / factor, phase_step: self.phase_step / factor, ..self.clone() }
    }
}

/// A matrix solution and its derivative at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub x: f64,
    pub psi: CMat,
    pub dpsi: CMat,
}

/// `Psi^T Phi' - Psi'^T Phi`.
pub fn wronskian(psi: &CMat, dpsi: &CMat, phi: &CMat, dphi: &CMat) -> Result<CMat> {
    let n = psi.dim();
    for m in [dpsi, phi, dphi] {
        if m.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: m.dim() });
        }
    }
    Ok(&(&psi.transpose() * dphi) - &(&dpsi.transpose() * phi))
}

/// Scattering data on a grid of positive momenta.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTable {
    pub sys: ChannelSystem,
    pub k: Vec<f64>,
    pub r: Vec<CMat>,
    pub t: Vec<CMat>,
    pub k_max: f64,
    /// Largest `max |R^T K - K R|` over the table.
    pub symmetry_residual: f64,
}

impl ReflectionTable {
    pub fn new(sys: ChannelSystem, k: Vec<f64>, r: Vec<CMat>, t: Vec<CMat>) -> Result<Self> {
        let n = sys.n_channels();
        if r.len() != k.len() || t.len() != k.len() {
            return Err(Error::DimensionMismatch { expected: k.len(), found: r.len().min(t.len()) });
        }
        if let Some(m) = r.iter().chain(&t).find(|m| m.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: m.dim() });
        }
        if k.iter().any(|&v| !(v > 0.0 && v.is_finite())) || k.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("table momenta must be positive and ascending".into()));
        }
        let mut residual = 0.0_f64;
        for (&kv, rm) in k.iter().zip(&r) {
            let km = sys.momenta(Complex64::new(kv, 0.0))?;
            residual = residual.max(reflection_symmetry_residual(rm, &km)?);
        }
        let k_max = k.last().copied().unwrap_or(0.0);
        Ok(Self { sys, k, r, t, k_max, symmetry_residual: residual })
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.sys.n_channels()
    }
}

/// A true bound state and the residues of `R_L` and `T_L` at its pole.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundState {
    pub kappa: f64,
    pub q: ChannelMomenta,
    pub m: CMat,
    pub t_residue: CMat,
}

impl BoundState {
    /// Builds a state from `kappa` and a residue matrix, e.g. when read from
    /// file or fitted.
    pub fn new(sys: &ChannelSystem, kappa: f64, m: CMat) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("kappa must be positive, got {kappa}")));
        }
        if m.dim() != sys.n_channels() {
            return Err(Error::DimensionMismatch { expected: sys.n_channels(), found: m.dim() });
        }
        let q = sys.momenta(Complex64::new(0.0, kappa))?;
        let n = m.dim();
        Ok(Self { kappa, q, m, t_residue: CMat::zeros(n) })
    }

    pub fn energy(&self) -> f64 {
        -self.kappa * self.kappa
    }

    /// `kappa_j = sqrt(kappa^2 + eps_j)`.
    pub fn channel_decay(&self) -> Vec<f64> {
        self.q.kj.iter().map(|v| v.im).collect()
    }

    /// `max |M^T Q - Q M|` relative to `max|M| max|Q|`.
    pub fn residue_symmetry(&self) -> f64 {
        let scale = self.m.max_norm() * self.q.kj.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        reflection_symmetry_residual(&self.m, &self.q).unwrap_or(f64::INFINITY) / scale
    }

    /// Real residue matrix in the sign convention used for tabulated
    /// normalization constants: `i M`. The residue itself is purely
    /// imaginary for real symmetric potentials.
    pub fn normalization(&self) -> CMat {
        self.m.scale(Complex64::new(0.0, 1.0))
    }
}

/// Bound-state scan settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    pub kappa_min: f64,
    /// `None` picks the bound implied by the deepest point of the potential.
    pub kappa_max: Option<f64>,
    pub step: f64,
    pub tol: f64,
    /// Finite-difference step for the pole derivative.
    pub residue_step: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { kappa_min: 1e-4, kappa_max: None, step: 1e-3, tol: 1e-10, residue_step: 1e-5 }
    }
}

/// Matrix Schrödinger solver `Psi'' = (V(x) + E - k^2) Psi` over a potential of
/// finite support.
#[derive(Debug, Clone)]
pub struct ForwardSolver<'a, P: ?Sized> {
    pot: &'a P,
    sys: ChannelSystem,
    opts: SolverOptions,
    x0: f64,
    x1: f64,
    vmax: f64,
    breaks: Vec<f64>,
}

/// Jost solution `F_+ = G D` with `G(X) = 1`, `G'(X) = iK`, `D = e^{iKX}`.
struct ScaledJost {
    km: ChannelMomenta,
    g: Vec<Complex64>,
    dg: Vec<Complex64>,
}

impl<'a, P: MatrixPotential + ?Sized> ForwardSolver<'a, P> {
    pub fn new(pot: &'a P, sys: &ChannelSystem, opts: SolverOptions) -> Result<Self> {
        let n = sys.n_channels();
        if pot.n_channels() != n {
            return Err(Error::DimensionMismatch { expected: n, found: pot.n_channels() });
        }
        let (x0, x1) = pot.support();
        let mut vmax = 0.0_f64;
        if x1 > x0 {
            let mut buf = vec![0.0; n * n];
            let samples = 2000;
            for s in 0..=samples {
                pot.eval_into(x0 + (x1 - x0) * s as f64 / samples as f64, &mut buf);
                vmax = vmax.max(buf.iter().map(|v| v.abs()).fold(0.0, f64::max));
            }
        }
        let x1 = x1.max(x0);
        // the support ends are jumps of the truncated potential
        let mut breaks = pot.breakpoints();
        breaks.extend([x0, x1]);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        Ok(Self { pot, sys: sys.clone(), opts, x0, x1, vmax, breaks })
    }

    pub fn system(&self) -> &ChannelSystem {
        &self.sys
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// `(start, end)` of the integration interval.
    pub fn support(&self) -> (f64, f64) {
        (self.x0, self.x1)
    }

    fn step_count(&self, km: &ChannelMomenta, from: f64, to: f64) -> usize {
        let len = (to - from).abs();
        if len == 0.0 {
            return 0;
        }
        let k2 = km.k * km.k;
        let k_eff = self.sys.thresholds().iter().map(|&e| (k2 - e).norm()).fold(0.0, f64::max) + self.vmax;
        let k_eff = k_eff.sqrt();
        let mut dx = self.opts.max_step.min(self.pot.max_step());
        if k_eff > 0.0 {
            dx = dx.min(self.opts.phase_step / k_eff);
        }
        if let Some((_, h)) = self.pot.sample_step() {
            // whole number of substeps per grid interval keeps nodes on
            // step boundaries
            let per = (h / dx).ceil().max(1.0);
            let intervals = (len / h).round().max(1.0);
            return (per * intervals) as usize;
        }
        (len / dx).ceil().max(1.0) as usize
    }

    /// RK4 propagation of `(Psi, Psi')` from `from` to `to`, optionally
    /// recording the solution at every `record_every`-th step.
    #[allow(clippy::too_many_arguments)]
    fn propagate(
        &self,
        km: &ChannelMomenta,
        from: f64,
        to: f64,
        psi: &mut [Complex64],
        dpsi: &mut [Complex64],
        steps: usize,
        mut record: Option<(&mut Vec<SolutionPair>, usize)>,
    ) -> Result<()> {
        let n = self.sys.n_channels();
        let nn = n * n;
        if steps == 0 {
            return Ok(());
        }
        let dx = (to - from) / steps as f64;
        let k2 = km.k * km.k;
        // U(x) = V(x) + E - k^2 is real on both supported axes.
        let shift: Vec<f64> = self.sys.thresholds().iter().map(|&e| e - k2.re).collect();
        let mut u0 = vec![0.0; nn];
        let mut um = vec![0.0; nn];
        let mut u1 = vec![0.0; nn];
        // outside the support V is taken as zero, matching the free
        // asymptotic forms
        let eval_u = |x: f64, out: &mut [f64]| {
            if x < self.x0 || x > self.x1 {
                out.fill(0.0);
            } else {
                self.pot.eval_into(x, out);
            }
            for j in 0..n {
                out[j * n + j] += shift[j];
            }
        };
        let mut kp = vec![ZERO; 4 * nn];
        let mut kd = vec![ZERO; 4 * nn];
        let mut tp = vec![ZERO; nn];
        let mut td = vec![ZERO; nn];
        let mul = |u: &[f64], a: &[Complex64], out: &mut [Complex64]| {
            for i in 0..n {
                for j in 0..n {
                    let mut s = ZERO;
                    for l in 0..n {
                        s += a[l * n + j] * u[i * n + l];
                    }
                    out[i * n + j] = s;
                }
            }
        };
        // one RK4 step from xa (where U = u0) to xb; leaves U at `xb_eval`
        // (xb, or just short of it at a jump) in u1
        let mut rk4 = |xa: f64,
                       xb: f64,
                       xb_eval: f64,
                       u0: &[f64],
                       u1: &mut [f64],
                       psi: &mut [Complex64],
                       dpsi: &mut [Complex64]| {
            let dx = xb - xa;
            eval_u(xa + 0.5 * dx, &mut um);
            eval_u(xb_eval, u1);
            kp[..nn].copy_from_slice(dpsi);
            mul(u0, psi, &mut kd[..nn]);
            for i in 0..nn {
                tp[i] = psi[i] + kp[i] * (0.5 * dx);
                td[i] = dpsi[i] + kd[i] * (0.5 * dx);
            }
            kp[nn..2 * nn].copy_from_slice(&td);
            mul(&um, &tp, &mut kd[nn..2 * nn]);
            for i in 0..nn {
                tp[i] = psi[i] + kp[nn + i] * (0.5 * dx);
                td[i] = dpsi[i] + kd[nn + i] * (0.5 * dx);
            }
            kp[2 * nn..3 * nn].copy_from_slice(&td);
            mul(&um, &tp, &mut kd[2 * nn..3 * nn]);
            for i in 0..nn {
                tp[i] = psi[i] + kp[2 * nn + i] * dx;
                td[i] = dpsi[i] + kd[2 * nn + i] * dx;
            }
            kp[3 * nn..].copy_from_slice(&td);
            mul(u1, &tp, &mut kd[3 * nn..]);
            let w = dx / 6.0;
            for i in 0..nn {
                psi[i] += (kp[i] + (kp[nn + i] + kp[2 * nn + i]) * 2.0 + kp[3 * nn + i]) * w;
                dpsi[i] += (kd[i] + (kd[nn + i] + kd[2 * nn + i]) * 2.0 + kd[3 * nn + i]) * w;
            }
        };
        let (lo, hi) = if from < to { (from, to) } else { (to, from) };
        let mut breaks: Vec<f64> = self.breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
        if to < from {
            breaks.reverse();
        }
        let tol = 1e-12 * dx.abs().max(1e-300);
        let is_break = |x: f64| self.breaks.iter().any(|&b| (b - x).abs() <= tol);
        // U is evaluated one-sided at breakpoints: on the near side when a
        // step ends there, on the far side when one starts there
        let side = |b: f64, before: bool| {
            let d = 1e-10 * (1.0 + b.abs()) * dx.signum();
            if before {
                b - d
            } else {
                b + d
            }
        };
        eval_u(if is_break(from) { side(from, false) } else { from }, &mut u0);
        let mut next_break = 0;
        let start_norm = psi.iter().chain(dpsi.iter()).map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        for s in 0..steps {
            let x = from + s as f64 * dx;
            let xe = if s + 1 == steps { to } else { x + dx };
            let mut xa = x;
            while next_break < breaks.len() {
                let b = breaks[next_break];
                let ahead = if dx > 0.0 { b < xe - tol } else { b > xe + tol };
                if !ahead {
                    break;
                }
                next_break += 1;
                if (b - xa).abs() <= tol {
                    continue;
                }
                rk4(xa, b, side(b, true), &u0, &mut u1, psi, dpsi);
                eval_u(side(b, false), &mut u0);
                xa = b;
            }
            if next_break < breaks.len() && (breaks[next_break] - xe).abs() <= tol {
                next_break += 1;
            }
            if is_break(xe) {
                rk4(xa, xe, side(xe, true), &u0, &mut u1, psi, dpsi);
                eval_u(side(xe, false), &mut u0);
            } else {
                rk4(xa, xe, xe, &u0, &mut u1, psi, dpsi);
                core::mem::swap(&mut u0, &mut u1);
            }
            if let Some((out, every)) = record.as_mut() {
                if (s + 1) % *every == 0 {
                    out.push(SolutionPair {
                        x: xe,
                        psi: CMat::from_rows(n, psi.to_vec())?,
                        dpsi: CMat::from_rows(n, dpsi.to_vec())?,
                    });
                }
            }
            if s % 16 == 15 || s + 1 == steps {
                let mut worst = 0.0_f64;
                let mut channel = 0;
                for i in 0..n {
                    for j in 0..n {
                        let v = psi[i * n + j].norm().max(dpsi[i * n + j].norm());
                        if !(v <= worst) {
                            worst = v;
                            channel = j;
                        }
                    }
                }
                let growth = worst / start_norm;
                if !(growth <= self.opts.overflow) {
                    return Err(Error::Overflow { channel, k: km.k.re + km.k.im, growth });
                }
            }
        }
        Ok(())
    }

    fn scaled_jost(&self, k: Complex64, to: f64, steps_factor: usize) -> Result<ScaledJost> {
        let km = self.sys.momenta(k)?;
        let n = km.n_channels();
        let mut g = vec![ZERO; n * n];
        let mut dg = vec![ZERO; n * n];
        for j in 0..n {
            g[j * n + j] = ONE;
            dg[j * n + j] = Complex64::new(0.0, 1.0) * km.kj[j];
        }
        let steps = self.step_count(&km, self.x1, to) * steps_factor;
        self.propagate(&km, self.x1, to, &mut g, &mut dg, steps, None)?;
        Ok(ScaledJost { km, g, dg })
    }

    /// Jost solution `F_+` and its derivative at `x`, from the boundary
    /// condition `F_+ = e^{iKx}` at the right end of the support.
    pub fn jost_plus_at(&self, k: Complex64, x: f64) -> Result<SolutionPair> {
        let sj = self.scaled_jost(k, x.min(self.x1), 1)?;
        let n = sj.km.n_channels();
        let d: Vec<Complex64> = sj.km.kj.iter().map(|&kj| (Complex64::new(0.0, 1.0) * kj * self.x1).exp()).collect();
        let mut psi = CMat::from_rows(n, sj.g)?.mul_diag_right(&d);
        let mut dpsi = CMat::from_rows(n, sj.dg)?.mul_diag_right(&d);
        if x > self.x1 {
            // free region to the right
            let f: Vec<Complex64> = sj.km.kj.iter().map(|&kj| (Complex64::new(0.0, 1.0) * kj * x).exp()).collect();
            let ik: Vec<Complex64> = sj.km.kj.iter().map(|&kj| Complex64::new(0.0, 1.0) * kj).collect();
            psi = CMat::from_diag(&f);
            dpsi = CMat::from_diag(&f).mul_diag_right(&ik);
        }
        Ok(SolutionPair { x, psi, dpsi })
    }

    /// Jost solution `F_+` and derivative at the left end of the support.
    pub fn integrate_jost_plus(&self, k: Complex64) -> Result<SolutionPair> {
        self.jost_plus_at(k, self.x0)
    }

    /// Jost solution `F_-`, equal to `e^{-iKx}` left of the support,
    /// integrated up to `x`.
    pub fn jost_minus_at(&self, k: Complex64, x: f64) -> Result<SolutionPair> {
        let km = self.sys.momenta(k)?;
        let n = km.n_channels();
        let start = self.x0.min(x);
        let mut psi = vec![ZERO; n * n];
        let mut dpsi = vec![ZERO; n * n];
        for j in 0..n {
            let mik = Complex64::new(0.0, -1.0) * km.kj[j];
            let e = (mik * start).exp();
            psi[j * n + j] = e;
            dpsi[j * n + j] = mik * e;
        }
        let steps = self.step_count(&km, start, x);
        self.propagate(&km, start, x, &mut psi, &mut dpsi, steps, None)?;
        Ok(SolutionPair { x, psi: CMat::from_rows(n, psi)?, dpsi: CMat::from_rows(n, dpsi)? })
    }

    /// `F_-` at `x0 + p * dx` for `p = 0..=count`, starting in the free
    /// region at `x0`.
    pub fn jost_minus_on_grid(&self, k: Complex64, x0: f64, dx: f64, count: usize) -> Result<Vec<SolutionPair>> {
        let km = self.sys.momenta(k)?;
        let n = km.n_channels();
        let mut psi = vec![ZERO; n * n];
        let mut dpsi = vec![ZERO; n * n];
        for j in 0..n {
            let mik = Complex64::new(0.0, -1.0) * km.kj[j];
            let e = (mik * x0).exp();
            psi[j * n + j] = e;
            dpsi[j * n + j] = mik * e;
        }
        let mut out = Vec::with_capacity(count + 1);
        out.push(SolutionPair {
            x: x0,
            psi: CMat::from_rows(n, psi.clone())?,
            dpsi: CMat::from_rows(n, dpsi.clone())?,
        });
        if count == 0 {
            return Ok(out);
        }
        let per = self.step_count(&km, x0, x0 + dx).max(1);
        let to = x0 + dx * count as f64;
        self.propagate(&km, x0, to, &mut psi, &mut dpsi, per * count, Some((&mut out, per)))?;
        Ok(out)
    }

    /// Matching coefficients `(A, B)` at the left edge with `Psi = F_+`.
    fn matching(&self, k: Complex64, steps_factor: usize) -> Result<(ChannelMomenta, CMat, CMat)> {
        let sj = self.scaled_jost(k, self.x0, steps_factor)?;
        let km = sj.km;
        let n = km.n_channels();
        let i = Complex64::new(0.0, 1.0);
        for (j, kj) in km.kj.iter().enumerate() {
            if *kj == ZERO {
                return Err(Error::AtThreshold { channel: j, k: k.re });
            }
        }
        let mut a = CMat::zeros(n);
        let mut b = CMat::zeros(n);
        for r in 0..n {
            let ik = i * km.kj[r];
            let left_a = (-ik * self.x0).exp() * 0.5;
            let left_b = (ik * self.x0).exp() * 0.5;
            for c in 0..n {
                let d = (i * km.kj[c] * self.x1).exp();
                let g = sj.g[r * n + c];
                let dg = sj.dg[r * n + c] / ik;
                a[(r, c)] = left_a * (g + dg) * d;
                b[(r, c)] = left_b * (g - dg) * d;
            }
        }
        Ok((km, a, b))
    }

    /// Left reflection and transmission matrices at real `k`.
    pub fn reflection_transmission(&self, k: f64) -> Result<(CMat, CMat)> {
        self.reflection_transmission_refined(k, 1)
    }

    fn reflection_transmission_refined(&self, k: f64, steps_factor: usize) -> Result<(CMat, CMat)> {
        let (_, a, b) = self.matching(Complex64::new(k, 0.0), steps_factor)?;
        let lu =
            crate::linalg::Lu::factor(a.as_slice().to_vec(), a.dim()).map_err(|_| Error::SingularMatching { k })?;
        if lu.condition_estimate() > 1e12 {
            return Err(Error::SingularMatching { k });
        }
        let t = a.inverse().map_err(|_| Error::SingularMatching { k })?;
        let r = &b * &t;
        Ok((r, t))
    }

    /// Difference between solutions at the chosen step and at half of it.
    pub fn step_error_estimate(&self, k: f64) -> Result<f64> {
        let (r1, t1) = self.reflection_transmission_refined(k, 1)?;
        let (r2, t2) = self.reflection_transmission_refined(k, 2)?;
        Ok((&r1 - &r2).max_norm().max((&t1 - &t2).max_norm()))
    }

    /// Tabulates `R_L` and `T_L` on an ascending grid of positive momenta.
    pub fn reflection_table(&self, k_grid: &[f64]) -> Result<ReflectionTable> {
        let mut r = Vec::with_capacity(k_grid.len());
        let mut t = Vec::with_capacity(k_grid.len());
        for &k in k_grid {
            let (rk, tk) = self.reflection_transmission(k)?;
            r.push(rk);
            t.push(tk);
        }
        let table = ReflectionTable::new(self.sys.clone(), k_grid.to_vec(), r, t)?;
        if table.symmetry_residual > self.opts.symmetry_tol {
            return Err(Error::InvalidInput(alloc::format!(
                "reflection symmetry residual {:e} exceeds {:e}",
                table.symmetry_residual,
                self.opts.symmetry_tol
            )));
        }
        Ok(table)
    }

    /// `det W[F_+, F_-]` at `k = i kappa`, real up to roundoff.
    pub fn wronskian_determinant(&self, kappa: f64) -> Result<f64> {
        let (km, a, _) = self.matching(Complex64::new(0.0, kappa), 1)?;
        // W[F_+, F_-] = -2iK A^T-type relation: det W = det(-2iK) det A
        let mut d = a.det();
        for kj in &km.kj {
            d *= Complex64::new(0.0, -2.0) * *kj;
        }
        if d.im.abs() > 1e-8 * d.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput(alloc::format!(
                "Wronskian determinant at kappa = {kappa} is not real ({d})"
            )));
        }
        Ok(d.re)
    }

    /// Upper limit of the bound-state scan implied by the deepest point of
    /// the potential (Gershgorin bound on its lowest eigenvalue).
    pub fn default_kappa_max(&self) -> f64 {
        let n = self.sys.n_channels();
        let (x0, x1) = (self.x0, self.x1);
        if x1 <= x0 {
            return 0.0;
        }
        let mut buf = vec![0.0; n * n];
        let mut lowest = 0.0_f64;
        let samples = 4000;
        for s in 0..=samples {
            self.pot.eval_into(x0 + (x1 - x0) * s as f64 / samples as f64, &mut buf);
            for i in 0..n {
                let off: f64 = (0..n).filter(|&j| j != i).map(|j| buf[i * n + j].abs()).sum();
                lowest = lowest.min(buf[i * n + i] + self.sys.thresholds()[i] - off);
            }
        }
        (-lowest).sqrt() * 1.05
    }

    /// Finds all `kappa > 0` in the scan window where `det W` vanishes.
    pub fn find_bound_states(&self, opts: &ScanOptions) -> Result<Vec<f64>> {
        let hi = opts.kappa_max.unwrap_or_else(|| self.default_kappa_max());
        let lo = opts.kappa_min;
        if !(opts.step > 0.0) {
            return Err(Error::InvalidInput("scan step must be positive".into()));
        }
        if hi <= lo {
            return Ok(Vec::new());
        }
        let count = ((hi - lo) / opts.step).ceil() as usize;
        let kappas: Vec<f64> = (0..=count).map(|i| (lo + i as f64 * opts.step).min(hi)).collect();
        let values: Vec<f64> = kappas.iter().map(|&k| self.wronskian_determinant(k)).collect::<Result<_>>()?;
        let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (i, &end) in [0usize, values.len() - 1].iter().enumerate() {
            if values[end].abs() <= 1e-10 * scale {
                let _ = i;
                return Err(Error::RootAtScanBoundary { kappa: kappas[end] });
            }
        }
        let mut roots = Vec::new();
        for i in 0..values.len() - 1 {
            let (fa, fb) = (values[i], values[i + 1]);
            if fa == 0.0 {
                roots.push(kappas[i]);
                continue;
            }
            if fa.signum() != fb.signum() && fb != 0.0 {
                roots.push(self.bisect(kappas[i], kappas[i + 1], fa, opts.tol)?);
            } else if i > 0 {
                let fp = values[i - 1];
                // a touch of the axis between samples: |d| dips without a
                // sign change
                if fp.signum() == fa.signum()
                    && fa.signum() == fb.signum()
                    && fa.abs() < fp.abs()
                    && fa.abs() < fb.abs()
                {
                    self.check_dip(kappas[i - 1], kappas[i + 1], fa.signum())?;
                }
            }
        }
        Ok(roots)
    }

    fn bisect(&self, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> Result<f64> {
        while b - a > tol {
            let m = 0.5 * (a + b);
            let fm = self.wronskian_determinant(m)?;
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    fn check_dip(&self, a: f64, b: f64, sign: f64) -> Result<()> {
        // golden-section search for the minimum of sign * d
        let g = 0.5 * (5.0_f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (a, b);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        let mut fc = sign * self.wronskian_determinant(c)?;
        let mut fd = sign * self.wronskian_determinant(d)?;
        for _ in 0..40 {
            if fc <= 0.0 || fd <= 0.0 {
                return Err(Error::UnresolvedRoots { kappa: if fc <= 0.0 { c } else { d } });
            }
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = sign * self.wronskian_determinant(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = sign * self.wronskian_determinant(d)?;
            }
        }
        Ok(())
    }

    /// `(B adj A, det A)` at `k = i kappa`.
    fn pole_parts(&self, kappa: f64) -> Result<(CMat, CMat, Complex64)> {
        let (_, a, b) = self.matching(Complex64::new(0.0, kappa), 1)?;
        let adj = a.adjugate();
        Ok((&b * &adj, adj, a.det()))
    }

    /// Residues of `R_L` and `T_L` at `k = i kappa`.
    pub fn residue(&self, kappa: f64, delta: f64) -> Result<BoundState> {
        let (b_adj, adj, _) = self.pole_parts(kappa)?;
        let det_at = |k: f64| -> Result<f64> {
            let (_, a, _) = self.matching(Complex64::new(0.0, k), 1)?;
            Ok(a.det().re)
        };
        let central = |d: f64| -> Result<f64> { Ok((det_at(kappa + d)? - det_at(kappa - d)?) / (2.0 * d)) };
        let d1 = central(delta)?;
        let d2 = central(0.5 * delta)?;
        let ddet_dkappa = (4.0 * d2 - d1) / 3.0;
        if ddet_dkappa.abs() < 1e-12 {
            return Err(Error::NonSimplePole { kappa, derivative: ddet_dkappa });
        }
        // d/dk = -i d/dkappa along k = i kappa
        let ddet_dk = Complex64::new(0.0, -ddet_dkappa);
        let m = b_adj.scale(ONE / ddet_dk);
        let t_residue = adj.scale(ONE / ddet_dk);
        let q = self.sys.momenta(Complex64::new(0.0, kappa))?;
        Ok(BoundState { kappa, q, m, t_residue })
    }

    /// Scan, refine and attach residues.
    pub fn bound_states(&self, opts: &ScanOptions) -> Result<Vec<BoundState>> {
        self.find_bound_states(opts)?.into_iter().map(|kappa| self.residue(kappa, opts.residue_step)).collect()
    }
}

/// Largest deviation of the flux-normalised scattering matrix from
/// unitarity; meaningful when every channel is open.
pub fn flux_unitarity_residual(r: &CMat, t: &CMat, km: &ChannelMomenta) -> f64 {
    let n = km.n_channels();
    let s: Vec<f64> = km.kj.iter().map(|kj| kj.re.abs().sqrt()).collect();
    let mut worst = 0.0_f64;
    for a in 0..n {
        for b in 0..n {
            let mut sum = ZERO;
            for i in 0..n {
                let ra = r[(i, a)] * s[i] / s[a];
                let rb = r[(i, b)] * s[i] / s[b];
                let ta = t[(i, a)] * s[i] / s[a];
                let tb = t[(i, b)] * s[i] / s[b];
                sum += ra.conj() * rb + ta.conj() * tb;
            }
            if a == b {
                sum -= ONE;
            }
            worst = worst.max(sum.norm());
        }
    }
    worst
}

/// Momentum grid for tabulating reflection data: `count` uniform nodes up to
/// `k_max`, with the nodes near each threshold replaced by `window_nodes`
/// nodes per side, uniform in the local channel momentum.
pub fn momentum_grid(
    sys: &ChannelSystem,
    k_max: f64,
    count: usize,
    window_nodes: usize,
    half_width: f64,
) -> Result<Vec<f64>> {
    if !(k_max > 0.0) || count == 0 {
        return Err(Error::InvalidInput("k grid needs k_max > 0 and at least one point".into()));
    }
    let windows = threshold_windows(sys, half_width)?;
    let mut k: Vec<f64> = (1..=count)
        .map(|i| k_max * i as f64 / count as f64)
        .filter(|&v| !windows.iter().any(|w| v >= w.lo && v <= w.hi))
        .collect();
    for w in &windows {
        let t = w.threshold;
        let eps = t * t;
        if w.lo < t {
            let a_max = (eps - w.lo * w.lo).sqrt();
            for m in 1..=window_nodes {
                let a = a_max * m as f64 / window_nodes as f64;
                k.push((eps - a * a).max(0.0).sqrt());
            }
        }
        let b_max = (w.hi * w.hi - eps).sqrt();
        for m in 1..=window_nodes {
            let b = b_max * m as f64 / window_nodes as f64;
            k.push((eps + b * b).sqrt());
        }
    }
    k.retain(|&v| v > 0.0 && v <= k_max * (1.0 + 1e-12));
    k.sort_by(|a, b| a.partial_cmp(b).unwrap());
    k.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
    Ok(k)
}

/// Neighbourhood of one threshold where quadrature switches to the local
/// channel momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdWindow {
    pub channel: usize,
    pub threshold: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Windows `[t - d, t + d]` around each distinct threshold momentum, with
/// `d = min(half_width, t / 2)` so no window reaches `k = 0`.
pub fn threshold_windows(sys: &ChannelSystem, half_width: f64) -> Result<Vec<ThresholdWindow>> {
    let mut out: Vec<ThresholdWindow> = Vec::new();
    for (channel, t) in sys.threshold_momenta() {
        let d = half_width.min(0.5 * t);
        let w = ThresholdWindow { channel, threshold: t, lo: t - d, hi: t + d };
        if let Some(prev) = out.last() {
            if w.lo <= prev.hi {
                return Err(Error::OverlappingWindows { a: prev.channel, b: channel });
            }
        }
        out.push(w);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{PotentialGrid, ProfileMatrix, ProfileSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn barrier(v0: f64, l: f64, h: f64) -> PotentialGrid {
        let count = (l / h).round() as usize;
        let values: Vec<f64> = (0..=count).map(|_| v0).collect();
        PotentialGrid::new(1, 0.0, h, values).unwrap()
    }

    /// Closed-form single-channel barrier of height `v0` on `[0, l]`.
    fn barrier_oracle(v0: f64, l: f64, k: f64) -> (Complex64, Complex64) {
        let i = c(0.0, 1.0);
        let q = (c(k * k - v0, 0.0)).sqrt();
        let (s, co) = ((q * l).sin(), (q * l).cos());
        let den = c(2.0, 0.0) * k * q * co - i * (k * k + q * q) * s;
        let t = c(2.0, 0.0) * k * q * (-i * k * l).exp() / den;
        let r = i * (q * q - k * k) * s / den;
        (r, t)
    }

    #[test]
    fn free_solution() {
        let pot = PotentialGrid::new(2, 0.0, 0.1, vec![0.0; 4 * 11]).unwrap();
        let sys = ChannelSystem::new(vec![0.0, 0.3]).unwrap();
        let solver = ForwardSolver::new(&pot, &sys, SolverOptions::default()).unwrap();
        let sol = solver.integrate_jost_plus(c(0.8, 0.0)).unwrap();
        let km = sys.momenta(c(0.8, 0.0)).unwrap();
        assert!((&sol.psi - &CMat::identity(2)).max_norm() < 1e-14);
        let ik: Vec<Complex64> = km.kj.iter().map(|k| c(0.0, 1.0) * k).collect();
        assert!((&sol.dpsi - &CMat::from_diag(&ik)).max_norm() < 1e-14);
        let (r, t) = solver.reflection_transmission(0.8).unwrap();
        assert!(r.max_norm() < 1e-14);
        assert!((&t - &CMat::identity(2)).max_norm() < 1e-14);
    }

    #[test]
    fn square_barrier_matches_closed_form() {
        let (v0, l) = (0.2, 2.8);
        let pot = barrier(v0, l, 0.05);
        let sys = ChannelSystem::degenerate(1);
        let solver = ForwardSolver::new(&pot, &sys, SolverOptions::default()).unwrap();
        let (r, t) = solver.reflection_transmission(0.6).unwrap();
        let (ro, to) = barrier_oracle(v0, l, 0.6);
        assert!((r[(0, 0)] - ro).norm() < 1e-6);
        assert!((t[(0, 0)] - to).norm() < 1e-6);
        assert!((r[(0, 0)].norm_sqr() + t[(0, 0)].norm_sqr() - 1.0).abs() < 1e-8);
        for k in [0.1, 0.3, 0.44, 0.45, 1.0, 3.0, 7.5, 12.0] {
            let (r, t) = solver.reflection_transmission(k).unwrap();
            let (ro, to) = barrier_oracle(v0, l, k);
            assert!((r[(0, 0)] - ro).norm() < 1e-6, "k = {k}");
            assert!((t[(0, 0)] - to).norm() < 1e-6, "k = {k}");
        }
    }

    #[test]
    fn barrier_jost_solution_matches_transfer() {
        // F_+ at x = 0 for a constant barrier: propagate e^{ikx} back across L.
        let (v0, l, k) = (0.5, 2.0, 0.4);
        let pot = barrier(v0, l, 0.05);
        let solver = ForwardSolver::new(&pot, &ChannelSystem::degenerate(1), SolverOptions::default()).unwrap();
        let sol = solver.integrate_jost_plus(c(k, 0.0)).unwrap();
        let kp = (v0 - k * k).sqrt();
        let i = c(0.0, 1.0);
        let f_l = (i * k * l).exp();
        let df_l = i * k * f_l;
        let psi = f_l * (kp * l).cosh() - df_l * (kp * l).sinh() / kp;
        let dpsi = -f_l * kp * (kp * l).sinh() + df_l * (kp * l).cosh();
        assert!((sol.psi[(0, 0)] - psi).norm() < 1e-8);
        assert!((sol.dpsi[(0, 0)] - dpsi).norm() < 1e-8);
    }

    #[test]
    fn negative_momentum_conjugates() {
        let pot = barrier(0.3, 1.5, 0.05);
        let solver = ForwardSolver::new(&pot, &ChannelSystem::degenerate(1), SolverOptions::default()).unwrap();
        let (r, t) = solver.reflection_transmission(0.9).unwrap();
        let (rm, tm) = solver.reflection_transmission(-0.9).unwrap();
        assert!((rm[(0, 0)] - r[(0, 0)].conj()).norm() < 1e-12);
        assert!((tm[(0, 0)] - t[(0, 0)].conj()).norm() < 1e-12);
    }

    #[test]
    fn wronskian_of_free_exponentials() {
        let km = ChannelSystem::new(vec![0.0, 0.5]).unwrap().momenta(c(0.3, 0.0)).unwrap();
        let x = 0.7;
        let i = c(0.0, 1.0);
        let ep: Vec<Complex64> = km.kj.iter().map(|k| (i * k * x).exp()).collect();
        let em: Vec<Complex64> = km.kj.iter().map(|k| (-i * k * x).exp()).collect();
        let dep: Vec<Complex64> = km.kj.iter().zip(&ep).map(|(k, e)| i * k * e).collect();
        let dem: Vec<Complex64> = km.kj.iter().zip(&em).map(|(k, e)| -i * k * e).collect();
        let w = wronskian(&CMat::from_diag(&ep), &CMat::from_diag(&dep), &CMat::from_diag(&em), &CMat::from_diag(&dem))
            .unwrap();
        let expect: Vec<Complex64> = km.kj.iter().map(|k| c(0.0, -2.0) * k).collect();
        assert!((&w - &CMat::from_diag(&expect)).max_norm() < 1e-14);
        assert!(wronskian(&CMat::identity(2), &CMat::identity(3), &CMat::identity(2), &CMat::identity(2)).is_err());
    }

    #[test]
    fn square_well_bound_states() {
        // Single channel well -v0 on [0, l]: even/odd conditions
        // q tan(q l / 2) = kappa, -q cot(q l / 2) = kappa, q = sqrt(v0 - kappa^2).
        let (v0, l) = (1.0, 2.0);
        let pot = barrier(-v0, l, 0.01);
        let solver = ForwardSolver::new(&pot, &ChannelSystem::degenerate(1), SolverOptions::default()).unwrap();
        let kappas = solver.find_bound_states(&ScanOptions::default()).unwrap();
        let f_even = |k: f64| {
            let q = (v0 - k * k).sqrt();
            q * (q * l / 2.0).tan() - k
        };
        // bisection oracle on the even condition
        let (mut a, mut b) = (0.1, 0.99);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f_even(a).signum() == f_even(m).signum() {
                a = m;
            } else {
                b = m;
            }
        }
        assert_eq!(kappas.len(), 1, "{kappas:?}");
        assert!((kappas[0] - a).abs() < 1e-6, "{} vs {}", kappas[0], a);
    }

    #[test]
    fn momentum_grid_refines_windows() {
        let sys = ChannelSystem::new(vec![0.0, 0.025]).unwrap();
        let k = momentum_grid(&sys, 12.0, 1200, 32, 0.05).unwrap();
        let t = 0.025_f64.sqrt();
        let inside = k.iter().filter(|&&v| (v - t).abs() <= 0.05 + 1e-12).count();
        assert_eq!(inside, 64);
        assert!(k.windows(2).all(|w| w[1] > w[0]));
        assert!(!k.contains(&t));
        assert_eq!(*k.last().unwrap(), 12.0);
        let clash = ChannelSystem::new(vec![0.0, 0.01, 0.0101]).unwrap();
        assert!(matches!(threshold_windows(&clash, 0.05), Err(Error::OverlappingWindows { .. })));
    }

    #[test]
    fn analytic_and_sampled_potentials_agree() {
        let sys = ChannelSystem::degenerate(1);
        let m = ProfileMatrix::new(&sys, vec![(0, 0, ProfileSpec::Gaussian { v0: 0.2, b: 2.0, c: 2.0 })]).unwrap();
        let g = m.sample(-1.0, 6.0, 0.01).unwrap();
        let sa = ForwardSolver::new(&m, &sys, SolverOptions::default()).unwrap();
        let sg = ForwardSolver::new(&g, &sys, SolverOptions::default()).unwrap();
        let (ra, _) = sa.reflection_transmission(0.5).unwrap();
        let (rg, _) = sg.reflection_transmission(0.5).unwrap();
        // linear interpolation error ~ h^2 V'' / 8
        assert!((ra[(0, 0)] - rg[(0, 0)]).norm() < 1e-4);
    }
}
