//! Input kernel of the Marchenko equation: the oscillatory momentum integral
//! over reflection data plus the bound-state sum.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::channels::ChannelSystem;
use crate::error::{Error, Result};
use crate::forward::{threshold_windows, BoundState, ReflectionTable};
use crate::linalg::{CMat, I};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Quadrature settings for the momentum integral.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOptions {
    /// Half-width of the neighbourhood of each threshold integrated in the
    /// local channel momentum.
    pub window_half_width: f64,
    /// Fewest table points accepted inside one window.
    pub min_window_points: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { window_half_width: 0.05, min_window_points: 8 }
    }
}

/// Per-node weights `c[n][i][j]` such that
/// `int_0^kmax dk e^{-ik_i x} R_ij e^{-ik_j y} k/k_j ≈ sum_n c[n][i][j] e^{-ik_i x} R_ij(k_n) e^{-ik_j y}`.
#[derive(Debug, Clone, PartialEq)]
pub struct KQuadrature {
    n: usize,
    /// Per-column part, shared by all rows.
    weights: Vec<Complex64>,
    thresholds: Vec<f64>,
    /// Extrapolated integrand values at `k = 0` and at each threshold. At
    /// the branch point of `eps` only elements with `eps_i = eps_j = eps`
    /// are nonzero (`k_i R_ij = k_j R_ji`), so the others get no end term.
    ends: Vec<BranchEnd>,
}

#[derive(Debug, Clone, PartialEq)]
struct BranchEnd {
    eps: f64,
    nodes: [usize; 3],
    weights: [Complex64; 3],
}

impl KQuadrature {
    pub fn new(table: &ReflectionTable, opts: &KernelOptions) -> Result<Self> {
        let sys = &table.sys;
        let n = sys.n_channels();
        let k = &table.k;
        let nk = k.len();
        let mut w = vec![ZERO; nk * n];
        let eps = sys.thresholds();
        let mut ends = Vec::new();
        if nk == 0 {
            return Ok(Self { n, weights: w, thresholds: eps.to_vec(), ends });
        }
        let windows = threshold_windows(sys, opts.window_half_width)?;
        let kj_at = |kv: f64| -> Vec<Complex64> {
            // table momenta never sit on a threshold
            sys.momenta(Complex64::new(kv, 0.0)).map(|m| m.kj).unwrap_or_default()
        };
        let kjs: Vec<Vec<Complex64>> = k.iter().map(|&v| kj_at(v)).collect();
        let window_of = |kv: f64| windows.iter().position(|wd| kv >= wd.lo - 1e-12 && kv <= wd.hi + 1e-12);

        for wd in &windows {
            let inside: Vec<usize> = (0..nk).filter(|&i| window_of(k[i]).is_some_and(|p| windows[p] == *wd)).collect();
            let below = inside.iter().filter(|&&i| k[i] < wd.threshold).count();
            let above = inside.len() - below;
            if inside.len() < opts.min_window_points || below < 3 || above < 3 {
                return Err(Error::SparseThresholdWindow { channel: wd.channel, points: inside.len() });
            }
        }

        // local measure variable s and its value at node m for window `wd`:
        // a = sqrt(eps - k^2) below, b = sqrt(k^2 - eps) above
        let local = |kv: f64, e: f64| -> f64 { (kv * kv - e).abs().sqrt() };

        // [0, k_0]: trapezoid in k with the k = 0 end extrapolated
        let k0 = k[0];
        for j in 0..n {
            w[j] += 0.5 * k0 * (k0 / kjs[0][j]);
        }
        if nk >= 3 {
            let lag =
                lagrange_at_zero(&[Complex64::new(k[0], 0.0), Complex64::new(k[1], 0.0), Complex64::new(k[2], 0.0)]);
            ends.push(BranchEnd { eps: 0.0, nodes: [0, 1, 2], weights: lag.map(|l| 0.5 * k0 * l) });
        }

        for s in 0..nk - 1 {
            let (ka, kb) = (k[s], k[s + 1]);
            let wa = window_of(ka);
            let wb = window_of(kb);
            match (wa, wb) {
                (Some(p), Some(q)) if p == q => {
                    let wd = &windows[p];
                    let e = eps[wd.channel];
                    let sa = local(ka, e);
                    let sb = local(kb, e);
                    if (ka < wd.threshold) == (kb < wd.threshold) {
                        let half = 0.5 * (sa - sb).abs();
                        for j in 0..n {
                            w[s * n + j] += half * sa / kjs[s][j];
                            w[(s + 1) * n + j] += half * sb / kjs[s + 1][j];
                        }
                    } else {
                        // straddles the threshold: two half-intervals meeting
                        // at the branch point, whose value is extrapolated
                        // in the uniformizing variable k_j
                        for j in 0..n {
                            w[s * n + j] += 0.5 * sa * sa / kjs[s][j];
                            w[(s + 1) * n + j] += 0.5 * sb * sb / kjs[s + 1][j];
                        }
                        let near = nearest_three(k, wd.threshold);
                        let z: Vec<Complex64> = near
                            .iter()
                            .map(|&m| {
                                let d = k[m] * k[m] - e;
                                if d < 0.0 {
                                    Complex64::new(0.0, (-d).sqrt())
                                } else {
                                    Complex64::new(d.sqrt(), 0.0)
                                }
                            })
                            .collect();
                        let lag = lagrange_at_zero(&[z[0], z[1], z[2]]);
                        // limit of s / k_j: -i from the closed side, 1 from the open side
                        let end = -I * (0.5 * sa) + 0.5 * sb;
                        ends.push(BranchEnd { eps: e, nodes: near, weights: lag.map(|l| end * l) });
                    }
                }
                _ => {
                    let half = 0.5 * (kb - ka);
                    for j in 0..n {
                        w[s * n + j] += half * (ka / kjs[s][j]);
                        w[(s + 1) * n + j] += half * (kb / kjs[s + 1][j]);
                    }
                }
            }
        }
        Ok(Self { n, weights: w, thresholds: eps.to_vec(), ends })
    }

    /// Weight of table node `node` for element `(row, column)`.
    pub fn weight(&self, node: usize, row: usize, column: usize) -> Complex64 {
        let mut w = self.weights[node * self.n + column];
        let (er, ec) = (self.thresholds[row], self.thresholds[column]);
        for end in self.ends.iter().filter(|e| e.eps == er && e.eps == ec) {
            for (&m, &l) in end.nodes.iter().zip(&end.weights) {
                if m == node {
                    w += l;
                }
            }
        }
        w
    }
}

fn nearest_three(k: &[f64], t: f64) -> [usize; 3] {
    let mut idx: Vec<usize> = (0..k.len()).collect();
    idx.sort_by(|&a, &b| (k[a] - t).abs().partial_cmp(&(k[b] - t).abs()).unwrap());
    [idx[0], idx[1], idx[2]]
}

/// Weights `L_m(0)` of quadratic interpolation through three nodes.
fn lagrange_at_zero(z: &[Complex64; 3]) -> [Complex64; 3] {
    let mut out = [ZERO; 3];
    for m in 0..3 {
        let mut l = Complex64::new(1.0, 0.0);
        for q in 0..3 {
            if q != m {
                l *= -z[q] / (z[m] - z[q]);
            }
        }
        out[m] = l;
    }
    out
}

/// `(1/2pi) int dk e^{-iKx} R(k) e^{-iKy} k K^{-1}` at one point.
pub fn scattering_kernel(table: &ReflectionTable, quad: &KQuadrature, x: f64, y: f64) -> Result<CMat> {
    let n = table.n_channels();
    let mut out = CMat::zeros(n);
    for (node, (&kv, r)) in table.k.iter().zip(&table.r).enumerate() {
        let km = table.sys.momenta(Complex64::new(kv, 0.0))?;
        let ex: Vec<Complex64> = km.kj.iter().map(|&kj| (-I * kj * x).exp()).collect();
        let ey: Vec<Complex64> = km.kj.iter().map(|&kj| (-I * kj * y).exp()).collect();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += ex[i] * r[(i, j)] * ey[j] * quad.weight(node, i, j);
            }
        }
    }
    for v in out.as_mut_slice() {
        *v = Complex64::new(v.re / core::f64::consts::PI, 0.0);
    }
    Ok(out)
}

/// `-i sum_a e^{-iQ x} M e^{-iQ y} Q^{-1} q` at one point.
pub fn bound_kernel(states: &[BoundState], n: usize, x: f64, y: f64) -> CMat {
    let mut out = CMat::zeros(n);
    for st in states {
        let kt = st.channel_decay();
        for i in 0..n {
            for j in 0..n {
                let f = (kt[i] * x + kt[j] * y).exp() * st.kappa / kt[j];
                out[(i, j)] += -I * st.m[(i, j)] * f;
            }
        }
    }
    out
}

/// Uniform grid `x_lo + p h`, `p = 0..count`, shared by both kernel
/// arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelGrid {
    pub x_lo: f64,
    pub h: f64,
    pub count: usize,
}

impl KernelGrid {
    pub fn new(x_lo: f64, x_hi: f64, h: f64) -> Result<Self> {
        let count = crate::profiles::grid_count(x_lo, x_hi, h)?;
        Ok(Self { x_lo, h, count })
    }

    /// `[-x, x]` with zero on a node.
    pub fn symmetric(x: f64, h: f64) -> Result<Self> {
        let m = (x / h).round();
        if (x / h - m).abs() > 1e-9 * m.max(1.0) {
            return Err(Error::InvalidInput(alloc::format!("box {x} is not a multiple of h = {h}")));
        }
        Self::new(-m * h, m * h, h)
    }

    pub fn x(&self, p: usize) -> f64 {
        self.x_lo + p as f64 * self.h
    }

    pub fn x_hi(&self) -> f64 {
        self.x(self.count - 1)
    }

    pub fn index(&self, x: f64) -> Option<usize> {
        let t = (x - self.x_lo) / self.h;
        let r = t.round();
        if (t - r).abs() < 1e-7 && r >= 0.0 && (r as usize) < self.count {
            Some(r as usize)
        } else {
            None
        }
    }
}

/// `rho(x, y)` cached on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InputKernel {
    pub sys: ChannelSystem,
    pub grid: KernelGrid,
    pub k_max: f64,
    scattering: Vec<Complex64>,
    bound: Vec<Complex64>,
    has_bound: bool,
}

impl InputKernel {
    /// Builds the cache; `states` may be empty (partner construction).
    pub fn build(
        table: &ReflectionTable,
        states: &[BoundState],
        grid: KernelGrid,
        opts: &KernelOptions,
    ) -> Result<Self> {
        let n = table.n_channels();
        let quad = KQuadrature::new(table, opts)?;
        let m = grid.count;
        let nk = table.len();
        let xs: Vec<f64> = (0..m).map(|p| grid.x(p)).collect();
        let kjs: Vec<Vec<Complex64>> = table
            .k
            .iter()
            .map(|&kv| table.sys.momenta(Complex64::new(kv, 0.0)).map(|km| km.kj))
            .collect::<Result<_>>()?;
        // e^{-i k_i(n) x_p} as [channel][p][n]
        let mut e_re = vec![0.0; n * m * nk];
        let mut e_im = vec![0.0; n * m * nk];
        for c in 0..n {
            for (p, &x) in xs.iter().enumerate() {
                for node in 0..nk {
                    let v = (-I * kjs[node][c] * x).exp();
                    let idx = (c * m + p) * nk + node;
                    e_re[idx] = v.re;
                    e_im[idx] = v.im;
                }
            }
        }
        let mut scattering = vec![ZERO; m * m * n * n];
        let mut b_re = vec![0.0; nk * m];
        let mut b_im = vec![0.0; nk * m];
        let mut row = vec![0.0; m];
        let inv_pi = 1.0 / core::f64::consts::PI;
        for i in 0..n {
            for j in 0..n {
                for node in 0..nk {
                    let coef = quad.weight(node, i, j) * table.r[node][(i, j)];
                    for q in 0..m {
                        let idx = (j * m + q) * nk + node;
                        let v = coef * Complex64::new(e_re[idx], e_im[idx]);
                        b_re[node * m + q] = v.re;
                        b_im[node * m + q] = v.im;
                    }
                }
                for p in 0..m {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    let base = (i * m + p) * nk;
                    for node in 0..nk {
                        let ar = e_re[base + node];
                        let ai = e_im[base + node];
                        let br = &b_re[node * m..(node + 1) * m];
                        let bi = &b_im[node * m..(node + 1) * m];
                        for ((o, &r), &im) in row.iter_mut().zip(br).zip(bi) {
                            *o += ar * r - ai * im;
                        }
                    }
                    for q in 0..m {
                        scattering[((p * m + q) * n + i) * n + j] = Complex64::new(row[q] * inv_pi, 0.0);
                    }
                }
            }
        }
        let kernel =
            Self { sys: table.sys.clone(), grid, k_max: table.k_max, scattering, bound: Vec::new(), has_bound: false };
        kernel.with_bound_states(states)
    }

    /// Replaces the bound-state part, keeping the scattering cache.
    pub fn with_bound_states(mut self, states: &[BoundState]) -> Result<Self> {
        let n = self.n_channels();
        if let Some(st) = states.iter().find(|st| st.m.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: st.m.dim() });
        }
        let m = self.grid.count;
        self.bound = Vec::new();
        self.has_bound = !states.is_empty();
        if self.has_bound {
            self.bound = vec![ZERO; m * m * n * n];
            for p in 0..m {
                for q in 0..m {
                    let b = bound_kernel(states, n, self.grid.x(p), self.grid.x(q));
                    self.bound[(p * m + q) * n * n..(p * m + q + 1) * n * n].copy_from_slice(b.as_slice());
                }
            }
        }
        Ok(self)
    }

    /// Kernel from a closure, mainly for tests and synthetic data.
    pub fn from_fn<F: FnMut(f64, f64) -> CMat>(sys: ChannelSystem, grid: KernelGrid, mut f: F) -> Self {
        let n = sys.n_channels();
        let m = grid.count;
        let mut scattering = vec![ZERO; m * m * n * n];
        for p in 0..m {
            for q in 0..m {
                let v = f(grid.x(p), grid.x(q));
                scattering[(p * m + q) * n * n..(p * m + q + 1) * n * n].copy_from_slice(v.as_slice());
            }
        }
        Self { sys, grid, k_max: f64::INFINITY, scattering, bound: Vec::new(), has_bound: false }
    }

    pub fn n_channels(&self) -> usize {
        self.sys.n_channels()
    }

    pub fn has_bound_part(&self) -> bool {
        self.has_bound
    }

    /// Total kernel entry `(i, j)` at nodes `(p, q)`.
    #[inline]
    pub fn entry(&self, p: usize, q: usize, i: usize, j: usize) -> Complex64 {
        let n = self.n_channels();
        let idx = ((p * self.grid.count + q) * n + i) * n + j;
        if self.has_bound {
            self.scattering[idx] + self.bound[idx]
        } else {
            self.scattering[idx]
        }
    }

    pub fn scattering_entry(&self, p: usize, q: usize, i: usize, j: usize) -> Complex64 {
        let n = self.n_channels();
        self.scattering[((p * self.grid.count + q) * n + i) * n + j]
    }

    /// Total kernel at nodes `(p, q)`.
    pub fn at_nodes(&self, p: usize, q: usize) -> CMat {
        let n = self.n_channels();
        let data = (0..n * n).map(|e| self.entry(p, q, e / n, e % n)).collect();
        CMat::from_rows(n, data).expect("block size")
    }

    /// Total kernel at grid points `(x, y)`.
    pub fn at(&self, x: f64, y: f64) -> Result<CMat> {
        match (self.grid.index(x), self.grid.index(y)) {
            (Some(p), Some(q)) => Ok(self.at_nodes(p, q)),
            _ => Err(Error::OutsideKernelBox { x, y }),
        }
    }

    /// `max |rho(x,y) - rho^T(y,x)|` over the grid.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.n_channels();
        let m = self.grid.count;
        let mut worst = 0.0_f64;
        for p in 0..m {
            for q in p..m {
                for i in 0..n {
                    for j in 0..n {
                        worst = worst.max((self.entry(p, q, i, j) - self.entry(q, p, j, i)).norm());
                    }
                }
            }
        }
        worst
    }

    pub fn max_norm(&self) -> f64 {
        let n = self.n_channels();
        let m = self.grid.count;
        let mut worst = 0.0_f64;
        for p in 0..m {
            for q in 0..m {
                for e in 0..n * n {
                    worst = worst.max(self.entry(p, q, e / n, e % n).norm());
                }
            }
        }
        worst
    }

    /// `max |rho|` over `y < x < x_edge`, relative to `max |rho|` on the whole
    /// grid.
    pub fn compensation_residual(&self, x_edge: f64) -> f64 {
        let n = self.n_channels();
        let m = self.grid.count;
        let mut worst = 0.0_f64;
        for p in 0..m {
            if self.grid.x(p) >= x_edge {
                continue;
            }
            for q in 0..p {
                for e in 0..n * n {
                    worst = worst.max(self.entry(p, q, e / n, e % n).norm());
                }
            }
        }
        let scale = self.max_norm();
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Largest `|Im rho|` relative to `max |rho|`.
    pub fn imaginary_ratio(&self) -> f64 {
        let n = self.n_channels();
        let m = self.grid.count;
        let mut worst = 0.0_f64;
        for p in 0..m {
            for q in 0..m {
                for e in 0..n * n {
                    worst = worst.max(self.entry(p, q, e / n, e % n).im.abs());
                }
            }
        }
        let scale = self.max_norm();
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn zero_table(sys: ChannelSystem, k: Vec<f64>) -> ReflectionTable {
        let n = sys.n_channels();
        let r = vec![CMat::zeros(n); k.len()];
        let t = vec![CMat::identity(n); k.len()];
        ReflectionTable::new(sys, k, r, t).unwrap()
    }

    #[test]
    fn zero_reflection_gives_zero_kernel() {
        let sys = ChannelSystem::new(vec![0.0, 0.025]).unwrap();
        let k = crate::forward::momentum_grid(&sys, 4.0, 400, 32, 0.05).unwrap();
        let table = zero_table(sys, k);
        let grid = KernelGrid::symmetric(1.0, 0.1).unwrap();
        let kern = InputKernel::build(&table, &[], grid, &KernelOptions::default()).unwrap();
        assert_eq!(kern.max_norm(), 0.0);
    }

    #[test]
    fn quadrature_integrates_measure_exactly_enough() {
        // With R = 1 in channel 2 only, the diagonal weight sum approximates
        // int k/k_2 dk = k_2 evaluated between the endpoints (real part from
        // the open side, imaginary from the closed side).
        let eps = 0.04;
        let sys = ChannelSystem::new(vec![0.0, eps]).unwrap();
        let k = crate::forward::momentum_grid(&sys, 3.0, 600, 32, 0.05).unwrap();
        let table = zero_table(sys, k.clone());
        let quad = KQuadrature::new(&table, &KernelOptions::default()).unwrap();
        let total: Complex64 = (0..k.len()).map(|n| quad.weight(n, 1, 1)).sum();
        // int_0^3 k / k_2 dk = sqrt(9 - eps) - (i sqrt(eps)) * (-1)...:
        // open part sqrt(9 - eps), closed part int_0^{0.2} k/(i sqrt(eps - k^2)) dk = -i sqrt(eps)
        let expect = c((9.0 - eps).sqrt(), -eps.sqrt());
        // plain trapezoid just outside the window dominates the error
        assert!((total - expect).norm() < 5e-5, "{total} vs {expect}");
        // channel 1 column: plain int_0^3 dk
        let total1: Complex64 = (0..k.len()).map(|n| quad.weight(n, 0, 0)).sum();
        assert!((total1 - c(3.0, 0.0)).norm() < 1e-5, "{total1}");
    }

    #[test]
    fn sparse_window_rejected() {
        let sys = ChannelSystem::new(vec![0.0, 0.04]).unwrap();
        let k: Vec<f64> = (1..=100).map(|i| i as f64 * 0.03).collect();
        let table = zero_table(sys, k);
        assert!(matches!(
            KQuadrature::new(&table, &KernelOptions::default()),
            Err(Error::SparseThresholdWindow { channel: 1, .. })
        ));
    }

    #[test]
    fn single_channel_bound_kernel_collapses() {
        let sys = ChannelSystem::degenerate(1);
        let m = CMat::from_rows(1, vec![c(0.0, 0.3)]).unwrap();
        let st = BoundState::new(&sys, 0.2, m).unwrap();
        let v = bound_kernel(&[st], 1, -0.5, 0.25);
        let expect = -I * c(0.0, 0.3) * (0.2_f64 * -0.25).exp();
        assert!((v[(0, 0)] - expect).norm() < 1e-15);
        assert_eq!(bound_kernel(&[], 1, 0.0, 0.0), CMat::zeros(1));
    }

    #[test]
    fn threshold_bound_kernel_entry() {
        let sys = ChannelSystem::new(vec![0.0, 0.01]).unwrap();
        let kappa = 0.08246;
        // tabulated i M -> residue M = -i (tabulated)
        let printed = [-0.0104, 0.0400, 0.0257, -0.1031];
        let m = CMat::from_rows(2, printed.iter().map(|&v| c(0.0, -v)).collect()).unwrap();
        let st = BoundState::new(&sys, kappa, m).unwrap();
        let v = bound_kernel(&[st], 2, -1.0, -1.0);
        let kt2 = (kappa * kappa + 0.01_f64).sqrt();
        assert!((kt2 - 0.12961).abs() < 1e-5);
        let expect = -I * c(0.0, -0.0400) * (-kappa).exp() * (-kt2).exp() * (kappa / kt2);
        assert!((v[(0, 1)] - expect).norm() < 1e-15);
        // real for purely imaginary residues
        assert!(v.as_slice().iter().all(|z| z.im.abs() < 1e-18));
    }

    #[test]
    fn point_and_cached_evaluations_agree() {
        let sys = ChannelSystem::new(vec![0.0, 0.09]).unwrap();
        let k = crate::forward::momentum_grid(&sys, 3.0, 300, 16, 0.05).unwrap();
        let r: Vec<CMat> = k
            .iter()
            .map(|&kv| {
                let km = sys.momenta(c(kv, 0.0)).unwrap();
                // R^T K = K R, off-diagonals vanishing at each threshold
                let s = c(0.1 / (1.0 + kv * kv), 0.05 * kv / (1.0 + kv * kv));
                let mut r = CMat::zeros(2);
                r[(0, 0)] = s;
                r[(1, 1)] = s * 0.5;
                r[(1, 0)] = s * 0.3 * km.kj[0];
                r[(0, 1)] = s * 0.3 * km.kj[1];
                r
            })
            .collect();
        let t = vec![CMat::identity(2); k.len()];
        let table = ReflectionTable::new(sys, k, r, t).unwrap();
        let grid = KernelGrid::symmetric(1.0, 0.25).unwrap();
        let opts = KernelOptions::default();
        let kern = InputKernel::build(&table, &[], grid, &opts).unwrap();
        let quad = KQuadrature::new(&table, &opts).unwrap();
        let direct = scattering_kernel(&table, &quad, 0.5, -0.25).unwrap();
        let cached = kern.at(0.5, -0.25).unwrap();
        assert!((&direct - &cached).max_norm() < 1e-13);
        assert!(kern.symmetry_residual() < 1e-8, "{}", kern.symmetry_residual());
        assert!(matches!(kern.at(0.3, 0.0), Err(Error::OutsideKernelBox { .. })));
    }
}
