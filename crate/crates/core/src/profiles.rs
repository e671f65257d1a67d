//! Closed-form potential profiles and sampled matrix potentials.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::channels::ChannelSystem;
use crate::error::{Error, Result};

/// Relative tolerance used to decide where a potential has died out.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-6;

/// One matrix element profile.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    /// `v0 * exp(-b (x - c)^2)`
    Gaussian { v0: f64, b: f64, c: f64 },
    /// Smoothed steps: layer `i` has strength `layers[i].0` between the
    /// previous edge (or `x0`) and `layers[i].1`.
    Multilayer { a: f64, x0: f64, layers: Vec<(f64, f64)> },
    /// Triangular peaks of base `x_ell` starting at `x_s`, one per sign.
    SeaSaw { v0: f64, x_ell: f64, x_s: f64, signs: Vec<f64> },
}

fn logistic(t: f64) -> f64 {
    // 1 / (1 + e^t) without overflow for large |t|
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

impl ProfileSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ProfileSpec::Gaussian { v0, b, c } => {
                if !finite(&[*v0, *b, *c]) || *b <= 0.0 {
                    return Err(Error::InvalidInput(format!("gaussian needs finite values and b > 0, got b = {b}")));
                }
            }
            ProfileSpec::Multilayer { a, x0, layers } => {
                if !(a.is_finite() && *a > 0.0) || !x0.is_finite() {
                    return Err(Error::InvalidInput(format!("multilayer needs a > 0, got a = {a}")));
                }
                if layers.is_empty() {
                    return Err(Error::InvalidInput("multilayer needs at least one layer".into()));
                }
                let mut prev = *x0;
                for &(v, edge) in layers {
                    if !finite(&[v, edge]) || edge <= prev {
                        return Err(Error::InvalidInput(format!(
                            "multilayer edges must increase strictly (edge {edge} after {prev})"
                        )));
                    }
                    prev = edge;
                }
            }
            ProfileSpec::SeaSaw { v0, x_ell, x_s, signs } => {
                if !finite(&[*v0, *x_ell, *x_s]) || *x_ell <= 0.0 {
                    return Err(Error::InvalidInput(format!("sea-saw needs x_ell > 0, got {x_ell}")));
                }
                if signs.is_empty() {
                    return Err(Error::InvalidInput("sea-saw needs at least one peak".into()));
                }
                if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
                    return Err(Error::InvalidInput("sea-saw signs must be +1 or -1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ProfileSpec::Gaussian { v0, b, c } => v0 * (-b * (x - c) * (x - c)).exp(),
            ProfileSpec::Multilayer { a, x0, layers } => {
                let mut left = *x0;
                let mut sum = 0.0;
                for &(v, right) in layers {
                    sum += v * (logistic((left - x) / a) - logistic((right - x) / a));
                    left = right;
                }
                sum
            }
            ProfileSpec::SeaSaw { v0, x_ell, x_s, signs } => {
                let t = (x - x_s) / x_ell;
                if !(0.0..=signs.len() as f64).contains(&t) {
                    return 0.0;
                }
                let m = (t.floor() as usize).min(signs.len() - 1);
                let frac = t - m as f64;
                let tri = if frac <= 0.5 { frac } else { 1.0 - frac };
                2.0 * v0 * signs[m] * tri
            }
        }
    }

    /// Points where the profile or its slope jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            ProfileSpec::SeaSaw { x_ell, x_s, signs, .. } => {
                (0..=2 * signs.len()).map(|m| x_s + 0.5 * x_ell * m as f64).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Largest `|V|` the profile can reach.
    pub fn peak(&self) -> f64 {
        match self {
            ProfileSpec::Gaussian { v0, .. } | ProfileSpec::SeaSaw { v0, .. } => v0.abs(),
            ProfileSpec::Multilayer { layers, .. } => layers.iter().map(|l| l.0.abs()).fold(0.0, f64::max),
        }
    }

    /// Interval outside which `|V| <= tol`, or `None` if the profile never
    /// exceeds `tol`.
    pub fn extent(&self, tol: f64) -> Option<(f64, f64)> {
        let tol = tol.max(f64::MIN_POSITIVE);
        if self.peak() <= tol {
            return None;
        }
        match self {
            ProfileSpec::Gaussian { v0, b, c } => {
                let r = ((v0.abs() / tol).ln() / b).sqrt();
                Some((c - r, c + r))
            }
            ProfileSpec::Multilayer { a, x0, layers } => {
                // Each edge contributes a logistic tail of at most
                // |jump| e^{-d/a}; the largest jump bounds them all.
                let mut jump = 0.0_f64;
                let mut prev = 0.0;
                for &(v, _) in layers {
                    jump = jump.max((v - prev).abs());
                    prev = v;
                }
                jump = jump.max(prev.abs());
                let pad = a * ((layers.len() as f64 + 1.0) * jump / tol).ln().max(0.0);
                Some((x0 - pad, layers.last().unwrap().1 + pad))
            }
            ProfileSpec::SeaSaw { x_ell, x_s, signs, .. } => Some((*x_s, x_s + x_ell * signs.len() as f64)),
        }
    }
}

/// A symmetric matrix potential that can be evaluated anywhere on the line.
pub trait MatrixPotential {
    fn n_channels(&self) -> usize;

    /// `(start, end)` outside which the potential is treated as zero.
    fn support(&self) -> (f64, f64);

    /// Writes the row-major `N x N` matrix at `x` into `out`.
    fn eval_into(&self, x: f64, out: &mut [f64]);

    /// Largest integration step that still resolves the profile's features.
    fn max_step(&self) -> f64;

    /// Sampling step when the potential is tabulated; integration steps are
    /// aligned to its nodes.
    fn sample_step(&self) -> Option<(f64, f64)> {
        None
    }

    /// Sorted points where the potential or its derivative is discontinuous;
    /// integration steps are split there.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Upper-triangle profile specs assembled into a symmetric analytic potential,
/// cut to zero on the negative axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    n: usize,
    specs: Vec<Option<ProfileSpec>>,
    support: (f64, f64),
    max_step: f64,
    scale: f64,
}

impl ProfileMatrix {
    /// `specs` lists `(i, j, spec)` with `i <= j`; unlisted elements are zero.
    pub fn new(sys: &ChannelSystem, specs: Vec<(usize, usize, ProfileSpec)>) -> Result<Self> {
        Self::with_tolerance(sys, specs, DEFAULT_SUPPORT_TOL)
    }

    pub fn with_tolerance(sys: &ChannelSystem, specs: Vec<(usize, usize, ProfileSpec)>, rel_tol: f64) -> Result<Self> {
        let n = sys.n_channels();
        let mut slots: Vec<Option<ProfileSpec>> = vec![None; n * n];
        for (i, j, spec) in specs {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            if j >= n {
                return Err(Error::InvalidInput(format!("element ({i},{j}) outside {n} channels")));
            }
            spec.validate()?;
            if slots[i * n + j].is_some() {
                return Err(Error::InvalidInput(format!("element ({i},{j}) given twice")));
            }
            slots[i * n + j] = Some(spec);
        }
        let mut m = Self { n, specs: slots, support: (0.0, 0.0), max_step: f64::INFINITY, scale: 0.0 };
        m.scale = m.specs.iter().flatten().map(|s| s.peak()).fold(0.0, f64::max);
        let tol = rel_tol * m.scale;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in m.specs.iter().flatten() {
            if let Some((a, b)) = s.extent(tol) {
                lo = lo.min(a);
                hi = hi.max(b);
            }
            let feature = match s {
                ProfileSpec::Gaussian { b, .. } => 0.5 / b.sqrt(),
                ProfileSpec::Multilayer { a, .. } => *a,
                ProfileSpec::SeaSaw { x_ell, .. } => 0.25 * x_ell,
            };
            m.max_step = m.max_step.min(feature);
        }
        if hi > 0.0 && lo < hi {
            m.support = (lo.max(0.0), hi);
        }
        m.max_step = m.max_step.min(0.05);
        Ok(m)
    }

    pub fn spec(&self, i: usize, j: usize) -> Option<&ProfileSpec> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.specs[i * self.n + j].as_ref()
    }

    /// Largest single-profile peak.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Samples onto `x_lo + p h`, `p = 0..=(x_hi - x_lo)/h`.
    pub fn sample(&self, x_lo: f64, x_hi: f64, h: f64) -> Result<PotentialGrid> {
        let count = grid_count(x_lo, x_hi, h)?;
        let n = self.n;
        let mut values = vec![0.0; count * n * n];
        for p in 0..count {
            let x = x_lo + p as f64 * h;
            self.eval_into(x, &mut values[p * n * n..(p + 1) * n * n]);
        }
        let grid = PotentialGrid::new(n, x_lo, h, values)?;
        let tol = DEFAULT_SUPPORT_TOL * grid.max_abs();
        let last = grid.point_max(count - 1);
        let first = grid.point_max(0);
        if last > tol || (x_lo >= 0.0 && first > tol && x_lo > 0.0) {
            return Err(Error::GridTooNarrow { x_hi });
        }
        Ok(grid)
    }
}

impl MatrixPotential for ProfileMatrix {
    fn n_channels(&self) -> usize {
        self.n
    }

    fn support(&self) -> (f64, f64) {
        self.support
    }

    fn eval_into(&self, x: f64, out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        if x < 0.0 {
            return;
        }
        for i in 0..n {
            for j in i..n {
                if let Some(s) = &self.specs[i * n + j] {
                    let v = s.eval(x);
                    out[i * n + j] = v;
                    out[j * n + i] = v;
                }
            }
        }
    }

    fn max_step(&self) -> f64 {
        self.max_step
    }

    fn breakpoints(&self) -> Vec<f64> {
        // the cut at x = 0 is a jump wherever a profile is nonzero there
        let mut out = vec![0.0];
        for s in self.specs.iter().flatten() {
            out.extend(s.breakpoints().into_iter().filter(|&b| b > 0.0));
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }
}

/// Samples `x_lo + p h` for `p = 0..count` cover `[x_lo, x_hi]`.
pub fn grid_count(x_lo: f64, x_hi: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) || !(x_hi > x_lo) {
        return Err(Error::InvalidInput(format!("bad grid [{x_lo}, {x_hi}] with step {h}")));
    }
    let steps = (x_hi - x_lo) / h;
    let r = steps.round();
    if (steps - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::InvalidInput(format!("grid length {} is not a multiple of h = {h}", x_hi - x_lo)));
    }
    Ok(r as usize + 1)
}

/// Symmetric real `N x N` potential on a uniform grid, linearly interpolated
/// between nodes and zero outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialGrid {
    n: usize,
    x_lo: f64,
    h: f64,
    values: Vec<f64>,
    support: (f64, f64),
}

impl PotentialGrid {
    /// `values` holds one row-major `N x N` block per node.
    pub fn new(n: usize, x_lo: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(n, x_lo, h, values, DEFAULT_SUPPORT_TOL)
    }

    pub fn with_tolerance(n: usize, x_lo: f64, h: f64, values: Vec<f64>, rel_tol: f64) -> Result<Self> {
        if n == 0 || values.is_empty() || values.len() % (n * n) != 0 {
            return Err(Error::InvalidInput(format!("{} values do not form {n}x{n} blocks", values.len())));
        }
        if !(h > 0.0 && h.is_finite() && x_lo.is_finite()) {
            return Err(Error::InvalidInput(format!("bad grid step {h}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("potential values must be finite".into()));
        }
        let mut g = Self { n, x_lo, h, values, support: (x_lo, x_lo) };
        let scale = g.max_abs();
        for p in 0..g.len() {
            let b = g.at(p);
            for i in 0..n {
                for j in i + 1..n {
                    if (b[i * n + j] - b[j * n + i]).abs() > 1e-12 * scale.max(1.0) {
                        return Err(Error::InvalidInput(format!("potential not symmetric at x = {}", g.x(p))));
                    }
                }
            }
        }
        let tol = rel_tol * scale;
        let above: Vec<usize> = (0..g.len()).filter(|&p| g.point_max(p) > tol).collect();
        if let (Some(&first), Some(&last)) = (above.first(), above.last()) {
            // linear interpolation makes the potential nonzero one interval
            // beyond the outermost significant nodes
            let start = first.saturating_sub(1);
            let end = (last + 1).min(g.len() - 1);
            g.support = (g.x(start), g.x(end));
        }
        Ok(g)
    }

    /// Samples any matrix potential on a uniform grid.
    pub fn from_potential<P: MatrixPotential + ?Sized>(pot: &P, x_lo: f64, x_hi: f64, h: f64) -> Result<Self> {
        let count = grid_count(x_lo, x_hi, h)?;
        let n = pot.n_channels();
        let mut values = vec![0.0; count * n * n];
        for p in 0..count {
            pot.eval_into(x_lo + p as f64 * h, &mut values[p * n * n..(p + 1) * n * n]);
        }
        Self::new(n, x_lo, h, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len() / (self.n * self.n)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x(self.len() - 1)
    }

    pub fn x(&self, p: usize) -> f64 {
        self.x_lo + p as f64 * self.h
    }

    /// Row-major block at node `p`.
    pub fn at(&self, p: usize) -> &[f64] {
        let b = self.n * self.n;
        &self.values[p * b..(p + 1) * b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Element `(i, j)` at every node.
    pub fn element(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.len()).map(|p| self.at(p)[i * self.n + j]).collect()
    }

    pub fn point_max(&self, p: usize) -> f64 {
        self.at(p).iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn support_end(&self) -> f64 {
        self.support.1
    }

    pub fn support_start(&self) -> f64 {
        self.support.0
    }

    /// Index of the node at `x`, if `x` is one.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let t = (x - self.x_lo) / self.h;
        let r = t.round();
        if (t - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.len() {
            Some(r as usize)
        } else {
            None
        }
    }
}

impl MatrixPotential for PotentialGrid {
    fn n_channels(&self) -> usize {
        self.n
    }

    fn support(&self) -> (f64, f64) {
        self.support
    }

    fn eval_into(&self, x: f64, out: &mut [f64]) {
        let t = (x - self.x_lo) / self.h;
        let last = self.len() - 1;
        if !(t >= 0.0 && t <= last as f64) {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let p = (t.floor() as usize).min(last.saturating_sub(1));
        let f = t - p as f64;
        let a = self.at(p);
        if last == 0 {
            out.copy_from_slice(a);
            return;
        }
        let b = self.at(p + 1);
        for ((o, &va), &vb) in out.iter_mut().zip(a).zip(b) {
            *o = va + f * (vb - va);
        }
    }

    fn max_step(&self) -> f64 {
        self.h
    }

    fn sample_step(&self) -> Option<(f64, f64)> {
        Some((self.x_lo, self.h))
    }
}
