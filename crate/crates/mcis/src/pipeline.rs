//! Forward, inversion, fit and partner pipelines without file IO.

use mcis_core::boundfit::{fit_diagonal, fit_offdiagonal, FitOptions};
use mcis_core::forward::{flux_unitarity_residual, momentum_grid, ForwardSolver};
use mcis_core::kernel::{InputKernel, KernelGrid};
use mcis_core::marchenko::{reconstruct, MarchenkoOptions, Reconstruction};
use mcis_core::susy::{partner_via_omission, superpotential, transform_reflection};
use mcis_core::{BoundState, CMat, Complex64, MatrixPotential, PotentialGrid, ReflectionTable};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Stage};

/// Where the inversion takes its bound states from.
#[derive(Debug, Clone)]
pub enum BoundSource {
    Given(Vec<BoundState>),
    Fit(usize),
    Omit,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub table: ReflectionTable,
    pub states: Vec<BoundState>,
    pub metrics: ForwardMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwardMetrics {
    pub rows: usize,
    pub bound_states: usize,
    pub symmetry_residual: f64,
    /// Over table points above the highest threshold.
    pub flux_residual: f64,
}

pub fn forward(cfg: &RunConfig, pot: &dyn MatrixPotential) -> Result<ForwardResult, CliError> {
    let sys = cfg.channel_system()?;
    let solver = ForwardSolver::new(pot, &sys, cfg.solver_options()).stage("forward")?;
    let k = momentum_grid(&sys, cfg.kgrid.k_max, cfg.kgrid.count, cfg.kgrid.window_nodes, cfg.kgrid.window_half_width)
        .stage("momentum grid")?;
    let table = solver.reflection_table(&k).stage("forward")?;
    let states = solver.bound_states(&cfg.scan_options()).stage("bound-state scan")?;
    let top = sys.highest_threshold().sqrt();
    let mut flux = 0.0_f64;
    for ((&kv, r), t) in table.k.iter().zip(&table.r).zip(&table.t) {
        if kv > top {
            let km = sys.momenta(Complex64::new(kv, 0.0)).stage("forward")?;
            flux = flux.max(flux_unitarity_residual(r, t, &km));
        }
    }
    let metrics = ForwardMetrics {
        rows: table.len(),
        bound_states: states.len(),
        symmetry_residual: table.symmetry_residual,
        flux_residual: flux,
    };
    Ok(ForwardResult { table, states, metrics })
}

#[derive(Debug, Clone)]
pub struct Inversion {
    pub reconstruction: Reconstruction,
    pub states: Vec<BoundState>,
    pub metrics: InversionMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct InversionMetrics {
    pub h: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub bound_states: usize,
    /// Relative residual of the bound-state fit, when fitted.
    pub fit_residual: Option<f64>,
    pub kernel_symmetry: f64,
    /// Bound plus scattering kernel on `y < x < -0.5`.
    pub compensation_residual: Option<f64>,
    pub potential_asymmetry: f64,
    pub potential_imaginary: f64,
    pub diagonal_residual: f64,
    pub max_condition: f64,
}

pub fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions { s_hi: cfg.bound.fit_s_hi, residual_gate: cfg.bound.fit_residual_gate, ..FitOptions::default() }
}

/// Fits `n_b` bound states to the continuum kernel; returns the states and
/// the relative residual of the diagonal fit.
pub fn fit_states(kernel: &InputKernel, n_b: usize, opts: &FitOptions) -> Result<(Vec<BoundState>, f64), CliError> {
    let fit = fit_diagonal(kernel, n_b, opts).stage("bound-state fit")?;
    let states = fit_offdiagonal(kernel, &fit, opts).stage("bound-state fit")?;
    Ok((states, fit.residual))
}

pub fn invert(cfg: &RunConfig, table: &ReflectionTable, source: BoundSource) -> Result<Inversion, CliError> {
    let h = cfg.grid.h;
    let kopts = cfg.kernel_options();
    let mopts = MarchenkoOptions::default();
    let metrics = |rec: &Reconstruction, states: &[BoundState]| InversionMetrics {
        h,
        x_lo: rec.potential.x_lo(),
        x_hi: rec.potential.x_hi(),
        bound_states: states.len(),
        fit_residual: None,
        kernel_symmetry: 0.0,
        compensation_residual: None,
        potential_asymmetry: rec.asymmetry,
        potential_imaginary: rec.imaginary,
        diagonal_residual: rec.diagonal_residual,
        max_condition: rec.max_condition,
    };
    let grid = match source {
        BoundSource::Omit => {
            let grid = KernelGrid::new(cfg.grid.x_lo, cfg.grid.x_hi, h).stage("kernel grid")?;
            let reconstruction = partner_via_omission(table, grid, &kopts, &mopts).stage("omission inversion")?;
            let metrics = metrics(&reconstruction, &[]);
            return Ok(Inversion { reconstruction, states: Vec::new(), metrics });
        }
        _ => KernelGrid::symmetric(cfg.grid.x_hi, h).stage("kernel grid")?,
    };
    let (kernel, states, fit_residual) = match source {
        BoundSource::Fit(n_b) => {
            let bare = InputKernel::build(table, &[], grid, &kopts).stage("kernel")?;
            let (states, residual) = fit_states(&bare, n_b, &fit_options(cfg))?;
            (bare.with_bound_states(&states).stage("kernel")?, states, Some(residual))
        }
        BoundSource::Given(states) => (InputKernel::build(table, &states, grid, &kopts).stage("kernel")?, states, None),
        BoundSource::Omit => unreachable!(),
    };
    let reconstruction = reconstruct(&kernel, &mopts).stage("inversion")?;
    let metrics = InversionMetrics {
        fit_residual,
        kernel_symmetry: kernel.symmetry_residual(),
        compensation_residual: kernel.has_bound_part().then(|| kernel.compensation_residual(-0.5)),
        ..metrics(&reconstruction, &states)
    };
    Ok(Inversion { reconstruction, states, metrics })
}

/// Sup-norm error per upper-triangle element.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    /// `max |V|` of the reference over the compared nodes, all elements.
    pub scale: f64,
    /// `[i, j, sup |dV_ij| / scale]`, 1-based.
    pub elements: Vec<(usize, usize, f64)>,
    pub max_relative: f64,
    /// Node of the largest error.
    pub worst_x: f64,
}

/// Compares `grid` against `reference` at the grid nodes in `[x_from, x_to]`.
pub fn compare(reference: &dyn MatrixPotential, grid: &PotentialGrid, x_from: f64, x_to: f64) -> Comparison {
    let n = grid.n();
    let mut v = vec![0.0; n * n];
    let mut scale = 0.0_f64;
    let mut err = vec![0.0_f64; n * n];
    let mut worst = (0.0_f64, 0.0);
    for p in 0..grid.len() {
        let x = grid.x(p);
        if x < x_from - 1e-9 || x > x_to + 1e-9 {
            continue;
        }
        reference.eval_into(x, &mut v);
        for (e, (&r, &g)) in v.iter().zip(grid.at(p)).enumerate() {
            scale = scale.max(r.abs());
            let d = (r - g).abs();
            err[e] = err[e].max(d);
            if d > worst.0 {
                worst = (d, x);
            }
        }
    }
    let rel = |d: f64| if scale > 0.0 { d / scale } else { d };
    let mut elements = Vec::new();
    for i in 0..n {
        for j in i..n {
            elements.push((i + 1, j + 1, rel(err[i * n + j])));
        }
    }
    Comparison { scale, max_relative: rel(worst.0), worst_x: worst.1, elements }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundtripReport {
    pub tolerance: f64,
    pub comparison: Comparison,
    pub inversion: InversionMetrics,
    pub halved: Option<Comparison>,
    pub pass: bool,
}

pub struct Roundtrip {
    pub forward: ForwardResult,
    pub inversion: Inversion,
    pub report: RoundtripReport,
}

/// Bound source implied by the config when no file is given.
pub fn default_source(cfg: &RunConfig, forward_states: Option<Vec<BoundState>>) -> BoundSource {
    use crate::config::BoundMode;
    match (cfg.bound.mode, forward_states) {
        (BoundMode::Omit, _) => BoundSource::Omit,
        (BoundMode::Fit, _) => BoundSource::Fit(cfg.bound.n_b),
        (BoundMode::Forward, Some(s)) => BoundSource::Given(s),
        (BoundMode::Forward, None) if cfg.bound.n_b > 0 => BoundSource::Fit(cfg.bound.n_b),
        (BoundMode::Forward, None) => BoundSource::Given(Vec::new()),
    }
}

pub fn roundtrip(cfg: &RunConfig, pot: &dyn MatrixPotential) -> Result<Roundtrip, CliError> {
    if cfg.bound.mode == crate::config::BoundMode::Omit {
        return Err(CliError::Validation("roundtrip needs bound.mode = forward or fit".into()));
    }
    let fwd = forward(cfg, pot)?;
    let source = default_source(cfg, Some(fwd.states.clone()));
    let inv = invert(cfg, &fwd.table, source.clone())?;
    let comparison = compare(pot, &inv.reconstruction.potential, 0.0, cfg.grid.x_hi);
    let mut pass = comparison.max_relative <= cfg.tolerances.roundtrip;
    let halved = if cfg.tolerances.grid_halving {
        let mut fine = cfg.clone();
        fine.grid.h = cfg.grid.h / 2.0;
        let inv2 = invert(&fine, &fwd.table, source)?;
        let c = compare(pot, &inv2.reconstruction.potential, 0.0, cfg.grid.x_hi);
        pass &= c.max_relative < comparison.max_relative;
        Some(c)
    } else {
        None
    };
    let report = RoundtripReport {
        tolerance: cfg.tolerances.roundtrip,
        comparison,
        inversion: inv.metrics.clone(),
        halved,
        pass,
    };
    Ok(Roundtrip { forward: fwd, inversion: inv, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct PartnerCheck {
    pub bound_states: usize,
    /// `max_k max_ij |R_partner - R_expected|`.
    pub reflection_error: f64,
    /// `max |V_partner - V| / max |V|` on the partner grid.
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SusyReport {
    pub removed_kappa: f64,
    pub omission: PartnerCheck,
    pub factorization: PartnerCheck,
    pub riccati_residual: f64,
    pub pass: bool,
}

pub struct SusyResult {
    pub original_states: Vec<BoundState>,
    pub omission: PotentialGrid,
    pub factorization: PotentialGrid,
    pub report: SusyReport,
}

fn check_partner(
    cfg: &RunConfig,
    partner: &PotentialGrid,
    original: &dyn MatrixPotential,
    table: &ReflectionTable,
    expected: &dyn Fn(usize) -> Result<CMat, CliError>,
) -> Result<PartnerCheck, CliError> {
    let sys = cfg.channel_system()?;
    let solver = ForwardSolver::new(partner, &sys, cfg.solver_options()).stage("partner forward")?;
    let bound_states = solver.find_bound_states(&cfg.scan_options()).stage("partner bound-state scan")?.len();
    let mut reflection_error = 0.0_f64;
    for idx in (0..table.len()).step_by(cfg.tolerances.partner_check_stride) {
        let (r, _) = solver.reflection_transmission(table.k[idx]).stage("partner forward")?;
        reflection_error = reflection_error.max((&r - &expected(idx)?).max_norm());
    }
    let deviation = compare(original, partner, partner.x_lo(), partner.x_hi()).max_relative;
    Ok(PartnerCheck { bound_states, reflection_error, deviation })
}

/// Removes the deepest bound state twice: by dropping the bound kernel, and by
/// factorization at its energy.
pub fn susy_partner(cfg: &RunConfig, pot: &dyn MatrixPotential) -> Result<SusyResult, CliError> {
    let fwd = forward(cfg, pot)?;
    let deepest = fwd
        .states
        .iter()
        .max_by(|a, b| a.kappa.total_cmp(&b.kappa))
        .ok_or_else(|| CliError::Validation("susy-partner needs a potential with a bound state".into()))?
        .clone();
    let omission = invert(cfg, &fwd.table, BoundSource::Omit)?.reconstruction.potential;
    let tol = &cfg.tolerances;
    let same = |idx: usize| Ok(fwd.table.r[idx].clone());
    let omission_check = check_partner(cfg, &omission, pot, &fwd.table, &same)?;

    let sys = cfg.channel_system()?;
    let (lo, hi) = pot.support();
    let x0 = lo - 1.0;
    // the partner decays slowly to the right; give it the same reach as the
    // omission grid has to the left
    let span = hi - x0 - cfg.grid.x_lo;
    let count = (span / cfg.grid.h).round() as usize + 1;
    let w = superpotential(pot, &sys, deepest.kappa, x0, cfg.grid.h, count, &cfg.solver_options())
        .stage("superpotential")?;
    let factorization = w.partner(pot).stage("superpotential")?;
    let w_left = w.left_value();
    let predicted = |idx: usize| {
        let km = sys.momenta(Complex64::new(fwd.table.k[idx], 0.0)).stage("partner reflection")?;
        transform_reflection(&fwd.table.r[idx], &w_left, &km).stage("partner reflection")
    };
    let fact_check = check_partner(cfg, &factorization, pot, &fwd.table, &predicted)?;
    let ok = |c: &PartnerCheck, expected_states: usize| {
        c.bound_states == expected_states
            && c.reflection_error <= tol.partner_reflection
            && c.deviation > tol.partner_deviation
    };
    // omission drops every state, factorization only the ground state
    let pass = ok(&omission_check, 0) && ok(&fact_check, fwd.states.len() - 1);
    let report = SusyReport {
        removed_kappa: deepest.kappa,
        omission: omission_check,
        factorization: fact_check,
        riccati_residual: w.riccati_residual,
        pass,
    };
    Ok(SusyResult { original_states: fwd.states, omission, factorization, report })
}
