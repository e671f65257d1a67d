//! Subcommands: run a pipeline and write its files into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mcis_core::{BoundState, PotentialGrid, ReflectionTable};
use serde::Serialize;

use crate::config::{BoundMode, RunConfig};
use crate::error::{CliError, Stage};
use crate::format;
use crate::pipeline::{self, BoundSource};

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub h: Option<f64>,
    pub k_max: Option<f64>,
    pub n_b: Option<usize>,
    pub bound: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(h) = self.h {
            cfg.grid.h = h;
        }
        if let Some(k) = self.k_max {
            cfg.kgrid.k_max = k;
        }
        if let Some(n) = self.n_b {
            cfg.bound.n_b = n;
        }
        if let Some(b) = &self.bound {
            cfg.bound.file = Some(b.clone());
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.validate()
    }
}

/// Outcome of a command: what was written and whether checks passed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
    pub pass: bool,
}

struct Writer<'a> {
    dir: &'a Path,
    hash: String,
    files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Sidecar<'a, T> {
    command: &'a str,
    config_sha256: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output.dir.as_path();
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_owned(), source })?;
        Ok(Self { dir, hash: cfg.hash(), files: Vec::new() })
    }

    fn put(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        format::write(&path, text)?;
        self.files.push(path);
        Ok(())
    }

    fn reflection(&mut self, name: &str, table: &ReflectionTable) -> Result<(), CliError> {
        let text = format::reflection_to_string(table, &self.hash);
        self.put(name, &text)
    }

    fn bound(&mut self, name: &str, states: &[BoundState], n: usize) -> Result<(), CliError> {
        let text = format::bound_to_string(states, n, &self.hash);
        self.put(name, &text)
    }

    fn potential(&mut self, name: &str, pot: &PotentialGrid) -> Result<(), CliError> {
        let text = format::potential_to_string(pot, &self.hash);
        self.put(name, &text)
    }

    fn sidecar<T: Serialize>(&mut self, name: &str, command: &str, body: &T) -> Result<(), CliError> {
        let text = toml::to_string(&Sidecar { command, config_sha256: &self.hash, body })
            .map_err(|e| CliError::Validation(format!("metrics: {e}")))?;
        self.put(name, &text)
    }

    /// gnuplot stub plotting every element column of the given potential files.
    fn plot(&mut self, n: usize, potentials: &[&str]) -> Result<(), CliError> {
        let mut s = String::from("# gnuplot -p plot.gp\nset xlabel 'x'\nset ylabel 'V'\nset key outside\nplot \\\n");
        let mut parts = Vec::new();
        for file in potentials {
            for i in 0..n {
                for j in i..n {
                    let col = 2 + i * n + j;
                    parts.push(format!("  '{file}' using 1:{col} with lines title '{file} V{}{}'", i + 1, j + 1));
                }
            }
        }
        let _ = writeln!(s, "{}", parts.join(", \\\n"));
        self.put("plot.gp", &s)
    }

    fn finish(self, summary: String, pass: bool) -> Outcome {
        Outcome { files: self.files, summary, pass }
    }
}

fn n_channels(cfg: &RunConfig) -> Result<usize, CliError> {
    Ok(cfg.channel_system()?.n_channels())
}

pub fn cmd_forward(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pot = cfg.potential()?;
    let fwd = pipeline::forward(cfg, pot.as_dyn())?;
    let n = n_channels(cfg)?;
    let mut w = Writer::new(cfg)?;
    w.reflection("reflection.dat", &fwd.table)?;
    w.bound("bound.dat", &fwd.states, n)?;
    w.sidecar("forward.toml", "forward", &fwd.metrics)?;
    let mut summary = format!("{} momenta, {} bound states\n", fwd.table.len(), fwd.states.len());
    for s in &fwd.states {
        let _ = writeln!(summary, "  kappa = {:.6}  E = {:.6}", s.kappa, s.energy());
    }
    Ok(w.finish(summary, true))
}

fn reflection_input(cfg: &RunConfig, reflection: Option<&Path>) -> Result<ReflectionTable, CliError> {
    let path = reflection.map(Path::to_owned).unwrap_or_else(|| cfg.output.dir.join("reflection.dat"));
    if !path.is_file() {
        return Err(CliError::Validation(format!(
            "reflection file {} not found; run `forward` first or pass --reflection",
            path.display()
        )));
    }
    let table = format::read_reflection(&path)?;
    if table.sys != cfg.channel_system()? {
        return Err(CliError::Validation(format!("{} was computed for other thresholds", path.display())));
    }
    Ok(table)
}

fn bound_input(cfg: &RunConfig) -> Result<Option<Vec<BoundState>>, CliError> {
    if cfg.bound.mode != BoundMode::Forward {
        return Ok(None);
    }
    let fallback = cfg.output.dir.join("bound.dat");
    let path = match &cfg.bound.file {
        Some(p) => p.clone(),
        None if fallback.is_file() => fallback,
        None => return Ok(None),
    };
    format::read_bound(&path, &cfg.channel_system()?).map(Some)
}

pub fn cmd_invert(cfg: &RunConfig, reflection: Option<&Path>) -> Result<Outcome, CliError> {
    let table = reflection_input(cfg, reflection)?;
    let source = pipeline::default_source(cfg, bound_input(cfg)?);
    let fitted = matches!(source, BoundSource::Fit(_));
    let inv = pipeline::invert(cfg, &table, source)?;
    let n = table.n_channels();
    let mut w = Writer::new(cfg)?;
    w.potential("potential.dat", &inv.reconstruction.potential)?;
    if fitted {
        w.bound("bound_fit.dat", &inv.states, n)?;
    }
    w.sidecar("invert.toml", "invert", &inv.metrics)?;
    w.plot(n, &["potential.dat"])?;
    let m = &inv.metrics;
    let summary = format!(
        "potential on [{:.3}, {:.3}] with {} bound states; diagonal residual {:.2e}, max condition {:.2e}\n",
        m.x_lo, m.x_hi, m.bound_states, m.diagonal_residual, m.max_condition
    );
    Ok(w.finish(summary, true))
}

pub fn cmd_roundtrip(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pot = cfg.potential()?;
    let rt = pipeline::roundtrip(cfg, pot.as_dyn())?;
    let n = n_channels(cfg)?;
    let rec = &rt.inversion.reconstruction.potential;
    let original = PotentialGrid::from_potential(pot.as_dyn(), rec.x_lo(), rec.x_hi(), rec.h()).stage("sampling")?;
    let mut w = Writer::new(cfg)?;
    w.reflection("reflection.dat", &rt.forward.table)?;
    w.bound("bound.dat", &rt.inversion.states, n)?;
    w.potential("potential.dat", rec)?;
    w.potential("original.dat", &original)?;
    w.sidecar("roundtrip.toml", "roundtrip", &rt.report)?;
    w.plot(n, &["original.dat", "potential.dat"])?;
    let r = &rt.report;
    let mut summary = String::new();
    for (i, j, e) in &r.comparison.elements {
        let _ = writeln!(summary, "V{i}{j}: {:.3}% of max|V|", 100.0 * e);
    }
    let _ = writeln!(
        summary,
        "max {:.3}% at x = {:.3} (tolerance {:.1}%)",
        100.0 * r.comparison.max_relative,
        r.comparison.worst_x,
        100.0 * r.tolerance
    );
    if let Some(c) = &r.halved {
        let _ = writeln!(summary, "h/2: max {:.3}%", 100.0 * c.max_relative);
    }
    let _ = writeln!(summary, "{}", if r.pass { "PASS" } else { "FAIL" });
    Ok(w.finish(summary, r.pass))
}

pub fn cmd_susy_partner(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pot = cfg.potential()?;
    let res = pipeline::susy_partner(cfg, pot.as_dyn())?;
    let n = n_channels(cfg)?;
    let om = &res.omission;
    let original = PotentialGrid::from_potential(pot.as_dyn(), om.x_lo(), om.x_hi(), om.h()).stage("sampling")?;
    let mut w = Writer::new(cfg)?;
    w.potential("partner_omission.dat", om)?;
    w.potential("partner_factorization.dat", &res.factorization)?;
    w.potential("original.dat", &original)?;
    w.sidecar("susy.toml", "susy-partner", &res.report)?;
    w.plot(n, &["original.dat", "partner_omission.dat", "partner_factorization.dat"])?;
    let r = &res.report;
    let mut summary = format!("removed kappa = {:.6}\n", r.removed_kappa);
    for (name, c) in [("omission", &r.omission), ("factorization", &r.factorization)] {
        let _ = writeln!(
            summary,
            "{name}: {} bound states, max |dR| = {:.2e}, deviation {:.1}% of max|V|",
            c.bound_states,
            c.reflection_error,
            100.0 * c.deviation
        );
    }
    let _ = writeln!(summary, "riccati residual {:.2e}\n{}", r.riccati_residual, if r.pass { "PASS" } else { "FAIL" });
    Ok(w.finish(summary, r.pass))
}

#[derive(Serialize)]
struct FitReport {
    n_b: usize,
    residual: f64,
    gate: f64,
}

pub fn cmd_fit_bound(cfg: &RunConfig, reflection: Option<&Path>) -> Result<Outcome, CliError> {
    let table = reflection_input(cfg, reflection)?;
    let grid = mcis_core::kernel::KernelGrid::symmetric(cfg.grid.x_hi, cfg.grid.h).stage("kernel grid")?;
    let kernel = mcis_core::InputKernel::build(&table, &[], grid, &cfg.kernel_options()).stage("kernel")?;
    let opts = pipeline::fit_options(cfg);
    let (states, residual) = pipeline::fit_states(&kernel, cfg.bound.n_b, &opts)?;
    let mut w = Writer::new(cfg)?;
    w.bound("bound_fit.dat", &states, table.n_channels())?;
    w.sidecar("fit.toml", "fit-bound", &FitReport { n_b: cfg.bound.n_b, residual, gate: opts.residual_gate })?;
    let mut summary = format!("{} states, relative residual {residual:.2e}\n", states.len());
    for s in &states {
        let m = s.normalization();
        let vals: Vec<String> = m.as_slice().iter().map(|z| format!("{:.5}", z.re)).collect();
        let _ = writeln!(summary, "  kappa = {:.6}  E = {:.6}  M = ({})", s.kappa, s.energy(), vals.join(", "));
    }
    Ok(w.finish(summary, true))
}
