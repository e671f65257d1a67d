//! Run configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use mcis_core::forward::{ScanOptions, SolverOptions};
use mcis_core::kernel::KernelOptions;
use mcis_core::profiles::{ProfileMatrix, ProfileSpec};
use mcis_core::{ChannelSystem, PotentialGrid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::format;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub system: SystemConfig,
    /// Upper-triangle elements, zero when empty; ignored when
    /// `potential_file` is set.
    #[serde(default)]
    pub potential: Vec<ElementConfig>,
    pub potential_file: Option<PathBuf>,
    pub kgrid: KGridConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub thresholds: Vec<f64>,
}

/// One potential element, 1-based as in `V_12`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementConfig {
    pub element: [usize; 2],
    #[serde(flatten)]
    pub profile: ProfileConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileConfig {
    Gaussian {
        v0: f64,
        b: f64,
        c: f64,
    },
    /// `layers` lists `[strength, right edge]`.
    Multilayer {
        a: f64,
        x0: f64,
        layers: Vec<[f64; 2]>,
    },
    SeaSaw {
        v0: f64,
        x_ell: f64,
        x_s: f64,
        signs: Vec<f64>,
    },
}

impl ProfileConfig {
    pub fn spec(&self) -> ProfileSpec {
        match self {
            ProfileConfig::Gaussian { v0, b, c } => ProfileSpec::Gaussian { v0: *v0, b: *b, c: *c },
            ProfileConfig::Multilayer { a, x0, layers } => {
                ProfileSpec::Multilayer { a: *a, x0: *x0, layers: layers.iter().map(|l| (l[0], l[1])).collect() }
            }
            ProfileConfig::SeaSaw { v0, x_ell, x_s, signs } => {
                ProfileSpec::SeaSaw { v0: *v0, x_ell: *x_ell, x_s: *x_s, signs: signs.clone() }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGridConfig {
    pub k_max: f64,
    pub count: usize,
    #[serde(default = "default_window_nodes")]
    pub window_nodes: usize,
    #[serde(default = "default_window_half_width")]
    pub window_half_width: f64,
}

fn default_window_nodes() -> usize {
    16
}

fn default_window_half_width() -> f64 {
    0.05
}

/// Spatial grid. The potential is reconstructed on `[0, x_hi]` from a
/// kernel on `[-x_hi, x_hi]`; partners without bound states use
/// `[x_lo, x_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_hi: f64,
    pub h: f64,
    #[serde(default = "default_x_lo")]
    pub x_lo: f64,
}

fn default_x_lo() -> f64 {
    -30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// Bound states from the forward solve (or a bound-state file).
    Forward,
    /// Fitted from the reflection data under the `n_b` hypothesis.
    Fit,
    /// Bound-state kernel dropped: the inversion yields the partner.
    Omit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub mode: BoundMode,
    pub n_b: usize,
    pub file: Option<PathBuf>,
    pub kappa_min: f64,
    pub kappa_max: Option<f64>,
    pub scan_step: f64,
    pub fit_s_hi: f64,
    pub fit_residual_gate: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        let scan = ScanOptions::default();
        Self {
            mode: BoundMode::Forward,
            n_b: 1,
            file: None,
            kappa_min: scan.kappa_min,
            kappa_max: scan.kappa_max,
            scan_step: scan.step,
            fit_s_hi: -0.2,
            fit_residual_gate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_step: f64,
    pub phase_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self { max_step: d.max_step, phase_step: d.phase_step }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Pass/fail thresholds, relative to `max |V|` unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub roundtrip: f64,
    /// Also run at `h / 2` and require a smaller error.
    pub grid_halving: bool,
    /// Absolute, max over the check grid.
    pub partner_reflection: f64,
    pub partner_deviation: f64,
    /// Every `partner_check_stride`-th table momentum is re-solved on the
    /// partner.
    pub partner_check_stride: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            roundtrip: 0.03,
            grid_halving: false,
            partner_reflection: 1e-2,
            partner_deviation: 0.25,
            partner_check_stride: 1,
        }
    }
}

/// A potential given either analytically or as a table.
#[derive(Debug, Clone)]
pub enum Potential {
    Analytic(ProfileMatrix),
    Table(PotentialGrid),
}

impl Potential {
    pub fn as_dyn(&self) -> &dyn mcis_core::MatrixPotential {
        match self {
            Potential::Analytic(p) => p,
            Potential::Table(p) => p,
        }
    }
}

impl RunConfig {
    /// Parses and validates; relative paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.potential_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.bound.file.as_mut() {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        let sys = self.channel_system()?;
        let n = sys.n_channels();
        for e in &self.potential {
            let [i, j] = e.element;
            if i == 0 || j == 0 || i > n || j > n || i > j {
                return bad(format!("element [{i}, {j}] must satisfy 1 <= i <= j <= {n}"));
            }
        }
        for p in self.potential_file.iter().chain(self.bound.file.iter()) {
            if !p.is_file() {
                return bad(format!("file {} does not exist", p.display()));
            }
        }
        if !(self.kgrid.k_max > 0.0 && self.kgrid.k_max.is_finite()) || self.kgrid.count < 2 {
            return bad("kgrid needs k_max > 0 and count >= 2".into());
        }
        if !(self.grid.h > 0.0 && self.grid.x_hi > 0.0 && self.grid.x_lo < 0.0) {
            return bad("grid needs h > 0, x_hi > 0 and x_lo < 0".into());
        }
        if !(self.tolerances.roundtrip > 0.0) {
            return bad("tolerances.roundtrip must be positive".into());
        }
        if self.tolerances.partner_check_stride == 0 {
            return bad("tolerances.partner_check_stride must be at least 1".into());
        }
        if !(self.bound.fit_s_hi < 0.0) {
            return bad("bound.fit_s_hi must be negative".into());
        }
        if !(self.solver.max_step > 0.0 && self.solver.phase_step > 0.0) {
            return bad("solver steps must be positive".into());
        }
        Ok(())
    }

    pub fn channel_system(&self) -> Result<ChannelSystem, CliError> {
        ChannelSystem::new(self.system.thresholds.clone()).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        if let Some(path) = &self.potential_file {
            let grid = format::read_potential(path)?;
            return Ok(Potential::Table(grid));
        }
        let sys = self.channel_system()?;
        let specs = self.potential.iter().map(|e| (e.element[0] - 1, e.element[1] - 1, e.profile.spec())).collect();
        ProfileMatrix::new(&sys, specs).map(Potential::Analytic).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { max_step: self.solver.max_step, phase_step: self.solver.phase_step, ..SolverOptions::default() }
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions {
            kappa_min: self.bound.kappa_min,
            kappa_max: self.bound.kappa_max,
            step: self.bound.scan_step,
            ..ScanOptions::default()
        }
    }

    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions { window_half_width: self.kgrid.window_half_width, ..KernelOptions::default() }
    }

    /// SHA-256 of the effective configuration, written into output headers.
    /// The output directory is left out: it does not change any result.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.output = Default::default();
        let text = toml::to_string(&cfg).unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX: &str = r#"
name = "test"
[system]
thresholds = [0.0, 0.025]

[[potential]]
element = [1, 1]
kind = "gaussian"
v0 = 0.15
b = 9.0
c = 1.8

[[potential]]
element = [2, 2]
kind = "multilayer"
a = 0.05
x0 = 1.0
layers = [[0.2, 2.8]]

[[potential]]
element = [1, 2]
kind = "sea-saw"
v0 = 0.1
x_ell = 1.5
x_s = 0.7
signs = [1.0, 1.0]

[kgrid]
k_max = 12.0
count = 1200

[grid]
x_hi = 4.5
h = 0.05
"#;

    #[test]
    fn parses_and_builds_potential() {
        let cfg = RunConfig::from_toml(EX).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.bound.mode, BoundMode::Forward);
        assert_eq!(cfg.kgrid.window_nodes, 16);
        let Potential::Analytic(p) = cfg.potential().unwrap() else { panic!() };
        assert!(matches!(p.spec(0, 1), Some(ProfileSpec::SeaSaw { .. })));
        assert!(matches!(p.spec(1, 1), Some(ProfileSpec::Multilayer { .. })));
    }

    #[test]
    fn rejects_bad_elements_and_fields() {
        let bad = EX.replace("element = [1, 2]", "element = [2, 1]");
        let cfg = RunConfig::from_toml(&bad).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Validation(_))));
        let unknown = EX.replace("[grid]", "[grid]\nstep = 3");
        assert!(RunConfig::from_toml(&unknown).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::from_toml(EX).unwrap();
        let b = RunConfig::from_toml(EX).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.grid.h = 0.025;
        assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), d.hash());
    }
}
