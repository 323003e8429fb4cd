//! Case files: TOML documents describing the reservoir, its schedule and the
//! solver/trainer settings.
//!
//! ```toml
//! name = "baseline_64"
//! seed = 42
//!
//! [grid]            # nx, ny, cell sizes and their unit ("m" or "ft")
//! nx = 64
//! ny = 64
//! dx = 20.0
//! dy = 20.0
//! dz = 20.0
//! length_unit = "m"
//!
//! [rock]
//! porosity = 0.2
//! compressibility = 3e-6
//! [rock.permeability]   # kind = "uniform" | "lognormal" | "file"
//! kind = "lognormal"
//! mean_md = 100.0
//! sigma_ln = 0.8
//! correlation_cells = 4.0
//! seed = 7
//!
//! [[wells]]
//! name = "I1"
//! kind = "injector"     # or "producer"
//! i = 16
//! j = 16
//!
//! [schedule]            # days; one control value per well per period
//! dt = 2.0
//! total_time = 100.0
//! period = 50.0
//! [schedule.controls]
//! I1 = [1250.0, 1400.0]
//! ```
//!
//! Omitted sections take documented defaults. [`CaseConfig::resolved_toml`]
//! writes every value explicitly and is itself loadable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use porflow_core::model::PhaseProps;
use porflow_core::{
    ControlSchedule, CoreyRelPerm, FluidModel, GridSpec, NewtonConfig, PermAveraging, ReservoirCase, RockModel, State,
    UnitConstants, WellKind, WellSpec,
};
use porflow_picnn::TrainerConfig;

use crate::error::{HarnessError, Result};
use crate::perm::{load_perm_file, lognormal_field};
use crate::suite::SweepConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    #[default]
    M,
    Ft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "d_cell")]
    pub dx: f64,
    #[serde(default = "d_cell")]
    pub dy: f64,
    #[serde(default = "d_cell")]
    pub dz: f64,
    #[serde(default)]
    pub length_unit: LengthUnit,
}

fn d_cell() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PermConfig {
    Uniform {
        value_md: f64,
    },
    /// `ln k` Gaussian with the given log-space standard deviation, smoothed
    /// over `correlation_cells`, arithmetic mean `mean_md`.
    Lognormal {
        mean_md: f64,
        sigma_ln: f64,
        correlation_cells: f64,
        seed: u64,
    },
    /// Whitespace or comma separated values in mD, row-major from `j = 0`.
    File {
        path: PathBuf,
    },
}

impl Default for PermConfig {
    fn default() -> Self {
        PermConfig::Uniform { value_md: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RockConfig {
    #[serde(default = "d_porosity")]
    pub porosity: f64,
    #[serde(default = "d_rock_c")]
    pub compressibility: f64,
    #[serde(default)]
    pub permeability: PermConfig,
}

impl Default for RockConfig {
    fn default() -> Self {
        RockConfig { porosity: d_porosity(), compressibility: d_rock_c(), permeability: PermConfig::default() }
    }
}

fn d_porosity() -> f64 {
    0.2
}
fn d_rock_c() -> f64 {
    3e-6
}

macro_rules! phase_config {
    ($name:ident, $mu:expr, $c:expr, $rho:expr) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            pub viscosity_cp: f64,
            pub compressibility: f64,
            pub fvf_ref: f64,
            pub pressure_ref: f64,
            pub density: f64,
        }

        impl Default for $name {
            fn default() -> Self {
                $name { viscosity_cp: $mu, compressibility: $c, fvf_ref: 1.0, pressure_ref: 3000.0, density: $rho }
            }
        }

        impl $name {
            fn props(&self) -> PhaseProps {
                PhaseProps {
                    viscosity: self.viscosity_cp,
                    compressibility: self.compressibility,
                    fvf_ref: self.fvf_ref,
                    pressure_ref: self.pressure_ref,
                    density_ref: self.density,
                }
            }
        }
    };
}

phase_config!(OilConfig, 1.13, 1e-5, 53.0);
phase_config!(WaterConfig, 1.0, 3e-6, 62.4);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FluidConfig {
    pub oil: OilConfig,
    pub water: WaterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelPermConfig {
    pub s_wc: f64,
    pub s_or: f64,
    pub n_w: f64,
    pub n_o: f64,
    pub krw0: f64,
    pub kro0: f64,
}

impl Default for RelPermConfig {
    fn default() -> Self {
        RelPermConfig { s_wc: 0.2, s_or: 0.2, n_w: 2.0, n_o: 3.0, krw0: 0.6, kro0: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellKindConfig {
    Injector,
    Producer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellConfig {
    pub name: String,
    pub kind: WellKindConfig,
    pub i: usize,
    pub j: usize,
    #[serde(default = "d_rw")]
    pub radius_ft: f64,
    #[serde(default)]
    pub skin: f64,
}

fn d_rw() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "d_p0")]
    pub pressure: f64,
    /// Defaults to the connate saturation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sw: Option<f64>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { pressure: d_p0(), sw: None }
    }
}

fn d_p0() -> f64 {
    3000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_total")]
    pub total_time: f64,
    /// Control alteration period; defaults to the total time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    /// Per-well control values, one per period.
    pub controls: BTreeMap<String, Vec<f64>>,
}

fn d_dt() -> f64 {
    2.0
}
fn d_total() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Square grid sizes.
    pub sizes: Vec<usize>,
    /// Time step per size, days.
    pub dts: Vec<f64>,
    /// Steps timed per run.
    pub steps: usize,
    /// Runs per size; the median is reported.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { sizes: vec![64, 100, 150], dts: vec![2.0, 2.0, 3.0], steps: 3, repeats: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Steps whose fields and error maps are exported as images; empty means
    /// the first and last step.
    pub snapshots: Vec<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), snapshots: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    #[serde(default = "d_name")]
    pub name: String,
    /// Seeds network initialisation; replaces `trainer.seed`.
    #[serde(default)]
    pub seed: u64,
    /// Regularise training with well-block pressures from the reference simulator.
    #[serde(default)]
    pub observe_wbp: bool,
    pub grid: GridConfig,
    #[serde(default)]
    pub rock: RockConfig,
    #[serde(default)]
    pub fluid: FluidConfig,
    #[serde(default)]
    pub relperm: RelPermConfig,
    pub wells: Vec<WellConfig>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub units: UnitConstants,
    #[serde(default)]
    pub perm_averaging: PermAveraging,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub solver: NewtonConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn d_name() -> String {
    "case".into()
}

fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> HarnessError {
    HarnessError::Validation { field: field.into(), constraint: constraint.into() }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

/// Parses, resolves relative paths against `base_dir` and validates.
pub fn parse_config(text: &str, origin: &str, base_dir: &Path) -> Result<CaseConfig> {
    let mut cfg: CaseConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        HarnessError::Parse { path: origin.to_string(), line, column, message: e.message().to_string() }
    })?;
    cfg.resolve(base_dir);
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<CaseConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid("config", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, &path.display().to_string(), base)
}

impl CaseConfig {
    /// Materialises defaults that depend on other fields and anchors paths.
    fn resolve(&mut self, base_dir: &Path) {
        if self.initial.sw.is_none() {
            self.initial.sw = Some(self.relperm.s_wc);
        }
        if self.schedule.period.is_none() {
            self.schedule.period = Some(self.schedule.total_time);
        }
        if let PermConfig::File { path } = &mut self.rock.permeability {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        self.trainer.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.nx == 0 || g.ny == 0 {
            return Err(invalid("grid", "nx and ny must be at least 1"));
        }
        for (name, v) in [("grid.dx", g.dx), ("grid.dy", g.dy), ("grid.dz", g.dz)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if !(self.rock.porosity > 0.0 && self.rock.porosity <= 1.0) {
            return Err(invalid("rock.porosity", "must lie in (0, 1]"));
        }
        match &self.rock.permeability {
            PermConfig::Uniform { value_md } if !(*value_md > 0.0) => {
                return Err(invalid("rock.permeability.value_md", "must be positive"))
            }
            PermConfig::Lognormal { mean_md, sigma_ln, correlation_cells, .. } => {
                if !(*mean_md > 0.0) || !(*sigma_ln >= 0.0) || !(*correlation_cells >= 0.0) {
                    return Err(invalid(
                        "rock.permeability",
                        "mean_md must be positive, sigma_ln and correlation_cells non-negative",
                    ));
                }
            }
            PermConfig::File { path } if !path.exists() => {
                return Err(invalid("rock.permeability.path", format!("{} does not exist", path.display())))
            }
            _ => {}
        }
        if self.fluid.water.viscosity_cp <= 0.0 || self.fluid.oil.viscosity_cp <= 0.0 {
            return Err(invalid("fluid.viscosity_cp", "must be positive"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for w in &self.wells {
            let field = format!("wells.{}", w.name);
            if w.i >= g.nx || w.j >= g.ny {
                return Err(invalid(field, format!("cell ({}, {}) outside the {}x{} grid", w.i, w.j, g.nx, g.ny)));
            }
            if !(w.radius_ft > 0.0) {
                return Err(invalid(field, "radius_ft must be positive"));
            }
            if !seen.insert(w.name.clone()) {
                return Err(invalid(field, "duplicate well name"));
            }
        }
        let s = &self.schedule;
        if !(s.dt > 0.0) || !(s.total_time >= s.dt) {
            return Err(invalid("schedule", "dt must be positive and total_time at least dt"));
        }
        let steps = s.total_time / s.dt;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(invalid("schedule.total_time", "must be a multiple of dt"));
        }
        let period = s.period.unwrap_or(s.total_time);
        let per = period / s.dt;
        if !(period > 0.0) || (per - per.round()).abs() > 1e-9 {
            return Err(invalid("schedule.period", "must be a positive multiple of dt"));
        }
        let segments = self.n_segments();
        for w in &self.wells {
            let Some(v) = s.controls.get(&w.name) else {
                return Err(invalid(format!("schedule.controls.{}", w.name), "missing controls"));
            };
            if v.len() != segments {
                return Err(invalid(
                    format!("schedule.controls.{}", w.name),
                    format!("expected {segments} values (one per period), got {}", v.len()),
                ));
            }
        }
        if let Some(extra) = s.controls.keys().find(|k| !self.wells.iter().any(|w| &w.name == *k)) {
            return Err(invalid(format!("schedule.controls.{extra}"), "no such well"));
        }
        self.solver.validate().map_err(|e| invalid("solver", e.to_string()))?;
        self.trainer.validate().map_err(|e| invalid("trainer", e.to_string()))?;
        self.sweep.validate(s.dt).map_err(|e| invalid("sweep", e))?;
        if self.bench.sizes.len() != self.bench.dts.len() || self.bench.repeats == 0 || self.bench.steps == 0 {
            return Err(invalid("bench", "sizes and dts must pair up; steps and repeats at least 1"));
        }
        self.to_case()?;
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.schedule.total_time / self.schedule.dt).round() as usize
    }

    pub fn steps_per_period(&self) -> usize {
        let period = self.schedule.period.unwrap_or(self.schedule.total_time);
        ((period / self.schedule.dt).round() as usize).max(1)
    }

    pub fn n_segments(&self) -> usize {
        self.n_steps().div_ceil(self.steps_per_period())
    }

    fn length_factor(&self) -> f64 {
        match self.grid.length_unit {
            LengthUnit::M => self.units.metres_to_feet,
            LengthUnit::Ft => 1.0,
        }
    }

    pub fn permeability(&self) -> Result<Vec<f64>> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        match &self.rock.permeability {
            PermConfig::Uniform { value_md } => Ok(vec![*value_md; nx * ny]),
            PermConfig::Lognormal { mean_md, sigma_ln, correlation_cells, seed } => {
                Ok(lognormal_field(nx, ny, *mean_md, *sigma_ln, *correlation_cells, *seed))
            }
            PermConfig::File { path } => load_perm_file(path, nx * ny),
        }
    }

    pub fn to_case(&self) -> Result<ReservoirCase> {
        let f = self.length_factor();
        let grid = GridSpec { nx: self.grid.nx, ny: self.grid.ny, dx: self.grid.dx * f, dy: self.grid.dy * f, dz: self.grid.dz * f };
        let n = grid.n_cells();
        let rp = &self.relperm;
        let relperm = CoreyRelPerm { s_wc: rp.s_wc, s_or: rp.s_or, n_w: rp.n_w, n_o: rp.n_o, krw0: rp.krw0, kro0: rp.kro0 };
        let wells = self
            .wells
            .iter()
            .map(|w| WellSpec {
                name: w.name.clone(),
                kind: match w.kind {
                    WellKindConfig::Injector => WellKind::RateControlledInjector,
                    WellKindConfig::Producer => WellKind::BhpControlledProducer,
                },
                i: w.i,
                j: w.j,
                r_w: w.radius_ft,
                skin: w.skin,
            })
            .collect();
        let case = ReservoirCase {
            grid,
            rock: RockModel {
                perm: self.permeability()?,
                porosity: vec![self.rock.porosity; n],
                compressibility: self.rock.compressibility,
            },
            fluid: FluidModel { oil: self.fluid.oil.props(), water: self.fluid.water.props() },
            relperm,
            wells,
            initial: State::uniform(n, self.initial.pressure, self.initial.sw.unwrap_or(rp.s_wc)),
            units: self.units,
            perm_averaging: self.perm_averaging,
        };
        case.validate().map_err(|e| match e {
            porflow_core::Error::InvalidWellGeometry { well, reason } => invalid(format!("wells.{well}"), reason),
            other => invalid("case", other.to_string()),
        })?;
        Ok(case)
    }

    /// Expands the per-period controls into per-step values.
    pub fn schedule(&self) -> ControlSchedule {
        let n = self.n_steps();
        let per = self.steps_per_period();
        let values = self
            .wells
            .iter()
            .map(|w| {
                let seg = &self.schedule.controls[&w.name];
                (0..n).map(|k| seg[(k / per).min(seg.len() - 1)]).collect()
            })
            .collect();
        ControlSchedule { dt: self.schedule.dt, n_steps: n, values }
    }

    /// Every setting written out explicitly.
    pub fn resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}
