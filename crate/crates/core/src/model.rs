//! Physical case description: grid, rock, fluids, relative permeability,
//! wells, controls and states, plus the pointwise property evaluations.
//!
//! Everything is stored in field units (psia, ft, cp, mD, STB/day, days).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cartesian 2D grid with a single layer of thickness `dz`.
///
/// Cells are addressed row-major: `index = j * nx + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let grid = GridSpec { nx, ny, dx, dy, dz };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid("grid", "nx and ny must be at least 1"));
        }
        for (name, v) in [("dx", self.dx), ("dy", self.dy), ("dz", self.dz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("grid", format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.nx && j < self.ny
    }

    /// Bulk cell volume in ft³.
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    /// Neighbours of a cell on the 5-point stencil, boundary faces excluded.
    pub fn neighbors(&self, index: usize) -> impl Iterator<Item = usize> {
        let (i, j) = self.coords(index);
        let nx = self.nx;
        let ny = self.ny;
        let left = (i > 0).then(|| index - 1);
        let right = (i + 1 < nx).then(|| index + 1);
        let down = (j > 0).then(|| index - nx);
        let up = (j + 1 < ny).then(|| index + nx);
        [down, left, right, up].into_iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RockModel {
    /// Isotropic permeability per cell, mD.
    pub perm: Vec<f64>,
    /// Porosity per cell, fraction.
    pub porosity: Vec<f64>,
    /// Rock compressibility, 1/psia.
    pub compressibility: f64,
}

impl RockModel {
    pub fn homogeneous(n_cells: usize, perm: f64, porosity: f64, compressibility: f64) -> Result<Self> {
        let rock = RockModel {
            perm: vec![perm; n_cells],
            porosity: vec![porosity; n_cells],
            compressibility,
        };
        rock.validate(n_cells)?;
        Ok(rock)
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        if self.perm.len() != n_cells {
            return Err(Error::DimensionMismatch { expected: n_cells, found: self.perm.len() });
        }
        if self.porosity.len() != n_cells {
            return Err(Error::DimensionMismatch { expected: n_cells, found: self.porosity.len() });
        }
        if let Some((idx, k)) = self.perm.iter().enumerate().find(|(_, k)| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::invalid("rock", format!("permeability at cell {idx} must be positive, got {k}")));
        }
        if let Some((idx, phi)) = self.porosity.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::invalid("rock", format!("porosity at cell {idx} must lie in (0, 1), got {phi}")));
        }
        if !(self.compressibility >= 0.0 && self.compressibility.is_finite()) {
            return Err(Error::invalid("rock", "compressibility must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Oil,
    Water,
}

/// Slightly compressible phase description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseProps {
    /// cp
    pub viscosity: f64,
    /// 1/psia
    pub compressibility: f64,
    /// Formation volume factor at `pressure_ref`, rb/STB.
    pub fvf_ref: f64,
    /// psia
    pub pressure_ref: f64,
    /// Carried for completeness; it cancels out of every balance equation.
    pub density_ref: f64,
}

impl PhaseProps {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return Err(Error::invalid(name, "viscosity must be positive"));
        }
        if !(self.compressibility >= 0.0 && self.compressibility.is_finite()) {
            return Err(Error::invalid(name, "compressibility must be non-negative"));
        }
        if !(self.fvf_ref > 0.0 && self.fvf_ref.is_finite()) {
            return Err(Error::invalid(name, "reference formation volume factor must be positive"));
        }
        Ok(())
    }

    /// `1 + c (p - p_ref)`, the linearised expansion term.
    #[inline]
    fn expansion(&self, p: f64) -> Result<f64> {
        let d = 1.0 + self.compressibility * (p - self.pressure_ref);
        if d > 0.0 && d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NonPhysicalFvf { pressure: p, denominator: d })
        }
    }

    /// Reciprocal formation volume factor `1/B` and its pressure derivative.
    #[inline]
    pub fn inv_fvf(&self, p: f64) -> Result<(f64, f64)> {
        let d = self.expansion(p)?;
        Ok((d / self.fvf_ref, self.compressibility / self.fvf_ref))
    }

    /// Formation volume factor `B(p)` and its pressure derivative.
    #[inline]
    pub fn fvf(&self, p: f64) -> Result<(f64, f64)> {
        let d = self.expansion(p)?;
        let b = self.fvf_ref / d;
        Ok((b, -self.compressibility * b / d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidModel {
    pub oil: PhaseProps,
    pub water: PhaseProps,
}

impl FluidModel {
    pub fn validate(&self) -> Result<()> {
        self.oil.validate("oil")?;
        self.water.validate("water")
    }

    pub fn phase(&self, phase: Phase) -> &PhaseProps {
        match phase {
            Phase::Oil => &self.oil,
            Phase::Water => &self.water,
        }
    }
}

/// Formation volume factor and viscosity of `phase` at pressure `p`.
///
/// `B(p) = B_ref / (1 + c (p - p_ref))`; viscosity is pressure independent.
pub fn fluid_props_at(p: f64, phase: Phase, model: &FluidModel) -> Result<(f64, f64)> {
    let props = model.phase(phase);
    let (b, _) = props.fvf(p)?;
    Ok((b, props.viscosity))
}

/// Corey relative permeability curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreyRelPerm {
    pub s_wc: f64,
    pub s_or: f64,
    pub n_w: f64,
    pub n_o: f64,
    pub krw0: f64,
    pub kro0: f64,
}

impl CoreyRelPerm {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.s_wc)
            && (0.0..1.0).contains(&self.s_or)
            && self.s_wc + self.s_or < 1.0
            && self.n_w >= 1.0
            && self.n_o >= 1.0
            && self.krw0 > 0.0
            && self.krw0 <= 1.0
            && self.kro0 > 0.0
            && self.kro0 <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("relperm", format!("{self:?} violates Corey parameter bounds")))
        }
    }

    /// Upper end of the mobile water window, `1 - s_or`.
    pub fn sw_max(&self) -> f64 {
        1.0 - self.s_or
    }

    #[inline]
    fn normalized(&self, sw: f64) -> f64 {
        ((sw - self.s_wc) / (1.0 - self.s_or - self.s_wc)).clamp(0.0, 1.0)
    }

    /// `(krw, kro)` at water saturation `sw`.
    #[inline]
    pub fn eval(&self, sw: f64) -> (f64, f64) {
        let s = self.normalized(sw);
        (self.krw0 * s.powf(self.n_w), self.kro0 * (1.0 - s).powf(self.n_o))
    }

    /// `(dkrw/dsw, dkro/dsw)`; zero outside the open mobile window.
    #[inline]
    pub fn derivs(&self, sw: f64) -> (f64, f64) {
        let span = 1.0 - self.s_or - self.s_wc;
        let s = (sw - self.s_wc) / span;
        if s <= 0.0 || s >= 1.0 {
            return (0.0, 0.0);
        }
        (
            self.krw0 * self.n_w * s.powf(self.n_w - 1.0) / span,
            -self.kro0 * self.n_o * (1.0 - s).powf(self.n_o - 1.0) / span,
        )
    }
}

/// `(krw, kro)` from the Corey model, with the normalised saturation clamped to [0, 1].
pub fn corey_relperm(sw: f64, model: &CoreyRelPerm) -> (f64, f64) {
    model.eval(sw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellKind {
    RateControlledInjector,
    BhpControlledProducer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    pub name: String,
    pub kind: WellKind,
    pub i: usize,
    pub j: usize,
    /// Wellbore radius, ft.
    pub r_w: f64,
    pub skin: f64,
}

impl WellSpec {
    pub fn is_injector(&self) -> bool {
        self.kind == WellKind::RateControlledInjector
    }

    pub fn is_producer(&self) -> bool {
        self.kind == WellKind::BhpControlledProducer
    }
}

/// Piecewise-constant controls, one value per well per step.
///
/// `values[w][k - 1]` is the control of well `w` during step `k` (1-based):
/// STB/day for injectors and psia for producers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub dt: f64,
    pub n_steps: usize,
    pub values: Vec<Vec<f64>>,
}

impl ControlSchedule {
    pub fn constant(dt: f64, n_steps: usize, per_well: &[f64]) -> Self {
        ControlSchedule {
            dt,
            n_steps,
            values: per_well.iter().map(|&v| vec![v; n_steps]).collect(),
        }
    }

    pub fn validate(&self, wells: &[WellSpec]) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("schedule", "dt must be positive"));
        }
        if self.values.len() != wells.len() {
            return Err(Error::invalid(
                "schedule",
                format!("{} control series for {} wells", self.values.len(), wells.len()),
            ));
        }
        for (well, series) in wells.iter().zip(&self.values) {
            if series.len() != self.n_steps {
                return Err(Error::invalid(
                    "schedule",
                    format!("well `{}` has {} values, expected {}", well.name, series.len(), self.n_steps),
                ));
            }
            let bad = match well.kind {
                WellKind::RateControlledInjector => series.iter().any(|v| !(*v >= 0.0 && v.is_finite())),
                WellKind::BhpControlledProducer => series.iter().any(|v| !(*v > 0.0 && v.is_finite())),
            };
            if bad {
                return Err(Error::invalid(
                    "schedule",
                    format!("well `{}` has a negative rate or non-positive BHP", well.name),
                ));
            }
        }
        Ok(())
    }

    /// Controls for step `k` (1-based), one value per well.
    pub fn step(&self, k: usize) -> Result<Vec<f64>> {
        if k == 0 || k > self.n_steps {
            return Err(Error::MissingControls(k));
        }
        Ok(self.values.iter().map(|s| s[k - 1]).collect())
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Oil pressure and water saturation per cell. Oil saturation is `1 - sw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub pressure: Vec<f64>,
    pub sw: Vec<f64>,
}

impl State {
    pub fn uniform(n_cells: usize, pressure: f64, sw: f64) -> Self {
        State {
            pressure: vec![pressure; n_cells],
            sw: vec![sw; n_cells],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.pressure.len()
    }

    #[inline]
    pub fn so(&self, index: usize) -> f64 {
        1.0 - self.sw[index]
    }

    pub fn check_dims(&self, n_cells: usize) -> Result<()> {
        for len in [self.pressure.len(), self.sw.len()] {
            if len != n_cells {
                return Err(Error::DimensionMismatch { expected: n_cells, found: len });
            }
        }
        Ok(())
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        self.check_dims(n_cells)?;
        if self.pressure.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid("state", "pressure must be finite and positive"));
        }
        if self.sw.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid("state", "water saturation must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitConstants {
    /// Darcy constant for transmissibility and well index, 1.127e-3 in field units.
    pub darcy_const: f64,
    /// ft³ to reservoir barrels.
    pub volume_const: f64,
    /// metres to feet, used when loading metric geometry.
    pub metres_to_feet: f64,
}

impl Default for UnitConstants {
    fn default() -> Self {
        UnitConstants {
            darcy_const: 1.127e-3,
            volume_const: 1.0 / 5.614_583,
            metres_to_feet: 1.0 / 0.3048,
        }
    }
}

impl UnitConstants {
    pub fn validate(&self) -> Result<()> {
        if [self.darcy_const, self.volume_const, self.metres_to_feet]
            .iter()
            .all(|c| *c > 0.0 && c.is_finite())
        {
            Ok(())
        } else {
            Err(Error::invalid("units", "all unit constants must be positive"))
        }
    }
}

/// Face permeability averaging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermAveraging {
    /// `K_i K_j / (K_i + K_j)` with the full centre-to-centre distance.
    #[default]
    Harmonic,
    /// Standard two-point flux: `2 K_i K_j / (K_i + K_j)`.
    TwoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirCase {
    pub grid: GridSpec,
    pub rock: RockModel,
    pub fluid: FluidModel,
    pub relperm: CoreyRelPerm,
    pub wells: Vec<WellSpec>,
    pub initial: State,
    pub units: UnitConstants,
    pub perm_averaging: PermAveraging,
}

impl ReservoirCase {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let n = self.grid.n_cells();
        self.rock.validate(n)?;
        self.fluid.validate()?;
        self.relperm.validate()?;
        self.units.validate()?;
        self.initial.validate(n)?;
        let mut occupied = std::collections::HashSet::new();
        for well in &self.wells {
            if !self.grid.contains(well.i, well.j) {
                return Err(Error::invalid(
                    format!("well `{}`", well.name),
                    format!("cell ({}, {}) outside {}x{} grid", well.i, well.j, self.grid.nx, self.grid.ny),
                ));
            }
            if !(well.r_w > 0.0) {
                return Err(Error::invalid(format!("well `{}`", well.name), "wellbore radius must be positive"));
            }
            if !occupied.insert((well.i, well.j)) {
                return Err(Error::invalid(
                    format!("well `{}`", well.name),
                    format!("cell ({}, {}) already holds a well", well.i, well.j),
                ));
            }
        }
        Ok(())
    }

    pub fn well_cell(&self, well: &WellSpec) -> usize {
        self.grid.index(well.i, well.j)
    }

    /// Pore volume of a cell in reservoir barrels.
    pub fn pore_volume(&self, cell: usize) -> f64 {
        self.grid.cell_volume() * self.units.volume_const * self.rock.porosity[cell]
    }

    pub fn producers(&self) -> impl Iterator<Item = (usize, &WellSpec)> {
        self.wells.iter().enumerate().filter(|(_, w)| w.is_producer())
    }

    pub fn injectors(&self) -> impl Iterator<Item = (usize, &WellSpec)> {
        self.wells.iter().enumerate().filter(|(_, w)| w.is_injector())
    }
}
