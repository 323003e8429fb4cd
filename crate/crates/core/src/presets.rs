//! Reference property sets: the Table-1 style rock/fluid description, the
//! Corey curves used throughout, and small quarter-five-spot cases.

use crate::model::{
    CoreyRelPerm, FluidModel, GridSpec, PermAveraging, PhaseProps, ReservoirCase, RockModel, State, UnitConstants,
    WellKind, WellSpec,
};

pub const INITIAL_PRESSURE: f64 = 3000.0;
pub const CELL_SIZE_M: f64 = 20.0;

pub fn corey() -> CoreyRelPerm {
    CoreyRelPerm { s_wc: 0.2, s_or: 0.2, n_w: 2.0, n_o: 3.0, krw0: 0.6, kro0: 0.9 }
}

/// Oil 1.13 cp, c_o = 1e-5 /psia; water 1 cp, c_w = 3e-6 /psia; B_ref = 1 at 3000 psia.
pub fn fluid() -> FluidModel {
    FluidModel {
        oil: PhaseProps {
            viscosity: 1.13,
            compressibility: 1.0e-5,
            fvf_ref: 1.0,
            pressure_ref: INITIAL_PRESSURE,
            density_ref: 53.0,
        },
        water: PhaseProps {
            viscosity: 1.0,
            compressibility: 3.0e-6,
            fvf_ref: 1.0,
            pressure_ref: INITIAL_PRESSURE,
            density_ref: 62.4,
        },
    }
}

pub const ROCK_COMPRESSIBILITY: f64 = 3.0e-6;
pub const POROSITY: f64 = 0.2;
pub const WELL_RADIUS_FT: f64 = 0.3;

pub fn producer(name: &str, i: usize, j: usize) -> WellSpec {
    WellSpec { name: name.into(), kind: WellKind::BhpControlledProducer, i, j, r_w: WELL_RADIUS_FT, skin: 0.0 }
}

pub fn injector(name: &str, i: usize, j: usize) -> WellSpec {
    WellSpec { name: name.into(), kind: WellKind::RateControlledInjector, i, j, r_w: WELL_RADIUS_FT, skin: 0.0 }
}

/// 20 m cubic cells, 100 mD, one injector in the lower-left corner and one
/// producer in the upper-right corner, initial state 3000 psia at connate water.
pub fn quarter_five_spot(nx: usize, ny: usize) -> ReservoirCase {
    let units = UnitConstants::default();
    let d = CELL_SIZE_M * units.metres_to_feet;
    let grid = GridSpec { nx, ny, dx: d, dy: d, dz: d };
    let n = grid.n_cells();
    let relperm = corey();
    ReservoirCase {
        rock: RockModel {
            perm: vec![100.0; n],
            porosity: vec![POROSITY; n],
            compressibility: ROCK_COMPRESSIBILITY,
        },
        grid,
        fluid: fluid(),
        relperm,
        wells: vec![injector("I1", 0, 0), producer("P1", nx - 1, ny - 1)],
        initial: State::uniform(n, INITIAL_PRESSURE, relperm.s_wc),
        units,
        perm_averaging: PermAveraging::Harmonic,
    }
}
