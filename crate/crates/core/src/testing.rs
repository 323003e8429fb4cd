use crate::model::{ReservoirCase, State};
use crate::presets;

pub fn standard_case(nx: usize, ny: usize) -> ReservoirCase {
    let mut case = presets::quarter_five_spot(nx, ny);
    let n = case.grid.n_cells();
    for c in 0..n {
        case.rock.perm[c] = 50.0 + 30.0 * ((c * 7 % 11) as f64);
    }
    case
}

pub fn small_case(nx: usize, ny: usize, wells: Vec<crate::model::WellSpec>) -> ReservoirCase {
    let mut case = presets::quarter_five_spot(nx, ny);
    case.wells = wells;
    case
}

pub fn random_state(case: &ReservoirCase, seed: u64) -> State {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s % 1_000_000) as f64 / 1_000_000.0
    };
    let n = case.grid.n_cells();
    State {
        pressure: (0..n).map(|_| 2600.0 + 600.0 * next()).collect(),
        sw: (0..n).map(|_| 0.22 + 0.56 * next()).collect(),
    }
}

pub fn default_controls(case: &ReservoirCase) -> Vec<f64> {
    case.wells.iter().map(|w| if w.is_injector() { 1000.0 } else { 2500.0 }).collect()
}
