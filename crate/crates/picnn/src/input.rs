//! Network input encoding and the bounded output map.

use serde::{Deserialize, Serialize};

use porflow_core::{ControlSchedule, ReservoirCase, State, WellKind};

use crate::error::{Error, Result};

/// Ranges used to scale well controls into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlBounds {
    /// psia
    pub bhp_lo: f64,
    /// psia
    pub bhp_hi: f64,
    /// STB/day
    pub rate_hi: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        ControlBounds { bhp_lo: 2300.0, bhp_hi: 2500.0, rate_hi: 1500.0 }
    }
}

impl ControlBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.bhp_lo < self.bhp_hi) || !(self.rate_hi > 0.0) {
            return Err(Error::invalid("control bounds", format!("{self:?}")));
        }
        Ok(())
    }
}

/// Two `ny x nx` planes: producer BHP, injector rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ControlImage {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

pub fn rasterize_controls(case: &ReservoirCase, controls: &[f64], bounds: &ControlBounds) -> Result<ControlImage> {
    bounds.validate()?;
    if controls.len() != case.wells.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} well controls", case.wells.len()),
            found: format!("{}", controls.len()),
        });
    }
    let (h, w) = (case.grid.ny, case.grid.nx);
    let mut data = vec![0.0f32; 2 * h * w];
    for (well, &u) in case.wells.iter().zip(controls) {
        let cell = case.well_cell(well);
        let (value, lo, hi, ch) = match well.kind {
            WellKind::BhpControlledProducer => ((u - bounds.bhp_lo) / (bounds.bhp_hi - bounds.bhp_lo), bounds.bhp_lo, bounds.bhp_hi, 0),
            WellKind::RateControlledInjector => (u / bounds.rate_hi, 0.0, bounds.rate_hi, 1),
        };
        if !(lo..=hi).contains(&u) {
            return Err(Error::OutOfRangeControl { well: well.name.clone(), value: u, lo, hi });
        }
        data[ch * h * w + cell] = value as f32;
    }
    Ok(ControlImage { height: h, width: w, data })
}

/// Affine maps from sigmoid outputs to the admissible pressure and saturation ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub s_wc: f64,
    pub s_or: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl ScalingParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.p_min < self.p_max && self.s_wc >= 0.0 && self.s_or >= 0.0 && self.s_wc + self.s_or < 1.0;
        if !ok {
            return Err(Error::invalid("scaling", format!("{self:?}")));
        }
        Ok(())
    }

    /// `p_min` = lowest scheduled BHP minus `below`, `p_max` = highest initial
    /// pressure plus `above`.
    pub fn for_case(case: &ReservoirCase, schedule: &ControlSchedule, below: f64, above: f64) -> Result<Self> {
        let min_bhp = case
            .producers()
            .flat_map(|(w, _)| schedule.values[w].iter().copied())
            .fold(f64::INFINITY, f64::min);
        let p0 = case.initial.pressure.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p_min = if min_bhp.is_finite() { min_bhp - below } else { p0 - below };
        let s = ScalingParams { s_wc: case.relperm.s_wc, s_or: case.relperm.s_or, p_min, p_max: p0 + above };
        s.validate()?;
        Ok(s)
    }

    /// Checks `p_min` sits below every scheduled BHP.
    pub fn check_schedule(&self, case: &ReservoirCase, schedule: &ControlSchedule) -> Result<()> {
        for (w, well) in case.producers() {
            if let Some(v) = schedule.values[w].iter().find(|&&v| v <= self.p_min) {
                return Err(Error::invalid(
                    "scaling",
                    format!("p_min {} not below BHP {v} of `{}`", self.p_min, well.name),
                ));
            }
        }
        Ok(())
    }

    pub fn pressure_span(&self) -> f64 {
        self.p_max - self.p_min
    }

    pub fn saturation_span(&self) -> f64 {
        1.0 - self.s_or - self.s_wc
    }

    /// The clamp only absorbs rounding when a sigmoid saturates at 0 or 1.
    pub fn to_state(&self, x_p: &[f64], x_s: &[f64]) -> State {
        let sw_max = 1.0 - self.s_or;
        State {
            pressure: x_p.iter().map(|x| (self.p_min + self.pressure_span() * x).clamp(self.p_min, self.p_max)).collect(),
            sw: x_s.iter().map(|x| (self.s_wc + self.saturation_span() * x).clamp(self.s_wc, sw_max)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use porflow_core::presets;

    fn case_with(wells: Vec<porflow_core::WellSpec>) -> ReservoirCase {
        let mut case = presets::quarter_five_spot(4, 4);
        case.wells = wells;
        case
    }

    #[test]
    fn empty_case_gives_blank_image() {
        let img = rasterize_controls(&case_with(vec![]), &[], &ControlBounds::default()).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.0));
        assert_eq!(img.data.len(), 32);
    }

    #[test]
    fn encodes_rates_and_bhp() {
        let case = case_with(vec![presets::injector("I", 1, 0), presets::producer("P", 2, 3)]);
        let b = ControlBounds { bhp_lo: 2300.0, bhp_hi: 2500.0, rate_hi: 1500.0 };
        let img = rasterize_controls(&case, &[1500.0, 2300.0], &b).unwrap();
        assert_eq!(img.channel(1)[1], 1.0);
        assert_eq!(img.data.iter().filter(|&&v| v != 0.0).count(), 1);
        let img = rasterize_controls(&case, &[1250.0, 2400.0], &b).unwrap();
        assert!((img.channel(1)[1] - 0.833_333_3).abs() < 1e-6);
        assert_eq!(img.channel(0)[3 * 4 + 2], 0.5);
        assert!(matches!(
            rasterize_controls(&case, &[1600.0, 2400.0], &b),
            Err(Error::OutOfRangeControl { ref well, .. }) if well == "I"
        ));
        assert!(matches!(rasterize_controls(&case, &[1000.0, 2200.0], &b), Err(Error::OutOfRangeControl { .. })));
    }

    #[test]
    fn scaling_midpoint_and_bounds() {
        let s = ScalingParams { s_wc: 0.2, s_or: 0.2, p_min: 2100.0, p_max: 3500.0 };
        let st = s.to_state(&[0.5, 0.0, 1.0], &[0.5, 0.0, 1.0]);
        assert_eq!(st.pressure, vec![2800.0, 2100.0, 3500.0]);
        assert!((st.sw[0] - 0.5).abs() < 1e-15);
        assert_eq!((st.sw[1], st.sw[2]), (0.2, 0.8));
        let case = case_with(vec![presets::injector("I", 0, 0), presets::producer("P", 3, 3)]);
        let sched = ControlSchedule::constant(2.0, 3, &[1000.0, 2400.0]);
        let s = ScalingParams::for_case(&case, &sched, 200.0, 500.0).unwrap();
        assert_eq!((s.p_min, s.p_max), (2200.0, 3500.0));
        s.check_schedule(&case, &sched).unwrap();
        let low = ControlSchedule::constant(2.0, 3, &[1000.0, 2150.0]);
        assert!(s.check_schedule(&case, &low).is_err());
    }
}
