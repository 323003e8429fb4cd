//! Accuracy and performance diagnostics against the reference simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvm::Discretization;
use crate::model::State;

/// Mean absolute error normalised by the largest reference magnitude:
/// `(1/N) Σ |y_i - ŷ_i| / max_i |y_i|`.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), found: y_hat.len() });
    }
    let max = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs() / max).sum();
    Ok(sum / y.len() as f64)
}

/// Pixelwise `(x_pred - x_ref) / x_ref`.
pub fn relative_error_map(x_pred: &[f64], x_ref: &[f64]) -> Result<Vec<f64>> {
    if x_pred.len() != x_ref.len() {
        return Err(Error::DimensionMismatch { expected: x_ref.len(), found: x_pred.len() });
    }
    x_pred
        .iter()
        .zip(x_ref)
        .enumerate()
        .map(|(index, (p, r))| {
            if *r == 0.0 {
                Err(Error::DivisionByZeroPixel { index })
            } else {
                Ok((p - r) / r)
            }
        })
        .collect()
}

/// Well-block pressure and production rates of one producer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellQuantities {
    pub well: String,
    pub cell: usize,
    /// psia
    pub wbp: f64,
    /// Produced oil, STB/day (positive for production).
    pub oil_rate: f64,
    /// Produced water, STB/day.
    pub water_rate: f64,
}

/// WBP and production rates for every producer, through the same well model
/// the residual uses.
pub fn extract_well_quantities(disc: &Discretization, state: &State, controls: &[f64]) -> Result<Vec<WellQuantities>> {
    let case = disc.case();
    case.producers()
        .map(|(w, well)| {
            let rate = disc.well_rate(w, state, controls[w])?;
            Ok(WellQuantities {
                well: well.name.clone(),
                cell: rate.cell,
                wbp: state.pressure[rate.cell],
                oil_rate: -rate.q_o,
                water_rate: -rate.q_w,
            })
        })
        .collect()
}

/// Per-step accuracy of a predicted trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mape_pressure: Vec<f64>,
    pub mape_saturation: Vec<f64>,
}

impl ErrorReport {
    /// Compares levels `1..` of two state sequences of equal length.
    pub fn compare(predicted: &[State], reference: &[State]) -> Result<Self> {
        if predicted.len() != reference.len() {
            return Err(Error::DimensionMismatch { expected: reference.len(), found: predicted.len() });
        }
        let mut out = ErrorReport::default();
        for (p, r) in predicted.iter().zip(reference).skip(1) {
            out.mape_pressure.push(mape(&r.pressure, &p.pressure)?);
            out.mape_saturation.push(mape(&r.sw, &p.sw)?);
        }
        Ok(out)
    }

    pub fn mean_pressure(&self) -> f64 {
        mean(&self.mape_pressure)
    }

    pub fn mean_saturation(&self) -> f64 {
        mean(&self.mape_saturation)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Timing inputs for one grid size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTiming {
    pub nx: usize,
    pub ny: usize,
    pub parameter_count: usize,
    pub sim_secs: f64,
    pub inference_secs: f64,
    pub training_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub grid: String,
    pub dofs: usize,
    pub parameter_count: usize,
    pub training_secs: Option<f64>,
    pub inference_secs: f64,
    pub sim_secs: f64,
    pub speedup: f64,
}

/// Observational comparison table; never fails on timing values.
pub fn speedup_report(cases: &[CaseTiming]) -> Vec<SpeedupRow> {
    cases
        .iter()
        .map(|c| SpeedupRow {
            grid: format!("{}x{}", c.nx, c.ny),
            dofs: 2 * c.nx * c.ny,
            parameter_count: c.parameter_count,
            training_secs: c.training_secs,
            inference_secs: c.inference_secs,
            sim_secs: c.sim_secs,
            speedup: if c.inference_secs > 0.0 { c.sim_secs / c.inference_secs } else { f64::INFINITY },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::standard_case;
    use proptest::prelude::*;

    #[test]
    fn mape_hand_case() {
        assert_eq!(mape(&[100.0, 200.0], &[100.0, 200.0]).unwrap(), 0.0);
        let m = mape(&[100.0, 200.0], &[90.0, 210.0]).unwrap();
        assert!((m - 0.05).abs() < 1e-12);
        assert!(matches!(mape(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::DegenerateReference)));
    }

    #[test]
    fn relative_error_examples() {
        let r = [3000.0, 2500.0, 0.2];
        assert!(relative_error_map(&r, &r).unwrap().iter().all(|v| *v == 0.0));
        let up: Vec<f64> = r.iter().map(|v| v * 1.025).collect();
        for v in relative_error_map(&up, &r).unwrap() {
            assert!((v - 0.025).abs() < 1e-12);
        }
        let down: Vec<f64> = r.iter().map(|v| v * 0.9).collect();
        assert!(relative_error_map(&down, &r).unwrap().iter().all(|v| *v < 0.0));
        assert!(matches!(
            relative_error_map(&[1.0, 1.0], &[1.0, 0.0]),
            Err(Error::DivisionByZeroPixel { index: 1 })
        ));
    }

    #[test]
    fn well_quantities() {
        let case = standard_case(4, 4);
        let disc = Discretization::new(&case).unwrap();
        let state = case.initial.clone();
        let q = extract_well_quantities(&disc, &state, &[1000.0, 3000.0]).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!((q[0].oil_rate, q[0].water_rate), (0.0, 0.0));
        let q = extract_well_quantities(&disc, &state, &[1000.0, 2500.0]).unwrap();
        assert_eq!(q[0].water_rate, 0.0);
        assert!(q[0].oil_rate > 0.0);
        assert_eq!(q[0].wbp, state.pressure[case.grid.index(3, 3)]);
        // same numbers as the residual's source terms
        let src = disc.source_terms(&state, &[1000.0, 2500.0]).unwrap();
        assert_eq!(-src.q_o[q[0].cell], q[0].oil_rate);
    }

    #[test]
    fn speedup_rows() {
        let rows = speedup_report(&[CaseTiming {
            nx: 64,
            ny: 64,
            parameter_count: 10,
            sim_secs: 2.0,
            inference_secs: 2.0,
            training_secs: None,
        }]);
        assert_eq!(rows[0].dofs, 8192);
        assert_eq!(rows[0].speedup, 1.0);
    }

    proptest! {
        #[test]
        fn mape_is_scale_invariant_and_permutation_symmetric(
            y in prop::collection::vec(1.0f64..1000.0, 2..20),
            noise in prop::collection::vec(-50.0f64..50.0, 20),
            c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
            rot in 0usize..20,
        ) {
            let y_hat: Vec<f64> = y.iter().zip(&noise).map(|(a, n)| a + n).collect();
            let base = mape(&y, &y_hat).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let yhs: Vec<f64> = y_hat.iter().map(|v| v * c).collect();
            prop_assert!((mape(&ys, &yhs).unwrap() - base).abs() <= 1e-12 * (1.0 + base));
            let k = rot % y.len();
            let mut yr = y.clone();
            let mut yhr = y_hat.clone();
            yr.rotate_left(k);
            yhr.rotate_left(k);
            prop_assert!((mape(&yr, &yhr).unwrap() - base).abs() <= 1e-12 * (1.0 + base));
            prop_assert_eq!(mape(&y, &y).unwrap(), 0.0);
        }

        #[test]
        fn relative_error_map_inverts(
            r in prop::collection::vec(0.1f64..5000.0, 1..30),
            f in prop::collection::vec(0.5f64..1.5, 30),
        ) {
            let p: Vec<f64> = r.iter().zip(&f).map(|(a, b)| a * b).collect();
            let m = relative_error_map(&p, &r).unwrap();
            for ((pi, ri), mi) in p.iter().zip(&r).zip(&m) {
                prop_assert!((ri * (1.0 + mi) - pi).abs() <= 1e-12 * pi.abs());
            }
        }
    }
}
