//! Residual-based and observation-based training losses.

use porflow_core::{Discretization, ReservoirCase, State};

use crate::error::{Error, Result};

#[inline]
fn huber(d: f64, beta: f64) -> f64 {
    let a = d.abs();
    if a < beta {
        0.5 * d * d / beta
    } else {
        a - 0.5 * beta
    }
}

#[inline]
fn huber_grad(d: f64, beta: f64) -> f64 {
    if d.abs() < beta {
        d / beta
    } else {
        d.signum()
    }
}

/// Mean smooth-L1 distance of `values` to zero.
pub fn smooth_l1(values: &[f64], beta: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|&d| huber(d, beta)).sum::<f64>() / values.len() as f64
}

/// Elementwise derivative of [`smooth_l1`] (includes the `1/N` factor).
pub fn smooth_l1_grad(values: &[f64], beta: f64) -> Vec<f64> {
    let n = values.len().max(1) as f64;
    values.iter().map(|&d| huber_grad(d, beta) / n).collect()
}

/// Physics loss and its gradient with respect to the predicted state.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsLoss {
    /// `L_s(r_o) + L_s(r_w)`, each a mean over cells.
    pub value: f64,
    pub d_pressure: Vec<f64>,
    pub d_sw: Vec<f64>,
}

pub fn physics_loss(
    disc: &Discretization,
    state_nn: &State,
    state_km1: &State,
    controls: &[f64],
    dt: f64,
    beta: f64,
) -> Result<PhysicsLoss> {
    let (res, jac) = disc.residual_and_jacobian(state_nn, state_km1, controls, dt)?;
    let value = smooth_l1(&res.r_o, beta) + smooth_l1(&res.r_w, beta);
    let go = smooth_l1_grad(&res.r_o, beta);
    let gw = smooth_l1_grad(&res.r_w, beta);
    let g: Vec<f64> = go.iter().zip(&gw).flat_map(|(a, b)| [*a, *b]).collect();
    let dx = jac.transpose_mul_vec(&g);
    Ok(PhysicsLoss {
        value,
        d_pressure: dx.iter().step_by(2).copied().collect(),
        d_sw: dx.iter().skip(1).step_by(2).copied().collect(),
    })
}

/// Value-only physics loss.
pub fn physics_loss_value(
    disc: &Discretization,
    state_nn: &State,
    state_km1: &State,
    controls: &[f64],
    dt: f64,
    beta: f64,
) -> Result<f64> {
    let res = disc.residual(state_nn, state_km1, controls, dt)?;
    Ok(smooth_l1(&res.r_o, beta) + smooth_l1(&res.r_w, beta))
}

/// Mean absolute WBP error over producers and its gradient on the pressure field.
#[derive(Debug, Clone, PartialEq)]
pub struct DataLoss {
    pub value: f64,
    pub d_pressure: Vec<f64>,
}

/// `observed[n]` is the WBP of the `n`-th producer in well order.
pub fn data_loss(case: &ReservoirCase, state: &State, observed: &[f64], step: usize) -> Result<DataLoss> {
    let producers: Vec<_> = case.producers().collect();
    let mut d_pressure = vec![0.0; state.pressure.len()];
    if producers.is_empty() {
        return Ok(DataLoss { value: 0.0, d_pressure });
    }
    let n = producers.len() as f64;
    let mut value = 0.0;
    for (k, (_, well)) in producers.iter().enumerate() {
        let obs = observed
            .get(k)
            .copied()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::MissingObservation { step, well: well.name.clone() })?;
        let cell = case.well_cell(well);
        let diff = state.pressure[cell] - obs;
        value += diff.abs() / n;
        d_pressure[cell] += diff.signum() / n;
    }
    Ok(DataLoss { value, d_pressure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use porflow_core::presets;
    use proptest::prelude::*;

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(&[0.0], 10.0), 0.0);
        assert_eq!(smooth_l1(&[10.0], 10.0), 5.0);
        assert_eq!(smooth_l1(&[20.0], 10.0), 15.0);
        assert_eq!(smooth_l1(&[-20.0, 0.0], 10.0), 7.5);
    }

    #[test]
    fn smooth_l1_is_c1_at_threshold() {
        let beta: f64 = 10.0;
        let below = 0.5 * beta * beta / beta;
        let above = beta - 0.5 * beta;
        assert!((below - above).abs() <= 1e-12);
        assert!((beta / beta - 1.0f64).abs() <= 1e-12);
        let eps = 1e-9;
        let l = huber(beta - eps, beta);
        let r = huber(beta + eps, beta);
        assert!((l - r).abs() < 3e-9);
        assert!((huber_grad(beta - eps, beta) - huber_grad(beta + eps, beta)).abs() < 1e-9);
    }

    fn two_producer_case() -> ReservoirCase {
        let mut case = presets::quarter_five_spot(4, 4);
        case.wells = vec![presets::producer("P1", 0, 0), presets::injector("I1", 1, 1), presets::producer("P2", 3, 3)];
        case
    }

    #[test]
    fn data_loss_examples() {
        let case = two_producer_case();
        let state = case.initial.clone();
        assert_eq!(data_loss(&case, &state, &[3000.0, 3000.0], 1).unwrap().value, 0.0);
        let dl = data_loss(&case, &state, &[2960.0, 2940.0], 1).unwrap();
        assert_eq!(dl.value, 50.0);
        assert_eq!(dl.d_pressure[0], 0.5);
        assert!(matches!(data_loss(&case, &state, &[2960.0], 4), Err(Error::MissingObservation { step: 4, .. })));
        let mut single = presets::quarter_five_spot(4, 4);
        single.wells.retain(|w| w.is_producer());
        assert_eq!(data_loss(&single, &state, &[3012.5], 1).unwrap().value, 12.5);
    }

    proptest! {
        #[test]
        fn split_loss_relation(r_o in prop::collection::vec(-40.0f64..40.0, 1..30), r_w_seed in prop::collection::vec(-40.0f64..40.0, 30)) {
            let beta = 10.0;
            let n = r_o.len();
            let r_w = &r_w_seed[..n];
            let split = smooth_l1(&r_o, beta) + smooth_l1(r_w, beta);
            let mut cat = r_o.clone();
            cat.extend_from_slice(r_w);
            // with mean reduction over equal-length halves the split form is twice the joint mean
            prop_assert!((split - 2.0 * smooth_l1(&cat, beta)).abs() <= 1e-12 * (1.0 + split));
            let sum_split = n as f64 * split;
            let sum_cat = cat.len() as f64 * smooth_l1(&cat, beta);
            prop_assert!((sum_split - sum_cat).abs() <= 1e-9 * (1.0 + sum_cat));
        }

        #[test]
        fn smooth_l1_grad_matches_fd(d in -50.0f64..50.0) {
            prop_assume!((d.abs() - 10.0).abs() > 1e-3);
            let h = 1e-6;
            let fd = (huber(d + h, 10.0) - huber(d - h, 10.0)) / (2.0 * h);
            prop_assert!((fd - huber_grad(d, 10.0)).abs() < 1e-6);
        }
    }
}
