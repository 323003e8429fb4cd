use porflow_core::metrics::{extract_well_quantities, ErrorReport};
use porflow_core::presets::{injector, producer, quarter_five_spot};
use porflow_core::sim::water_balance;
use porflow_core::{simulate, ControlSchedule, Discretization, NewtonConfig, ReservoirCase};
use proptest::prelude::*;

/// Immobile connate water only changes through compression: its mass is
/// conserved, so `sw (1 + (c_w + c_r) dp)` stays at `s_wc`. With both
/// compressibilities zero this is the plain `[s_wc, 1 - s_or]` window.
fn assert_bounded(c: &ReservoirCase, states: &[porflow_core::State]) {
    let comp = c.fluid.water.compressibility + c.rock.compressibility;
    let p0 = c.initial.pressure.iter().copied().fold(f64::INFINITY, f64::min);
    for (k, st) in states.iter().enumerate() {
        let p_hi = st.pressure.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = c.relperm.s_wc / (1.0 + comp * (p_hi - p0).max(0.0)) - 1e-6;
        for &s in &st.sw {
            assert!(s >= lo && s <= c.relperm.sw_max() + 1e-6, "sw {s} at level {k}, lower bound {lo}");
        }
    }
}

fn case(n: usize) -> ReservoirCase {
    let mut c = quarter_five_spot(n, n);
    c.wells = vec![injector("I1", 0, 0), producer("P1", n - 1, n - 1)];
    c
}

#[test]
fn converged_steps_meet_tolerance_and_bounds() {
    let c = case(8);
    let disc = Discretization::new(&c).unwrap();
    let sched = ControlSchedule::constant(2.0, 10, &[1200.0, 2400.0]);
    let cfg = NewtonConfig::default();
    let traj = simulate(&c, &sched, &cfg).unwrap();
    for k in 1..=10 {
        let res = disc.residual(&traj.states[k], &traj.states[k - 1], &sched.step(k).unwrap(), 2.0).unwrap();
        assert!(disc.scaled_residual_norm(&res, 2.0) < cfg.residual_tol);
    }
    assert_bounded(&c, &traj.states);
    let wb = water_balance(&disc, &sched, &traj).unwrap();
    assert!(wb.relative_error() < 1e-3, "{wb:?}");
}

#[test]
fn implicit_euler_is_first_order() {
    let c = case(6);
    let total = 16.0;
    let final_state = |dt: f64| {
        let n = (total / dt).round() as usize;
        let sched = ControlSchedule::constant(dt, n, &[1200.0, 2400.0]);
        let cfg = NewtonConfig { residual_tol: 1e-10, ..NewtonConfig::default() };
        simulate(&c, &sched, &cfg).unwrap().states.pop().unwrap()
    };
    let fine = final_state(0.125);
    let err = |dt: f64| {
        let s = final_state(dt);
        s.sw.iter().zip(&fine.sw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(2.0), err(1.0));
    let order = (e1 / e2).log2();
    assert!((order - 1.0).abs() <= 0.3, "observed order {order} ({e1:e}, {e2:e})");
}

#[test]
fn identical_trajectories_compare_to_zero() {
    let c = case(5);
    let sched = ControlSchedule::constant(2.0, 3, &[1000.0, 2450.0]);
    let traj = simulate(&c, &sched, &NewtonConfig::default()).unwrap();
    let r = ErrorReport::compare(&traj.states, &traj.states).unwrap();
    assert_eq!(r.mape_pressure, vec![0.0; 3]);
    assert_eq!(r.mape_saturation, vec![0.0; 3]);
}

#[test]
fn producer_rates_close_the_balance() {
    // with one injector and one producer, produced water equals the water
    // source removed from the producer cell residual
    let c = case(5);
    let disc = Discretization::new(&c).unwrap();
    let sched = ControlSchedule::constant(2.0, 2, &[1000.0, 2450.0]);
    let traj = simulate(&c, &sched, &NewtonConfig::default()).unwrap();
    let q = extract_well_quantities(&disc, &traj.states[2], &[1000.0, 2450.0]).unwrap();
    let src = disc.source_terms(&traj.states[2], &[1000.0, 2450.0]).unwrap();
    assert_eq!(q[0].oil_rate, -src.q_o[q[0].cell]);
    assert_eq!(q[0].water_rate, -src.q_w[q[0].cell]);
    assert!(q[0].oil_rate > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn water_injection_keeps_saturation_bounded(rate in 200.0f64..1500.0, bhp in 2300.0f64..2900.0) {
        let mut c = case(5);
        let sched = ControlSchedule::constant(2.0, 5, &[rate, bhp]);
        let traj = simulate(&c, &sched, &NewtonConfig::default()).unwrap();
        assert_bounded(&c, &traj.states);
        c.fluid.water.compressibility = 0.0;
        c.rock.compressibility = 0.0;
        let traj = simulate(&c, &sched, &NewtonConfig::default()).unwrap();
        for s in &traj.states {
            prop_assert!(s.sw.iter().all(|v| (0.2 - 1e-6..=0.8 + 1e-6).contains(v)));
        }
    }
}
