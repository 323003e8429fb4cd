//! Random piecewise-constant control schedules.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use porflow_core::{ControlSchedule, WellSpec};

/// Settings of the `sweep` command: one suite per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_schedules: usize,
    /// Control alteration periods, days.
    pub periods: Vec<f64>,
    /// Injection rate range, STB/day.
    pub rate_range: [f64; 2],
    /// Producer BHP range, psia.
    pub bhp_range: [f64; 2],
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { n_schedules: 10, periods: vec![50.0, 10.0], rate_range: [1000.0, 1500.0], bhp_range: [2300.0, 2500.0], seed: 1 }
    }
}

fn is_multiple(a: f64, b: f64) -> bool {
    let r = a / b;
    r >= 1.0 - 1e-9 && (r - r.round()).abs() <= 1e-9
}

impl SweepConfig {
    pub fn validate(&self, dt: f64) -> Result<(), String> {
        if self.n_schedules == 0 {
            return Err("n_schedules must be at least 1".into());
        }
        if let Some(p) = self.periods.iter().find(|p| !is_multiple(**p, dt)) {
            return Err(format!("period {p} is not a positive multiple of dt = {dt}"));
        }
        for (name, [lo, hi]) in [("rate_range", self.rate_range), ("bhp_range", self.bhp_range)] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(format!("{name} must be an ordered finite pair"));
            }
        }
        Ok(())
    }

    pub fn suite(&self, period: f64, dt: f64, n_steps: usize) -> ControlSuite {
        ControlSuite {
            n_schedules: self.n_schedules,
            rate_range: self.rate_range,
            bhp_range: self.bhp_range,
            period,
            dt,
            n_steps,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSuite {
    pub n_schedules: usize,
    pub rate_range: [f64; 2],
    pub bhp_range: [f64; 2],
    /// Days; a multiple of `dt`.
    pub period: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
}

impl ControlSuite {
    pub fn steps_per_period(&self) -> usize {
        ((self.period / self.dt).round() as usize).max(1)
    }
}

/// Draws every well's value per period uniformly from its range.
///
/// The value a well takes when it changes at step `s` depends only on the
/// seed, the schedule index and `s`, so suites with different periods are
/// paired: schedule `i` at a short period is schedule `i` at a longer period
/// with extra changes inserted.
pub fn gen_control_suite(suite: &ControlSuite, wells: &[WellSpec]) -> Vec<ControlSchedule> {
    let per = suite.steps_per_period();
    let rate = Uniform::new_inclusive(suite.rate_range[0], suite.rate_range[1]);
    let bhp = Uniform::new_inclusive(suite.bhp_range[0], suite.bhp_range[1]);
    (0..suite.n_schedules)
        .map(|i| {
            let draws: Vec<Vec<f64>> = (0..suite.n_steps)
                .step_by(per)
                .map(|start| {
                    let key = suite.seed ^ (start as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    let mut rng = ChaCha8Rng::seed_from_u64(key);
                    rng.set_stream(i as u64);
                    wells.iter().map(|w| if w.is_injector() { rate.sample(&mut rng) } else { bhp.sample(&mut rng) }).collect()
                })
                .collect();
            let values = (0..wells.len()).map(|w| (0..suite.n_steps).map(|k| draws[k / per][w]).collect()).collect();
            ControlSchedule { dt: suite.dt, n_steps: suite.n_steps, values }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use porflow_core::presets::{injector, producer};

    fn wells() -> Vec<WellSpec> {
        vec![injector("I1", 0, 0), injector("I2", 1, 0), producer("P1", 2, 2)]
    }

    fn suite(period: f64) -> ControlSuite {
        SweepConfig::default().suite(period, 2.0, 50)
    }

    fn segments(values: &[f64]) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &v in values {
            match out.last_mut() {
                Some((last, n)) if *last == v => *n += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }

    #[test]
    fn fifty_day_period_gives_two_segments() {
        for s in gen_control_suite(&suite(50.0), &wells()) {
            s.validate(&wells()).unwrap();
            for v in &s.values {
                let seg = segments(v);
                assert_eq!(seg.len(), 2);
                assert!(seg.iter().all(|(_, n)| *n == 25));
            }
        }
    }

    #[test]
    fn full_period_is_constant() {
        for s in gen_control_suite(&suite(100.0), &wells()) {
            assert!(s.values.iter().all(|v| segments(v).len() == 1));
        }
    }

    #[test]
    fn values_respect_ranges_and_seed() {
        let a = gen_control_suite(&suite(10.0), &wells());
        assert_eq!(a, gen_control_suite(&suite(10.0), &wells()));
        assert_eq!(a.len(), 10);
        for s in &a {
            assert!(s.values[0].iter().all(|v| (1000.0..=1500.0).contains(v)));
            assert!(s.values[2].iter().all(|v| (2300.0..=2500.0).contains(v)));
            assert_eq!(segments(&s.values[0]).len(), 5 * 2);
        }
        let mut other = suite(10.0);
        other.seed = 2;
        assert_ne!(a, gen_control_suite(&other, &wells()));
    }

    #[test]
    fn shorter_periods_refine_longer_ones() {
        let slow = gen_control_suite(&suite(50.0), &wells());
        let fast = gen_control_suite(&suite(10.0), &wells());
        for (a, b) in slow.iter().zip(&fast) {
            for (va, vb) in a.values.iter().zip(&b.values) {
                assert_eq!(va[0], vb[0]);
                assert_eq!(va[25], vb[25]);
                assert_ne!(va[5], vb[5]);
            }
        }
        assert_ne!(slow[0].values, slow[1].values);
    }

    #[test]
    fn period_must_divide() {
        let mut cfg = SweepConfig::default();
        assert!(cfg.validate(2.0).is_ok());
        cfg.periods = vec![5.0];
        assert!(cfg.validate(2.0).is_err());
    }
}
