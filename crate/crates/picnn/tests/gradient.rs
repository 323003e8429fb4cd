use porflow_core::presets::{injector, producer, quarter_five_spot};
use porflow_core::{ControlSchedule, Discretization, ReservoirCase};
use porflow_picnn::{NetworkSpec, Trainer, TrainerConfig};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn case() -> ReservoirCase {
    let mut c = quarter_five_spot(4, 4);
    c.rock.perm = (0..16).map(|v| 40.0 + 25.0 * ((v * 3 % 5) as f64)).collect();
    c.wells = vec![injector("I1", 0, 0), producer("P1", 3, 3)];
    c
}

/// Central differences of the training loss against the backpropagated
/// gradient, for 20 parameters drawn at random.
fn gradient_gaps(observe: bool, seed: u64) -> Vec<(usize, f64, f64)> {
    let c = case();
    let disc = Discretization::new(&c).unwrap();
    let controls = [1100.0, 2400.0];
    let sched = ControlSchedule::constant(2.0, 1, &controls);
    let cfg = TrainerConfig { network: NetworkSpec { base_channels: 2, ..NetworkSpec::default() }, seed, ..TrainerConfig::default() };
    let trainer = Trainer::for_schedule(&disc, cfg, &sched).unwrap();
    let params: Vec<f64> = trainer.initial_params().iter().map(|&v| v as f64).collect();
    let obs = [2950.0];
    let obs = observe.then_some(&obs[..]);
    let (_, grad) = trainer.loss_and_gradient(1, &params, &controls, &c.initial, 2.0, obs).unwrap();
    let loss = |p: &[f64]| trainer.loss_and_gradient(1, p, &controls, &c.initial, 2.0, obs).unwrap().0.loss;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    sample(&mut rng, params.len(), 20)
        .into_iter()
        .map(|i| {
            let h = 1e-6 * params[i].abs().max(1.0);
            let mut p = params.clone();
            p[i] += h;
            let up = loss(&p);
            p[i] -= 2.0 * h;
            let down = loss(&p);
            (i, (up - down) / (2.0 * h), grad[i])
        })
        .collect()
}

fn assert_close(gaps: &[(usize, f64, f64)]) {
    let scale = gaps.iter().fold(0.0f64, |m, g| m.max(g.2.abs()));
    for &(i, fd, an) in gaps {
        let tol = 1e-3 * an.abs().max(1e-3 * scale);
        assert!((fd - an).abs() <= tol, "parameter {i}: finite difference {fd:e}, backprop {an:e}");
    }
}

#[test]
fn physics_gradient_matches_finite_differences() {
    for seed in [0, 1] {
        assert_close(&gradient_gaps(false, seed));
    }
}

#[test]
fn regularised_gradient_matches_finite_differences() {
    assert_close(&gradient_gaps(true, 2));
}
