use porflow_core::metrics::ErrorReport;
use porflow_core::presets::{injector, producer, quarter_five_spot};
use porflow_core::{simulate, ControlSchedule, Discretization, NewtonConfig, ReservoirCase};
use porflow_picnn::{infer_trajectory, load_checkpoints, save_checkpoints, NetworkSpec, Trainer, TrainerConfig};

fn case() -> ReservoirCase {
    let mut c = quarter_five_spot(6, 6);
    c.wells = vec![injector("I1", 0, 0), producer("P1", 5, 5)];
    c
}

fn config(max_epochs: usize) -> TrainerConfig {
    TrainerConfig { network: NetworkSpec { base_channels: 4, ..NetworkSpec::default() }, max_epochs, seed: 9, p_above_initial: 1500.0, ..TrainerConfig::default() }
}

#[test]
fn label_free_training_reduces_the_residual() {
    let c = case();
    let disc = Discretization::new(&c).unwrap();
    let sched = ControlSchedule::constant(2.0, 2, &[1000.0, 2400.0]);
    let trainer = Trainer::for_schedule(&disc, TrainerConfig { max_epochs: 1500, lr_decay: 0.9, network: NetworkSpec { base_channels: 8, ..NetworkSpec::default() }, ..config(0) }, &sched).unwrap();
    let run = trainer.train_all(&sched, None, |_| {}).unwrap();
    for h in &run.loss_histories {
        assert!(h.last().unwrap() < &(0.2 * h[0]), "loss went from {} to {}", h[0], h.last().unwrap());
    }
    assert!(run.records.iter().all(|r| r.data_loss == 0.0));
    let reference = simulate(&c, &sched, &NewtonConfig::default()).unwrap();
    let report = ErrorReport::compare(&run.states, &reference.states).unwrap();
    assert!(report.mape_pressure.iter().all(|m| *m < 0.05), "{report:?}");
}

#[test]
fn replay_from_disk_is_bitwise() {
    let c = case();
    let disc = Discretization::new(&c).unwrap();
    let sched = ControlSchedule::constant(2.0, 3, &[1200.0, 2450.0]);
    let trainer = Trainer::for_schedule(&disc, config(20), &sched).unwrap();
    let run = trainer.train_all(&sched, None, |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoints(&run.checkpoints, dir.path()).unwrap();
    let set = load_checkpoints(dir.path(), Some(&config(20).network)).unwrap();
    assert_eq!(set, run.checkpoints);
    let pred = infer_trajectory(&disc, &set, &sched).unwrap();
    assert_eq!(pred.states, run.states);

    // other controls still give states inside the scaling window
    let other = ControlSchedule::constant(2.0, 3, &[1500.0, 2300.0]);
    let pred = infer_trajectory(&disc, &set, &other).unwrap();
    for s in &pred.states[1..] {
        assert!(s.sw.iter().all(|v| (0.2..=0.8).contains(v)));
        assert!(s.pressure.iter().all(|p| (set.scaling.p_min..=set.scaling.p_max).contains(p)));
    }
}

#[test]
fn training_is_deterministic() {
    let c = case();
    let disc = Discretization::new(&c).unwrap();
    let sched = ControlSchedule::constant(2.0, 2, &[1000.0, 2400.0]);
    let trainer = Trainer::for_schedule(&disc, config(15), &sched).unwrap();
    let a = trainer.train_all(&sched, None, |_| {}).unwrap();
    let b = trainer.train_all(&sched, None, |_| {}).unwrap();
    assert_eq!(a.checkpoints, b.checkpoints);
    assert_eq!(a.loss_histories, b.loss_histories);
}
