//! The `simulate`, `train`, `infer`, `compare`, `bench` and `sweep` workflows.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use porflow_core::metrics::{extract_well_quantities, relative_error_map, speedup_report, CaseTiming, ErrorReport, SpeedupRow, WellQuantities};
use porflow_core::sim::simulate_with;
use porflow_core::{ControlSchedule, Discretization, Trajectory};
use porflow_picnn::{infer_trajectory, load_checkpoints, rasterize_controls, save_checkpoints, PicNet, Prediction, Trainer, TrainingRun};

use crate::config::{CaseConfig, PermConfig};
use crate::error::{HarnessError, Result};
use crate::export::{self, ImageEntry, RunManifest, StoredTrajectory};
use crate::suite::gen_control_suite;

pub const REFERENCE_FILE: &str = "reference.pftr";
pub const PREDICTION_FILE: &str = "prediction.pftr";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub max_epochs: Option<usize>,
}

impl CaseConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        self.trainer.seed = self.seed;
        if let Some(sigma) = o.sigma {
            self.trainer.sigma = sigma;
        }
        if let Some(n) = o.max_epochs {
            self.trainer.max_epochs = n;
        }
        self.validate()
    }

    /// Steps exported as fields and error maps.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut s: Vec<usize> = if self.output.snapshots.is_empty() {
            vec![1, n]
        } else {
            self.output.snapshots.iter().copied().filter(|k| (1..=n).contains(k)).collect()
        };
        s.sort_unstable();
        s.dedup();
        s
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn stored(cfg: &CaseConfig, dt: f64, states: &[porflow_core::State]) -> StoredTrajectory {
    StoredTrajectory { nx: cfg.grid.nx, ny: cfg.grid.ny, dt, states: states.to_vec() }
}

fn start_manifest(cfg: &CaseConfig, command: &str, out: &Path) -> Result<RunManifest> {
    ensure_dir(out)?;
    let resolved = cfg.resolved_toml();
    export::write_text(&out.join("resolved.toml"), &resolved)?;
    let mut m = RunManifest::new(command, &resolved, cfg.seed);
    m.files.push("resolved.toml".into());
    Ok(m)
}

fn well_series(disc: &Discretization, schedule: &ControlSchedule, states: &[porflow_core::State]) -> Result<Vec<Vec<WellQuantities>>> {
    (1..states.len())
        .map(|k| Ok(extract_well_quantities(disc, &states[k], &schedule.step(k)?)?))
        .collect()
}

fn field_images(
    cfg: &CaseConfig,
    dir: &Path,
    prefix: &str,
    step: usize,
    fields: [(&str, &[f64]); 2],
    manifest: &mut RunManifest,
) -> Result<()> {
    let (nx, ny) = (cfg.grid.nx, cfg.grid.ny);
    let sub = dir.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let csv = dir.join(format!("{prefix}_{step:04}.csv"));
    export::write_field_csv(&csv, nx, &fields)?;
    manifest.files.push(format!("{sub}/{prefix}_{step:04}.csv"));
    for (name, values) in fields {
        let entry = export::write_field_png(&dir.join(format!("{prefix}_{name}_{step:04}.png")), nx, ny, values)?;
        manifest.images.push(ImageEntry { file: format!("{sub}/{}", entry.file), ..entry });
    }
    Ok(())
}

pub struct SimulateOutput {
    pub disc: Discretization,
    pub schedule: ControlSchedule,
    pub trajectory: Trajectory,
}

/// Runs the Newton simulator on the configured schedule.
pub fn reference_run(cfg: &CaseConfig) -> Result<SimulateOutput> {
    let disc = Discretization::new(&cfg.to_case()?)?;
    let schedule = cfg.schedule();
    let trajectory = simulate_with(&disc, &schedule, &cfg.solver)?;
    Ok(SimulateOutput { disc, schedule, trajectory })
}

pub fn run_simulate(cfg: &CaseConfig) -> Result<SimulateOutput> {
    let out = &cfg.output.dir;
    let mut manifest = start_manifest(cfg, "simulate", out)?;
    let sim = reference_run(cfg)?;
    let traj = &sim.trajectory;
    export::write_trajectory(&out.join(REFERENCE_FILE), &stored(cfg, traj.dt, &traj.states))?;
    export::write_steps_csv(&out.join("steps.csv"), traj.dt, &traj.states)?;
    export::write_newton_csv(&out.join("newton.csv"), &traj.diagnostics)?;
    let secs: Vec<f64> = traj.diagnostics.iter().map(|d| d.wall_clock_secs).collect();
    export::write_timing_csv(&out.join("timing.csv"), &secs)?;
    let wells = well_series(&sim.disc, &sim.schedule, &traj.states)?;
    export::write_wells_csv(&out.join("wells.csv"), &wells, None)?;
    manifest.files.extend([REFERENCE_FILE, "steps.csv", "newton.csv", "timing.csv", "wells.csv"].map(String::from));
    for k in cfg.snapshot_steps() {
        let s = &traj.states[k];
        field_images(cfg, &out.join("fields"), "state", k, [("pressure", &s.pressure), ("sw", &s.sw)], &mut manifest)?;
    }
    manifest.write(out)?;
    Ok(sim)
}

pub struct TrainOutput {
    pub run: TrainingRun,
    pub reference: Trajectory,
    pub report: ErrorReport,
    pub wells: Vec<Vec<WellQuantities>>,
    pub reference_wells: Vec<Vec<WellQuantities>>,
}

/// Trains one network per step, then scores the trained trajectory against
/// the simulator.
pub fn run_train(cfg: &CaseConfig, mut progress: impl FnMut(&porflow_picnn::StepRecord)) -> Result<TrainOutput> {
    let out = &cfg.output.dir;
    let mut manifest = start_manifest(cfg, "train", out)?;
    let sim = reference_run(cfg)?;
    let observed: Option<Vec<Vec<f64>>> = cfg.observe_wbp.then(|| {
        sim.trajectory.states[1..]
            .iter()
            .map(|s| sim.disc.case().producers().map(|(_, w)| s.pressure[sim.disc.case().well_cell(w)]).collect())
            .collect()
    });
    let trainer = Trainer::for_schedule(&sim.disc, cfg.trainer.clone(), &sim.schedule)?;
    let run = trainer.train_all(&sim.schedule, observed.as_deref(), &mut progress)?;
    save_checkpoints(&run.checkpoints, &out.join(CHECKPOINT_DIR))?;

    let dt = sim.schedule.dt;
    export::write_trajectory(&out.join(PREDICTION_FILE), &stored(cfg, dt, &run.states))?;
    export::write_trajectory(&out.join(REFERENCE_FILE), &stored(cfg, dt, &sim.trajectory.states))?;
    export::write_losses_csv(&out.join("losses.csv"), &run.records)?;
    export::write_loss_history_csv(&out.join("loss_history.csv"), &run.loss_histories)?;
    let secs: Vec<f64> = run.records.iter().map(|r| r.wall_clock_secs).collect();
    export::write_timing_csv(&out.join("timing.csv"), &secs)?;
    let report = ErrorReport::compare(&run.states, &sim.trajectory.states)?;
    export::write_mape_csv(&out.join("mape.csv"), dt, &report)?;
    let wells = well_series(&sim.disc, &sim.schedule, &run.states)?;
    let reference_wells = well_series(&sim.disc, &sim.schedule, &sim.trajectory.states)?;
    export::write_wells_csv(&out.join("wells.csv"), &wells, Some(&reference_wells))?;
    manifest.files.extend(
        [CHECKPOINT_DIR, PREDICTION_FILE, REFERENCE_FILE, "losses.csv", "loss_history.csv", "timing.csv", "mape.csv", "wells.csv"]
            .map(String::from),
    );
    manifest.write(out)?;
    Ok(TrainOutput { run, reference: sim.trajectory, report, wells, reference_wells })
}

fn checkpoint_dir(cfg: &CaseConfig, explicit: Option<&Path>) -> PathBuf {
    explicit.map_or_else(|| cfg.output.dir.join(CHECKPOINT_DIR), Path::to_path_buf)
}

/// Replays stored checkpoints on the configured schedule.
pub fn run_infer(cfg: &CaseConfig, checkpoints: Option<&Path>) -> Result<Prediction> {
    let out = &cfg.output.dir;
    let set = load_checkpoints(&checkpoint_dir(cfg, checkpoints), Some(&cfg.trainer.network))?;
    let mut manifest = start_manifest(cfg, "infer", out)?;
    let disc = Discretization::new(&cfg.to_case()?)?;
    let pred = infer_trajectory(&disc, &set, &cfg.schedule())?;
    export::write_trajectory(&out.join(PREDICTION_FILE), &stored(cfg, pred.dt, &pred.states))?;
    export::write_steps_csv(&out.join("steps.csv"), pred.dt, &pred.states)?;
    export::write_timing_csv(&out.join("timing.csv"), &pred.step_secs)?;
    manifest.files.extend([PREDICTION_FILE, "steps.csv", "timing.csv"].map(String::from));
    manifest.write(out)?;
    Ok(pred)
}

/// Scores a predicted trajectory file against a reference one. A missing
/// reference file is produced by running the simulator.
pub fn run_compare(cfg: &CaseConfig, predicted: Option<&Path>, reference: Option<&Path>) -> Result<ErrorReport> {
    let out = &cfg.output.dir;
    let pred_path = predicted.map_or_else(|| out.join(PREDICTION_FILE), Path::to_path_buf);
    let ref_path = reference.map_or_else(|| out.join(REFERENCE_FILE), Path::to_path_buf);
    let pred = export::read_trajectory(&pred_path)?;
    let disc = Discretization::new(&cfg.to_case()?)?;
    let schedule = cfg.schedule();
    let reference = if ref_path.exists() || reference.is_some() {
        export::read_trajectory(&ref_path)?
    } else {
        let traj = simulate_with(&disc, &schedule, &cfg.solver)?;
        let r = stored(cfg, traj.dt, &traj.states);
        export::write_trajectory(&ref_path, &r)?;
        r
    };
    if (pred.nx, pred.ny) != (cfg.grid.nx, cfg.grid.ny) || (reference.nx, reference.ny) != (cfg.grid.nx, cfg.grid.ny) {
        return Err(HarnessError::format(&pred_path, "trajectory grid differs from the configured grid"));
    }
    if pred.states.len() != reference.states.len() || pred.states.len() != schedule.n_steps + 1 {
        return Err(HarnessError::format(&pred_path, "trajectory length differs from the configured schedule"));
    }
    let mut manifest = start_manifest(cfg, "compare", out)?;
    let report = ErrorReport::compare(&pred.states, &reference.states)?;
    export::write_mape_csv(&out.join("mape.csv"), schedule.dt, &report)?;
    let wells = well_series(&disc, &schedule, &pred.states)?;
    let ref_wells = well_series(&disc, &schedule, &reference.states)?;
    export::write_wells_csv(&out.join("wells.csv"), &wells, Some(&ref_wells))?;
    manifest.files.extend(["mape.csv", "wells.csv"].map(String::from));
    for k in cfg.snapshot_steps() {
        let (p, r) = (&pred.states[k], &reference.states[k]);
        let ep = relative_error_map(&p.pressure, &r.pressure)?;
        let es = relative_error_map(&p.sw, &r.sw)?;
        field_images(cfg, &out.join("errors"), "relerr", k, [("pressure", &ep), ("sw", &es)], &mut manifest)?;
    }
    manifest.write(out)?;
    Ok(report)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// The configured case resized to `size x size` with homogeneous
/// permeability and proportionally placed wells.
pub fn bench_config(cfg: &CaseConfig, size: usize, dt: f64, steps: usize) -> CaseConfig {
    let mut c = cfg.clone();
    let mean_md = match &cfg.rock.permeability {
        PermConfig::Uniform { value_md } => *value_md,
        PermConfig::Lognormal { mean_md, .. } => *mean_md,
        PermConfig::File { .. } => {
            let k = cfg.permeability().unwrap_or_default();
            if k.is_empty() { 100.0 } else { k.iter().sum::<f64>() / k.len() as f64 }
        }
    };
    c.rock.permeability = PermConfig::Uniform { value_md: mean_md };
    for w in &mut c.wells {
        w.i = w.i * size / cfg.grid.nx;
        w.j = w.j * size / cfg.grid.ny;
    }
    c.grid.nx = size;
    c.grid.ny = size;
    c.schedule.dt = dt;
    c.schedule.total_time = dt * steps as f64;
    c.schedule.period = Some(c.schedule.total_time);
    for v in c.schedule.controls.values_mut() {
        v.truncate(1);
    }
    c
}

/// Per-step timings of the simulator and of a network forward pass on each
/// benchmark grid. Purely observational.
pub fn run_bench(cfg: &CaseConfig) -> Result<Vec<SpeedupRow>> {
    let out = &cfg.output.dir;
    let mut manifest = start_manifest(cfg, "bench", out)?;
    let net = PicNet::new(cfg.trainer.network)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = net.init_params(&mut rng);
    let b = &cfg.bench;
    let mut timings = Vec::with_capacity(b.sizes.len());
    for (&size, &dt) in b.sizes.iter().zip(&b.dts) {
        let c = bench_config(cfg, size, dt, b.steps);
        let case = c.to_case()?;
        let disc = Discretization::new(&case)?;
        let schedule = c.schedule();
        let mut sim_runs = Vec::with_capacity(b.repeats);
        for _ in 0..b.repeats {
            let traj = simulate_with(&disc, &schedule, &c.solver)?;
            let total: f64 = traj.diagnostics.iter().map(|d| d.wall_clock_secs).sum();
            sim_runs.push(total / traj.diagnostics.len() as f64);
        }
        let controls = schedule.step(1)?;
        let bounds = &cfg.trainer.bounds;
        net.forward::<f32>(&params, &rasterize_controls(&case, &controls, bounds)?.data, size, size)?;
        let mut inf_runs = Vec::with_capacity(b.repeats);
        for _ in 0..b.repeats {
            let t0 = Instant::now();
            let image = rasterize_controls(&case, &controls, bounds)?;
            let outp = net.forward::<f32>(&params, &image.data, size, size)?;
            std::hint::black_box(outp);
            inf_runs.push(t0.elapsed().as_secs_f64());
        }
        timings.push(CaseTiming {
            nx: size,
            ny: size,
            parameter_count: net.n_params(),
            sim_secs: median(sim_runs),
            inference_secs: median(inf_runs),
            training_secs: None,
        });
    }
    let rows = speedup_report(&timings);
    export::write_bench_csv(&out.join("bench.csv"), &rows)?;
    manifest.files.push("bench.csv".into());
    manifest.write(out)?;
    Ok(rows)
}

/// MAPE of every schedule of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEnsemble {
    pub period: f64,
    pub reports: Vec<ErrorReport>,
}

impl SweepEnsemble {
    pub fn mean_pressure(&self) -> f64 {
        self.reports.iter().map(ErrorReport::mean_pressure).sum::<f64>() / self.reports.len().max(1) as f64
    }

    pub fn mean_saturation(&self) -> f64 {
        self.reports.iter().map(ErrorReport::mean_saturation).sum::<f64>() / self.reports.len().max(1) as f64
    }
}

/// Evaluates stored checkpoints on random schedules, one suite per
/// configured period.
pub fn run_sweep(cfg: &CaseConfig, checkpoints: Option<&Path>) -> Result<Vec<SweepEnsemble>> {
    let out = &cfg.output.dir;
    let set = load_checkpoints(&checkpoint_dir(cfg, checkpoints), Some(&cfg.trainer.network))?;
    let mut manifest = start_manifest(cfg, "sweep", out)?;
    let disc = Discretization::new(&cfg.to_case()?)?;
    let (dt, n_steps) = (cfg.schedule.dt, cfg.n_steps());
    let mut summary = csv::Writer::from_path(out.join("sweep.csv"))?;
    summary.write_record(["period_days", "schedule", "mean_mape_pressure", "mean_mape_saturation"])?;
    let mut ensembles = Vec::with_capacity(cfg.sweep.periods.len());
    for &period in &cfg.sweep.periods {
        let suite = cfg.sweep.suite(period, dt, n_steps);
        let mut reports = Vec::with_capacity(suite.n_schedules);
        for (i, schedule) in gen_control_suite(&suite, &disc.case().wells).iter().enumerate() {
            let reference = simulate_with(&disc, schedule, &cfg.solver)?;
            let pred = infer_trajectory(&disc, &set, schedule)?;
            let report = ErrorReport::compare(&pred.states, &reference.states)?;
            let rel = format!("sweep_{period}/schedule_{i:02}_mape.csv");
            export::write_mape_csv(&out.join(&rel), dt, &report)?;
            manifest.files.push(rel);
            summary.write_record([
                period.to_string(),
                i.to_string(),
                report.mean_pressure().to_string(),
                report.mean_saturation().to_string(),
            ])?;
            reports.push(report);
        }
        ensembles.push(SweepEnsemble { period, reports });
    }
    summary.flush().map_err(|e| HarnessError::io(&out.join("sweep.csv"), e))?;
    manifest.files.push("sweep.csv".into());
    manifest.write(out)?;
    Ok(ensembles)
}
