//! Per-timestep training with weight transfer, and sequential inference.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use porflow_core::{ControlSchedule, Discretization, State};

use crate::adam::Adam;
use crate::checkpoint::{CheckpointSet, StepCheckpoint};
use crate::error::{Error, Result};
use crate::input::{rasterize_controls, ControlBounds, ScalingParams};
use crate::loss::{data_loss, physics_loss};
use crate::net::{NetworkSpec, PicNet, Tape};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub network: NetworkSpec,
    pub lr0: f64,
    pub lr_decay: f64,
    /// Epochs between learning-rate decays.
    pub decay_every: usize,
    pub smooth_l1_beta: f64,
    /// Target loss; training of a step stops once the loss reaches it.
    pub sigma: f64,
    pub max_epochs: usize,
    /// Physics loss weight.
    pub alpha_w: f64,
    /// Data loss weight.
    pub beta_w: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub bounds: ControlBounds,
    /// Margin of `p_min` below the lowest scheduled BHP, psi.
    pub p_below_bhp: f64,
    /// Margin of `p_max` above the initial pressure, psi.
    pub p_above_initial: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            network: NetworkSpec::default(),
            lr0: 0.01,
            lr_decay: 0.995,
            decay_every: 100,
            smooth_l1_beta: 10.0,
            sigma: 0.05,
            max_epochs: 2000,
            alpha_w: 1.0,
            beta_w: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            bounds: ControlBounds::default(),
            p_below_bhp: 200.0,
            p_above_initial: 500.0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.bounds.validate()?;
        let positive = [
            ("lr0", self.lr0),
            ("lr_decay", self.lr_decay),
            ("smooth_l1_beta", self.smooth_l1_beta),
            ("sigma", self.sigma),
            ("alpha_w", self.alpha_w),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.beta_w < 0.0 || !self.beta_w.is_finite() {
            return Err(Error::invalid("beta_w", "must be finite and non-negative"));
        }
        if self.decay_every == 0 {
            return Err(Error::invalid("decay_every", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("adam betas", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

/// Loss terms and predicted state at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub physics_loss: f64,
    pub data_loss: f64,
    pub state: State,
}

/// Outcome of training one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub params: Vec<f32>,
    /// Prediction of the final weights.
    pub state: State,
    /// Optimiser steps taken.
    pub epochs_used: usize,
    pub final_loss: f64,
    pub physics_loss: f64,
    pub data_loss: f64,
    pub loss_history: Vec<f64>,
}

/// Per-step summary written alongside checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epochs_used: usize,
    pub final_loss: f64,
    pub physics_loss: f64,
    pub data_loss: f64,
    pub wall_clock_secs: f64,
}

/// Result of [`Trainer::train_all`].
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub checkpoints: CheckpointSet,
    /// `states[0]` is the initial condition, `states[k]` the prediction of step `k`.
    pub states: Vec<State>,
    pub records: Vec<StepRecord>,
    pub loss_histories: Vec<Vec<f64>>,
}

pub struct Trainer<'a> {
    disc: &'a Discretization,
    net: PicNet,
    cfg: TrainerConfig,
    scaling: ScalingParams,
}

impl<'a> Trainer<'a> {
    pub fn new(disc: &'a Discretization, cfg: TrainerConfig, scaling: ScalingParams) -> Result<Self> {
        cfg.validate()?;
        scaling.validate()?;
        let net = PicNet::new(cfg.network)?;
        Ok(Trainer { disc, net, cfg, scaling })
    }

    /// Trainer with scaling derived from the schedule and the configured margins.
    pub fn for_schedule(disc: &'a Discretization, cfg: TrainerConfig, schedule: &ControlSchedule) -> Result<Self> {
        let scaling = ScalingParams::for_case(disc.case(), schedule, cfg.p_below_bhp, cfg.p_above_initial)?;
        Self::new(disc, cfg, scaling)
    }

    pub fn net(&self) -> &PicNet {
        &self.net
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn scaling(&self) -> &ScalingParams {
        &self.scaling
    }

    /// Fresh Kaiming-initialised weights from the configured seed.
    pub fn initial_params(&self) -> Vec<f32> {
        self.net.init_params(&mut ChaCha8Rng::seed_from_u64(self.cfg.seed))
    }

    fn image(&self, controls: &[f64]) -> Result<Vec<f32>> {
        Ok(rasterize_controls(self.disc.case(), controls, &self.cfg.bounds)?.data)
    }

    fn dims(&self) -> (usize, usize) {
        (self.disc.case().grid.ny, self.disc.case().grid.nx)
    }

    fn to_state(&self, out: &[Vec<f32>; 2]) -> State {
        let xp: Vec<f64> = out[0].iter().map(|&v| v as f64).collect();
        let xs: Vec<f64> = out[1].iter().map(|&v| v as f64).collect();
        self.scaling.to_state(&xp, &xs)
    }

    /// Network prediction for one set of controls.
    pub fn predict(&self, params: &[f32], controls: &[f64]) -> Result<State> {
        let (h, w) = self.dims();
        let out = self.net.forward(params, &self.image(controls)?, h, w)?;
        Ok(self.to_state(&out))
    }

    /// Forward pass, loss and the loss gradient with respect to the two
    /// network outputs.
    #[allow(clippy::too_many_arguments)]
    fn evaluate<T: Real>(
        &self,
        k: usize,
        params: &[T],
        image: &[T],
        state_km1: &State,
        controls: &[f64],
        dt: f64,
        observed_wbp: Option<&[f64]>,
    ) -> Result<(Evaluation, Tape<T>, [Vec<T>; 2])> {
        let (h, w) = self.dims();
        let (out, tape) = self.net.forward_train(params, image, h, w)?;
        let xp: Vec<f64> = out[0].iter().map(|v| v.f64()).collect();
        let xs: Vec<f64> = out[1].iter().map(|v| v.f64()).collect();
        let state = self.scaling.to_state(&xp, &xs);
        let phys = physics_loss(self.disc, &state, state_km1, controls, dt, self.cfg.smooth_l1_beta)?;
        let data = match observed_wbp {
            Some(obs) if self.cfg.beta_w > 0.0 => Some(data_loss(self.disc.case(), &state, obs, k)?),
            _ => None,
        };
        let data_value = data.as_ref().map_or(0.0, |d| d.value);
        let loss = self.cfg.alpha_w * phys.value + self.cfg.beta_w * data_value;
        let mut dp: Vec<f64> = phys.d_pressure.iter().map(|g| self.cfg.alpha_w * g).collect();
        if let Some(d) = &data {
            for (a, b) in dp.iter_mut().zip(&d.d_pressure) {
                *a += self.cfg.beta_w * b;
            }
        }
        let span_p = self.scaling.pressure_span();
        let span_s = self.scaling.saturation_span();
        let d_xp = dp.iter().map(|g| T::of(g * span_p)).collect();
        let d_xs = phys.d_sw.iter().map(|g| T::of(self.cfg.alpha_w * g * span_s)).collect();
        let eval = Evaluation { loss, physics_loss: phys.value, data_loss: data_value, state };
        Ok((eval, tape, [d_xp, d_xs]))
    }

    /// Weighted loss of step `k` at `params` and its gradient with respect to
    /// the parameters. Runs in `f64` for verification as well as `f32`.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_and_gradient<T: Real>(
        &self,
        k: usize,
        params: &[T],
        controls: &[f64],
        state_km1: &State,
        dt: f64,
        observed_wbp: Option<&[f64]>,
    ) -> Result<(Evaluation, Vec<T>)> {
        let image: Vec<T> = self.image(controls)?.iter().map(|&v| T::of(v as f64)).collect();
        let (eval, tape, d) = self.evaluate(k, params, &image, state_km1, controls, dt, observed_wbp)?;
        let grad = self.net.backward(params, &tape, [&d[0], &d[1]])?;
        Ok((eval, grad))
    }

    /// Minimises the weighted loss for step `k` starting from `theta_init`.
    /// The stopping test precedes every optimiser step.
    pub fn train_timestep(
        &self,
        k: usize,
        theta_init: Vec<f32>,
        state_km1: &State,
        controls: &[f64],
        dt: f64,
        observed_wbp: Option<&[f64]>,
    ) -> Result<StepResult> {
        if theta_init.len() != self.net.n_params() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.net.n_params()),
                found: format!("{}", theta_init.len()),
            });
        }
        let image = self.image(controls)?;
        let mut params = theta_init;
        let mut opt = Adam::new(params.len(), self.cfg.adam_beta1, self.cfg.adam_beta2, self.cfg.adam_eps);
        let mut history = Vec::new();
        let mut epoch = 0;
        loop {
            let (eval, tape, d) = self.evaluate(k, &params, &image, state_km1, controls, dt, observed_wbp)?;
            if !eval.loss.is_finite() {
                return Err(Error::DivergedTraining { step: k, epoch, loss: eval.loss });
            }
            history.push(eval.loss);
            if eval.loss <= self.cfg.sigma || epoch >= self.cfg.max_epochs {
                return Ok(StepResult {
                    params,
                    state: eval.state,
                    epochs_used: epoch,
                    final_loss: eval.loss,
                    physics_loss: eval.physics_loss,
                    data_loss: eval.data_loss,
                    loss_history: history,
                });
            }
            let grad = self.net.backward(&params, &tape, [&d[0], &d[1]])?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::DivergedTraining { step: k, epoch, loss: f64::NAN });
            }
            opt.step(&mut params, &grad, self.cfg.learning_rate(epoch));
            epoch += 1;
        }
    }

    /// Trains steps `1..=n` in order; step `k > 1` starts from the weights of
    /// step `k - 1` and uses its prediction as the previous state.
    /// `observed_wbp[k - 1]` holds the producer WBPs of step `k`.
    pub fn train_all(
        &self,
        schedule: &ControlSchedule,
        observed_wbp: Option<&[Vec<f64>]>,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<TrainingRun> {
        schedule.validate(&self.disc.case().wells)?;
        self.scaling.check_schedule(self.disc.case(), schedule)?;
        let mut states = vec![self.disc.case().initial.clone()];
        let mut steps = Vec::with_capacity(schedule.n_steps);
        let mut records = Vec::with_capacity(schedule.n_steps);
        let mut histories = Vec::with_capacity(schedule.n_steps);
        let mut theta = self.initial_params();
        for k in 1..=schedule.n_steps {
            let controls = schedule.step(k)?;
            let obs = match observed_wbp {
                Some(all) => Some(
                    all.get(k - 1)
                        .map(|v| v.as_slice())
                        .ok_or_else(|| Error::MissingObservation { step: k, well: "*".into() })?,
                ),
                None => None,
            };
            let t0 = Instant::now();
            let res = self.train_timestep(k, theta, states.last().expect("initial state"), &controls, schedule.dt, obs)?;
            let record = StepRecord {
                step: k,
                epochs_used: res.epochs_used,
                final_loss: res.final_loss,
                physics_loss: res.physics_loss,
                data_loss: res.data_loss,
                wall_clock_secs: t0.elapsed().as_secs_f64(),
            };
            on_step(&record);
            records.push(record);
            histories.push(res.loss_history);
            steps.push(StepCheckpoint {
                step: k,
                params: res.params.clone(),
                final_loss: res.final_loss,
                epochs_used: res.epochs_used,
            });
            states.push(res.state);
            theta = res.params;
        }
        let checkpoints = CheckpointSet::new(&self.net, self.scaling, self.cfg.bounds, steps);
        Ok(TrainingRun { checkpoints, states, records, loss_histories: histories })
    }
}

/// Predicted trajectory with per-step forward-pass timings.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub dt: f64,
    pub states: Vec<State>,
    pub step_secs: Vec<f64>,
}

/// Sequential forward passes with the per-step weights of `set`.
pub fn infer_trajectory(disc: &Discretization, set: &CheckpointSet, schedule: &ControlSchedule) -> Result<Prediction> {
    set.check_hash()?;
    schedule.validate(&disc.case().wells)?;
    let net = PicNet::new(set.spec)?;
    let case = disc.case();
    let (h, w) = (case.grid.ny, case.grid.nx);
    let mut states = vec![case.initial.clone()];
    let mut step_secs = Vec::with_capacity(schedule.n_steps);
    for k in 1..=schedule.n_steps {
        let ckpt = set.step(k).ok_or(Error::MissingCheckpoint(k))?;
        let controls = schedule.step(k)?;
        let t0 = Instant::now();
        let image = rasterize_controls(case, &controls, &set.bounds)?;
        let out = net.forward(&ckpt.params, &image.data, h, w)?;
        let xp: Vec<f64> = out[0].iter().map(|&v| v as f64).collect();
        let xs: Vec<f64> = out[1].iter().map(|&v| v as f64).collect();
        states.push(set.scaling.to_state(&xp, &xs));
        step_secs.push(t0.elapsed().as_secs_f64());
    }
    Ok(Prediction { dt: schedule.dt, states, step_secs })
}
