//! Fully implicit reference simulator: Newton-Raphson on the finite-volume
//! residual, one backward-Euler step at a time.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvm::{Discretization, ResidualBundle};
use crate::jacobian::{solve_linear, BlockJacobian};
use crate::model::{ControlSchedule, ReservoirCase, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    FiniteDifference,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// Threshold on `max |r| dt / (V φ)`.
    pub residual_tol: f64,
    pub max_newton_iters: usize,
    pub jacobian_mode: JacobianMode,
    /// Relative residual required from the linear solve.
    pub linear_solver_tol: f64,
    /// Largest saturation change allowed per Newton update.
    pub damping: f64,
    /// Number of times a failing step is retried with `dt` halved.
    pub max_step_cuts: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            residual_tol: 1e-6,
            max_newton_iters: 25,
            jacobian_mode: JacobianMode::FiniteDifference,
            linear_solver_tol: 1e-9,
            damping: 0.2,
            max_step_cuts: 4,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) || self.max_newton_iters == 0 || !(self.damping > 0.0) {
            return Err(Error::invalid(
                "newton config",
                "residual_tol and damping must be positive, max_newton_iters at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Newton iterations summed over all sub-steps.
    pub newton_iterations: usize,
    /// Scaled residual norm before each update (last sub-step only).
    pub residual_history: Vec<f64>,
    pub step_cuts: usize,
    pub wall_clock_secs: f64,
    /// Producers evaluated with block pressure below BHP.
    pub crossflow: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    /// `states[0]` is the initial condition; `states[k]` the end of step `k`.
    pub states: Vec<State>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn time(&self, level: usize) -> f64 {
        self.dt * level as f64
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

fn interleave(res: &ResidualBundle) -> Vec<f64> {
    res.r_o.iter().zip(&res.r_w).flat_map(|(o, w)| [-o, -w]).collect()
}

fn evaluate(
    disc: &Discretization,
    x: &State,
    prev: &State,
    controls: &[f64],
    dt: f64,
    mode: JacobianMode,
) -> Result<(ResidualBundle, BlockJacobian)> {
    match mode {
        JacobianMode::FiniteDifference => disc.fd_jacobian(x, prev, controls, dt),
        JacobianMode::Analytic => disc.residual_and_jacobian(x, prev, controls, dt),
    }
}

/// Residual and Jacobian at `state_k` in the chosen mode.
pub fn assemble_jacobian(
    disc: &Discretization,
    state_k: &State,
    state_km1: &State,
    controls: &[f64],
    dt: f64,
    mode: JacobianMode,
) -> Result<BlockJacobian> {
    evaluate(disc, state_k, state_km1, controls, dt, mode).map(|(_, j)| j)
}

struct SubstepOutcome {
    state: State,
    iterations: usize,
    history: Vec<f64>,
}

fn newton_substep(
    disc: &Discretization,
    prev: &State,
    controls: &[f64],
    dt: f64,
    cfg: &NewtonConfig,
) -> std::result::Result<SubstepOutcome, (Error, usize)> {
    let mut x = prev.clone();
    let mut history = Vec::new();
    for it in 0..=cfg.max_newton_iters {
        let (res, jac) = match evaluate(disc, &x, prev, controls, dt, cfg.jacobian_mode) {
            Ok(v) => v,
            Err(e) => return Err((e, it)),
        };
        let norm = disc.scaled_residual_norm(&res, dt);
        history.push(norm);
        if norm < cfg.residual_tol {
            return Ok(SubstepOutcome { state: x, iterations: it, history });
        }
        if it == cfg.max_newton_iters || !norm.is_finite() {
            return Err((Error::NonConvergence { step: 0, cuts: 0, residual: norm }, it));
        }
        let dx = solve_linear(&jac, &interleave(&res), cfg.linear_solver_tol).map_err(|e| (e, it))?;
        let max_ds = dx.iter().skip(1).step_by(2).fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if max_ds > cfg.damping { cfg.damping / max_ds } else { 1.0 };
        for c in 0..x.n_cells() {
            x.pressure[c] += scale * dx[2 * c];
            x.sw[c] = (x.sw[c] + scale * dx[2 * c + 1]).clamp(0.0, 1.0);
        }
    }
    unreachable!("loop returns on its final iteration")
}

/// Advances one step of length `dt`. On failure the step is retried as
/// 2, 4, ... equal sub-steps, up to `cfg.max_step_cuts` times.
pub fn newton_solve_timestep(
    disc: &Discretization,
    state_km1: &State,
    controls: &[f64],
    dt: f64,
    cfg: &NewtonConfig,
) -> Result<(State, StepDiagnostics)> {
    cfg.validate()?;
    state_km1.check_dims(disc.n_cells())?;
    let start = Instant::now();
    let mut total_iters = 0;
    let mut last_err = None;
    for cuts in 0..=cfg.max_step_cuts {
        let n_sub = 1usize << cuts;
        let sub_dt = dt / n_sub as f64;
        let mut x = state_km1.clone();
        let mut history = Vec::new();
        let mut failed = false;
        for _ in 0..n_sub {
            match newton_substep(disc, &x, controls, sub_dt, cfg) {
                Ok(out) => {
                    total_iters += out.iterations;
                    x = out.state;
                    history = out.history;
                }
                Err((e, iters)) => {
                    total_iters += iters;
                    last_err = Some(e);
                    failed = true;
                    break;
                }
            }
        }
        if !failed {
            let crossflow = disc.source_terms(&x, controls)?.crossflow;
            let diag = StepDiagnostics {
                step: 0,
                newton_iterations: total_iters,
                residual_history: history,
                step_cuts: cuts,
                wall_clock_secs: start.elapsed().as_secs_f64(),
                crossflow,
            };
            return Ok((x, diag));
        }
    }
    match last_err {
        Some(Error::NonConvergence { residual, .. }) => {
            Err(Error::NonConvergence { step: 0, cuts: cfg.max_step_cuts, residual })
        }
        Some(e) => Err(e),
        None => unreachable!("a failed attempt records its error"),
    }
}

/// Runs the whole schedule from the case's initial state.
pub fn simulate(case: &ReservoirCase, schedule: &ControlSchedule, cfg: &NewtonConfig) -> Result<Trajectory> {
    let disc = Discretization::new(case)?;
    simulate_with(&disc, schedule, cfg)
}

pub fn simulate_with(disc: &Discretization, schedule: &ControlSchedule, cfg: &NewtonConfig) -> Result<Trajectory> {
    let case = disc.case();
    schedule.validate(&case.wells)?;
    if schedule.n_steps == 0 {
        return Err(Error::invalid("schedule", "at least one step is required"));
    }
    let mut states = Vec::with_capacity(schedule.n_steps + 1);
    let mut diagnostics = Vec::with_capacity(schedule.n_steps);
    states.push(case.initial.clone());
    for k in 1..=schedule.n_steps {
        let controls = schedule.step(k)?;
        let prev = states.last().expect("initial state pushed");
        let (next, mut diag) = newton_solve_timestep(disc, prev, &controls, schedule.dt, cfg).map_err(|e| match e {
            Error::NonConvergence { cuts, residual, .. } => Error::NonConvergence { step: k, cuts, residual },
            other => Error::StepFailed { step: k, source: Box::new(other) },
        })?;
        diag.step = k;
        states.push(next);
        diagnostics.push(diag);
    }
    Ok(Trajectory { dt: schedule.dt, states, diagnostics })
}

/// Cumulative water volumes over a trajectory, STB.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WaterBalance {
    pub injected: f64,
    pub produced: f64,
    /// Change in water in place measured by the accumulation operator,
    /// `Σ_k Σ_cells (A_wp ΔP + A_ws ΔSw)`, which carries the compressibility terms.
    pub in_place_change: f64,
}

impl WaterBalance {
    /// `|injected - produced - in_place_change| / max(injected, produced)`.
    pub fn relative_error(&self) -> f64 {
        let scale = self.injected.abs().max(self.produced.abs()).max(f64::MIN_POSITIVE);
        (self.injected - self.produced - self.in_place_change).abs() / scale
    }
}

pub fn water_balance(disc: &Discretization, schedule: &ControlSchedule, traj: &Trajectory) -> Result<WaterBalance> {
    let mut bal = WaterBalance::default();
    let dt = traj.dt;
    for k in 1..=traj.n_steps() {
        let controls = schedule.step(k)?;
        let (x, prev) = (&traj.states[k], &traj.states[k - 1]);
        for (w, &u) in controls.iter().enumerate() {
            let rate = disc.well_rate(w, x, u)?;
            if rate.q_w >= 0.0 {
                bal.injected += rate.q_w * dt;
            } else {
                bal.produced -= rate.q_w * dt;
            }
        }
        let acc = disc.accumulation(x)?;
        for c in 0..disc.n_cells() {
            bal.in_place_change += acc.a_wp[c] * (x.pressure[c] - prev.pressure[c]) + acc.a_ws[c] * (x.sw[c] - prev.sw[c]);
        }
    }
    Ok(bal)
}
