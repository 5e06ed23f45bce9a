//! Adaptive Dormand-Prince 5(4) integration of `y' = f(t, y)`.
//!
//! The fifth-order solution is propagated; the embedded fourth-order solution
//! only drives step-size control. The error norm is the RMS over components of
//! `err_i / (atol + rtol * max(|y_i|, |y_new_i|))` and a step is accepted when
//! it is at most 1. The next step is `dt * clamp(0.9 * norm^(-1/5), 0.2, 5)`,
//! capped at `dt_max`.

use std::error::Error as StdError;

use thiserror::Error;

/// Smallest step tried before giving up.
pub const MIN_STEP: f64 = 1e-22;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
#[cfg(test)]
/// Fifth-order weights (equal to the last row of `A`, first same as last).
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Fifth- minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub type RhsError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("step size underflow at t = {t:e}: dt = {dt:e}")]
    StepSizeUnderflow { t: f64, dt: f64 },
    #[error("right-hand side is not finite at t = {t:e}")]
    NonFiniteRhs { t: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("right-hand side failed: {0}")]
    Rhs(RhsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub dt_initial: f64,
    pub dt_max: f64,
    /// Project every 3-vector of the state to unit norm after this many
    /// accepted steps; 0 disables.
    pub renormalize_every: usize,
    /// End time; in relax mode the time limit.
    pub t_end: f64,
    /// Stop once the largest 3-vector norm of `dy/dt` drops below this.
    pub torque_threshold: Option<f64>,
    pub max_steps: usize,
    /// Observer cadence in accepted steps.
    pub observe_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-8,
            atol: 1e-10,
            dt_initial: 1e-15,
            dt_max: 1e-11,
            renormalize_every: 0,
            t_end: 1e-9,
            torque_threshold: None,
            max_steps: 10_000_000,
            observe_every: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |m: &str| Err(IntegrateError::InvalidConfig(m.to_string()));
        if !(self.rtol >= 1e-14 && self.rtol.is_finite()) {
            return bad("rtol must be >= 1e-14");
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return bad("atol must be positive");
        }
        if !(self.dt_initial > 0.0 && self.dt_max > 0.0) {
            return bad("step sizes must be positive");
        }
        if self.dt_initial > self.dt_max {
            return bad("dt_initial must not exceed dt_max");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be finite and non-negative");
        }
        if let Some(th) = self.torque_threshold {
            if th.is_nan() || th <= 0.0 {
                return bad("torque threshold must be positive");
            }
        }
        if self.observe_every == 0 {
            return bad("observe_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub accepted: bool,
    pub error_norm: f64,
    pub dt_next: f64,
    pub t_new: f64,
}

/// Reusable stage storage for one state size. Caches `f(t, y)` after an
/// accepted step (first-same-as-last), so callers must call
/// [`Dopri5::invalidate`] if they modify `y` between steps.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    fsal: Option<f64>,
    rhs_evals: usize,
}

fn check_finite(values: &[f64], t: f64) -> Result<(), IntegrateError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(IntegrateError::NonFiniteRhs { t })
    }
}

impl Dopri5 {
    pub fn new(n: usize) -> Dopri5 {
        Dopri5 {
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
            fsal: None,
            rhs_evals: 0,
        }
    }

    pub fn rhs_evals(&self) -> usize {
        self.rhs_evals
    }

    pub fn invalidate(&mut self) {
        self.fsal = None;
    }

    fn eval<F>(&mut self, rhs: &mut F, stage: usize, t: f64, use_stage: bool) -> Result<(), IntegrateError>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), RhsError>,
    {
        let (k_prev, k_rest) = self.k.split_at_mut(stage);
        let _ = k_prev;
        let y = if use_stage { &self.stage } else { &self.y_new };
        rhs(t, y, &mut k_rest[0]).map_err(IntegrateError::Rhs)?;
        self.rhs_evals += 1;
        check_finite(&k_rest[0], t)
    }

    /// `f(t, y)`, from the cache when valid.
    pub fn derivative<F>(&mut self, rhs: &mut F, t: f64, y: &[f64]) -> Result<&[f64], IntegrateError>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), RhsError>,
    {
        if self.fsal != Some(t) {
            self.stage.copy_from_slice(y);
            self.eval(rhs, 0, t, true)?;
            self.fsal = Some(t);
        }
        Ok(&self.k[0])
    }

    /// Fill stages 2..7 and `y_new`.
    fn stages<F>(&mut self, rhs: &mut F, t: f64, y: &[f64], dt: f64) -> Result<(), IntegrateError>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), RhsError>,
    {
        self.derivative(rhs, t, y)?;
        for s in 1..7 {
            let target = if s == 6 { &mut self.y_new } else { &mut self.stage };
            for (i, out) in target.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += a * self.k[j][i];
                }
                *out = y[i] + dt * acc;
            }
            self.eval(rhs, s, t + C[s] * dt, s != 6)?;
        }
        Ok(())
    }

    /// Advance by exactly `dt` without error control.
    pub fn step_fixed<F>(&mut self, rhs: &mut F, t: f64, y: &mut [f64], dt: f64) -> Result<(), IntegrateError>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), RhsError>,
    {
        self.stages(rhs, t, y, dt)?;
        y.copy_from_slice(&self.y_new);
        self.k.swap(0, 6);
        self.fsal = Some(t + dt);
        Ok(())
    }

    /// Attempt one adaptive step; `y` advances only if the step is accepted.
    pub fn step<F>(
        &mut self,
        rhs: &mut F,
        t: f64,
        y: &mut [f64],
        dt: f64,
        cfg: &IntegratorConfig,
    ) -> Result<StepResult, IntegrateError>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), RhsError>,
    {
        if dt.is_nan() || dt < MIN_STEP {
            return Err(IntegrateError::StepSizeUnderflow { t, dt });
        }
        self.stages(rhs, t, y, dt)?;

        let n = y.len();
        let mut sum = 0.0;
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            let mut err = 0.0;
            for (s, e) in E.iter().enumerate() {
                err += e * self.k[s][i];
            }
            let scale = cfg.atol + cfg.rtol * y[i].abs().max(self.y_new[i].abs());
            let r = dt * err / scale;
            sum += r * r;
        }
        let error_norm = if n == 0 { 0.0 } else { (sum / n as f64).sqrt() };
        let factor = if error_norm == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * error_norm.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        let dt_next = (dt * factor).min(cfg.dt_max);
        let accepted = error_norm <= 1.0;
        if accepted {
            y.copy_from_slice(&self.y_new);
            self.k.swap(0, 6);
            self.fsal = Some(t + dt);
        }
        Ok(StepResult {
            accepted,
            error_norm,
            dt_next,
            t_new: if accepted { t + dt } else { t },
        })
    }
}

/// One adaptive step with fresh stage storage.
pub fn rk45_step<F>(
    mut rhs: F,
    y: &mut [f64],
    t: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<StepResult, IntegrateError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), RhsError>,
{
    Dopri5::new(y.len()).step(&mut rhs, t, y, dt, cfg)
}

/// State handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub t: f64,
    pub y: &'a [f64],
    pub dydt: &'a [f64],
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EndTime,
    Converged,
    MaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub t: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    pub reason: StopReason,
}

/// Project each consecutive 3-vector to unit length.
pub fn normalize_triples(y: &mut [f64]) {
    for v in y.chunks_exact_mut(3) {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
    }
}

/// Integrate from `t = 0` to `cfg.t_end`, or until the largest 3-vector norm
/// of `dy/dt` falls below `cfg.torque_threshold`.
///
/// `observe` runs at the initial state, every `observe_every` accepted steps
/// and at the final state (never twice for the same step).
pub fn integrate<F, O>(mut rhs: F, y: &mut [f64], cfg: &IntegratorConfig, mut observe: O) -> Result<Summary, IntegrateError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), RhsError>,
    O: FnMut(&Observation<'_>),
{
    cfg.validate()?;
    let needs_triples = cfg.renormalize_every > 0 || cfg.torque_threshold.is_some();
    if needs_triples && !y.len().is_multiple_of(3) {
        return Err(IntegrateError::InvalidConfig(
            "renormalisation and torque stopping need a state of 3-vectors".into(),
        ));
    }
    let torque = |d: &[f64]| crate::llg::max_triple_norm(d);

    let mut stepper = Dopri5::new(y.len());
    let mut t = 0.0;
    let mut dt = cfg.dt_initial;
    let (mut accepted, mut rejected) = (0, 0);
    let mut last_observed = 0;

    let d = stepper.derivative(&mut rhs, t, y)?;
    observe(&Observation { t, y, dydt: d, steps: 0 });
    let mut reason = StopReason::EndTime;
    if cfg.torque_threshold.is_some_and(|th| torque(d) < th) {
        reason = StopReason::Converged;
    }

    while reason == StopReason::EndTime && t < cfg.t_end {
        if accepted >= cfg.max_steps {
            reason = StopReason::MaxSteps;
            break;
        }
        let remaining = cfg.t_end - t;
        let last = dt >= remaining;
        let h = if last { remaining } else { dt };
        let res = stepper.step(&mut rhs, t, y, h, cfg)?;
        if !res.accepted {
            rejected += 1;
            dt = res.dt_next;
            if dt < MIN_STEP {
                return Err(IntegrateError::StepSizeUnderflow { t, dt });
            }
            continue;
        }
        accepted += 1;
        t = if last { cfg.t_end } else { res.t_new };
        // a clipped final step should not shrink the controller's estimate
        dt = if last { dt.max(res.dt_next) } else { res.dt_next };
        if cfg.renormalize_every > 0 && accepted % cfg.renormalize_every == 0 {
            normalize_triples(y);
            stepper.invalidate();
        }
        let d = stepper.derivative(&mut rhs, t, y)?;
        if cfg.torque_threshold.is_some_and(|th| torque(d) < th) {
            reason = StopReason::Converged;
        }
        let done = reason != StopReason::EndTime || t >= cfg.t_end;
        if accepted % cfg.observe_every == 0 || done {
            observe(&Observation {
                t,
                y,
                dydt: d,
                steps: accepted,
            });
            last_observed = accepted;
        }
    }
    if reason == StopReason::MaxSteps && last_observed != accepted {
        let d = stepper.derivative(&mut rhs, t, y)?;
        observe(&Observation {
            t,
            y,
            dydt: d,
            steps: accepted,
        });
    }

    Ok(Summary {
        t,
        accepted_steps: accepted,
        rejected_steps: rejected,
        rhs_evals: stepper.rhs_evals(),
        reason,
    })
}
