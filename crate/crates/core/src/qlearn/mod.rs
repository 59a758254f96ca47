//! Offline q-learning: martingale residuals, the parameter updates when the
//! normalizing function is known (`alg1`) and the penalized
//! policy-gradient variant when it is not (`alg2`).

mod algorithm1;
mod algorithm2;
mod schedule;

pub use algorithm1::algorithm1_run;
pub use algorithm2::{algorithm2_run, chi_expected_gradient, f_objective, ChiFamily};
pub use schedule::{Rate, Schedule, Segment};

use rand::Rng;

use crate::closed_form::Parameterization;
use crate::envs::Trajectory;
use crate::error::{Error, Result};
use crate::params::ParamVector;

/// `G_k = J(t_{k+1}, x_{k+1}) - J(t_k, x_k) + r_k - q(t_k, x_k, u_k) Δt`,
/// where `r_k` is the running-reward increment already multiplied by `Δt`.
pub fn residuals_g<J, Q>(traj: &Trajectory, mut value: J, mut q: Q) -> Vec<f64>
where
    J: FnMut(f64, f64) -> f64,
    Q: FnMut(f64, f64, [f64; 2]) -> f64,
{
    (0..traj.steps())
        .map(|k| {
            let dt = traj.times[k + 1] - traj.times[k];
            value(traj.times[k + 1], traj.states[k + 1]) - value(traj.times[k], traj.states[k]) + traj.rewards[k]
                - q(traj.times[k], traj.states[k], traj.actions[k]) * dt
        })
        .collect()
}

/// Central differences with step `1e-5 · max(|v|, 1)` per coordinate.
pub fn grad_params<F: FnMut(&[f64]) -> f64>(mut f: F, at: &[f64]) -> Result<Vec<f64>> {
    let mut probe = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let h = 1e-5 * at[i].abs().max(1.0);
        probe[i] = at[i] + h;
        let up = f(&probe);
        probe[i] = at[i] - h;
        let down = f(&probe);
        probe[i] = at[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::GradientFailure(i));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// `|J^θ(t, x) - V(t, x)|` against the model's reference value.
pub fn value_error<M: Parameterization + ?Sized>(model: &M, theta: &[f64], t: f64, x: f64) -> Result<f64> {
    Ok((model.value(theta, t, x)? - model.truth_value(t, x)?).abs())
}

/// Per-episode counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Events {
    /// Update blocks skipped because a parameterization left its domain.
    pub rejected: u32,
    /// Parameters clamped by the positivity projection.
    pub projected: u32,
}

impl std::ops::AddAssign for Events {
    fn add_assign(&mut self, o: Self) {
        self.rejected += o.rejected;
        self.projected += o.projected;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub theta: ParamVector,
    pub zeta: ParamVector,
    /// Policy parameters; only used by the `alg2` learner.
    pub chi: Option<ParamVector>,
    /// Completed episodes.
    pub episode: u64,
    /// Totals over all completed episodes.
    pub events: Events,
}

impl LearnerState {
    pub fn new(theta: ParamVector, zeta: ParamVector) -> Self {
        Self { theta, zeta, chi: None, episode: 0, events: Events::default() }
    }

    /// Every parameter drawn uniformly from `[0.5, 1.5] ×` its true value.
    pub fn perturbed_truth<M: Parameterization + ?Sized, R: Rng + ?Sized>(model: &M, rng: &mut R) -> Self {
        let (theta, zeta) = model.true_params();
        let mut jitter = |p: &ParamVector| {
            let v = p.values().iter().map(|&v| v * rng.random_range(0.5..1.5)).collect();
            p.with_values(v).expect("same length")
        };
        let theta = jitter(&theta);
        let zeta = jitter(&zeta);
        Self::new(theta, zeta)
    }

    pub fn at_truth<M: Parameterization + ?Sized>(model: &M) -> Self {
        let (theta, zeta) = model.true_params();
        Self::new(theta, zeta)
    }

    /// Names of all parameters in trace order.
    pub fn names(&self) -> Vec<String> {
        let mut n: Vec<String> = self.theta.names().to_vec();
        n.extend_from_slice(self.zeta.names());
        if let Some(chi) = &self.chi {
            n.extend_from_slice(chi.names());
        }
        n
    }

    pub fn snapshot(&self) -> Vec<f64> {
        let mut v = self.theta.values().to_vec();
        v.extend_from_slice(self.zeta.values());
        if let Some(chi) = &self.chi {
            v.extend_from_slice(chi.values());
        }
        v
    }
}

/// `w1` weights the squared F-objective, `w2` the squared mass defect.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    pub w1: Schedule,
    pub w2: Schedule,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self { w1: Schedule::constant(1.0), w2: Schedule::constant(1.0) }
    }
}

/// One learning-rate schedule per parameter, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedules {
    pub theta: Vec<Schedule>,
    pub zeta: Vec<Schedule>,
    pub chi: Vec<Schedule>,
}

impl Schedules {
    pub fn zero(n_theta: usize, n_zeta: usize, n_chi: usize) -> Self {
        Self {
            theta: vec![Schedule::zero(); n_theta],
            zeta: vec![Schedule::zero(); n_zeta],
            chi: vec![Schedule::zero(); n_chi],
        }
    }

    fn rates(list: &[Schedule], k: u64, episodes: u64) -> Vec<f64> {
        list.iter().map(|s| s.rate(k, episodes)).collect()
    }

    fn check(list: &[Schedule], params: &ParamVector, episodes: u64, what: &str) -> Result<()> {
        if list.len() != params.len() {
            return Err(Error::InvalidParameter(format!(
                "{what} needs {} schedules, got {}",
                params.len(),
                list.len()
            )));
        }
        for (s, name) in list.iter().zip(params.names()) {
            if !s.covers(episodes) {
                return Err(Error::InvalidParameter(format!("schedule for {name} does not cover {episodes} episodes")));
            }
        }
        Ok(())
    }
}

/// Per-episode trace entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub episode: u64,
    pub values: Vec<f64>,
    pub value_error: f64,
    pub events: Events,
}

/// Receives one record per episode.
pub trait TraceSink {
    fn begin(&mut self, _names: &[String]) -> Result<()> {
        Ok(())
    }
    fn record(&mut self, rec: &TraceRecord) -> Result<()>;
}

/// Discards records.
impl TraceSink for () {
    fn record(&mut self, _rec: &TraceRecord) -> Result<()> {
        Ok(())
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// `θ += rate ⊙ step`, skipping non-finite steps, then projects. Returns
/// the number of projected entries, or `None` if the step was rejected.
fn apply_step(params: &mut ParamVector, rates: &[f64], step: &[f64]) -> Option<u32> {
    if step.iter().any(|s| !s.is_finite()) {
        return None;
    }
    for ((v, r), s) in params.values_mut().iter_mut().zip(rates).zip(step) {
        if *r != 0.0 {
            *v += r * s;
        }
    }
    Some(params.project() as u32)
}
