use rand::Rng;

use super::{apply_step, value_error, Events, LearnerState, Schedules, TraceRecord, TraceSink};
use crate::closed_form::Parameterization;
use crate::envs::{rollout, Environment, Trajectory};
use crate::error::{Error, Result};

/// Summed test-function-weighted residuals of one episode.
pub(super) struct EpisodeSteps {
    pub theta: Vec<f64>,
    pub zeta: Vec<f64>,
}

/// `Σ_k ∂J/∂θ(t_k, x_k) G_k` and `Σ_k ∂q/∂ζ(t_k, x_k, u_k) G_k`.
pub(super) fn episode_steps<M: Parameterization + ?Sized>(
    model: &M,
    theta: &[f64],
    zeta: &[f64],
    traj: &Trajectory,
) -> Result<EpisodeSteps> {
    let n = traj.steps();
    let mut gj = vec![0.0; theta.len()];
    let mut gq = vec![0.0; zeta.len()];
    let mut step_theta = vec![0.0; theta.len()];
    let mut step_zeta = vec![0.0; zeta.len()];
    let mut j_here = model.value_grad(theta, traj.times[0], traj.states[0], &mut gj)?;
    for k in 0..n {
        let (t, x) = (traj.times[k], traj.states[k]);
        let dt = traj.times[k + 1] - t;
        let mut gj_next = vec![0.0; theta.len()];
        let j_next = model.value_grad(theta, traj.times[k + 1], traj.states[k + 1], &mut gj_next)?;
        let q = model.q_grad(zeta, t, x, traj.actions[k], &mut gq)?;
        let g = j_next - j_here + traj.rewards[k] - q * dt;
        for (s, d) in step_theta.iter_mut().zip(&gj) {
            *s += d * g;
        }
        for (s, d) in step_zeta.iter_mut().zip(&gq) {
            *s += d * g;
        }
        j_here = j_next;
        gj = gj_next;
    }
    Ok(EpisodeSteps { theta: step_theta, zeta: step_zeta })
}

/// Runs `episodes` episodes of `steps` grid steps from `state`, sampling
/// actions from `π^ζ`. Each episode updates
/// `θ += α_θ(i) ⊙ Σ_k ∂J/∂θ G_k` and `ζ += α_ζ(i) ⊙ Σ_k ∂q/∂ζ G_k`, then
/// projects positivity-flagged entries.
///
/// A parameterization leaving its domain during an episode skips that
/// episode's updates and is recorded as rejected.
#[allow(clippy::too_many_arguments)]
pub fn algorithm1_run<E, M, R, S>(
    env: &E,
    model: &M,
    mut state: LearnerState,
    schedules: &Schedules,
    episodes: u64,
    steps: usize,
    rng: &mut R,
    sink: &mut S,
) -> Result<LearnerState>
where
    E: Environment,
    M: Parameterization + ?Sized,
    R: Rng + ?Sized,
    S: TraceSink + ?Sized,
{
    Schedules::check(&schedules.theta, &state.theta, episodes, "theta")?;
    Schedules::check(&schedules.zeta, &state.zeta, episodes, "zeta")?;
    sink.begin(&state.names())?;
    let x0 = env.initial_state();
    for i in 1..=episodes {
        let mut events = Events::default();
        let zeta = state.zeta.values().to_vec();
        let outcome = rollout(env, |t, x| model.policy(&zeta, t, x), steps, rng)
            .and_then(|traj| episode_steps(model, state.theta.values(), &zeta, &traj));
        match outcome {
            Ok(step) => {
                let rt = Schedules::rates(&schedules.theta, i, episodes);
                let rz = Schedules::rates(&schedules.zeta, i, episodes);
                for (params, rates, s) in [(&mut state.theta, &rt, &step.theta), (&mut state.zeta, &rz, &step.zeta)] {
                    match apply_step(params, rates, s) {
                        Some(p) => events.projected += p,
                        None => events.rejected += 1,
                    }
                }
            }
            Err(Error::OutOfDomain(_) | Error::Domain(_) | Error::SamplingFailure(_)) => events.rejected += 2,
            Err(e) => return Err(e),
        }
        state.episode += 1;
        state.events += events;
        let err = value_error(model, state.theta.values(), 0.0, x0).unwrap_or(f64::NAN);
        sink.record(&TraceRecord { episode: state.episode, values: state.snapshot(), value_error: err, events })?;
    }
    Ok(state)
}
