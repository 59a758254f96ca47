use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use super::algorithm1::episode_steps;
use super::{apply_step, value_error, Events, LearnerState, PenaltyWeights, Schedules, TraceRecord, TraceSink};
use crate::closed_form::{Parameterization, PolicyShape};
use crate::entropy::{tsallis_deriv_unchecked, tsallis_unchecked, EntropyParams};
use crate::envs::{rollout, Environment, Trajectory};
use crate::error::{Error, Result};
use crate::normalizer::Density;
use crate::params::ParamVector;
use crate::policy::{normalize_level, QGaussian2D};
use crate::quadrature::gauss_legendre;

/// Density floor used in `ln π` and `l_p'(π)` at sampled actions.
const DENSITY_FLOOR: f64 = 1e-12;

/// `F(π') = ∫ (q(u) + γ l_p(π'(u))) π'(u) du`.
pub fn f_objective<Q: Fn([f64; 2]) -> f64, D: Density>(q: Q, pi: &D, entropy: &EntropyParams) -> f64 {
    let gamma = entropy.gamma();
    pi.integrate(|u, d| if d > 0.0 { (q(u) + gamma * tsallis_unchecked(entropy, d)) * d } else { 0.0 })
}

/// Shape variables `(m1, m2, a1, a2, L)` of a free-level q-Gaussian.
type ShapeVars = [f64; 5];

/// Free-level q-Gaussian policies `π^χ`.
///
/// `χ = (s, ℓ)`: the structural part `s` has the layout of the q-parameters
/// and fixes center and curvatures through the model's policy shape; the
/// scale `ℓ > 0` sets the level to `ℓ · ψ̃(a1, a2)`, where `ψ̃` is the
/// unit-mass level. The mass of `π^χ` is `ℓ^(p/(p-1))`.
pub struct ChiFamily<'a, M: ?Sized> {
    model: &'a M,
    n_struct: usize,
    disk: DiskRule,
}

impl<'a, M: Parameterization + ?Sized> ChiFamily<'a, M> {
    pub fn new(model: &'a M) -> Result<Self> {
        if model.entropy().is_shannon() {
            return Err(Error::NotApplicable("free-level policies need p > 1".into()));
        }
        Ok(Self { model, n_struct: model.true_params().1.len(), disk: DiskRule::new(48, 32) })
    }

    /// `χ` at the structural values of `zeta` with unit level scale.
    pub fn initial(&self, zeta: &ParamVector) -> ParamVector {
        let mut values = zeta.values().to_vec();
        values.push(1.0);
        let mut flags = zeta.positive().to_vec();
        flags.push(true);
        let names = (1..=values.len()).map(|i| format!("chi{i}"));
        ParamVector::new(names, values, flags).expect("consistent lengths")
    }

    /// Mass `∫ π^χ du` in closed form.
    pub fn mass(&self, chi: &[f64]) -> f64 {
        let p = self.model.entropy().p();
        chi[self.n_struct].powf(p / (p - 1.0))
    }

    fn vars(&self, chi: &[f64], t: f64, x: f64) -> Result<(PolicyShape, f64)> {
        let shape = self.model.policy_shape(&chi[..self.n_struct], t, x)?;
        let level = chi[self.n_struct] * normalize_level(self.model.entropy(), shape.curvature[0], shape.curvature[1])?;
        Ok((shape, level))
    }

    pub fn policy(&self, chi: &[f64], t: f64, x: f64) -> Result<QGaussian2D> {
        let (shape, level) = self.vars(chi, t, x)?;
        QGaussian2D::with_level(*self.model.entropy(), shape.center, shape.curvature, level)
    }

    /// Shape variables and their Jacobian with respect to `χ`.
    fn jacobian(&self, chi: &[f64], t: f64, x: f64) -> Result<(ShapeVars, Vec<ShapeVars>)> {
        let (shape, level) = self.vars(chi, t, x)?;
        let e = (self.model.entropy().p() - 1.0) / (2.0 * self.model.entropy().p());
        let [a1, a2] = shape.curvature;
        let mut probe = chi[..self.n_struct].to_vec();
        let mut jac = Vec::with_capacity(chi.len());
        for j in 0..self.n_struct {
            let h = 1e-6 * chi[j].abs().max(1.0);
            probe[j] = chi[j] + h;
            let up = self.model.policy_shape(&probe, t, x)?;
            probe[j] = chi[j] - h;
            let down = self.model.policy_shape(&probe, t, x)?;
            probe[j] = chi[j];
            let d = |a: f64, b: f64| (a - b) / (2.0 * h);
            let da1 = d(up.curvature[0], down.curvature[0]);
            let da2 = d(up.curvature[1], down.curvature[1]);
            jac.push([
                d(up.center[0], down.center[0]),
                d(up.center[1], down.center[1]),
                da1,
                da2,
                e * level * (da1 / a1 + da2 / a2),
            ]);
        }
        jac.push([0.0, 0.0, 0.0, 0.0, level / chi[self.n_struct]]);
        Ok(([shape.center[0], shape.center[1], a1, a2, level], jac))
    }

    /// `F` and mass with their gradients in the shape variables, by
    /// quadrature on the unit disk mapped onto the support ellipse.
    fn objective(&self, zeta: &[f64], t: f64, x: f64, v: &ShapeVars) -> Result<ObjectiveEval> {
        let entropy = self.model.entropy();
        let gamma = entropy.gamma();
        let k = 1.0 / (entropy.p() - 1.0);
        let c = entropy.density_prefactor();
        let [m1, m2, a1, a2, level] = *v;
        let s = [(level / a1).sqrt(), (level / a2).sqrt()];
        let area = level / (a1 * a2).sqrt();
        let peak = c * level.powf(k);
        let mut out = ObjectiveEval::default();
        for ((z, w), base) in self.disk.z.iter().zip(&self.disk.w).zip(&self.disk.base) {
            let u = [m1 + s[0] * z[0], m2 + s[1] * z[1]];
            let pi = peak * base.powf(k);
            let h = pi * area;
            let q = self.model.q(zeta, t, x, u)?;
            let gq = self.model.q_action_grad(zeta, t, x, u)?;
            let lp = tsallis_unchecked(entropy, pi);
            let lpd = tsallis_deriv_unchecked(entropy, pi);
            let dh = [0.0, 0.0, -h / (2.0 * a1), -h / (2.0 * a2), h * (k + 1.0) / level];
            let dpi_dl = pi * k / level;
            let dq = [
                gq[0],
                gq[1],
                -gq[0] * s[0] * z[0] / (2.0 * a1),
                -gq[1] * s[1] * z[1] / (2.0 * a2),
                (gq[0] * s[0] * z[0] + gq[1] * s[1] * z[1]) / (2.0 * level),
            ];
            let val = q + gamma * lp;
            out.f += w * h * val;
            out.mass += w * h;
            for i in 0..5 {
                let dpi = if i == 4 { dpi_dl } else { 0.0 };
                out.df[i] += w * (dh[i] * val + h * (dq[i] + gamma * lpd * dpi));
                out.dmass[i] += w * dh[i];
            }
        }
        Ok(out)
    }

    /// Per-sample policy-gradient term
    /// `(q + γ l_p(π)) ∂ ln π + γ l_p'(π) ∂π` in the shape variables.
    fn sample_term(&self, q: f64, u: [f64; 2], v: &ShapeVars) -> ShapeVars {
        let entropy = self.model.entropy();
        let gamma = entropy.gamma();
        let k = 1.0 / (entropy.p() - 1.0);
        let [m1, m2, a1, a2, level] = *v;
        let d1 = u[0] - m1;
        let d2 = u[1] - m2;
        let slack = level - a1 * d1 * d1 - a2 * d2 * d2;
        if slack <= 0.0 {
            return [0.0; 5];
        }
        let c = entropy.density_prefactor();
        let pi = c * slack.powf(k);
        let dpi_ds = c * k * slack.powf(k - 1.0);
        let ds = [2.0 * a1 * d1, 2.0 * a2 * d2, -d1 * d1, -d2 * d2, 1.0];
        let pf = pi.max(DENSITY_FLOOR);
        let coef = (q + gamma * tsallis_unchecked(entropy, pf)) / pf + gamma * tsallis_deriv_unchecked(entropy, pf);
        ds.map(|d| coef * dpi_ds * d)
    }
}

#[derive(Debug, Default)]
struct ObjectiveEval {
    f: f64,
    df: ShapeVars,
    mass: f64,
    dmass: ShapeVars,
}

/// Polar product rule on the unit disk with `ρ = sin θ`; weights include the
/// polar Jacobian, `base = 1 - ρ²`.
struct DiskRule {
    z: Vec<[f64; 2]>,
    w: Vec<f64>,
    base: Vec<f64>,
}

impl DiskRule {
    fn new(angles: usize, radial: usize) -> Self {
        let rule = gauss_legendre(radial);
        let dphi = 2.0 * PI / angles as f64;
        let mut out = Self { z: Vec::new(), w: Vec::new(), base: Vec::new() };
        for a in 0..angles {
            let phi = (a as f64 + 0.5) * dphi;
            for (th, w) in rule.mapped(0.0, FRAC_PI_2) {
                let (rho, cth) = th.sin_cos();
                out.z.push([rho * phi.cos(), rho * phi.sin()]);
                out.w.push(w * dphi * rho * cth);
                out.base.push(cth * cth);
            }
        }
        out
    }
}

fn chain(jac: &[ShapeVars], g: &ShapeVars) -> Vec<f64> {
    jac.iter().map(|row| row.iter().zip(g).map(|(a, b)| a * b).sum()).collect()
}

/// Expected χ-update direction at `(t, x)` for actions drawn from the
/// normalized `π^χ`: `∂F/M - 2 w1 F ∂F - 2 w2 (M - 1) ∂M`, chained to `χ`.
pub fn chi_expected_gradient<M: Parameterization + ?Sized>(
    family: &ChiFamily<'_, M>,
    chi: &[f64],
    zeta: &[f64],
    t: f64,
    x: f64,
    w1: f64,
    w2: f64,
) -> Result<Vec<f64>> {
    let (v, jac) = family.jacobian(chi, t, x)?;
    let obj = family.objective(zeta, t, x, &v)?;
    let g: ShapeVars = std::array::from_fn(|i| {
        obj.df[i] / obj.mass - 2.0 * w1 * obj.f * obj.df[i] - 2.0 * w2 * (obj.mass - 1.0) * obj.dmass[i]
    });
    Ok(chain(&jac, &g))
}

fn chi_episode_step<M: Parameterization + ?Sized>(
    family: &ChiFamily<'_, M>,
    chi: &[f64],
    zeta: &[f64],
    traj: &Trajectory,
    w1: f64,
    w2: f64,
) -> Result<Vec<f64>> {
    let mut total = vec![0.0; chi.len()];
    for k in 0..traj.steps() {
        let (t, x, u) = (traj.times[k], traj.states[k], traj.actions[k]);
        let (v, jac) = family.jacobian(chi, t, x)?;
        let q = family.model.q(zeta, t, x, u)?;
        let mut g = family.sample_term(q, u, &v);
        if w1 != 0.0 || w2 != 0.0 {
            let obj = family.objective(zeta, t, x, &v)?;
            for ((gi, df), dm) in g.iter_mut().zip(obj.df).zip(obj.dmass) {
                *gi -= 2.0 * w1 * obj.f * df + 2.0 * w2 * (obj.mass - 1.0) * dm;
            }
        }
        for (s, d) in total.iter_mut().zip(chain(&jac, &g)) {
            *s += d;
        }
    }
    Ok(total)
}

/// Runs the `alg2` learner: actions come from `π^χ`, `θ` and `ζ` follow the same
/// martingale updates as [`algorithm1_run`](super::algorithm1_run), and `χ`
/// ascends the sampled policy gradient minus the penalties
/// `w1 F²` and `w2 (∫π^χ - 1)²`, summed over the grid.
#[allow(clippy::too_many_arguments)]
pub fn algorithm2_run<E, M, R, S>(
    env: &E,
    model: &M,
    mut state: LearnerState,
    schedules: &Schedules,
    weights: &PenaltyWeights,
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
    let family = ChiFamily::new(model)?;
    if state.chi.is_none() {
        state.chi = Some(family.initial(&state.zeta));
    }
    Schedules::check(&schedules.theta, &state.theta, episodes, "theta")?;
    Schedules::check(&schedules.zeta, &state.zeta, episodes, "zeta")?;
    Schedules::check(&schedules.chi, state.chi.as_ref().expect("set above"), episodes, "chi")?;
    sink.begin(&state.names())?;
    let x0 = env.initial_state();
    for i in 1..=episodes {
        let mut events = Events::default();
        let chi = state.chi.as_ref().expect("set above").values().to_vec();
        let zeta = state.zeta.values().to_vec();
        let (w1, w2) = (weights.w1.rate(i, episodes), weights.w2.rate(i, episodes));
        match rollout(env, |t, x| family.policy(&chi, t, x), steps, rng) {
            Ok(traj) => {
                let rt = Schedules::rates(&schedules.theta, i, episodes);
                let rz = Schedules::rates(&schedules.zeta, i, episodes);
                let rc = Schedules::rates(&schedules.chi, i, episodes);
                let tz = episode_steps(model, state.theta.values(), &zeta, &traj);
                let cs = chi_episode_step(&family, &chi, &zeta, &traj, w1, w2);
                match tz {
                    Ok(step) => {
                        for (params, rates, s) in
                            [(&mut state.theta, &rt, &step.theta), (&mut state.zeta, &rz, &step.zeta)]
                        {
                            match apply_step(params, rates, s) {
                                Some(p) => events.projected += p,
                                None => events.rejected += 1,
                            }
                        }
                    }
                    Err(Error::OutOfDomain(_) | Error::Domain(_)) => events.rejected += 2,
                    Err(e) => return Err(e),
                }
                match cs {
                    Ok(step) => match apply_step(state.chi.as_mut().expect("set above"), &rc, &step) {
                        Some(p) => events.projected += p,
                        None => events.rejected += 1,
                    },
                    Err(Error::OutOfDomain(_) | Error::Domain(_)) => events.rejected += 1,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::OutOfDomain(_) | Error::Domain(_) | Error::SamplingFailure(_)) => events.rejected += 3,
            Err(e) => return Err(e),
        }
        state.episode += 1;
        state.events += events;
        let err = value_error(model, state.theta.values(), 0.0, x0).unwrap_or(f64::NAN);
        sink.record(&TraceRecord { episode: state.episode, values: state.snapshot(), value_error: err, events })?;
    }
    Ok(state)
}
