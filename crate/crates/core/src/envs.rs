//! Episode simulators for the liquidation and repo-lending examples.
//!
//! Each step is a pure function of the current state, the action and the
//! noise draws; the `*_step` wrappers draw that noise from a random stream.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::policy::QGaussian2D;

/// States at or below this level end a repo episode.
pub const REPO_TRUNCATION: f64 = 1e-9;

/// Liquidation with a dark pool: `dX = -ξ dt - η dN`, running reward
/// `-κξ² - cX²`, terminal penalty `-(ℓ/2) X_T²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkPoolParams {
    pub lambda: f64,
    pub kappa: f64,
    pub c: f64,
    pub ell: f64,
    pub horizon: f64,
    pub x0: f64,
}

impl DarkPoolParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("lambda", self.lambda), ("kappa", self.kappa), ("c", self.c), ("ell", self.ell), ("T", self.horizon)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.x0.is_finite() {
            return Err(Error::InvalidParameter(format!("x0 must be finite, got {}", self.x0)));
        }
        Ok(())
    }

    /// Coefficients of the liquidation experiment.
    pub fn experiment() -> Self {
        Self { lambda: 0.01, kappa: 1.0, c: 1.0, ell: 10.0, horizon: 0.25, x0: 2.0 }
    }
}

/// Repo lending: `dX/X = (μ1 ξ + μ2 η) dt + σ dW - ν dN`, running reward
/// `-(A ξ² + B η²) X^(2h)`, terminal reward `X_T^h / h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepoParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub nu: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub horizon: f64,
    pub x0: f64,
}

impl RepoParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma", self.sigma),
            ("lambda", self.lambda),
            ("A", self.a),
            ("B", self.b),
            ("T", self.horizon),
            ("x0", self.x0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.nu.is_nan() || self.nu >= 1.0 {
            return Err(Error::InvalidParameter(format!("nu must be below 1, got {}", self.nu)));
        }
        if !(self.mu1.is_finite() && self.mu2.is_finite() && self.h.is_finite() && self.h != 0.0) {
            return Err(Error::InvalidParameter("mu1, mu2 must be finite and h nonzero".into()));
        }
        Ok(())
    }

    /// Coefficients of the repo experiment.
    pub fn experiment() -> Self {
        Self { mu1: 0.08, mu2: 0.1, sigma: 0.2, nu: 0.05, lambda: 0.01, a: 1.0, b: 1.0, h: 2.0, horizon: 0.5, x0: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub x_next: f64,
    /// `f(t, x, u) · dt`.
    pub reward_increment: f64,
}

/// One episode on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub actions: Vec<[f64; 2]>,
    /// Running-reward increments `f(t_k, x_k, u_k) · dt`, one per step.
    pub rewards: Vec<f64>,
    pub terminal_reward: f64,
    /// Set when the state left the model domain before the horizon.
    pub truncated: bool,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Sum of running rewards plus the terminal reward.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() + self.terminal_reward
    }
}

/// `Poisson(mean)` by sequential inversion of the CDF.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let v: f64 = rng.random();
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    while v >= cdf {
        k += 1;
        pmf *= mean / k as f64;
        if pmf <= 0.0 {
            break;
        }
        cdf += pmf;
    }
    k
}

pub fn darkpool_transition(params: &DarkPoolParams, x: f64, u: [f64; 2], dt: f64, jumps: u64) -> Transition {
    let [xi, eta] = u;
    Transition {
        x_next: x - xi * dt - eta * jumps as f64,
        reward_increment: (-params.kappa * xi * xi - params.c * x * x) * dt,
    }
}

pub fn darkpool_step<R: Rng + ?Sized>(
    params: &DarkPoolParams,
    x: f64,
    u: [f64; 2],
    dt: f64,
    rng: &mut R,
) -> Transition {
    let n = poisson(rng, params.lambda * dt);
    darkpool_transition(params, x, u, dt, n)
}

/// `w` is the Brownian increment, already scaled to variance `dt`.
pub fn repo_transition(params: &RepoParams, x: f64, u: [f64; 2], dt: f64, w: f64, jumps: u64) -> Result<Transition> {
    let [u1, u2] = u;
    let x_next = x + (params.mu1 * u1 + params.mu2 * u2) * x * dt + params.sigma * x * w - params.nu * x * jumps as f64;
    let x2h = x.powf(2.0 * params.h);
    let reward_increment = -(params.a * u1 * u1 + params.b * u2 * u2) * x2h * dt;
    if x_next <= REPO_TRUNCATION {
        return Err(Error::Truncated(x_next));
    }
    Ok(Transition { x_next, reward_increment })
}

pub fn repo_step<R: Rng + ?Sized>(
    params: &RepoParams,
    x: f64,
    u: [f64; 2],
    dt: f64,
    rng: &mut R,
) -> Result<Transition> {
    let z: f64 = rng.sample(StandardNormal);
    let n = poisson(rng, params.lambda * dt);
    repo_transition(params, x, u, dt, z * dt.sqrt(), n)
}

/// Common interface of the two simulators.
pub trait Environment {
    fn horizon(&self) -> f64;
    fn initial_state(&self) -> f64;
    fn terminal_reward(&self, x: f64) -> f64;
    fn step<R: Rng + ?Sized>(&self, t: f64, x: f64, u: [f64; 2], dt: f64, rng: &mut R) -> Result<Transition>;
}

impl Environment for DarkPoolParams {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial_state(&self) -> f64 {
        self.x0
    }

    fn terminal_reward(&self, x: f64) -> f64 {
        -0.5 * self.ell * x * x
    }

    fn step<R: Rng + ?Sized>(&self, _t: f64, x: f64, u: [f64; 2], dt: f64, rng: &mut R) -> Result<Transition> {
        Ok(darkpool_step(self, x, u, dt, rng))
    }
}

impl Environment for RepoParams {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial_state(&self) -> f64 {
        self.x0
    }

    fn terminal_reward(&self, x: f64) -> f64 {
        x.powf(self.h) / self.h
    }

    fn step<R: Rng + ?Sized>(&self, _t: f64, x: f64, u: [f64; 2], dt: f64, rng: &mut R) -> Result<Transition> {
        repo_step(self, x, u, dt, rng)
    }
}

/// Simulates one episode of `steps` uniform steps, sampling each action from
/// the policy returned for the current time and state.
pub fn rollout<E, P, R>(env: &E, mut policy: P, steps: usize, rng: &mut R) -> Result<Trajectory>
where
    E: Environment,
    P: FnMut(f64, f64) -> Result<QGaussian2D>,
    R: Rng + ?Sized,
{
    if steps == 0 {
        return Err(Error::InvalidParameter("rollout needs at least one step".into()));
    }
    let dt = env.horizon() / steps as f64;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![env.initial_state()],
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        terminal_reward: 0.0,
        truncated: false,
    };
    let mut x = env.initial_state();
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = policy(t, x)?.sample(rng)?;
        match env.step(t, x, u, dt, rng) {
            Ok(tr) => {
                x = tr.x_next;
                traj.actions.push(u);
                traj.rewards.push(tr.reward_increment);
                traj.times.push((k + 1) as f64 * dt);
                traj.states.push(x);
            }
            Err(Error::Truncated(_)) => {
                traj.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    traj.terminal_reward = env.terminal_reward(x);
    Ok(traj)
}
