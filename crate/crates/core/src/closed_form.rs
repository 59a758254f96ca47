//! Closed-form solutions of the two examples and their exact
//! parameterizations of value, q-function and policy.
//!
//! Liquidation: the value is `α(t) x²/2 + β(t)` where `α` solves the Riccati
//! equation `α' = -α²/(2κ) + λα + 2c`. The parameterized forms replace
//! `-α` by the ratio
//! `R(τ) = [(ℓθ1 + 4θ4) e^(θ3 τ) + ℓθ2 - 4θ4] / [(θ2 + ℓ) e^(θ3 τ) + θ1 - ℓ]`
//! with `τ = T - t`, which reproduces `-α^(ℓ)` at the true parameters.
//!
//! Repo lending (`p = 2` only): the value is `α(t) x^h/h + β(t)` with
//! `α = exp(r (T - t))`.

use std::f64::consts::PI;

use crate::entropy::EntropyParams;
use crate::envs::{DarkPoolParams, RepoParams};
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::policy::{normalize_level, QGaussian2D};
use crate::quadrature::gauss_legendre;

/// Nodes for time integrals up to the horizon.
const HORIZON_NODES: usize = 256;

/// `∫_t^T h(s) ds` through `s = T - v²`, which absorbs integrable
/// singularities of `h` at `s = T`. Never evaluates `h` at the endpoints.
pub fn integrate_to_horizon(t: f64, horizon: f64, mut h: impl FnMut(f64) -> f64) -> f64 {
    let tau = horizon - t;
    if tau <= 0.0 {
        return 0.0;
    }
    gauss_legendre(HORIZON_NODES).integrate(0.0, tau.sqrt(), |v| 2.0 * v * h(horizon - v * v))
}

/// Entropy contribution to the value growth rate when the optimal policy has
/// curvature product `a1 a2 = prod`, together with its derivative in
/// `ln prod`.
///
/// For `p > 1` the rate is `γ/(p-1) - p ψ̃/(2p-1)`; for `p = 1` it is
/// `γ ln(γπ/√prod)`. Its negative is the constant term of the q-function.
pub fn entropy_rate(entropy: &EntropyParams, prod: f64) -> (f64, f64) {
    let gamma = entropy.gamma();
    if entropy.is_shannon() {
        return (gamma * (gamma * PI / prod.sqrt()).ln(), -0.5 * gamma);
    }
    let p = entropy.p();
    let level = (prod.sqrt() / PI).powf((p - 1.0) / p) * p / (p - 1.0) * gamma.powf(1.0 / p);
    let rate = gamma / (p - 1.0) - p * level / (2.0 * p - 1.0);
    (rate, -level * (p - 1.0) / (2.0 * (2.0 * p - 1.0)))
}

fn check_time(t: f64, horizon: f64) -> Result<f64> {
    let tau = horizon - t;
    if !(t >= 0.0 && tau >= -1e-12) {
        return Err(Error::Domain(format!("time {t} outside [0, {horizon}]")));
    }
    Ok(tau.max(0.0))
}

// ---------------------------------------------------------------------------
// Liquidation with a dark pool

pub fn dp_w(params: &DarkPoolParams) -> f64 {
    (params.lambda * params.lambda + 4.0 * params.c / params.kappa).sqrt()
}

/// `(κ(w-λ), κ(w+λ), w, cκ)`, the coefficients of the Riccati ratio.
fn dp_ratio_coefficients(params: &DarkPoolParams) -> [f64; 4] {
    let w = dp_w(params);
    let k = params.kappa;
    [k * (w - params.lambda), k * (w + params.lambda), w, params.c * k]
}

/// Riccati ratio `R(τ)` and its gradient in the four coefficients. Written
/// with `e^(-θ3 τ)` so that large `θ3 τ` cannot overflow.
pub fn riccati_ratio(coef: [f64; 4], ell: f64, tau: f64) -> (f64, [f64; 4]) {
    let [c1, c2, c3, c4] = coef;
    let e = (-c3 * tau).exp();
    let num = ell * c1 + 4.0 * c4 + (ell * c2 - 4.0 * c4) * e;
    let den = c2 + ell + (c1 - ell) * e;
    let r = num / den;
    let dn = [ell, ell * e, -(ell * c2 - 4.0 * c4) * tau * e, 4.0 - 4.0 * e];
    let dd = [e, 1.0, -(c1 - ell) * tau * e, 0.0];
    let mut g = [0.0; 4];
    for i in 0..4 {
        g[i] = (dn[i] - r * dd[i]) / den;
    }
    (r, g)
}

/// `α^(ℓ)(t)` for the terminal penalty `-(ℓ/2) x²`.
pub fn dp_alpha_ell(t: f64, params: &DarkPoolParams, ell: f64) -> f64 {
    -riccati_ratio(dp_ratio_coefficients(params), ell, params.horizon - t).0
}

/// `β^(ℓ)(t) = ∫_t^T rate(-κλα^(ℓ)(s)/2) ds`.
pub fn dp_beta_ell(t: f64, params: &DarkPoolParams, entropy: &EntropyParams, ell: f64) -> f64 {
    integrate_to_horizon(t, params.horizon, |s| {
        let prod = -params.kappa * params.lambda * dp_alpha_ell(s, params, ell) / 2.0;
        entropy_rate(entropy, prod).0
    })
}

/// `V^(ℓ)(t, x) = α^(ℓ)(t) x²/2 + β^(ℓ)(t)`.
pub fn dp_value_ell(t: f64, x: f64, params: &DarkPoolParams, entropy: &EntropyParams, ell: f64) -> f64 {
    0.5 * dp_alpha_ell(t, params, ell) * x * x + dp_beta_ell(t, params, entropy, ell)
}

/// `α*(t) = -κ(w-λ) - 2κw/(e^(w(T-t)) - 1)`, the limit `ℓ → ∞`.
pub fn dp_alpha_star(t: f64, params: &DarkPoolParams) -> Result<f64> {
    let tau = params.horizon - t;
    if tau <= 0.0 {
        return Err(Error::Divergence(format!("alpha* is unbounded at t = {t} >= T")));
    }
    let w = dp_w(params);
    let k = params.kappa;
    Ok(-k * (w - params.lambda) - 2.0 * k * w / (w * tau).exp_m1())
}

/// Level `ψ̃(t)` of the optimal policy without liquidation penalty.
pub fn dp_psi_tilde(t: f64, params: &DarkPoolParams, entropy: &EntropyParams) -> Result<f64> {
    let alpha = dp_alpha_star(t, params)?;
    normalize_level(entropy, params.kappa, -params.lambda * alpha / 2.0)
}

/// `β*(t)`; finite at `t = T` even though `α*` is not.
pub fn dp_beta_star(t: f64, params: &DarkPoolParams, entropy: &EntropyParams) -> f64 {
    let w = dp_w(params);
    let k = params.kappa;
    integrate_to_horizon(t, params.horizon, |s| {
        let tau = params.horizon - s;
        let alpha = -k * (w - params.lambda) - 2.0 * k * w / (w * tau).exp_m1();
        entropy_rate(entropy, -k * params.lambda * alpha / 2.0).0
    })
}

/// `(θ*, ζ*)`: `θ* = (κ(w-λ), κ(w+λ), w, cκ, κλ)` and `ζ* = (θ*, κ)`.
pub fn dp_true_params(params: &DarkPoolParams) -> (ParamVector, ParamVector) {
    let [c1, c2, c3, c4] = dp_ratio_coefficients(params);
    let c5 = params.kappa * params.lambda;
    (
        ParamVector::positive_indexed("theta", vec![c1, c2, c3, c4, c5]),
        ParamVector::positive_indexed("zeta", vec![c1, c2, c3, c4, c5, params.kappa]),
    )
}

// ---------------------------------------------------------------------------
// Repo lending

/// `r = σ²(h-1)h/2 + λ((1-ν)^h - 1)`.
pub fn repo_rate(params: &RepoParams) -> f64 {
    let h = params.h;
    params.sigma * params.sigma * (h - 1.0) * h / 2.0 + params.lambda * ((1.0 - params.nu).powf(h) - 1.0)
}

fn repo_drift_weight(params: &RepoParams) -> f64 {
    params.mu1 * params.mu1 / (4.0 * params.a) + params.mu2 * params.mu2 / (4.0 * params.b)
}

fn repo_entropy_constant(params: &RepoParams, gamma: f64) -> f64 {
    4.0 / 3.0 * (gamma / PI).sqrt() * (params.a * params.b).powf(0.25)
}

fn require_sparse(entropy: &EntropyParams) -> Result<()> {
    if (entropy.p() - 2.0).abs() > 1e-12 {
        return Err(Error::NotApplicable(format!(
            "the repo example has a closed form only for p = 2, got p = {}",
            entropy.p()
        )));
    }
    Ok(())
}

/// `(e^(2rτ) - 1)/(2r)`, continuous at `r = 0`.
fn growth_integral(r: f64, tau: f64) -> f64 {
    if r == 0.0 {
        tau
    } else {
        (2.0 * r * tau).exp_m1() / (2.0 * r)
    }
}

pub fn repo_alpha_star(t: f64, params: &RepoParams) -> f64 {
    (repo_rate(params) * (params.horizon - t)).exp()
}

pub fn repo_beta_star(t: f64, params: &RepoParams, entropy: &EntropyParams) -> Result<f64> {
    require_sparse(entropy)?;
    let tau = params.horizon - t;
    let gamma = entropy.gamma();
    Ok(repo_drift_weight(params) * growth_integral(repo_rate(params), tau)
        - (repo_entropy_constant(params, gamma) - gamma) * tau)
}

pub fn repo_value(t: f64, x: f64, params: &RepoParams, entropy: &EntropyParams) -> Result<f64> {
    Ok(repo_alpha_star(t, params) * x.powf(params.h) / params.h + repo_beta_star(t, params, entropy)?)
}

/// `θ* = (r, drift/(2r), (4/3)(AB)^(1/4)/√π)`, `ζ* = (r, A, B, μ1/(2A), μ2/(2B))`.
pub fn repo_true_params(params: &RepoParams) -> Result<(ParamVector, ParamVector)> {
    let r = repo_rate(params);
    if r == 0.0 {
        return Err(Error::Domain("growth rate is zero; theta2 is undefined".into()));
    }
    let theta = ParamVector::new(
        ["theta1", "theta2", "theta3"],
        vec![r, repo_drift_weight(params) / (2.0 * r), repo_entropy_constant(params, 1.0)],
        vec![false; 3],
    )?;
    let zeta = ParamVector::new(
        ["zeta1", "zeta2", "zeta3", "zeta4", "zeta5"],
        vec![r, params.a, params.b, params.mu1 / (2.0 * params.a), params.mu2 / (2.0 * params.b)],
        vec![false, true, true, false, false],
    )?;
    Ok((theta, zeta))
}

// ---------------------------------------------------------------------------
// Parameterizations

/// Center and curvatures of a q-Gaussian policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyShape {
    pub center: [f64; 2],
    pub curvature: [f64; 2],
}

impl PolicyShape {
    /// Gradient in `u` of `-a1 (u1 - m1)² - a2 (u2 - m2)²`; both q-families
    /// have this action dependence.
    fn quadratic_grad(&self, u: [f64; 2]) -> [f64; 2] {
        [-2.0 * self.curvature[0] * (u[0] - self.center[0]), -2.0 * self.curvature[1] * (u[1] - self.center[1])]
    }
}

/// Exact parametric families `J^θ`, `q^ζ`, `π^ζ` of one example, with
/// analytic gradients.
pub trait Parameterization: Sync {
    fn entropy(&self) -> &EntropyParams;
    fn horizon(&self) -> f64;
    fn initial_state(&self) -> f64;
    /// `(θ*, ζ*)`, also the templates for names and positivity flags.
    fn true_params(&self) -> (ParamVector, ParamVector);

    fn value(&self, theta: &[f64], t: f64, x: f64) -> Result<f64>;
    /// Value and `∂J/∂θ` written into `grad`.
    fn value_grad(&self, theta: &[f64], t: f64, x: f64, grad: &mut [f64]) -> Result<f64>;
    fn q(&self, zeta: &[f64], t: f64, x: f64, u: [f64; 2]) -> Result<f64>;
    /// q-value and `∂q/∂ζ` written into `grad`.
    fn q_grad(&self, zeta: &[f64], t: f64, x: f64, u: [f64; 2], grad: &mut [f64]) -> Result<f64>;
    fn policy_shape(&self, zeta: &[f64], t: f64, x: f64) -> Result<PolicyShape>;
    /// `∇_u q^ζ(t, x, u)`.
    fn q_action_grad(&self, zeta: &[f64], t: f64, x: f64, u: [f64; 2]) -> Result<[f64; 2]>;
    /// Reference value the learnt `J^θ` is compared against.
    fn truth_value(&self, t: f64, x: f64) -> Result<f64>;

    /// The normalized policy `π^ζ(· | t, x)`.
    fn policy(&self, zeta: &[f64], t: f64, x: f64) -> Result<QGaussian2D> {
        let s = self.policy_shape(zeta, t, x)?;
        QGaussian2D::normalized(*self.entropy(), s.center, s.curvature)
    }
}

fn check_len(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidParameter(format!("{what} needs {n} entries, got {}", v.len())));
    }
    Ok(())
}

/// Liquidation example at a fixed penalty `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkPoolModel {
    pub env: DarkPoolParams,
    pub entropy: EntropyParams,
}

impl DarkPoolModel {
    pub fn new(env: DarkPoolParams, entropy: EntropyParams) -> Result<Self> {
        env.validate()?;
        Ok(Self { env, entropy })
    }

    fn ratio(&self, p: &[f64], tau: f64) -> Result<(f64, [f64; 4])> {
        let (r, g) = riccati_ratio([p[0], p[1], p[2], p[3]], self.env.ell, tau);
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::OutOfDomain(format!("Riccati ratio {r} is not positive")));
        }
        Ok((r, g))
    }

    /// `∫_0^τ rate(θ5 R(σ)/2) dσ` and, if requested, its gradient.
    fn entropy_integral(&self, theta: &[f64], tau: f64, grad: Option<&mut [f64]>) -> Result<f64> {
        if tau <= 0.0 {
            if let Some(g) = grad {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            return Ok(0.0);
        }
        let rule = gauss_legendre(HORIZON_NODES);
        let mut total = 0.0;
        let mut acc = [0.0; 5];
        for (v, w) in rule.mapped(0.0, tau.sqrt()) {
            let sigma = v * v;
            let (r, dr) = self.ratio(theta, sigma)?;
            let (rate, dlog) = entropy_rate(&self.entropy, theta[4] * r / 2.0);
            let wt = 2.0 * v * w;
            total += wt * rate;
            for i in 0..4 {
                acc[i] += wt * dlog * dr[i] / r;
            }
            acc[4] += wt * dlog / theta[4];
        }
        if let Some(g) = grad {
            g[..5].copy_from_slice(&acc);
        }
        Ok(total)
    }

    fn zeta_shape(&self, zeta: &[f64], tau: f64, x: f64) -> Result<(PolicyShape, f64, [f64; 4])> {
        check_len(zeta, 6, "zeta")?;
        if !(zeta[4] > 0.0 && zeta[5] > 0.0) {
            return Err(Error::OutOfDomain(format!("zeta5 = {}, zeta6 = {} must be positive", zeta[4], zeta[5])));
        }
        let (r, dr) = self.ratio(zeta, tau)?;
        let shape =
            PolicyShape { center: [r * x / (2.0 * zeta[5]), x], curvature: [zeta[5], zeta[4] * r / (2.0 * zeta[5])] };
        Ok((shape, r, dr))
    }
}

impl Parameterization for DarkPoolModel {
    fn entropy(&self) -> &EntropyParams {
        &self.entropy
    }

    fn horizon(&self) -> f64 {
        self.env.horizon
    }

    fn initial_state(&self) -> f64 {
        self.env.x0
    }

    fn true_params(&self) -> (ParamVector, ParamVector) {
        dp_true_params(&self.env)
    }

    fn value(&self, theta: &[f64], t: f64, x: f64) -> Result<f64> {
        check_len(theta, 5, "theta")?;
        let tau = check_time(t, self.env.horizon)?;
        let (r, _) = self.ratio(theta, tau)?;
        Ok(-0.5 * r * x * x + self.entropy_integral(theta, tau, None)?)
    }

    fn value_grad(&self, theta: &[f64], t: f64, x: f64, grad: &mut [f64]) -> Result<f64> {
        check_len(theta, 5, "theta")?;
        let tau = check_time(t, self.env.horizon)?;
        let (r, dr) = self.ratio(theta, tau)?;
        let integral = self.entropy_integral(theta, tau, Some(grad))?;
        for i in 0..4 {
            grad[i] -= 0.5 * dr[i] * x * x;
        }
        Ok(-0.5 * r * x * x + integral)
    }

    fn q(&self, zeta: &[f64], t: f64, x: f64, u: [f64; 2]) -> Result<f64> {
        let mut scratch = [0.0; 6];
        self.q_grad(zeta, t, x, u, &mut scratch)
    }

    fn q_grad(&self, zeta: &[f64], t: f64, x: f64, u: [f64; 2], grad: &mut [f64]) -> Result<f64> {
        let tau = check_time(t, self.env.horizon)?;
        let (shape, r, dr) = self.zeta_shape(zeta, tau, x)?;
        let [a1, a2] = shape.curvature;
        let d1 = u[0] - shape.center[0];
        let d2 = u[1] - shape.center[1];
        let (rate, dlog) = entropy_rate(&self.entropy, zeta[4] * r / 2.0);
        // constant term -rate depends on ζ only through ln(ζ5 R)
        let s = -dlog;
        let dq_dr = x * d1 - zeta[4] * d2 * d2 / (2.0 * zeta[5]) + s / r;
        for i in 0..4 {
            grad[i] = dq_dr * dr[i];
        }
        grad[4] = -r * d2 * d2 / (2.0 * zeta[5]) + s / zeta[4];
        grad[5] = -d1 * d1 - d1 * r * x / zeta[5] + zeta[4] * r * d2 * d2 / (2.0 * zeta[5] * zeta[5]);
        Ok(-a1 * d1 * d1 - a2 * d2 * d2 - rate)
    }

    fn policy_shape(&self, zeta: &[f64], t: f64, x: f64) -> Result<PolicyShape> {
        let tau = check_time(t, self.env.horizon)?;
        Ok(self.zeta_shape(zeta, tau, x)?.0)
    }

    fn q_action_grad(&self, zeta: &[f64], t: f64, x: f64, u: [f64; 2]) -> Result<[f64; 2]> {
        Ok(self.policy_shape(zeta, t, x)?.quadratic_grad(u))
    }

    fn truth_value(&self, t: f64, x: f64) -> Result<f64> {
        check_time(t, self.env.horizon)?;
        Ok(dp_value_ell(t, x, &self.env, &self.entropy, self.env.ell))
    }
}

/// Repo-lending example; requires `p = 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepoModel {
    pub env: RepoParams,
    pub entropy: EntropyParams,
}

impl RepoModel {
    pub fn new(env: RepoParams, entropy: EntropyParams) -> Result<Self> {
        env.validate()?;
        require_sparse(&entropy)?;
        Ok(Self { env, entropy })
    }

    fn check_state(x: f64) -> Result<()> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("repo state must be positive, got {x}")))
        }
    }

    fn zeta_shape(&self, zeta: &[f64], tau: f64, x: f64) -> Result<(PolicyShape, f64, f64)> {
        check_len(zeta, 5, "zeta")?;
        Self::check_state(x)?;
        if !(zeta[1] > 0.0 && zeta[2] > 0.0) {
            return Err(Error::OutOfDomain(format!("zeta2 = {}, zeta3 = {} must be positive", zeta[1], zeta[2])));
        }
        let xh = x.powf(self.env.h);
        let growth = (zeta[0] * tau).exp();
        let shape = PolicyShape {
            center: [zeta[3] * growth / xh, zeta[4] * growth / xh],
            curvature: [zeta[1] * xh * xh, zeta[2] * xh * xh],
        };
        Ok((shape, xh, growth))
    }
}

impl Parameterization for RepoModel {
    fn entropy(&self) -> &EntropyParams {
        &self.entropy
    }

    fn horizon(&self) -> f64 {
        self.env.horizon
    }

    fn initial_state(&self) -> f64 {
        self.env.x0
    }

    fn true_params(&self) -> (ParamVector, ParamVector) {
        repo_true_params(&self.env).expect("validated repo parameters with nonzero growth rate")
    }

    fn value(&self, theta: &[f64], t: f64, x: f64) -> Result<f64> {
        let mut scratch = [0.0; 3];
        self.value_grad(theta, t, x, &mut scratch)
    }

    fn value_grad(&self, theta: &[f64], t: f64, x: f64, grad: &mut [f64]) -> Result<f64> {
        check_len(theta, 3, "theta")?;
        Self::check_state(x)?;
        let tau = check_time(t, self.env.horizon)?;
        let h = self.env.h;
        let sg = self.entropy.gamma().sqrt();
        let e1 = (theta[0] * tau).exp();
        let e2 = e1 * e1;
        let xh = x.powf(h) / h;
        grad[0] = tau * e1 * xh + 2.0 * theta[1] * tau * e2;
        grad[1] = e2 - 1.0;
        grad[2] = -sg * tau;
        Ok(e1 * xh + theta[1] * (e2 - 1.0) - (theta[2] * sg - sg * sg) * tau)
    }

    fn q(&self, zeta: &[f64], t: f64, x: f64, u: [f64; 2]) -> Result<f64> {
        let mut scratch = [0.0; 5];
        self.q_grad(zeta, t, x, u, &mut scratch)
    }

    fn q_grad(&self, zeta: &[f64], t: f64, x: f64, u: [f64; 2], grad: &mut [f64]) -> Result<f64> {
        let tau = check_time(t, self.env.horizon)?;
        let (shape, xh, growth) = self.zeta_shape(zeta, tau, x)?;
        let [a1, a2] = shape.curvature;
        let d1 = u[0] - shape.center[0];
        let d2 = u[1] - shape.center[1];
        let gamma = self.entropy.gamma();
        let root = (zeta[1] * zeta[2]).powf(0.25);
        let k = 4.0 / 3.0 * (gamma / PI).sqrt();
        let constant = k * root - gamma;
        grad[0] = 2.0 * tau * growth * xh * (zeta[1] * zeta[3] * d1 + zeta[2] * zeta[4] * d2);
        grad[1] = -xh * xh * d1 * d1 + 0.25 * k * root / zeta[1];
        grad[2] = -xh * xh * d2 * d2 + 0.25 * k * root / zeta[2];
        grad[3] = 2.0 * zeta[1] * xh * growth * d1;
        grad[4] = 2.0 * zeta[2] * xh * growth * d2;
        Ok(-a1 * d1 * d1 - a2 * d2 * d2 + constant)
    }

    fn policy_shape(&self, zeta: &[f64], t: f64, x: f64) -> Result<PolicyShape> {
        let tau = check_time(t, self.env.horizon)?;
        Ok(self.zeta_shape(zeta, tau, x)?.0)
    }

    fn q_action_grad(&self, zeta: &[f64], t: f64, x: f64, u: [f64; 2]) -> Result<[f64; 2]> {
        Ok(self.policy_shape(zeta, t, x)?.quadratic_grad(u))
    }

    fn truth_value(&self, t: f64, x: f64) -> Result<f64> {
        Self::check_state(x)?;
        check_time(t, self.env.horizon)?;
        repo_value(t, x, &self.env, &self.entropy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn figure_env() -> DarkPoolParams {
        DarkPoolParams { lambda: 1.0, kappa: 1.0, c: 1.0, ell: 10.0, horizon: 2.0, x0: 5.0 }
    }

    fn ep(p: f64, gamma: f64) -> EntropyParams {
        EntropyParams::new(p, gamma).unwrap()
    }

    /// Backward RK4 for `α' = -α²/(2κ) + λα + 2c`, `α(T) = -ℓ`, carrying
    /// `β' = -rate(-κλα/2)` along.
    fn rk4_riccati(params: &DarkPoolParams, entropy: &EntropyParams, ell: f64, t: f64, steps: usize) -> (f64, f64) {
        let f = |a: f64| -a * a / (2.0 * params.kappa) + params.lambda * a + 2.0 * params.c;
        let g = |a: f64| -entropy_rate(entropy, -params.kappa * params.lambda * a / 2.0).0;
        let h = -(params.horizon - t) / steps as f64;
        let (mut a, mut b) = (-ell, 0.0);
        for _ in 0..steps {
            let k1 = f(a);
            let l1 = g(a);
            let k2 = f(a + 0.5 * h * k1);
            let l2 = g(a + 0.5 * h * k1);
            let k3 = f(a + 0.5 * h * k2);
            let l3 = g(a + 0.5 * h * k2);
            let k4 = f(a + h * k3);
            let l4 = g(a + h * k3);
            a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            b += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
        }
        (a, b)
    }

    #[test]
    fn alpha_ell_terminal_and_rk4() {
        let p = DarkPoolParams::experiment();
        assert_abs_diff_eq!(dp_alpha_ell(p.horizon, &p, 10.0), -10.0, epsilon = 1e-12);
        let e = ep(3.0, 0.01);
        let (a, b) = rk4_riccati(&p, &e, 10.0, 0.0, 10_000);
        assert_abs_diff_eq!(dp_alpha_ell(0.0, &p, 10.0), a, epsilon = 1e-8);
        assert_abs_diff_eq!(dp_beta_ell(0.0, &p, &e, 10.0), b, epsilon = 1e-8);
        assert_eq!(dp_beta_ell(p.horizon, &p, &e, 10.0), 0.0);
    }

    #[test]
    fn beta_ell_shannon_branch_matches_rk4() {
        let p = DarkPoolParams::experiment();
        let e = ep(1.0, 0.05);
        let (_, b) = rk4_riccati(&p, &e, 10.0, 0.1, 10_000);
        assert_abs_diff_eq!(dp_beta_ell(0.1, &p, &e, 10.0), b, epsilon = 1e-8);
    }

    #[test]
    fn alpha_star_examples() {
        let f = figure_env();
        let a = dp_alpha_star(1.0, &f).unwrap();
        assert_abs_diff_eq!(a, -1.77124, epsilon = 1e-5);
        assert_abs_diff_eq!(dp_alpha_ell(1.0, &f, 1e8), a, epsilon = 1e-5);
        let psi = dp_psi_tilde(1.0, &f, &ep(2.0, 1.0)).unwrap();
        assert_abs_diff_eq!(psi, 1.09457, epsilon = 1e-4);

        let p = DarkPoolParams::experiment();
        let a0 = dp_alpha_star(0.0, &p).unwrap();
        assert_abs_diff_eq!(a0, dp_alpha_ell(0.0, &p, 1e8), epsilon = 1e-5);
        assert_abs_diff_eq!(a0, -8.156, epsilon = 1e-3);
        assert!(matches!(dp_alpha_star(p.horizon, &p), Err(Error::Divergence(_))));
    }

    #[test]
    fn beta_star_is_limit_of_beta_ell() {
        let p = DarkPoolParams::experiment();
        let e = ep(3.0, 0.01);
        let star = dp_beta_star(0.0, &p, &e);
        let near = dp_beta_ell(0.0, &p, &e, 1e8);
        assert_abs_diff_eq!(star, near, epsilon = 1e-5);
        assert!(dp_beta_star(p.horizon, &p, &e) == 0.0);
    }

    #[test]
    fn penalty_limit_is_monotone() {
        let p = DarkPoolParams::experiment();
        for i in 0..=24 {
            let t = i as f64 * 0.01;
            let star = dp_alpha_star(t, &p).unwrap();
            let gaps: Vec<f64> = [10.0, 1e3, 1e6, 1e8].iter().map(|&l| (dp_alpha_ell(t, &p, l) - star).abs()).collect();
            for w in gaps.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "t={t} gaps={gaps:?}");
            }
            if t <= 0.2 {
                assert!(gaps[3] < 1e-4, "t={t} gap {}", gaps[3]);
            }
        }
    }

    #[test]
    fn riccati_residual_central_differences() {
        for p in [DarkPoolParams::experiment(), figure_env()] {
            let h = 1e-5;
            for i in 0..100 {
                let t = h + (p.horizon - 2.0 * h) * i as f64 / 99.0;
                let a = dp_alpha_ell(t, &p, p.ell);
                let da = (dp_alpha_ell(t + h, &p, p.ell) - dp_alpha_ell(t - h, &p, p.ell)) / (2.0 * h);
                let rhs = -a * a / (2.0 * p.kappa) + p.lambda * a + 2.0 * p.c;
                assert!((da - rhs).abs() < 1e-6, "t={t} residual {}", da - rhs);
            }
        }
    }

    #[test]
    fn true_params_table_values() {
        let (theta, zeta) = dp_true_params(&DarkPoolParams::experiment());
        let expect = [1.99, 2.01, 2.0, 1.0, 0.01];
        for (v, e) in theta.values().iter().zip(expect) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-4);
        }
        assert_eq!(zeta.values()[5], 1.0);
        assert_eq!(&zeta.values()[..5], theta.values());
    }

    #[test]
    fn degenerate_true_params() {
        let p = DarkPoolParams { lambda: 0.0, c: 0.0, ..DarkPoolParams::experiment() };
        let (theta, _) = dp_true_params(&p);
        assert!(theta.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dp_value_parameterization_matches_lemma() {
        let env = DarkPoolParams::experiment();
        let e = ep(3.0, 0.01);
        let m = DarkPoolModel::new(env, e).unwrap();
        let (theta, _) = m.true_params();
        for t in [0.0, 0.1, 0.2] {
            for x in [-2.0, 0.0, 2.0, 5.0] {
                let j = m.value(theta.values(), t, x).unwrap();
                let v = dp_value_ell(t, x, &env, &e, env.ell);
                assert_abs_diff_eq!(j, v, epsilon = 1e-10);
            }
        }
        assert_abs_diff_eq!(m.value(theta.values(), env.horizon, 3.0).unwrap(), -0.5 * env.ell * 9.0, epsilon = 1e-12);
    }

    #[test]
    fn dp_policy_center_and_curvature() {
        let env = DarkPoolParams::experiment();
        let m = DarkPoolModel::new(env, ep(3.0, 0.01)).unwrap();
        let (_, zeta) = m.true_params();
        let pi = m.policy(zeta.values(), 0.1, 2.0).unwrap();
        let a = dp_alpha_ell(0.1, &env, env.ell);
        assert_abs_diff_eq!(pi.moments().mean[0], -a * 2.0 / (2.0 * env.kappa), epsilon = 1e-12);
        assert_eq!(pi.moments().mean[1], 2.0);
        assert_abs_diff_eq!(pi.curvature()[1], -env.lambda * a / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn dp_q_constant_is_value_derivative() {
        // at truth the constant of q equals β'(t)
        let env = DarkPoolParams::experiment();
        let e = ep(3.0, 0.01);
        let m = DarkPoolModel::new(env, e).unwrap();
        let (_, zeta) = m.true_params();
        let t = 0.1;
        let shape = m.policy_shape(zeta.values(), t, 1.5).unwrap();
        let constant = m.q(zeta.values(), t, 1.5, shape.center).unwrap();
        let h = 1e-5;
        let db = (dp_beta_ell(t + h, &env, &e, env.ell) - dp_beta_ell(t - h, &env, &e, env.ell)) / (2.0 * h);
        assert_abs_diff_eq!(constant, db, epsilon = 1e-8);
    }

    /// Richardson-extrapolated central difference.
    fn richardson(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
        (4.0 * d(h / 2.0) - d(h)) / 3.0
    }

    fn check_grad(analytic: &[f64], f: &dyn Fn(&[f64]) -> f64, at: &[f64]) {
        for i in 0..at.len() {
            let g = |v: f64| {
                let mut p = at.to_vec();
                p[i] = v;
                f(&p)
            };
            let h = 1e-3 * at[i].abs().max(1e-2);
            let fd = richardson(&g, at[i], h);
            let scale = fd.abs().max(1e-6);
            assert!((analytic[i] - fd).abs() / scale < 1e-4, "coordinate {i}: analytic {} vs {fd}", analytic[i]);
        }
    }

    #[test]
    fn dp_gradients_match_differences() {
        for p in [3.0, 2.0, 1.0] {
            let m = DarkPoolModel::new(DarkPoolParams::experiment(), ep(p, 0.01)).unwrap();
            let (theta, zeta) = m.true_params();
            let th: Vec<f64> = theta.values().iter().enumerate().map(|(i, v)| v * (1.0 + 0.1 * i as f64)).collect();
            let mut g = [0.0; 5];
            m.value_grad(&th, 0.03, 1.7, &mut g).unwrap();
            check_grad(&g, &|q| m.value(q, 0.03, 1.7).unwrap(), &th);

            let ze: Vec<f64> = zeta.values().iter().enumerate().map(|(i, v)| v * (1.2 - 0.07 * i as f64)).collect();
            let u = [3.0, 1.2];
            let mut g = [0.0; 6];
            m.q_grad(&ze, 0.07, 1.7, u, &mut g).unwrap();
            check_grad(&g, &|q| m.q(q, 0.07, 1.7, u).unwrap(), &ze);
        }
    }

    #[test]
    fn action_gradients_match_differences() {
        let dp = DarkPoolModel::new(DarkPoolParams::experiment(), ep(3.0, 0.01)).unwrap();
        let repo = RepoModel::new(RepoParams::experiment(), ep(2.0, 0.01)).unwrap();
        let models: [&dyn Parameterization; 2] = [&dp, &repo];
        for m in models {
            let (_, zeta) = m.true_params();
            let u = [0.7, 1.3];
            let g = m.q_action_grad(zeta.values(), 0.1, 1.5, u).unwrap();
            for i in 0..2 {
                let f = |v: f64| {
                    let mut w = u;
                    w[i] = v;
                    m.q(zeta.values(), 0.1, 1.5, w).unwrap()
                };
                assert_abs_diff_eq!(g[i], richardson(&f, u[i], 1e-3), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn repo_rate_and_table() {
        let p = RepoParams::experiment();
        assert_abs_diff_eq!(repo_rate(&p), 0.039025, epsilon = 1e-12);
        let (theta, zeta) = repo_true_params(&p).unwrap();
        for (v, e) in theta.values().iter().zip([0.0390, 0.0525, 0.7523]) {
            assert_abs_diff_eq!(*v, e, epsilon = 5e-5);
        }
        for (v, e) in zeta.values().iter().zip([0.0390, 1.0, 1.0, 0.04, 0.05]) {
            assert_abs_diff_eq!(*v, e, epsilon = 5e-5);
        }
        let sym = RepoParams { mu2: p.mu1, ..p };
        let (_, z) = repo_true_params(&sym).unwrap();
        assert_eq!(z.values()[3], z.values()[4]);
        let flat = RepoParams { h: 1.0, lambda: 0.0, ..p };
        assert!(repo_true_params(&flat).is_err());
    }

    #[test]
    fn repo_ode_residuals() {
        let p = RepoParams::experiment();
        let e = ep(2.0, 0.01);
        assert_eq!(repo_alpha_star(p.horizon, &p), 1.0);
        assert_eq!(repo_beta_star(p.horizon, &p, &e).unwrap(), 0.0);
        let r = repo_rate(&p);
        let h = 1e-5;
        let drift = repo_drift_weight(&p);
        let k = repo_entropy_constant(&p, e.gamma());
        for i in 1..100 {
            let t = p.horizon * i as f64 / 100.0;
            let a = repo_alpha_star(t, &p);
            let da = (repo_alpha_star(t + h, &p) - repo_alpha_star(t - h, &p)) / (2.0 * h);
            assert!((da + r * a).abs() < 1e-8);
            let db = (repo_beta_star(t + h, &p, &e).unwrap() - repo_beta_star(t - h, &p, &e).unwrap()) / (2.0 * h);
            assert!((db + drift * a * a - k + e.gamma()).abs() < 1e-6);
        }
        assert!(matches!(repo_beta_star(0.0, &p, &ep(3.0, 0.01)), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn repo_parameterization_terminal_and_truth() {
        let env = RepoParams::experiment();
        let m = RepoModel::new(env, ep(2.0, 0.01)).unwrap();
        let (theta, zeta) = m.true_params();
        for x in [0.5, 1.0, 2.0, 3.3] {
            assert_abs_diff_eq!(m.value(theta.values(), env.horizon, x).unwrap(), x * x / 2.0, epsilon = 1e-14);
            for t in [0.0, 0.2, 0.4] {
                assert_relative_eq!(
                    m.value(theta.values(), t, x).unwrap(),
                    m.truth_value(t, x).unwrap(),
                    max_relative = 1e-12
                );
            }
        }
        let pi = m.policy(zeta.values(), 0.0, 1.0).unwrap();
        let a = repo_alpha_star(0.0, &env);
        assert_abs_diff_eq!(pi.center()[0], env.mu1 * a / (2.0 * env.a), epsilon = 1e-14);
        assert!(RepoModel::new(env, ep(3.0, 0.01)).is_err());
        assert!(matches!(m.value(theta.values(), 0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn repo_level_and_semi_axis() {
        let env = RepoParams { a: 1.0, b: 1.0, ..RepoParams::experiment() };
        for h in [0.5, 1.5, 2.0] {
            let m = RepoModel::new(RepoParams { h, ..env }, ep(2.0, 1.0)).unwrap();
            let (_, zeta) = m.true_params();
            let pi = m.policy(zeta.values(), 0.1, 1.0).unwrap();
            assert_abs_diff_eq!(pi.level(), 2.0 / PI.sqrt(), epsilon = 1e-12);
            let crate::policy::Support::Ellipse { semi_axes, .. } = pi.support() else { panic!() };
            assert_abs_diff_eq!(semi_axes[0], (2.0 / PI.sqrt()).sqrt(), epsilon = 1e-12);
        }
        let m = RepoModel::new(env, ep(2.0, 0.3)).unwrap();
        let (_, zeta) = m.true_params();
        let x: f64 = 1.7;
        let pi = m.policy(zeta.values(), 0.0, x).unwrap();
        let expect = 2.0 * (env.a * env.b).powf(0.25) * (0.3 / PI).sqrt() * x.powf(env.h);
        assert_abs_diff_eq!(pi.level(), expect, epsilon = 1e-12);
    }

    #[test]
    fn repo_gradients_match_differences() {
        let m = RepoModel::new(RepoParams::experiment(), ep(2.0, 0.01)).unwrap();
        let (theta, zeta) = m.true_params();
        let th: Vec<f64> = theta.values().iter().map(|v| v * 1.3).collect();
        let mut g = [0.0; 3];
        m.value_grad(&th, 0.1, 1.8, &mut g).unwrap();
        check_grad(&g, &|q| m.value(q, 0.1, 1.8).unwrap(), &th);
        let ze: Vec<f64> = zeta.values().iter().enumerate().map(|(i, v)| v * (0.8 + 0.1 * i as f64)).collect();
        let u = [0.2, -0.1];
        let mut g = [0.0; 5];
        m.q_grad(&ze, 0.2, 1.8, u, &mut g).unwrap();
        check_grad(&g, &|q| m.q(q, 0.2, 1.8, u).unwrap(), &ze);
    }
}
