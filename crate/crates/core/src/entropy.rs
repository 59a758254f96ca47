//! Tsallis entropy family `l_p` and its derivative.
//!
//! For `p > 1` the generator is `l_p(z) = (1 - z^(p-1)) / (p - 1)`; the
//! Shannon case `p = 1` uses `-ln z`. Indices within `1e-8` of one are
//! routed to the Shannon branch because `1/(p-1)` exponents overflow there.

use crate::error::{Error, Result};
use crate::policy::QGaussian2D;

/// Indices in `[1, 1 + SHANNON_EPS)` are treated as exactly one.
pub const SHANNON_EPS: f64 = 1e-8;

/// Entropy index `p >= 1` and temperature `gamma > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyParams {
    p: f64,
    gamma: f64,
}

impl EntropyParams {
    pub fn new(p: f64, gamma: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidParameter(format!("entropy index p must be >= 1, got {p}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("temperature gamma must be > 0, got {gamma}")));
        }
        Ok(Self { p, gamma })
    }

    /// Shannon entropy at the given temperature.
    pub fn shannon(gamma: f64) -> Result<Self> {
        Self::new(1.0, gamma)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_shannon(&self) -> bool {
        self.p < 1.0 + SHANNON_EPS
    }

    /// Same index, different temperature.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.p, gamma)
    }

    /// `((p-1)/(p*gamma))^(1/(p-1))`, the prefactor of the q-Gaussian density.
    pub(crate) fn density_prefactor(&self) -> f64 {
        let p = self.p;
        ((p - 1.0) / (p * self.gamma)).powf(1.0 / (p - 1.0))
    }
}

fn check_positive(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("entropy argument must be positive and finite, got {z}")))
    }
}

/// `l_p(z)`.
pub fn tsallis(params: &EntropyParams, z: f64) -> Result<f64> {
    check_positive(z)?;
    Ok(tsallis_unchecked(params, z))
}

/// `l_p'(z)`: `-z^(p-2)` for `p > 1`, `-1/z` for Shannon.
pub fn tsallis_deriv(params: &EntropyParams, z: f64) -> Result<f64> {
    check_positive(z)?;
    Ok(tsallis_deriv_unchecked(params, z))
}

/// `l_p(z)` without the positivity check. `z = 0` is allowed for `p > 1`.
#[inline]
pub(crate) fn tsallis_unchecked(params: &EntropyParams, z: f64) -> f64 {
    if params.is_shannon() {
        -z.ln()
    } else {
        let p = params.p;
        (1.0 - z.powf(p - 1.0)) / (p - 1.0)
    }
}

#[inline]
pub(crate) fn tsallis_deriv_unchecked(params: &EntropyParams, z: f64) -> f64 {
    if params.is_shannon() {
        -1.0 / z
    } else {
        -z.powf(params.p - 2.0)
    }
}

/// `∫ l_p(π(u)) π(u) du` for a normalized q-Gaussian policy.
///
/// Closed form `1/(p-1) - ψ̃/((2p-1)γ)` for `p > 1`; the Shannon branch has
/// the Gaussian closed form `ln(γπ/√(a1 a2)) + 1`, which the quadrature
/// fallback in [`QGaussian2D::integrate`] reproduces.
pub fn policy_entropy_integral(params: &EntropyParams, policy: &QGaussian2D) -> Result<f64> {
    if !policy.is_normalized() {
        return Err(Error::InvalidParameter("entropy integral requires a normalized policy".into()));
    }
    if params.is_shannon() {
        let ent = *params;
        return Ok(policy.integrate(|_, d| if d > 0.0 { tsallis_unchecked(&ent, d) * d } else { 0.0 }));
    }
    let p = params.p;
    Ok(1.0 / (p - 1.0) - policy.level() / ((2.0 * p - 1.0) * params.gamma))
}
