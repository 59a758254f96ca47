//! Axis-aligned two-dimensional q-Gaussian policies.
//!
//! For `p > 1` the density is
//! `((p-1)/(γp))^(1/(p-1)) (ψ̃ - a1 (u1-m1)² - a2 (u2-m2)²)₊^(1/(p-1))`,
//! supported on an ellipse. At `p = 1` it degenerates to the Gaussian
//! `√(a1 a2)/(γπ) exp(-(a1 (u1-m1)² + a2 (u2-m2)²)/γ)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::entropy::EntropyParams;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_star, RadialMap, Rect, StarRule};

/// Default cap on rejection-sampler proposals.
pub const DEFAULT_PROPOSAL_CAP: u64 = 1_000_000;

/// Radius, in standard deviations times `√2`, beyond which the Gaussian
/// branch is treated as zero during integration.
const GAUSSIAN_CUTOFF: f64 = 9.0;

/// Relative tolerance for recognising a level as the normalizing one.
const NORMALIZED_RTOL: f64 = 1e-10;

/// `ψ̃ = (√(a1 a2)/π)^((p-1)/p) · p/(p-1) · γ^(1/p)`, the level that makes
/// the q-Gaussian integrate to one.
pub fn normalize_level(entropy: &EntropyParams, a1: f64, a2: f64) -> Result<f64> {
    if entropy.is_shannon() {
        return Err(Error::NotApplicable("the Gaussian branch has no level; it is normalized by its prefactor".into()));
    }
    check_curvature(a1, a2)?;
    let p = entropy.p();
    Ok(((a1 * a2).sqrt() / PI).powf((p - 1.0) / p) * p / (p - 1.0) * entropy.gamma().powf(1.0 / p))
}

fn check_curvature(a1: f64, a2: f64) -> Result<()> {
    if a1 > 0.0 && a2 > 0.0 && a1.is_finite() && a2.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("curvatures must be positive, got ({a1}, {a2})")))
    }
}

/// Region where the density is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
    Unbounded,
}

impl Support {
    pub fn contains(&self, u: [f64; 2]) -> bool {
        match *self {
            Support::Ellipse { center, semi_axes } => {
                let z0 = (u[0] - center[0]) / semi_axes[0];
                let z1 = (u[1] - center[1]) / semi_axes[1];
                z0 * z0 + z1 * z1 <= 1.0
            }
            Support::Unbounded => true,
        }
    }
}

/// Means and per-coordinate variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: [f64; 2],
    pub variance: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGaussian2D {
    entropy: EntropyParams,
    center: [f64; 2],
    curvature: [f64; 2],
    level: f64,
    normalized: bool,
}

impl QGaussian2D {
    /// Normalized distribution; the level is set by [`normalize_level`].
    pub fn normalized(entropy: EntropyParams, center: [f64; 2], curvature: [f64; 2]) -> Result<Self> {
        check_curvature(curvature[0], curvature[1])?;
        check_center(center)?;
        let level =
            if entropy.is_shannon() { f64::NAN } else { normalize_level(&entropy, curvature[0], curvature[1])? };
        Ok(Self { entropy, center, curvature, level, normalized: true })
    }

    /// Distribution with a free level. Only meaningful for `p > 1`; the mass
    /// is `(level / normalize_level)^(p/(p-1))`.
    pub fn with_level(entropy: EntropyParams, center: [f64; 2], curvature: [f64; 2], level: f64) -> Result<Self> {
        if entropy.is_shannon() {
            return Self::normalized(entropy, center, curvature);
        }
        check_curvature(curvature[0], curvature[1])?;
        check_center(center)?;
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::InvalidParameter(format!("level must be positive, got {level}")));
        }
        let norm = normalize_level(&entropy, curvature[0], curvature[1])?;
        let normalized = ((level - norm) / norm).abs() < NORMALIZED_RTOL;
        Ok(Self { entropy, center, curvature, level, normalized })
    }

    pub fn entropy(&self) -> &EntropyParams {
        &self.entropy
    }

    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn curvature(&self) -> [f64; 2] {
        self.curvature
    }

    /// `ψ̃`; NaN on the Gaussian branch.
    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    fn quadratic(&self, u: [f64; 2]) -> f64 {
        let d0 = u[0] - self.center[0];
        let d1 = u[1] - self.center[1];
        self.curvature[0] * d0 * d0 + self.curvature[1] * d1 * d1
    }

    #[inline]
    pub fn density(&self, u: [f64; 2]) -> f64 {
        let gamma = self.entropy.gamma();
        if self.entropy.is_shannon() {
            let [a1, a2] = self.curvature;
            return (a1 * a2).sqrt() / (gamma * PI) * (-self.quadratic(u) / gamma).exp();
        }
        let slack = self.level - self.quadratic(u);
        if slack <= 0.0 {
            return 0.0;
        }
        let p = self.entropy.p();
        self.entropy.density_prefactor() * slack.powf(1.0 / (p - 1.0))
    }

    /// Largest density value, attained at the center.
    pub fn peak(&self) -> f64 {
        self.density(self.center)
    }

    /// Total mass `∫ π du` in closed form.
    pub fn mass(&self) -> f64 {
        if self.entropy.is_shannon() || self.normalized {
            return 1.0;
        }
        let p = self.entropy.p();
        let norm = normalize_level(&self.entropy, self.curvature[0], self.curvature[1])
            .expect("curvatures validated at construction");
        (self.level / norm).powf(p / (p - 1.0))
    }

    pub fn support(&self) -> Support {
        if self.entropy.is_shannon() {
            return Support::Unbounded;
        }
        Support::Ellipse { center: self.center, semi_axes: self.semi_axes() }
    }

    fn semi_axes(&self) -> [f64; 2] {
        [(self.level / self.curvature[0]).sqrt(), (self.level / self.curvature[1]).sqrt()]
    }

    /// Bounding rectangle of the support, inflated by `inflate` (0.2 = 20%).
    /// On the Gaussian branch the rectangle covers the integration cutoff.
    pub fn bounding_box(&self, inflate: f64) -> Rect {
        let half = self.integration_scale();
        Rect::centered(self.center, [half[0] * (1.0 + inflate), half[1] * (1.0 + inflate)])
    }

    fn integration_scale(&self) -> [f64; 2] {
        if self.entropy.is_shannon() {
            let g = self.entropy.gamma();
            [GAUSSIAN_CUTOFF * (g / self.curvature[0]).sqrt(), GAUSSIAN_CUTOFF * (g / self.curvature[1]).sqrt()]
        } else {
            self.semi_axes()
        }
    }

    pub fn moments(&self) -> Moments {
        let var = |a: f64| {
            if self.entropy.is_shannon() {
                self.entropy.gamma() / (2.0 * a)
            } else {
                let p = self.entropy.p();
                self.level * (p - 1.0) / (2.0 * a * (2.0 * p - 1.0))
            }
        };
        Moments { mean: self.center, variance: [var(self.curvature[0]), var(self.curvature[1])] }
    }

    /// `∫ g(u, π(u)) du` over the support, in elliptic polar coordinates.
    pub fn integrate<G: FnMut([f64; 2], f64) -> f64>(&self, g: G) -> f64 {
        self.integrate_with(StarRule::default(), g)
    }

    pub fn integrate_with<G: FnMut([f64; 2], f64) -> f64>(&self, rule: StarRule, mut g: G) -> f64 {
        let rule = if self.entropy.is_shannon() { StarRule { map: RadialMap::Plain, ..rule } } else { rule };
        integrate_star(self.center, self.integration_scale(), rule, |_| 1.0, |u| g(u, self.density(u)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<[f64; 2]> {
        self.sample_with_cap(rng, DEFAULT_PROPOSAL_CAP)
    }

    /// Acceptance–rejection from the uniform law on the bounding rectangle;
    /// the Gaussian branch uses a normal transform instead.
    pub fn sample_with_cap<R: Rng + ?Sized>(&self, rng: &mut R, cap: u64) -> Result<[f64; 2]> {
        if self.entropy.is_shannon() {
            let g = self.entropy.gamma();
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            return Ok([
                self.center[0] + (g / (2.0 * self.curvature[0])).sqrt() * z0,
                self.center[1] + (g / (2.0 * self.curvature[1])).sqrt() * z1,
            ]);
        }
        let [s0, s1] = self.semi_axes();
        let exponent = 1.0 / (self.entropy.p() - 1.0);
        for _ in 0..cap {
            let z0 = 2.0 * rng.random::<f64>() - 1.0;
            let z1 = 2.0 * rng.random::<f64>() - 1.0;
            let slack = 1.0 - z0 * z0 - z1 * z1;
            if slack <= 0.0 {
                continue;
            }
            // density(u) / peak = slack^(1/(p-1))
            if rng.random::<f64>() < slack.powf(exponent) {
                return Ok([self.center[0] + s0 * z0, self.center[1] + s1 * z1]);
            }
        }
        Err(Error::SamplingFailure(cap))
    }
}

fn check_center(center: [f64; 2]) -> Result<()> {
    if center.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("center must be finite, got {center:?}")))
    }
}
