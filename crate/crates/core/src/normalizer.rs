//! Normalizing function for arbitrary q-slices: solve for `ψ` with
//! `∫ c_p (q(u) + ψ)_+^(1/(p-1)) du = 1`, build the resulting policy, and
//! evaluate the consistency residual `∫ (q + γ l_p(π)) π du`.
//!
//! The positive region `{q + ψ > 0}` is assumed star-shaped about the
//! maximizer of `q` (true for every concave slice). Integrals run along rays
//! from the maximizer to the root of `q + ψ` on each ray.

use crate::entropy::{tsallis_unchecked, EntropyParams};
use crate::error::{Error, Result};
use crate::policy::QGaussian2D;
use crate::quadrature::{integrate_box, integrate_star, Rect, StarRule};

const PSI_TOL: f64 = 1e-10;
const GRID: usize = 41;
const RAY_BISECTIONS: usize = 64;

/// `u ↦ q(t, x, u)` at fixed `(t, x)`, with the box it is integrated over.
#[derive(Clone)]
pub struct QSlice<F> {
    pub evaluate: F,
    pub search_box: Rect,
}

impl<F: Fn([f64; 2]) -> f64> QSlice<F> {
    pub fn new(evaluate: F, search_box: Rect) -> Self {
        Self { evaluate, search_box }
    }

    #[inline]
    pub fn eval(&self, u: [f64; 2]) -> f64 {
        (self.evaluate)(u)
    }

    /// Maximizer and maximum over the box, plus the largest `|q|` seen on
    /// the search grid.
    fn maximize(&self) -> ([f64; 2], f64, f64) {
        let b = &self.search_box;
        let [w0, w1] = b.width();
        let mut best = (b.center(), f64::NEG_INFINITY);
        let mut abs_max: f64 = 0.0;
        for i in 0..GRID {
            for j in 0..GRID {
                let u = [b.lo[0] + w0 * i as f64 / (GRID - 1) as f64, b.lo[1] + w1 * j as f64 / (GRID - 1) as f64];
                let v = self.eval(u);
                abs_max = abs_max.max(v.abs());
                if v > best.1 {
                    best = (u, v);
                }
            }
        }
        // compass search from the best grid point
        let mut step = [w0 / (GRID - 1) as f64, w1 / (GRID - 1) as f64];
        let (mut u, mut v) = best;
        while step[0] > 1e-13 * w0.max(1e-300) || step[1] > 1e-13 * w1.max(1e-300) {
            let mut moved = false;
            for (d0, d1) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                let cand = [u[0] + d0 * step[0], u[1] + d1 * step[1]];
                if !b.contains(cand) {
                    continue;
                }
                let cv = self.eval(cand);
                if cv > v {
                    u = cand;
                    v = cv;
                    moved = true;
                }
            }
            if !moved {
                step = [step[0] * 0.5, step[1] * 0.5];
            }
        }
        (u, v, abs_max.max(v.abs()))
    }
}

/// Common interface of the policy densities in this crate.
pub trait Density {
    fn density(&self, u: [f64; 2]) -> f64;
    /// `∫ g(u, π(u)) du` over the policy's support.
    fn integrate<G: FnMut([f64; 2], f64) -> f64>(&self, g: G) -> f64;
}

impl Density for QGaussian2D {
    fn density(&self, u: [f64; 2]) -> f64 {
        QGaussian2D::density(self, u)
    }

    fn integrate<G: FnMut([f64; 2], f64) -> f64>(&self, g: G) -> f64 {
        QGaussian2D::integrate(self, g)
    }
}

/// Result of integrating at a trial `ψ`.
enum Mass {
    Inside(f64),
    /// The positive region reaches the box boundary at this point.
    Exceeds([f64; 2]),
}

struct Geometry {
    center: [f64; 2],
    scale: [f64; 2],
}

impl Geometry {
    fn new<F: Fn([f64; 2]) -> f64>(slice: &QSlice<F>, center: [f64; 2]) -> Self {
        let w = slice.search_box.width();
        Self { center, scale: [0.5 * w[0], 0.5 * w[1]] }
    }

    fn point(&self, dir: [f64; 2], rho: f64) -> [f64; 2] {
        [self.center[0] + self.scale[0] * rho * dir[0], self.center[1] + self.scale[1] * rho * dir[1]]
    }

    /// Root of `q + ψ` along `dir`, in scaled radius units, or the boundary
    /// point if `q + ψ` is still positive there.
    fn ray_root<F: Fn([f64; 2]) -> f64>(
        &self,
        slice: &QSlice<F>,
        psi: f64,
        dir: [f64; 2],
    ) -> std::result::Result<f64, [f64; 2]> {
        let exit = slice.search_box.exit_distance(self.center, [self.scale[0] * dir[0], self.scale[1] * dir[1]]);
        let edge = self.point(dir, exit);
        if slice.eval(edge) + psi > 0.0 {
            return Err(edge);
        }
        let (mut lo, mut hi) = (0.0, exit);
        for _ in 0..RAY_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if slice.eval(self.point(dir, mid)) + psi > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn integrate<F, G>(
        &self,
        slice: &QSlice<F>,
        psi: f64,
        rule: StarRule,
        mut g: G,
    ) -> std::result::Result<f64, [f64; 2]>
    where
        F: Fn([f64; 2]) -> f64,
        G: FnMut([f64; 2], f64) -> f64,
    {
        let mut outside = None;
        let value = integrate_star(
            self.center,
            self.scale,
            rule,
            |dir| match self.ray_root(slice, psi, dir) {
                Ok(r) => r,
                Err(edge) => {
                    outside.get_or_insert(edge);
                    0.0
                }
            },
            |u| g(u, (slice.eval(u) + psi).max(0.0)),
        );
        match outside {
            Some(edge) => Err(edge),
            None => Ok(value),
        }
    }
}

fn require_tsallis(entropy: &EntropyParams) -> Result<()> {
    if entropy.is_shannon() {
        return Err(Error::NotApplicable("normalizing function requires p > 1".into()));
    }
    Ok(())
}

fn solve_with_geometry<F: Fn([f64; 2]) -> f64>(slice: &QSlice<F>, entropy: &EntropyParams) -> Result<(f64, [f64; 2])> {
    require_tsallis(entropy)?;
    let (center, q_max, q_abs) = slice.maximize();
    if !q_max.is_finite() {
        return Err(Error::NoSolution(format!("q-slice is not bounded above (max {q_max})")));
    }
    let geo = Geometry::new(slice, center);
    let p = entropy.p();
    let c = entropy.density_prefactor();
    let k = 1.0 / (p - 1.0);
    let rule = StarRule::default();
    let mass = |psi: f64| match geo.integrate(slice, psi, rule, |_, s| c * s.powf(k)) {
        Ok(m) => Mass::Inside(m),
        Err(edge) => Mass::Exceeds(edge),
    };

    let lo0 = -q_max;
    let cap = 1e3 * (1.0 + q_abs);
    let mut delta = 1e-6 * (1.0 + q_abs);
    let mut lo = lo0;
    let hi = loop {
        if delta > cap {
            return Err(Error::NoSolution(format!("no sign change of the constraint within psi <= {}", lo0 + cap)));
        }
        let cand = lo0 + delta;
        match mass(cand) {
            Mass::Inside(m) if m < 1.0 => {
                lo = cand;
                delta *= 2.0;
            }
            _ => break cand,
        }
    };

    let mut hi = hi;
    while hi - lo > PSI_TOL * (1.0 + lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        match mass(mid) {
            Mass::Inside(m) if m < 1.0 => lo = mid,
            _ => hi = mid,
        }
    }
    // the upper end must be a genuine overshoot, not a box exit
    if let Mass::Exceeds(edge) = mass(hi) {
        return Err(Error::SearchBoxTooSmall(edge));
    }
    Ok((0.5 * (lo + hi), center))
}

/// `ψ` with `∫ c_p (q + ψ)_+^(1/(p-1)) du = 1` over the slice's box.
pub fn solve_psi<F: Fn([f64; 2]) -> f64>(slice: &QSlice<F>, entropy: &EntropyParams) -> Result<f64> {
    Ok(solve_with_geometry(slice, entropy)?.0)
}

/// The optimal policy for a q-slice: `c_p (q + ψ)_+^(1/(p-1))`, or the Gibbs
/// density `∝ exp(q/γ)` on the box when `p = 1`.
#[derive(Clone)]
pub struct SlicePolicy<F> {
    slice: QSlice<F>,
    entropy: EntropyParams,
    kind: SliceKind,
}

#[derive(Debug, Clone, Copy)]
enum SliceKind {
    Tsallis { psi: f64, center: [f64; 2] },
    Gibbs { q_max: f64, log_z: f64 },
}

impl<F: Fn([f64; 2]) -> f64> SlicePolicy<F> {
    pub fn slice(&self) -> &QSlice<F> {
        &self.slice
    }

    /// Solved normalizing function; `None` on the Gibbs branch.
    pub fn psi(&self) -> Option<f64> {
        match self.kind {
            SliceKind::Tsallis { psi, .. } => Some(psi),
            SliceKind::Gibbs { .. } => None,
        }
    }
}

const GIBBS_CELLS: usize = 8;
const GIBBS_NODES: usize = 24;

pub fn policy_from_q<F: Fn([f64; 2]) -> f64>(slice: QSlice<F>, entropy: &EntropyParams) -> Result<SlicePolicy<F>> {
    let kind = if entropy.is_shannon() {
        let (_, q_max, _) = slice.maximize();
        let gamma = entropy.gamma();
        let z = integrate_box(&slice.search_box, GIBBS_CELLS, GIBBS_NODES, |u| ((slice.eval(u) - q_max) / gamma).exp());
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::NoSolution(format!("Gibbs normalizer is {z}")));
        }
        SliceKind::Gibbs { q_max, log_z: z.ln() }
    } else {
        let (psi, center) = solve_with_geometry(&slice, entropy)?;
        SliceKind::Tsallis { psi, center }
    };
    Ok(SlicePolicy { slice, entropy: *entropy, kind })
}

impl<F: Fn([f64; 2]) -> f64> Density for SlicePolicy<F> {
    fn density(&self, u: [f64; 2]) -> f64 {
        if !self.slice.search_box.contains(u) {
            return 0.0;
        }
        match self.kind {
            SliceKind::Tsallis { psi, .. } => {
                let s = self.slice.eval(u) + psi;
                if s <= 0.0 {
                    0.0
                } else {
                    self.entropy.density_prefactor() * s.powf(1.0 / (self.entropy.p() - 1.0))
                }
            }
            SliceKind::Gibbs { q_max, log_z } => ((self.slice.eval(u) - q_max) / self.entropy.gamma() - log_z).exp(),
        }
    }

    fn integrate<G: FnMut([f64; 2], f64) -> f64>(&self, mut g: G) -> f64 {
        match self.kind {
            SliceKind::Tsallis { psi, center } => {
                let geo = Geometry::new(&self.slice, center);
                let c = self.entropy.density_prefactor();
                let k = 1.0 / (self.entropy.p() - 1.0);
                geo.integrate(&self.slice, psi, StarRule::default(), |u, s| g(u, c * s.powf(k))).unwrap_or(f64::NAN)
            }
            SliceKind::Gibbs { .. } => {
                integrate_box(&self.slice.search_box, GIBBS_CELLS, GIBBS_NODES, |u| g(u, self.density(u)))
            }
        }
    }
}

/// `∫ (q(u) + γ l_p(π(u))) π(u) du`; zero certifies a q-function and policy pair.
pub fn consistency_residual<F, D>(slice: &QSlice<F>, policy: &D, entropy: &EntropyParams) -> f64
where
    F: Fn([f64; 2]) -> f64,
    D: Density,
{
    let gamma = entropy.gamma();
    policy.integrate(|u, d| if d > 0.0 { (slice.eval(u) + gamma * tsallis_unchecked(entropy, d)) * d } else { 0.0 })
}
