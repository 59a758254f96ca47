//! Gauss–Legendre rules and the two-dimensional integrators built on them.
//!
//! Densities in this crate vanish like `(1 - ρ²)^k` on the boundary of
//! their support, with `k = 1/(p-1)` anywhere in `(0, ∞)`. Tensor rules over
//! a bounding box converge slowly on such kinks, so the workhorse is
//! [`integrate_star`]: polar coordinates about an interior point with the
//! radial map `ρ = R(φ) sin θ`, which turns the boundary factor into the
//! smooth `cos^(2k+1) θ`. [`integrate_box`] (composite tensor rule) covers
//! smooth integrands over rectangles.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, OnceLock, RwLock};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_n` from the Tricomi initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre_and_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(x, w)` pairs mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared, lazily built rule with `n` nodes.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(rule) = cache.read().expect("quadrature cache poisoned").get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(GaussLegendre::new(n));
    cache.write().expect("quadrature cache poisoned").entry(n).or_insert(rule).clone()
}

/// Axis-aligned rectangle `[lo0, hi0] x [lo1, hi1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self { lo, hi }
    }

    pub fn centered(center: [f64; 2], half: [f64; 2]) -> Self {
        Self { lo: [center[0] - half[0], center[1] - half[1]], hi: [center[0] + half[0], center[1] + half[1]] }
    }

    pub fn contains(&self, u: [f64; 2]) -> bool {
        (self.lo[0]..=self.hi[0]).contains(&u[0]) && (self.lo[1]..=self.hi[1]).contains(&u[1])
    }

    pub fn width(&self) -> [f64; 2] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]]
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    /// Distance from interior point `c` to the boundary along unit direction `d`.
    pub fn exit_distance(&self, c: [f64; 2], d: [f64; 2]) -> f64 {
        let mut t = f64::INFINITY;
        for k in 0..2 {
            if d[k] > 0.0 {
                t = t.min((self.hi[k] - c[k]) / d[k]);
            } else if d[k] < 0.0 {
                t = t.min((self.lo[k] - c[k]) / d[k]);
            }
        }
        t.max(0.0)
    }
}

/// Composite tensor Gauss–Legendre over `cells x cells` sub-rectangles.
pub fn integrate_box<F: FnMut([f64; 2]) -> f64>(rect: &Rect, cells: usize, nodes: usize, mut f: F) -> f64 {
    let rule = gauss_legendre(nodes);
    let [w0, w1] = rect.width();
    let (h0, h1) = (w0 / cells as f64, w1 / cells as f64);
    let mut total = 0.0;
    for i in 0..cells {
        let a0 = rect.lo[0] + i as f64 * h0;
        for j in 0..cells {
            let a1 = rect.lo[1] + j as f64 * h1;
            for (x, wx) in rule.mapped(a0, a0 + h0) {
                for (y, wy) in rule.mapped(a1, a1 + h1) {
                    total += wx * wy * f([x, y]);
                }
            }
        }
    }
    total
}

/// How the radial coordinate `ρ ∈ [0, R(φ)]` is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialMap {
    /// `ρ = R sin θ`, for integrands with a power-law zero at `ρ = R`.
    SineEndpoint,
    /// Plain Gauss–Legendre on `[0, R]`.
    Plain,
}

/// Node counts for [`integrate_star`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StarRule {
    pub angles: usize,
    pub radial: usize,
    pub map: RadialMap,
}

impl Default for StarRule {
    fn default() -> Self {
        Self { angles: 64, radial: 64, map: RadialMap::SineEndpoint }
    }
}

/// `∫∫ f(u) du` over the star-shaped region
/// `{ c + (s0 ρ cos φ, s1 ρ sin φ) : 0 ≤ ρ ≤ R(φ) }`.
///
/// Angles use the periodic trapezoid rule, offset by half a step.
pub fn integrate_star<R, F>(center: [f64; 2], scale: [f64; 2], rule: StarRule, mut radius: R, mut f: F) -> f64
where
    R: FnMut([f64; 2]) -> f64,
    F: FnMut([f64; 2]) -> f64,
{
    let radial = gauss_legendre(rule.radial);
    let dphi = 2.0 * PI / rule.angles as f64;
    let jac = scale[0] * scale[1];
    let mut total = 0.0;
    for a in 0..rule.angles {
        let phi = (a as f64 + 0.5) * dphi;
        let dir = [phi.cos(), phi.sin()];
        let r_max = radius(dir);
        if r_max <= 0.0 {
            continue;
        }
        let mut ray = 0.0;
        match rule.map {
            RadialMap::SineEndpoint => {
                for (th, w) in radial.mapped(0.0, FRAC_PI_2) {
                    let (s, c) = th.sin_cos();
                    let rho = r_max * s;
                    let u = [center[0] + scale[0] * rho * dir[0], center[1] + scale[1] * rho * dir[1]];
                    ray += w * f(u) * rho * r_max * c;
                }
            }
            RadialMap::Plain => {
                for (rho, w) in radial.mapped(0.0, r_max) {
                    let u = [center[0] + scale[0] * rho * dir[0], center[1] + scale[1] * rho * dir[1]];
                    ray += w * f(u) * rho;
                }
            }
        }
        total += ray;
    }
    total * dphi * jac
}
