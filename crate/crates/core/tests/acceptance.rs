//! End-to-end acceptance checks, one test per criterion. Each test prints a
//! single `criterion N: PASS|FAIL: ...` line before asserting.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use tsq_core::closed_form::{
    dp_alpha_ell, dp_alpha_star, dp_true_params, repo_alpha_star, repo_beta_star, repo_true_params, DarkPoolModel,
    Parameterization, RepoModel,
};
use tsq_core::config::{load_config, Example, ExperimentConfig};
use tsq_core::envs::{rollout, DarkPoolParams, RepoParams};
use tsq_core::normalizer::{consistency_residual, solve_psi, QSlice};
use tsq_core::qlearn::{
    algorithm2_run, chi_expected_gradient, residuals_g, value_error, ChiFamily, LearnerState, PenaltyWeights,
    Schedules, TraceRecord,
};
use tsq_core::{EntropyParams, QGaussian2D};

/// Written straight to stderr so the line shows even when output is captured.
fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn ep(p: f64, gamma: f64) -> EntropyParams {
    EntropyParams::new(p, gamma).unwrap()
}

/// Unit-mass level of a q-Gaussian with curvatures `a1, a2`.
fn unit_level(p: f64, gamma: f64, a1: f64, a2: f64) -> f64 {
    ((a1 * a2).sqrt() / PI).powf((p - 1.0) / p) * p / (p - 1.0) * gamma.powf(1.0 / p)
}

/// `γ/(p-1) - pψ̃/(2p-1)`: the per-unit-time entropy reward of the optimal policy.
fn entropy_reward(p: f64, gamma: f64, a1: f64, a2: f64) -> f64 {
    gamma / (p - 1.0) - p * unit_level(p, gamma, a1, a2) / (2.0 * p - 1.0)
}

/// Backward RK4 for `α' = -α²/(2κ) + λα + 2c`, `α(T) = -ℓ`.
fn rk4_alpha(p: &DarkPoolParams, t: f64, steps: usize) -> f64 {
    let f = |a: f64| -a * a / (2.0 * p.kappa) + p.lambda * a + 2.0 * p.c;
    let h = -(p.horizon - t) / steps as f64;
    let mut a = -p.ell;
    for _ in 0..steps {
        let k1 = f(a);
        let k2 = f(a + 0.5 * h * k1);
        let k3 = f(a + 0.5 * h * k2);
        let k4 = f(a + h * k3);
        a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    a
}

#[test]
fn criterion_1_parameter_maps() {
    let start = std::time::Instant::now();
    let (theta, zeta) = dp_true_params(&DarkPoolParams::experiment());
    let table_theta = [1.99, 2.01, 2.0, 1.0, 0.01];
    // w = sqrt(λ² + 4c/κ) with λ = 0.01, κ = c = 1
    let w = (1e-4f64 + 4.0).sqrt();
    let exact = [w - 0.01, w + 0.01, w, 1.0, 0.01];
    let mut worst_table: f64 = 0.0;
    let mut worst_exact: f64 = 0.0;
    for i in 0..5 {
        worst_table = worst_table.max((theta.values()[i] - table_theta[i]).abs());
        worst_table = worst_table.max((zeta.values()[i] - table_theta[i]).abs());
        worst_exact = worst_exact.max((theta.values()[i] - exact[i]).abs());
    }
    let dp_ok = worst_table < 0.005 && worst_exact < 1e-12 && (zeta.values()[5] - 1.0).abs() < 1e-15;

    let (rt, rz) = repo_true_params(&RepoParams::experiment()).unwrap();
    let table_rt = [0.0390, 0.0525, 0.7523];
    let table_rz = [0.0390, 1.0, 1.0, 0.04, 0.05];
    let repo_worst = rt
        .values()
        .iter()
        .zip(table_rt)
        .chain(rz.values().iter().zip(table_rz))
        .map(|(v, t)| (v - t).abs())
        .fold(0.0, f64::max);
    let repo_ok = repo_worst < 5e-5;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = dp_ok && repo_ok && elapsed < 1.0;
    report(
        1,
        pass,
        &format!(
            "dark pool max table gap {worst_table:.2e}, exact gap {worst_exact:.1e}; repo max table gap {repo_worst:.2e}; {elapsed:.3} s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_oracle_consistency() {
    let start = std::time::Instant::now();
    let p = DarkPoolParams::experiment();
    let rk4_gap = (0..100)
        .map(|i| {
            let t = p.horizon * i as f64 / 100.0;
            (dp_alpha_ell(t, &p, p.ell) - rk4_alpha(&p, t, 2000)).abs()
        })
        .fold(0.0, f64::max);

    let far = DarkPoolParams { ell: 1e8, ..p };
    let mut limit_gap: f64 = 0.0;
    let mut limit_rel: f64 = 0.0;
    for i in 0..100 {
        let t = (p.horizon - 0.01) * i as f64 / 99.0;
        let star = dp_alpha_star(t, &p).unwrap();
        let gap = (dp_alpha_ell(t, &far, far.ell) - star).abs();
        limit_gap = limit_gap.max(gap);
        limit_rel = limit_rel.max(gap / star.abs());
    }

    let r = RepoParams::experiment();
    let e = ep(2.0, 0.01);
    let rate = r.sigma * r.sigma * (r.h - 1.0) * r.h / 2.0 + r.lambda * ((1.0 - r.nu).powf(r.h) - 1.0);
    let drift = r.mu1 * r.mu1 / (4.0 * r.a) + r.mu2 * r.mu2 / (4.0 * r.b);
    let constant = 4.0 / 3.0 * (e.gamma() / PI).sqrt() * (r.a * r.b).powf(0.25) - e.gamma();
    let h = 1e-5;
    let mut ode_gap: f64 = 0.0;
    for i in 1..100 {
        let t = r.horizon * i as f64 / 100.0;
        let a = repo_alpha_star(t, &r);
        let da = (repo_alpha_star(t + h, &r) - repo_alpha_star(t - h, &r)) / (2.0 * h);
        let db = (repo_beta_star(t + h, &r, &e).unwrap() - repo_beta_star(t - h, &r, &e).unwrap()) / (2.0 * h);
        ode_gap = ode_gap.max((da + rate * a).abs()).max((db + drift * a * a - constant).abs());
    }
    let terminal = (repo_alpha_star(r.horizon, &r) - 1.0).abs() + repo_beta_star(r.horizon, &r, &e).unwrap().abs();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = rk4_gap < 1e-6 && limit_gap < 1e-4 && ode_gap < 1e-6 && terminal == 0.0 && elapsed < 5.0;
    report(
        2,
        pass,
        &format!(
            "RK4 gap {rk4_gap:.1e}; l=1e8 limit gap {limit_gap:.1e} abs ({limit_rel:.1e} rel) for t <= T-0.01; repo ODE residual {ode_gap:.1e}; {elapsed:.2} s"
        ),
    );
    assert!(pass);
}

/// Chi-square statistic of samples against the exact radial and angular
/// laws of a q-Gaussian: `|z|²` has CDF `1 - (1-s)^(k+1)` with
/// `k = 1/(p-1)` and the angle is uniform.
fn chi_square_p_value<R: Rng>(pi: &QGaussian2D, p: f64, n: usize, rng: &mut R) -> f64 {
    const RADIAL: usize = 10;
    const ANGULAR: usize = 8;
    let k = 1.0 / (p - 1.0);
    let (m, a, level) = (pi.center(), pi.curvature(), pi.level());
    let mut counts = [0usize; RADIAL * ANGULAR];
    for _ in 0..n {
        let u = pi.sample(rng).unwrap();
        let z = [(u[0] - m[0]) * (a[0] / level).sqrt(), (u[1] - m[1]) * (a[1] / level).sqrt()];
        let s = (z[0] * z[0] + z[1] * z[1]).min(1.0);
        let cdf = 1.0 - (1.0 - s).powf(k + 1.0);
        let ri = ((cdf * RADIAL as f64) as usize).min(RADIAL - 1);
        let angle = z[1].atan2(z[0]) + PI;
        let ai = ((angle / (2.0 * PI) * ANGULAR as f64) as usize).min(ANGULAR - 1);
        counts[ri * ANGULAR + ai] += 1;
    }
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn criterion_3_policy_machinery() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mass_gap: f64 = 0.0;
    let mut moment_gap: f64 = 0.0;
    let mut min_p_value: f64 = 1.0;
    for i in 0..50 {
        let p = [1.5, 2.0, 3.0, 5.0][i % 4];
        let gamma = rng.random_range(0.01..1.0);
        let center = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let curvature = [10f64.powf(rng.random_range(-0.7..0.7)), 10f64.powf(rng.random_range(-0.7..0.7))];
        let pi = QGaussian2D::normalized(ep(p, gamma), center, curvature).unwrap();
        mass_gap = mass_gap.max((pi.integrate(|_, d| d) - 1.0).abs());
        let mo = pi.moments();
        for j in 0..2 {
            let mean = pi.integrate(|u, d| u[j] * d);
            let var = pi.integrate(|u, d| (u[j] - mean).powi(2) * d);
            moment_gap = moment_gap.max((mean - mo.mean[j]).abs()).max((var - mo.variance[j]).abs());
        }
        min_p_value = min_p_value.min(chi_square_p_value(&pi, p, 100_000, &mut rng));
    }

    let dp = DarkPoolModel::new(DarkPoolParams::experiment(), ep(3.0, 0.01)).unwrap();
    let repo = RepoModel::new(RepoParams::experiment(), ep(2.0, 0.01)).unwrap();
    let mut psi_gap: f64 = 0.0;
    let mut tilde_gap: f64 = 0.0;
    let mut dp_residual: f64 = 0.0;
    let mut repo_residual: f64 = 0.0;
    let mut repo_residual_unit_state: f64 = 0.0;

    let env = dp.env;
    let (_, zeta) = dp.true_params();
    for &(t, x) in &[(0.0, 2.0), (0.1, 1.0), (0.2, -0.5), (0.24, 3.0)] {
        let pi = dp.policy(zeta.values(), t, x).unwrap();
        let q = |u: [f64; 2]| dp.q(zeta.values(), t, x, u).unwrap();
        let slice = QSlice::new(q, pi.bounding_box(0.2));
        // curvatures (κ, λR/2) with R = -α^(ℓ)
        let r = -rk4_alpha(&env, t, 4000);
        let (a1, a2) = (env.kappa, env.lambda * r / 2.0);
        let tilde = -entropy_reward(3.0, 0.01, a1, a2);
        let center = [r * x / (2.0 * env.kappa), x];
        tilde_gap = tilde_gap.max((q(center) - tilde).abs());
        let analytic_psi = unit_level(3.0, 0.01, a1, a2) - tilde;
        psi_gap = psi_gap.max((solve_psi(&slice, dp.entropy()).unwrap() - analytic_psi).abs());
        dp_residual = dp_residual.max(consistency_residual(&slice, &pi, dp.entropy()).abs());
    }

    let renv = repo.env;
    let (_, rz) = repo.true_params();
    let gamma = 0.01;
    let tilde = 4.0 / 3.0 * (gamma / PI).sqrt() * (renv.a * renv.b).powf(0.25) - gamma;
    for &(t, x) in &[(0.0, 2.0), (0.25, 1.5), (0.4, 0.8), (0.1, 1.0)] {
        let pi = repo.policy(rz.values(), t, x).unwrap();
        let q = |u: [f64; 2]| repo.q(rz.values(), t, x, u).unwrap();
        let slice = QSlice::new(q, pi.bounding_box(0.2));
        let growth = repo_alpha_star(t, &renv);
        let xh = x.powf(renv.h);
        let center = [renv.mu1 * growth / (2.0 * renv.a * xh), renv.mu2 * growth / (2.0 * renv.b * xh)];
        tilde_gap = tilde_gap.max((q(center) - tilde).abs());
        let analytic_psi = 2.0 * (renv.a * renv.b).powf(0.25) * (gamma / PI).sqrt() * xh - tilde;
        psi_gap = psi_gap.max((solve_psi(&slice, repo.entropy()).unwrap() - analytic_psi).abs());
        let res = consistency_residual(&slice, &pi, repo.entropy()).abs();
        if x == 1.0 {
            repo_residual_unit_state = res;
        } else {
            repo_residual = repo_residual.max(res);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = mass_gap < 1e-6
        && moment_gap < 1e-6
        && min_p_value > 0.001
        && psi_gap < 1e-8
        && tilde_gap < 1e-8
        && dp_residual < 1e-6
        && repo_residual < 1e-6
        && repo_residual_unit_state < 1e-6
        && elapsed < 60.0;
    report(
        3,
        pass,
        &format!(
            "mass gap {mass_gap:.1e}, moment gap {moment_gap:.1e}, min chi-square p {min_p_value:.3}, psi gap {psi_gap:.1e}, \
             q-constant gap {tilde_gap:.1e}, consistency residual dark pool {dp_residual:.1e} / repo {repo_residual:.2e} \
             (x = 1: {repo_residual_unit_state:.1e}); {elapsed:.1} s"
        ),
    );
    assert!(pass);
}

/// Mean and standard error of `Σ_k G_k` over `episodes` episodes at the truth.
fn martingale_sum<M: Parameterization, E: tsq_core::envs::Environment>(
    env: &E,
    model: &M,
    steps: usize,
    episodes: usize,
    seed: u64,
) -> (f64, f64) {
    let (theta, zeta) = model.true_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sums: Vec<f64> = (0..episodes)
        .map(|_| {
            let traj = rollout(env, |t, x| model.policy(zeta.values(), t, x), steps, &mut rng).unwrap();
            residuals_g(
                &traj,
                |t, x| model.value(theta.values(), t, x).unwrap(),
                |t, x, u| model.q(zeta.values(), t, x, u).unwrap(),
            )
            .iter()
            .sum()
        })
        .collect();
    let n = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / n;
    let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn criterion_4_martingale_at_truth() {
    let start = std::time::Instant::now();
    let dp = DarkPoolModel::new(DarkPoolParams::experiment(), ep(3.0, 0.01)).unwrap();
    let (dm, dse) = martingale_sum(&dp.env, &dp, 25, 10_000, 41);
    let repo = RepoModel::new(RepoParams::experiment(), ep(2.0, 0.01)).unwrap();
    let (rm, rse) = martingale_sum(&repo.env, &repo, 50, 10_000, 42);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = dm.abs() <= 3.0 * dse && rm.abs() <= 3.0 * rse && elapsed < 120.0;
    report(
        4,
        pass,
        &format!(
            "dark pool mean {dm:.4} (se {dse:.4}, z {:.2}); repo mean {rm:.4} (se {rse:.4}, z {:.2}); {elapsed:.1} s",
            dm / dse,
            rm / rse
        ),
    );
    assert!(pass);
}

/// Relative tolerance per parameter: 25%, widened to the relative error of
/// the published learnt values where those are further off. `None` exempts.
fn parameter_tolerances(example: Example) -> Vec<Option<f64>> {
    let (truth, learnt): (Vec<f64>, Vec<f64>) = match example {
        Example::DarkPool => (
            vec![1.99, 2.01, 2.0, 1.0, 0.01, 1.99, 2.01, 2.0, 1.0, 0.01, 1.0],
            vec![1.9362, 2.1013, 2.1604, 1.1215, 0.1008, 0.6185, 2.1372, 2.8776, 1.0380, 0.1008, 0.7107],
        ),
        Example::Repo => (
            vec![0.0390, 0.0525, 0.7523, 0.0390, 1.0, 1.0, 0.04, 0.05],
            vec![0.0657, 0.0508, 0.8102, 0.0312, 0.9628, 1.0205, 0.0560, 0.0516],
        ),
    };
    truth
        .iter()
        .zip(learnt)
        .enumerate()
        .map(|(i, (t, l))| {
            // ζ1 of the dark pool is not learnt in the published run either
            if example == Example::DarkPool && i == 5 {
                None
            } else {
                Some(((l - t) / t).abs().max(0.25))
            }
        })
        .collect()
}

fn learning_reproduction(example: Example) -> (bool, String) {
    let cfg = ExperimentConfig::preset(example);
    let seeds = [1u64, 2, 3, 4];
    let mut converged = 0;
    let mut ratios = Vec::new();
    let mut finals: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for &seed in &seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial = cfg
            .with_model(|m| {
                let s = cfg.initial_state(m, &mut rng)?;
                value_error(m, s.theta.values(), 0.0, m.initial_state())
            })
            .unwrap();
        let mut trace: Vec<TraceRecord> = Vec::new();
        let state = cfg.run(seed, &mut trace).unwrap();
        let tail = &trace[trace.len() - 1000..];
        let trailing = tail.iter().map(|r| r.value_error).sum::<f64>() / tail.len() as f64;
        let ratio = trailing / initial;
        if ratio <= 0.1 {
            converged += 1;
        }
        ratios.push(ratio);
        let mut v = state.theta.values().to_vec();
        v.extend_from_slice(state.zeta.values());
        finals.push(v);
        if names.is_empty() {
            names = state.theta.names().iter().chain(state.zeta.names()).cloned().collect::<Vec<_>>();
        }
    }
    let (theta, zeta) = cfg.truth().unwrap();
    let truth: Vec<f64> = theta.values().iter().chain(zeta.values()).copied().collect();
    let mut off = Vec::new();
    for (i, tol) in parameter_tolerances(example).into_iter().enumerate() {
        let Some(tol) = tol else { continue };
        let mut vals: Vec<f64> = finals.iter().map(|f| f[i]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (vals[1] + vals[2]);
        let rel = ((median - truth[i]) / truth[i]).abs();
        if rel > tol {
            off.push(format!("{} {:.0}% > {:.0}%", names[i], 100.0 * rel, 100.0 * tol));
        }
    }
    let pass = converged >= 3 && off.is_empty();
    let ratios: Vec<String> = ratios.iter().map(|r| format!("{:.1}%", 100.0 * r)).collect();
    let detail = format!(
        "{example}: trailing/initial value error [{}], {converged}/4 seeds <= 10%; median parameters outside tolerance: {}",
        ratios.join(", "),
        if off.is_empty() { "none".to_string() } else { off.join(", ") }
    );
    (pass, detail)
}

#[test]
fn criterion_5_learning_reproduction() {
    let start = std::time::Instant::now();
    let (dp_pass, dp_detail) = learning_reproduction(Example::DarkPool);
    let (repo_pass, repo_detail) = learning_reproduction(Example::Repo);
    let pass = dp_pass && repo_pass;
    report(5, pass, &format!("{dp_detail}; {repo_detail}; {:.1} s", start.elapsed().as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_6_algorithm2_properties() {
    let start = std::time::Instant::now();
    let model = DarkPoolModel::new(DarkPoolParams::experiment(), ep(3.0, 0.01)).unwrap();
    let family = ChiFamily::new(&model).unwrap();
    let (_, zeta) = model.true_params();
    let chi = family.initial(&zeta);
    let mut structural: f64 = 0.0;
    for &(t, x) in &[(0.0, 2.0), (0.1, 1.5), (0.2, 0.7)] {
        let g = chi_expected_gradient(&family, chi.values(), zeta.values(), t, x, 1.0, 1.0).unwrap();
        // the last entry scales the level, which leaves the unit-mass manifold
        let norm = g[..g.len() - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        structural = structural.max(norm);
    }

    let desk = load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/darkpool-alg2.cfg")).unwrap();
    let desk = ExperimentConfig { episodes: 2000, ..desk };
    let mut trace: Vec<TraceRecord> = Vec::new();
    desk.run(1, &mut trace).unwrap();
    let level_index = trace.len().min(1) * (5 + 6 + 6);
    let masses: Vec<f64> = trace.iter().map(|r| family.mass(&r.values[11..])).collect();
    let (lo, hi) = masses.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| (lo.min(m), hi.max(m)));
    assert_eq!(trace[0].values.len(), level_index + 1);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut init = LearnerState::perturbed_truth(&model, &mut rng);
    init.chi = Some(family.initial(&init.zeta));
    let out = algorithm2_run(
        &model.env,
        &model,
        init.clone(),
        &Schedules::zero(5, 6, 7),
        &PenaltyWeights::default(),
        10,
        25,
        &mut rng,
        &mut (),
    )
    .unwrap();
    let noop = out.theta == init.theta && out.zeta == init.zeta && out.chi == init.chi;

    let elapsed = start.elapsed().as_secs_f64();
    let pass = structural < 1e-3 && lo >= 0.95 && hi <= 1.05 && noop;
    report(
        6,
        pass,
        &format!(
            "tangent gradient at optimum {structural:.1e}; desk run mass in [{lo:.4}, {hi:.4}] over {} episodes; zero-rate no-op {noop}; {elapsed:.1} s",
            trace.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_small_temperature_limit() {
    let start = std::time::Instant::now();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let second_moments = |pi: &QGaussian2D, rng: &mut ChaCha8Rng| {
        let mut s = [0.0; 2];
        for _ in 0..n {
            let u = pi.sample(rng).unwrap();
            s[0] += u[0] * u[0];
            s[1] += u[1] * u[1];
        }
        [s[0] / n as f64, s[1] / n as f64]
    };

    // the deterministic limit is stated for the unpenalized problem
    let env = DarkPoolParams { ell: 1e8, ..DarkPoolParams::experiment() };
    let dp = DarkPoolModel::new(env, ep(3.0, 1e-4)).unwrap();
    let (t, x) = (0.0, env.x0);
    let alpha = dp_alpha_star(t, &env).unwrap();
    let det = [-alpha * x / (2.0 * env.kappa), x];
    let (_, zeta) = dp.true_params();
    let m = second_moments(&dp.policy(zeta.values(), t, x).unwrap(), &mut rng);
    let dp_rel =
        [(m[0] - det[0] * det[0]).abs() / (det[0] * det[0]), (m[1] - det[1] * det[1]).abs() / (det[1] * det[1])];

    let renv = RepoParams::experiment();
    let repo = RepoModel::new(renv, ep(2.0, 1e-4)).unwrap();
    let x = renv.x0;
    let growth = repo_alpha_star(t, &renv);
    let xh = x.powf(renv.h);
    let det = [renv.mu1 * growth / (2.0 * renv.a * xh), renv.mu2 * growth / (2.0 * renv.b * xh)];
    let (_, rz) = repo.true_params();
    let m = second_moments(&repo.policy(rz.values(), t, x).unwrap(), &mut rng);
    let repo_rel =
        [(m[0] - det[0] * det[0]).abs() / (det[0] * det[0]), (m[1] - det[1] * det[1]).abs() / (det[1] * det[1])];

    let elapsed = start.elapsed().as_secs_f64();
    let worst = dp_rel.iter().chain(&repo_rel).fold(0.0f64, |a, &b| a.max(b));
    let pass = worst <= 0.01 && elapsed < 30.0;
    report(
        7,
        pass,
        &format!(
            "relative second-moment gaps at gamma = 1e-4: dark pool [{:.2e}, {:.2e}], repo [{:.2e}, {:.2e}]; {elapsed:.1} s",
            dp_rel[0], dp_rel[1], repo_rel[0], repo_rel[1]
        ),
    );
    assert!(pass);
}
