//! Line-based experiment configuration.
//!
//! Each non-blank line is `key = value`; `#` starts a comment. Keys:
//!
//! | key | value |
//! |-----|-------|
//! | `example` | `darkpool` or `repo` |
//! | `algorithm` | `alg1` or `alg2` |
//! | `output_dir` | directory for traces and summaries |
//! | `entropy.p`, `entropy.gamma` | Tsallis index and temperature |
//! | `env.*` | simulator coefficients of the chosen example |
//! | `learn.episodes`, `learn.K`, `learn.dt` | episode count, grid steps, step length |
//! | `learn.seed` | default seed |
//! | `learn.init` | `perturbed` (uniform in `[0.5, 1.5] ×` truth) or `truth` |
//! | `learn.theta`, `learn.zeta` | optional comma-separated initial values |
//! | `schedule.<param>.segment` | one schedule segment, repeatable |
//! | `penalty.w1.segment`, `penalty.w2.segment` | penalty weight segments, repeatable |
//!
//! Dark-pool `env` keys are `lambda, kappa, c, ell, T, x0`; repo keys are
//! `mu1, mu2, sigma, nu, lambda, A, B, h, T, x0`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::closed_form::{DarkPoolModel, Parameterization, RepoModel};
use crate::entropy::EntropyParams;
use crate::envs::{DarkPoolParams, Environment, RepoParams};
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::qlearn::{
    algorithm1_run, algorithm2_run, ChiFamily, LearnerState, PenaltyWeights, Schedule, Schedules, Segment, TraceSink,
};

/// Learning rate used for every χ entry when a config gives none.
pub const DEFAULT_CHI_RATE: f64 = 0.0005;

const DARKPOOL_PRESET: &str = include_str!("../presets/darkpool.cfg");
const REPO_PRESET: &str = include_str!("../presets/repo.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    DarkPool,
    Repo,
}

impl Example {
    pub fn preset_text(self) -> &'static str {
        match self {
            Example::DarkPool => DARKPOOL_PRESET,
            Example::Repo => REPO_PRESET,
        }
    }
}

impl FromStr for Example {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "darkpool" => Ok(Example::DarkPool),
            "repo" => Ok(Example::Repo),
            _ => Err(Error::Config(format!("unknown example `{s}` (expected darkpool or repo)"))),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Example::DarkPool => "darkpool",
            Example::Repo => "repo",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Normalizing function known.
    Alg1,
    /// Normalizing function replaced by penalized policy parameters.
    Alg2,
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" => Ok(Algorithm::Alg1),
            "alg2" => Ok(Algorithm::Alg2),
            _ => Err(Error::Config(format!("unknown algorithm `{s}` (expected alg1 or alg2)"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvConfig {
    DarkPool(DarkPoolParams),
    Repo(RepoParams),
}

impl EnvConfig {
    pub fn horizon(&self) -> f64 {
        match self {
            EnvConfig::DarkPool(p) => p.horizon,
            EnvConfig::Repo(p) => p.horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Perturbed,
    Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub example: Example,
    pub algorithm: Algorithm,
    pub entropy: EntropyParams,
    pub env: EnvConfig,
    pub episodes: u64,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub init: Init,
    pub theta: Option<Vec<f64>>,
    pub zeta: Option<Vec<f64>>,
    /// Keyed by parameter name, e.g. `theta1`, `zeta6`, `chi3`.
    pub schedules: BTreeMap<String, Schedule>,
    pub penalty: PenaltyWeights,
    pub output_dir: PathBuf,
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        e => e,
    })
}

struct Entry {
    line: usize,
    value: String,
}

/// Key/value pairs with their line numbers; only `.segment` keys repeat.
struct Entries {
    map: BTreeMap<String, Vec<Entry>>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, Vec<Entry>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config(format!("line {line}: expected `key = value`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!("line {line}: empty key or value")));
            }
            let slot = map.entry(key.to_string()).or_default();
            if !slot.is_empty() && !key.ends_with(".segment") {
                return Err(Error::Config(format!(
                    "line {line}: duplicate key `{key}` (first on line {})",
                    slot[0].line
                )));
            }
            slot.push(Entry { line, value: value.to_string() });
        }
        Ok(Self { map })
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.map.remove(key).and_then(|mut v| v.pop())
    }

    fn required(&mut self, key: &str) -> Result<Entry> {
        self.take(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn parse_value<T: FromStr>(entry: &Entry, key: &str) -> Result<T> {
        entry
            .value
            .parse()
            .map_err(|_| Error::Config(format!("line {}: invalid value `{}` for `{key}`", entry.line, entry.value)))
    }

    fn real(&mut self, key: &str) -> Result<f64> {
        let e = self.required(key)?;
        Self::parse_value(&e, key)
    }

    fn list(entry: &Entry, key: &str) -> Result<Vec<f64>> {
        entry
            .value
            .split(',')
            .map(|f| {
                f.trim().parse().map_err(|_| {
                    Error::Config(format!("line {}: invalid number `{}` in `{key}`", entry.line, f.trim()))
                })
            })
            .collect()
    }

    fn schedule(entries: Vec<Entry>, key: &str) -> Result<Schedule> {
        let line = entries[0].line;
        let segments = entries
            .iter()
            .map(|e| e.value.parse::<Segment>().map_err(|err| Error::Config(format!("line {}: {err}", e.line))))
            .collect::<Result<Vec<_>>>()?;
        Schedule::new(segments).map_err(|err| Error::Config(format!("line {line}: `{key}`: {err}")))
    }
}

fn invalid(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        e => Error::Config(e.to_string()),
    }
}

impl ExperimentConfig {
    /// Bundled configuration of an example.
    pub fn preset(example: Example) -> Self {
        Self::parse(example.preset_text()).expect("bundled presets are valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let example: Example = {
            let entry = e.required("example")?;
            entry.value.parse().map_err(|err| Error::Config(format!("line {}: {err}", entry.line)))?
        };
        let algorithm: Algorithm = match e.take("algorithm") {
            Some(entry) => entry.value.parse().map_err(|err| Error::Config(format!("line {}: {err}", entry.line)))?,
            None => Algorithm::Alg1,
        };
        let entropy = EntropyParams::new(e.real("entropy.p")?, e.real("entropy.gamma")?).map_err(invalid)?;
        let env = match example {
            Example::DarkPool => EnvConfig::DarkPool(DarkPoolParams {
                lambda: e.real("env.lambda")?,
                kappa: e.real("env.kappa")?,
                c: e.real("env.c")?,
                ell: e.real("env.ell")?,
                horizon: e.real("env.T")?,
                x0: e.real("env.x0")?,
            }),
            Example::Repo => EnvConfig::Repo(RepoParams {
                mu1: e.real("env.mu1")?,
                mu2: e.real("env.mu2")?,
                sigma: e.real("env.sigma")?,
                nu: e.real("env.nu")?,
                lambda: e.real("env.lambda")?,
                a: e.real("env.A")?,
                b: e.real("env.B")?,
                h: e.real("env.h")?,
                horizon: e.real("env.T")?,
                x0: e.real("env.x0")?,
            }),
        };
        let episodes = {
            let entry = e.required("learn.episodes")?;
            Entries::parse_value::<u64>(&entry, "learn.episodes")?
        };
        let steps = {
            let entry = e.required("learn.K")?;
            Entries::parse_value::<usize>(&entry, "learn.K")?
        };
        let dt = e.real("learn.dt")?;
        let seed = match e.take("learn.seed") {
            Some(entry) => Entries::parse_value(&entry, "learn.seed")?,
            None => 0,
        };
        let init = match e.take("learn.init") {
            None => Init::Perturbed,
            Some(entry) => match entry.value.as_str() {
                "perturbed" => Init::Perturbed,
                "truth" => Init::Truth,
                v => {
                    return Err(Error::Config(format!(
                        "line {}: unknown init `{v}` (expected perturbed or truth)",
                        entry.line
                    )))
                }
            },
        };
        let theta = e.take("learn.theta").map(|x| Entries::list(&x, "learn.theta")).transpose()?;
        let zeta = e.take("learn.zeta").map(|x| Entries::list(&x, "learn.zeta")).transpose()?;
        let output_dir = e.take("output_dir").map_or_else(|| PathBuf::from("runs"), |x| PathBuf::from(x.value));

        let mut penalty = PenaltyWeights::default();
        if let Some(v) = e.map.remove("penalty.w1.segment") {
            penalty.w1 = Entries::schedule(v, "penalty.w1")?;
        }
        if let Some(v) = e.map.remove("penalty.w2.segment") {
            penalty.w2 = Entries::schedule(v, "penalty.w2")?;
        }
        let mut schedules = BTreeMap::new();
        let keys: Vec<String> = e.map.keys().filter(|k| k.starts_with("schedule.")).cloned().collect();
        for key in keys {
            let entries = e.map.remove(&key).expect("listed above");
            let Some(name) = key.strip_prefix("schedule.").and_then(|k| k.strip_suffix(".segment")) else {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", entries[0].line)));
            };
            schedules.insert(name.to_string(), Entries::schedule(entries, &key)?);
        }
        if let Some((key, entries)) = e.map.iter().next() {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", entries[0].line)));
        }

        let cfg = Self {
            example,
            algorithm,
            entropy,
            env,
            episodes,
            steps,
            dt,
            seed,
            init,
            theta,
            zeta,
            schedules,
            penalty,
            output_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks invariants that span several keys.
    pub fn validate(&self) -> Result<()> {
        if self.episodes < 1 {
            return Err(Error::Config("learn.episodes must be at least 1".into()));
        }
        if self.steps < 1 || !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("learn.K must be at least 1 and learn.dt positive".into()));
        }
        let horizon = self.env.horizon();
        if (self.steps as f64 * self.dt - horizon).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "learn.K * learn.dt = {} does not equal env.T = {horizon}",
                self.steps as f64 * self.dt
            )));
        }
        self.with_model(|model| {
            let (theta, zeta) = model.true_params();
            if self.algorithm == Algorithm::Alg2 {
                ChiFamily::new(model)?;
            }
            for (given, truth, what) in [(&self.theta, &theta, "learn.theta"), (&self.zeta, &zeta, "learn.zeta")] {
                if let Some(v) = given {
                    if v.len() != truth.len() {
                        return Err(Error::Config(format!("{what} needs {} values, got {}", truth.len(), v.len())));
                    }
                }
            }
            let names = self.parameter_names(&theta, &zeta);
            for name in self.schedules.keys() {
                if !names.contains(name) {
                    return Err(Error::Config(format!("schedule for unknown parameter `{name}`")));
                }
            }
            self.build_schedules(&theta, &zeta)?;
            Ok(())
        })
        .map_err(invalid)
    }

    fn parameter_names(&self, theta: &ParamVector, zeta: &ParamVector) -> Vec<String> {
        let mut names: Vec<String> = theta.names().iter().chain(zeta.names()).cloned().collect();
        if self.algorithm == Algorithm::Alg2 {
            names.extend((1..=zeta.len() + 1).map(|i| format!("chi{i}")));
        }
        names
    }

    fn build_schedules(&self, theta: &ParamVector, zeta: &ParamVector) -> Result<Schedules> {
        let lookup = |name: &str| {
            self.schedules
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Config(format!("missing required key `schedule.{name}.segment`")))
        };
        let theta = theta.names().iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>()?;
        let zeta_s = zeta.names().iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>()?;
        let chi = match self.algorithm {
            Algorithm::Alg1 => Vec::new(),
            Algorithm::Alg2 => (1..=zeta.len() + 1)
                .map(|i| {
                    self.schedules
                        .get(&format!("chi{i}"))
                        .cloned()
                        .unwrap_or_else(|| Schedule::constant(DEFAULT_CHI_RATE))
                })
                .collect(),
        };
        Ok(Schedules { theta, zeta: zeta_s, chi })
    }

    /// Calls `f` with the closed-form parameterization.
    pub fn with_model<T>(&self, f: impl FnOnce(&dyn Parameterization) -> Result<T>) -> Result<T> {
        match self.env {
            EnvConfig::DarkPool(p) => f(&DarkPoolModel::new(p, self.entropy)?),
            EnvConfig::Repo(p) => f(&RepoModel::new(p, self.entropy)?),
        }
    }

    /// Reference `(θ*, ζ*)`.
    pub fn truth(&self) -> Result<(ParamVector, ParamVector)> {
        self.with_model(|m| Ok(m.true_params()))
    }

    /// Initial learner state; draws from `rng` only for perturbed entries.
    /// [`run`](Self::run) calls this first on a `ChaCha8Rng` seeded with the
    /// run seed.
    pub fn initial_state<R: rand::Rng + ?Sized>(
        &self,
        model: &dyn Parameterization,
        rng: &mut R,
    ) -> Result<LearnerState> {
        let mut state = match self.init {
            Init::Perturbed => LearnerState::perturbed_truth(model, rng),
            Init::Truth => LearnerState::at_truth(model),
        };
        if let Some(v) = &self.theta {
            state.theta = state.theta.with_values(v.clone())?;
        }
        if let Some(v) = &self.zeta {
            state.zeta = state.zeta.with_values(v.clone())?;
        }
        Ok(state)
    }

    /// Runs the configured algorithm with `seed`, streaming records to `sink`.
    pub fn run<S: TraceSink + ?Sized>(&self, seed: u64, sink: &mut S) -> Result<LearnerState> {
        match self.env {
            EnvConfig::DarkPool(p) => {
                let m = DarkPoolModel::new(p, self.entropy)?;
                self.run_with(&m.env, &m, seed, sink)
            }
            EnvConfig::Repo(p) => {
                let m = RepoModel::new(p, self.entropy)?;
                self.run_with(&m.env, &m, seed, sink)
            }
        }
    }

    fn run_with<E, M, S>(&self, env: &E, model: &M, seed: u64, sink: &mut S) -> Result<LearnerState>
    where
        E: Environment,
        M: Parameterization,
        S: TraceSink + ?Sized,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = self.initial_state(model, &mut rng)?;
        let schedules = self.build_schedules(&state.theta, &state.zeta)?;
        match self.algorithm {
            Algorithm::Alg1 => algorithm1_run(env, model, state, &schedules, self.episodes, self.steps, &mut rng, sink),
            Algorithm::Alg2 => {
                algorithm2_run(env, model, state, &schedules, &self.penalty, self.episodes, self.steps, &mut rng, sink)
            }
        }
    }
}
