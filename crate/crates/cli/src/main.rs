use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsq_core::closed_form::{dp_alpha_ell, dp_alpha_star, dp_beta_star, repo_alpha_star, repo_beta_star, repo_rate};
use tsq_core::config::{load_config, Algorithm, EnvConfig, Example, ExperimentConfig};
use tsq_core::normalizer::{consistency_residual, QSlice};
use tsq_core::qlearn::{LearnerState, TraceRecord, TraceSink};
use tsq_core::trace::{read_traces, write_summary, CsvTrace};
use tsq_core::{Error, Result};

/// Continuous-time q-learning experiments under Tsallis entropy.
#[derive(Parser)]
#[command(name = "tsq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Config file; defaults to the bundled preset of `--example`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `darkpool` or `repo`.
    #[arg(long)]
    example: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn parameters and write trace.csv and summary.csv per seed.
    Run {
        #[command(flatten)]
        source: Source,
        /// `alg1` or `alg2`.
        #[arg(long)]
        algorithm: Option<String>,
        /// Comma-separated seeds; runs execute in parallel.
        #[arg(long)]
        seed: Option<String>,
        /// Output root; overrides TSQ_OUT_DIR and the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Print reference parameters and closed-form quantities on a grid.
    Oracle {
        #[command(flatten)]
        source: Source,
        /// Number of time points in [0, T).
        #[arg(long, default_value_t = 6)]
        points: usize,
        /// Comma-separated states.
        #[arg(long, default_value = "0.5,1,2")]
        x: String,
    },
    /// Draw actions from the reference policy at (t, x).
    SamplePolicy {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Defaults to the initial state.
        #[arg(long)]
        x: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check ODE residuals, policy normalization and consistency at the truth.
    Check {
        #[command(flatten)]
        source: Source,
    },
    /// Split a trace into one `episode learnt true` data file per column.
    FigureData {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn is_validation(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::InvalidParameter(_) | Error::NotApplicable(_))
}

fn load(source: &Source) -> Result<ExperimentConfig> {
    let example = source.example.as_deref().map(str::parse::<Example>).transpose()?;
    match (&source.config, example) {
        (Some(path), ex) => {
            let cfg = load_config(path)?;
            if let Some(ex) = ex {
                if ex != cfg.example {
                    return Err(Error::Config(format!("--example {ex} conflicts with config example {}", cfg.example)));
                }
            }
            Ok(cfg)
        }
        (None, ex) => Ok(ExperimentConfig::preset(ex.unwrap_or(Example::DarkPool))),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|f| f.trim().parse().map_err(|_| Error::Config(format!("invalid {what} `{}`", f.trim()))))
        .collect()
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(format!("{}: {e}", path.display()))
}

/// Writes CSV rows and keeps the value errors for the final report.
struct RunSink {
    csv: CsvTrace<BufWriter<File>>,
    errors: Vec<f64>,
}

impl TraceSink for RunSink {
    fn begin(&mut self, names: &[String]) -> Result<()> {
        self.csv.begin(names)
    }
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        self.errors.push(rec.value_error);
        self.csv.record(rec)
    }
}

/// Final state and the per-episode value errors of one seed.
type SeedOutcome = Result<(LearnerState, Vec<f64>)>;

fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> SeedOutcome {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let trace_path = dir.join("trace.csv");
    let file = File::create(&trace_path).map_err(io(&trace_path))?;
    let mut sink = RunSink { csv: CsvTrace::new(BufWriter::new(file)), errors: Vec::new() };
    let state = cfg.run(seed, &mut sink)?;
    sink.csv.into_inner().flush().map_err(io(&trace_path))?;
    let (theta, zeta) = cfg.truth()?;
    write_summary(&[&state.theta, &state.zeta], &[&theta, &zeta], &dir.join("summary.csv"))?;
    Ok((state, sink.errors))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cmd_run(
    source: &Source,
    algorithm: Option<&str>,
    seeds: Option<&str>,
    out: Option<PathBuf>,
    episodes: Option<u64>,
) -> Result<()> {
    let mut cfg = load(source)?;
    if let Some(a) = algorithm {
        cfg.algorithm = a.parse::<Algorithm>()?;
    }
    if let Some(n) = episodes {
        cfg.episodes = n;
    }
    cfg.validate()?;
    let seeds: Vec<u64> = match seeds {
        Some(s) => parse_list(s, "seed")?,
        None => vec![cfg.seed],
    };
    let root =
        out.or_else(|| std::env::var_os("TSQ_OUT_DIR").map(PathBuf::from)).unwrap_or_else(|| cfg.output_dir.clone());
    let results: Vec<(u64, PathBuf, SeedOutcome)> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let dir = root.join(format!("seed-{seed}"));
                let cfg = &cfg;
                s.spawn(move || {
                    let r = run_seed(cfg, seed, &dir);
                    (seed, dir, r)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let mut failure = None;
    for (seed, dir, r) in results {
        match r {
            Ok((state, errors)) => {
                let window = errors.len().min(1000);
                println!(
                    "seed {seed}: {} episodes, value error {} -> {} (trailing {window} mean {}), rejected {}, projected {}, output {}",
                    state.episode,
                    errors.first().copied().unwrap_or(f64::NAN),
                    errors.last().copied().unwrap_or(f64::NAN),
                    mean(&errors[errors.len() - window..]),
                    state.events.rejected,
                    state.events.projected,
                    dir.display()
                );
            }
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                failure.get_or_insert(e);
            }
        }
    }
    failure.map_or(Ok(()), Err)
}

fn cmd_oracle(source: &Source, points: usize, xs: &str) -> Result<()> {
    let cfg = load(source)?;
    let xs: Vec<f64> = parse_list(xs, "state")?;
    let (theta, zeta) = cfg.truth()?;
    let mut out = std::io::stdout().lock();
    let stdout_err = |e: std::io::Error| Error::Io(format!("stdout: {e}"));
    writeln!(out, "# theta* {theta}\n# zeta* {zeta}").map_err(stdout_err)?;
    writeln!(out, "t,x,alpha,beta,value,center1,center2,curvature1,curvature2,level").map_err(stdout_err)?;
    cfg.with_model(|model| {
        let horizon = model.horizon();
        for i in 0..points.max(1) {
            let t = horizon * i as f64 / points.max(1) as f64;
            let (alpha, beta) = match cfg.env {
                EnvConfig::DarkPool(p) => (dp_alpha_star(t, &p)?, dp_beta_star(t, &p, &cfg.entropy)),
                EnvConfig::Repo(p) => (repo_alpha_star(t, &p), repo_beta_star(t, &p, &cfg.entropy)?),
            };
            for &x in &xs {
                let value = model.truth_value(t, x)?;
                let pi = model.policy(zeta.values(), t, x)?;
                let (c, a) = (pi.center(), pi.curvature());
                writeln!(out, "{t},{x},{alpha},{beta},{value},{},{},{},{},{}", c[0], c[1], a[0], a[1], pi.level())
                    .map_err(stdout_err)?;
            }
        }
        Ok(())
    })
}

fn cmd_sample(source: &Source, t: f64, x: Option<f64>, samples: usize, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let cfg = load(source)?;
    let (_, zeta) = cfg.truth()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = cfg.with_model(|model| {
        let pi = model.policy(zeta.values(), t, x.unwrap_or(model.initial_state()))?;
        (0..samples).map(|_| pi.sample(&mut rng)).collect::<Result<Vec<_>>>()
    })?;
    let mut w: Box<dyn Write> = match &out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io(p))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    let target = out.clone().unwrap_or_else(|| PathBuf::from("stdout"));
    writeln!(w, "u1,u2").map_err(io(&target))?;
    for u in draws {
        writeln!(w, "{},{}", u[0], u[1]).map_err(io(&target))?;
    }
    w.flush().map_err(io(&target))
}

fn cmd_check(source: &Source) -> Result<bool> {
    let cfg = load(source)?;
    let (_, zeta) = cfg.truth()?;
    let mut ok = true;
    let mut report = |name: &str, worst: f64, tol: f64| {
        let pass = worst <= tol;
        ok &= pass;
        println!("{} {name}: max {worst:e} (tolerance {tol:e})", if pass { "PASS" } else { "FAIL" });
    };
    let h = 1e-5;
    let horizon = cfg.env.horizon();
    let grid: Vec<f64> = (0..100).map(|i| h + (horizon - 2.0 * h) * i as f64 / 99.0).collect();
    let ode = match cfg.env {
        EnvConfig::DarkPool(p) => grid
            .iter()
            .map(|&t| {
                let a = dp_alpha_ell(t, &p, p.ell);
                let da = (dp_alpha_ell(t + h, &p, p.ell) - dp_alpha_ell(t - h, &p, p.ell)) / (2.0 * h);
                (da - (-a * a / (2.0 * p.kappa) + p.lambda * a + 2.0 * p.c)).abs()
            })
            .fold(0.0, f64::max),
        EnvConfig::Repo(p) => grid
            .iter()
            .map(|&t| {
                let da = (repo_alpha_star(t + h, &p) - repo_alpha_star(t - h, &p)) / (2.0 * h);
                (da + repo_rate(&p) * repo_alpha_star(t, &p)).abs()
            })
            .fold(0.0, f64::max),
    };
    report("riccati residual", ode, 1e-6);
    let (mass, consistency) = cfg.with_model(|model| {
        let (mut mass, mut cons) = (0.0_f64, 0.0_f64);
        let x0 = model.initial_state();
        for &t in &[0.0, 0.5 * horizon, 0.9 * horizon] {
            for &x in &[0.5 * x0, x0] {
                let pi = model.policy(zeta.values(), t, x)?;
                mass = mass.max((pi.integrate(|_, d| d) - 1.0).abs());
                let slice = QSlice::new(|u| model.q(zeta.values(), t, x, u).unwrap_or(f64::NAN), pi.bounding_box(0.2));
                cons = cons.max(consistency_residual(&slice, &pi, model.entropy()).abs());
            }
        }
        Ok((mass, cons))
    })?;
    report("policy normalization", mass, 1e-6);
    report("consistency residual", consistency, 1e-6);
    Ok(ok)
}

fn cmd_figure_data(source: &Source, trace: &Path, out: &Path) -> Result<()> {
    let (names, records) = read_traces(trace)?;
    let truth: Vec<(String, f64)> = match (&source.config, &source.example) {
        (None, None) => Vec::new(),
        _ => {
            let (theta, zeta) = load(source)?.truth()?;
            theta.iter().chain(zeta.iter()).map(|(n, v)| (n.to_string(), v)).collect()
        }
    };
    std::fs::create_dir_all(out).map_err(io(out))?;
    type Column = Box<dyn Fn(&TraceRecord) -> f64>;
    let mut columns: Vec<(String, Column)> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), Box::new(move |r: &TraceRecord| r.values[i]) as Column))
        .collect();
    columns.push(("value_error".into(), Box::new(|r: &TraceRecord| r.value_error)));
    for (name, get) in &columns {
        let path = out.join(format!("{name}.dat"));
        let mut w = BufWriter::new(File::create(&path).map_err(io(&path))?);
        let reference =
            truth.iter().find(|(n, _)| n == name).map(|&(_, v)| v).or((name == "value_error").then_some(0.0));
        match reference {
            Some(_) => writeln!(w, "# episode learnt true"),
            None => writeln!(w, "# episode learnt"),
        }
        .map_err(io(&path))?;
        for r in &records {
            match reference {
                Some(v) => writeln!(w, "{} {} {v}", r.episode, get(r)),
                None => writeln!(w, "{} {}", r.episode, get(r)),
            }
            .map_err(io(&path))?;
        }
        w.flush().map_err(io(&path))?;
    }
    println!("wrote {} files to {}", columns.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { source, algorithm, seed, out, episodes } => {
            cmd_run(source, algorithm.as_deref(), seed.as_deref(), out.clone(), *episodes).map(|_| true)
        }
        Command::Oracle { source, points, x } => cmd_oracle(source, *points, x).map(|_| true),
        Command::SamplePolicy { source, t, x, samples, seed, out } => {
            cmd_sample(source, *t, *x, *samples, *seed, out.clone()).map(|_| true)
        }
        Command::Check { source } => cmd_check(source),
        Command::FigureData { source, trace, out } => cmd_figure_data(source, trace, out).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_validation(&e) { 1 } else { 2 })
        }
    }
}
