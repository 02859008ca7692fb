//! `corrfbm`: simulation and verification experiments for correlated fBm pairs.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::CliError;
use config::{Command, ExperimentConfig, Format, Method};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "corrfbm", version, about = "Joint suprema of correlated fractional Brownian motions")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Sample path pairs and report their grid suprema
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Write every path as CSV (rep,t,x1,x2)
        #[arg(long, value_name = "PATH")]
        dump_paths: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Joint survival P(M1 > u, M2 > u) over a threshold grid
    Survival {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Estimator
        #[arg(long, value_parser = ["crude", "is"])]
        method: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Leading-order joint asymptotics and its components
    Asympt {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Pickands constant for the first coordinate (needed when alpha1 < 1)
        #[arg(long, allow_hyphen_values = true)]
        h1: Option<f64>,
        /// Pickands constant for the second coordinate (needed when alpha2 < 1)
        #[arg(long, allow_hyphen_values = true)]
        h2: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Drifted Pickands constants H^b_alpha, optionally swept over T
    Pickands {
        /// Index of the fBm, in (0, 2]
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// Drift coefficient
        #[arg(long, allow_hyphen_values = true)]
        b: Option<f64>,
        /// Window as LO,HI
        #[arg(long, value_name = "LO,HI", value_delimiter = ',', allow_hyphen_values = true)]
        interval: Option<Vec<f64>>,
        /// Lattice step (default 0.01, or 0.005 for alpha < 1)
        #[arg(long)]
        delta: Option<f64>,
        /// Window lengths for the 1/T extrapolation of H_alpha
        #[arg(long = "sweep-T", value_name = "T,...", value_delimiter = ',')]
        sweep_t: Option<Vec<f64>>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Borell-TIS and Piterbarg bounds against Monte Carlo
    Bounds {
        /// Variance field (only the fBm pair is built in)
        #[arg(long, default_value = "fbm", value_parser = ["fbm"])]
        field: String,
        #[command(flatten)]
        model: ModelArgs,
        /// Rectangle as S_LO,S_HI,T_LO,T_HI
        #[arg(long, value_name = "S_LO,S_HI,T_LO,T_HI", value_delimiter = ',')]
        region: Option<Vec<f64>>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Centering constant: a number, or auto to estimate it
        #[arg(long, value_name = "auto|VALUE")]
        mu: Option<String>,
        /// Piterbarg constant: a number, or calibrate
        #[arg(long = "C", value_name = "calibrate|VALUE")]
        c: Option<String>,
        /// Steps per unit for the Monte Carlo grids
        #[arg(long)]
        n: Option<usize>,
        /// Monte Carlo grids start at this time
        #[arg(long)]
        t_min: Option<f64>,
        /// Replications for estimating mu
        #[arg(long)]
        mu_reps: Option<u64>,
        /// Steps per unit for estimating mu
        #[arg(long)]
        mu_n: Option<usize>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Conditional first-passage times against their exponential limit
    Fpt {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Conditioning method
        #[arg(long, value_parser = ["rejection", "is"])]
        method: Option<String>,
        /// Accepted pairs per threshold (rejection)
        #[arg(long)]
        target: Option<usize>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Conditional exceedance ratio P(M1 > u | M2 > u)
    Ratio {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Exact check of the two-index Bonferroni bound on random finite spaces
    VerifyBonferroni {
        /// Number of random spaces
        #[arg(long)]
        spaces: Option<usize>,
        /// Maximum number of outcomes per space
        #[arg(long)]
        outcomes: Option<usize>,
        /// Maximum number of events of each kind
        #[arg(long)]
        events: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Index of the first fBm, in (0, 2]
    #[arg(long, allow_hyphen_values = true)]
    alpha1: Option<f64>,
    /// Index of the second fBm, in (0, 2]
    #[arg(long, allow_hyphen_values = true)]
    alpha2: Option<f64>,
    /// Cross-correlation, in (-1, 1)
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Grid steps per horizon
    #[arg(long)]
    n: Option<usize>,
    /// Right end of the time grid
    #[arg(long)]
    horizon: Option<f64>,
    /// Drop grid points below this time
    #[arg(long)]
    t_min: Option<f64>,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    /// Thresholds, comma separated
    #[arg(long = "u", visible_alias = "u-grid", value_name = "U,...", value_delimiter = ',', allow_hyphen_values = true)]
    u: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct McArgs {
    /// Replications
    #[arg(long, visible_alias = "N")]
    reps: Option<u64>,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output format
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Output file (stdout when absent)
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl ModelArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        set!(c.alpha1, self.alpha1);
        set!(c.alpha2, self.alpha2);
        set!(c.r, self.r);
    }
}

impl GridArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        set!(c.n, self.n);
        set!(c.horizon, self.horizon);
        set!(c.t_min, self.t_min);
    }
}

fn parse_method(s: Option<String>) -> Option<Method> {
    s.map(|m| match m.as_str() {
        "crude" => Method::Crude,
        "is" => Method::Is,
        _ => Method::Rejection,
    })
}

fn parse_auto(s: Option<String>, keyword: &str, name: &str) -> Result<Option<Option<f64>>, CliError> {
    match s {
        None => Ok(None),
        Some(v) if v == keyword => Ok(Some(None)),
        Some(v) => v
            .parse()
            .map(|x| Some(Some(x)))
            .map_err(|_| CliError::Config(format!("--{name} expects {keyword} or a number, got {v}"))),
    }
}

struct Run {
    config: ExperimentConfig,
    output: Option<PathBuf>,
    threads: Option<usize>,
}

fn build(sub: Sub) -> Result<Run, CliError> {
    let command = match &sub {
        Sub::Simulate { .. } => Command::Simulate,
        Sub::Survival { .. } => Command::Survival,
        Sub::Asympt { .. } => Command::Asympt,
        Sub::Pickands { .. } => Command::Pickands,
        Sub::Bounds { .. } => Command::Bounds,
        Sub::Fpt { .. } => Command::Fpt,
        Sub::Ratio { .. } => Command::Ratio,
        Sub::VerifyBonferroni { .. } => Command::VerifyBonferroni,
    };
    let common = match &sub {
        Sub::Simulate { common, .. }
        | Sub::Survival { common, .. }
        | Sub::Asympt { common, .. }
        | Sub::Pickands { common, .. }
        | Sub::Bounds { common, .. }
        | Sub::Fpt { common, .. }
        | Sub::Ratio { common, .. }
        | Sub::VerifyBonferroni { common, .. } => common,
    };
    let mut c = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(CliError::Config)?,
        None => ExperimentConfig::default(),
    };
    c.command = command;
    set!(c.seed, common.seed);
    if let Some(f) = &common.format {
        c.format = if f == "json" { Format::Json } else { Format::Csv };
    }
    let output = common.output.clone();
    let threads = common.threads;
    match sub {
        Sub::Simulate { model, grid, mc, dump_paths, .. } => {
            model.apply(&mut c);
            grid.apply(&mut c);
            set!(c.reps, mc.reps);
            if dump_paths.is_some() {
                c.dump_paths = dump_paths;
            }
        }
        Sub::Survival { model, grid, thresholds, mc, method, .. } => {
            model.apply(&mut c);
            grid.apply(&mut c);
            set!(c.u, thresholds.u);
            set!(c.reps, mc.reps);
            if let Some(m) = parse_method(method) {
                c.method = Some(m);
            }
        }
        Sub::Asympt { model, thresholds, h1, h2, .. } => {
            model.apply(&mut c);
            set!(c.u, thresholds.u);
            if h1.is_some() {
                c.h1 = h1;
            }
            if h2.is_some() {
                c.h2 = h2;
            }
        }
        Sub::Pickands { alpha, b, interval, delta, sweep_t, mc, .. } => {
            set!(c.alpha, alpha);
            set!(c.b, b);
            if let Some(iv) = interval {
                let [lo, hi] = iv[..] else {
                    return Err(CliError::Config(format!("--interval expects LO,HI, got {} values", iv.len())));
                };
                c.interval = (lo, hi);
            }
            if delta.is_some() {
                c.delta = delta;
            }
            set!(c.sweep_t, sweep_t);
            set!(c.reps, mc.reps);
        }
        Sub::Bounds { model, region, thresholds, mu, c: cc, n, t_min, mu_reps, mu_n, mc, .. } => {
            model.apply(&mut c);
            if let Some(v) = region {
                let [a, b, s, t] = v[..] else {
                    return Err(CliError::Config(format!("--region expects four values, got {}", v.len())));
                };
                c.region = (a, b, s, t);
            }
            set!(c.u, thresholds.u);
            set!(c.mu, parse_auto(mu, "auto", "mu")?);
            set!(c.c, parse_auto(cc, "calibrate", "C")?);
            set!(c.n, n);
            set!(c.t_min, t_min);
            set!(c.mu_reps, mu_reps);
            set!(c.mu_n, mu_n);
            set!(c.reps, mc.reps);
        }
        Sub::Fpt { model, grid, thresholds, method, target, mc, .. } => {
            model.apply(&mut c);
            grid.apply(&mut c);
            set!(c.u, thresholds.u);
            if let Some(m) = parse_method(method) {
                c.method = Some(m);
            }
            set!(c.target, target);
            set!(c.reps, mc.reps);
        }
        Sub::Ratio { model, grid, thresholds, mc, .. } => {
            model.apply(&mut c);
            grid.apply(&mut c);
            set!(c.u, thresholds.u);
            set!(c.reps, mc.reps);
        }
        Sub::VerifyBonferroni { spaces, outcomes, events, .. } => {
            set!(c.spaces, spaces);
            set!(c.outcomes, outcomes);
            set!(c.events, events);
        }
    }
    Ok(Run { config: c, output, threads })
}

fn fail(e: &CliError) -> ExitCode {
    let code = e.exit_code();
    let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
    eprintln!("{msg}");
    ExitCode::from(code)
}

fn execute(run: Run) -> Result<(), CliError> {
    if let Some(t) = run.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut log = String::new();
    let result = commands::run(&run.config, &mut log);
    eprint!("{log}");
    let table = result?;
    let bytes = output::render(&table, &run.config);
    let io = |e: std::io::Error| CliError::Core(corrfbm::Error::Io(e.to_string()));
    match &run.output {
        Some(p) => output::write_atomic(p, &bytes).map_err(io)?,
        None => std::io::stdout().lock().write_all(&bytes).map_err(io)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return fail(&CliError::Config(e.kind().to_string()));
        }
    };
    match build(cli.command).and_then(execute) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
