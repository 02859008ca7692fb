use crate::config::{Command, ExperimentConfig, Method};
use crate::output::{num, write_atomic, Table};
use corrfbm::asymptotics::joint_asymptotic;
use corrfbm::bounds::{
    borell_bound_with, calibrate_piterbarg, estimate_mu, holder_constants, minimize_sigma_sq, piterbarg_bound_with,
    Region, VarianceField,
};
use corrfbm::montecarlo::{
    bonferroni_check, conditional_fpt_sample, conditional_fpt_weighted, fpt_limit_test, fpt_limit_test_weighted,
    independence_ratio, joint_survival_grid, joint_survival_is, region_grids, DiscreteSpace, EstimateWithCI,
};
use corrfbm::pickands::{default_delta, estimate_drifted_constant, pickands_extrapolation, Interval};
use corrfbm::{path_supremum, Grid, ModelParams, PairSampler, SeedSpec};
use rand::Rng;
use serde_json::{json, Value};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] corrfbm::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("Bonferroni inequality violated in {0} spaces")]
    Violation(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use corrfbm::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Violation(_) => 4,
            CliError::Core(e) => match e {
                E::Domain(_)
                | E::InvalidGrid(_)
                | E::InvalidSpace(_)
                | E::HypothesisViolated(_)
                | E::ThresholdBelowMu { .. }
                | E::MissingPickands { .. } => 2,
                E::NotPositiveSemiDefinite { .. } | E::InfeasibleCorrelation { .. } => 3,
                E::Io(_) => 1,
                _ => 4,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "io",
            2 => "config",
            3 => "infeasible",
            _ => "numerical",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Runs one experiment; `log` collects the per-threshold summary lines.
pub fn run(cfg: &ExperimentConfig, log: &mut String) -> Result<Table> {
    if cfg.u.is_empty() && uses_thresholds(cfg.command) {
        return Err(CliError::Config("empty threshold list".into()));
    }
    match cfg.command {
        Command::Simulate => simulate(cfg, log),
        Command::Survival => survival(cfg, log),
        Command::Asympt => asympt(cfg, log),
        Command::Pickands => pickands(cfg, log),
        Command::Bounds => bounds(cfg, log),
        Command::Fpt => fpt(cfg, log),
        Command::Ratio => ratio(cfg, log),
        Command::VerifyBonferroni => verify_bonferroni(cfg, log),
    }
}

fn uses_thresholds(c: Command) -> bool {
    !matches!(c, Command::Simulate | Command::Pickands | Command::VerifyBonferroni)
}

fn params(cfg: &ExperimentConfig) -> Result<ModelParams> {
    Ok(ModelParams::new(cfg.alpha1, cfg.alpha2, cfg.r)?)
}

fn grid(cfg: &ExperimentConfig) -> Result<Grid> {
    if cfg.n < 2 {
        return Err(CliError::Config(format!("need n >= 2, got {}", cfg.n)));
    }
    Ok(Grid::uniform_window(cfg.n, cfg.horizon, cfg.t_min)?)
}

fn need_reps(reps: u64, min: u64) -> Result<()> {
    if reps < min {
        return Err(CliError::Config(format!("need at least {min} replications, got {reps}")));
    }
    Ok(())
}

fn method(cfg: &ExperimentConfig, default: Method, allowed: &[Method]) -> Result<Method> {
    let m = cfg.method.unwrap_or(default);
    if !allowed.contains(&m) {
        return Err(CliError::Config(format!("method {m:?} is not available for {}", cfg.command.name())));
    }
    Ok(m)
}

fn params_json(p: &ModelParams) -> Value {
    json!({ "alpha1": p.alpha1(), "alpha2": p.alpha2(), "r": p.r() })
}

const ESTIMATE_COLUMNS: &[&str] =
    &["u", "N", "grid", "estimate", "stderr", "ci95_lo", "ci95_hi", "raw_estimate", "raw_stderr", "seed"];

fn push_estimate(t: &mut Table, p: &ModelParams, u: f64, best: &EstimateWithCI, raw: &EstimateWithCI) {
    let cells = vec![
        num(u),
        json!(best.replications),
        json!(best.grid_points),
        num(best.estimate),
        num(best.std_error),
        num(best.ci95.0),
        num(best.ci95.1),
        num(raw.estimate),
        num(raw.std_error),
        json!(best.seed),
    ];
    let record = json!({
        "params": params_json(p),
        "u": num(u),
        "N": best.replications,
        "grid": best.grid_points,
        "estimate": num(best.estimate),
        "stderr": num(best.std_error),
        "ci95": [num(best.ci95.0), num(best.ci95.1)],
        "raw_estimate": num(raw.estimate),
        "raw_stderr": num(raw.std_error),
        "seed": best.seed,
    });
    t.push(cells, record);
}

fn simulate(cfg: &ExperimentConfig, log: &mut String) -> Result<Table> {
    let p = params(cfg)?;
    let g = grid(cfg)?;
    need_reps(cfg.reps, 1)?;
    let sampler = PairSampler::new(&p, &g, &g)?;
    let times: Vec<f64> = std::iter::once(0.0).chain(g.points().iter().copied()).collect();
    let mut t = Table::new(&["rep", "sup1", "argmax1", "sup2", "argmax2"]);
    let mut dump = cfg.dump_paths.as_ref().map(|_| csv::Writer::from_writer(Vec::new()));
    if let Some(w) = dump.as_mut() {
        w.write_record(["rep", "t", "x1", "x2"]).map_err(io)?;
    }
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..cfg.reps {
        let pair = sampler.sample(SeedSpec::new(cfg.seed, i));
        let (s1, k1) = path_supremum(&pair.x1);
        let (s2, k2) = path_supremum(&pair.x2);
        m1 += s1;
        m2 += s2;
        t.push_flat(vec![json!(i), num(s1), num(times[k1]), num(s2), num(times[k2])]);
        if let Some(w) = dump.as_mut() {
            for (k, &tk) in times.iter().enumerate() {
                w.write_record([i.to_string(), tk.to_string(), pair.x1[k].to_string(), pair.x2[k].to_string()])
                    .map_err(io)?;
            }
        }
    }
    if let (Some(w), Some(path)) = (dump, cfg.dump_paths.as_ref()) {
        let bytes = w.into_inner().map_err(|e| io(e.into_error()))?;
        write_atomic(path, &bytes).map_err(io)?;
    }
    let n = cfg.reps as f64;
    t.summary = json!({ "mean_sup1": num(m1 / n), "mean_sup2": num(m2 / n), "grid": g.len() });
    writeln!(log, "simulate: {} pairs on {} points, mean sups {:.4} {:.4}", cfg.reps, g.len(), m1 / n, m2 / n).unwrap();
    Ok(t)
}

fn io<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Core(corrfbm::Error::Io(e.to_string()))
}

fn survival(cfg: &ExperimentConfig, log: &mut String) -> Result<Table> {
    let p = params(cfg)?;
    let g = grid(cfg)?;
    need_reps(cfg.reps, 2)?;
    let curve = match method(cfg, Method::Crude, &[Method::Crude, Method::Is])? {
        Method::Is => joint_survival_is(&cfg.u, &p, &g, &g, cfg.reps, cfg.seed)?,
        _ => joint_survival_grid(&cfg.u, &p, &g, &g, cfg.reps, cfg.seed)?,
    };
    let mut t = Table::new(ESTIMATE_COLUMNS);
    for pt in &curve.points {
        let best = pt.best();
        push_estimate(&mut t, &p, pt.u, &best, &pt.grid);
        writeln!(log, "u={}: P = {:.6e} +- {:.2e}", pt.u, best.estimate, best.std_error).unwrap();
    }
    t.summary = json!({ "params": params_json(&p), "grid_points": [curve.grid_points.0, curve.grid_points.1] });
    Ok(t)
}

fn ratio(cfg: &ExperimentConfig, log: &mut String) -> Result<Table> {
    let p = params(cfg)?;
    let g = grid(cfg)?;
    need_reps(cfg.reps, 2)?;
    let mut t = Table::new(ESTIMATE_COLUMNS);
    for &u in &cfg.u {
        let e = independence_ratio(u, &p, &g, cfg.reps, cfg.seed)?;
        push_estimate(&mut t, &p, u, &e, &e);
        writeln!(log, "u={u}: P(M1>u | M2>u) = {:.5} +- {:.2e}", e.estimate, e.std_error).unwrap();
    }
    t.summary = json!({ "params": params_json(&p) });
    Ok(t)
}

fn asympt(cfg: &ExperimentConfig, log: &mut String) -> Result<Table> {
    let p = params(cfg)?;
    let mut t = Table::new(&["u", "value", "upsilon1", "upsilon2", "prefactor", "u_factor", "psi"]);
    for &u in &cfg.u {
        let a = joint_asymptotic(u, &p, cfg.h1, cfg.h2)?;
        t.push_flat(vec![
            num(u),
            num(a.value),
            num(a.upsilon1),
            num(a.upsilon2),
            num(a.prefactor),
            num(a.u_factor),
            num(a.psi),
        ]);
        writeln!(log, "u={u}: leading term {:.6e}", a.value).unwrap();
    }
    t.summary = json!({ "params": params_json(&p), "h1": cfg.h1, "h2": cfg.h2 });
    Ok(t)
}

const PICKANDS_COLUMNS: &[&str] =
    &["alpha", "b", "T", "delta", "estimate", "stderr", "at_delta", "at_delta_stderr", "at_half_delta", "at_half_delta_stderr"];

fn pickands(cfg: &ExperimentConfig, log: &mut String) -> Result<Table> {
    need_reps(cfg.reps, 2)?;
    let delta = cfg.delta.unwrap_or_else(|| default_delta(cfg.alpha));
    let mut t = Table::new(PICKANDS_COLUMNS);
    let push = |t: &mut Table, e: &corrfbm::pickands::PickandsEstimate, horizon: Value| {
        t.push_flat(vec![
            num(e.alpha),
            num(e.b),
            horizon,
            num(e.delta),
            num(e.value),
            num(e.std_error),
            num(e.at_delta),
            num(e.at_delta_se),
            e.at_half_delta.map_or(Value::Null, num),
            e.at_half_delta_se.map_or(Value::Null, num),
        ]);
    };
    if cfg.sweep_t.is_empty() {
        let iv = Interval::new(cfg.interval.0, cfg.interval.1)?;
        let e = estimate_drifted_constant(cfg.alpha, cfg.b, iv, delta, cfg.reps, cfg.seed)?;
        push(&mut t, &e, num(iv.length()));
        writeln!(log, "H^{}_{}[{}, {}] = {:.5} +- {:.1e}", cfg.b, cfg.alpha, iv.lo, iv.hi, e.value, e.std_error).unwrap();
        t.summary = json!({ "estimate": num(e.value), "stderr": num(e.std_error) });
        return Ok(t);
    }
    if cfg.b != 0.0 {
        return Err(CliError::Config("the T sweep estimates H_alpha and needs b = 0".into()));
    }
    let ex = pickands_extrapolation(cfg.alpha, &cfg.sweep_t, delta, cfg.reps, cfg.seed)?;
    for e in &ex.raw {
        push(&mut t, e, num(e.horizon));
        writeln!(log, "T={}: H[0,T]/T = {:.5} +- {:.1e}", e.horizon, e.value, e.std_error).unwrap();
    }
    t.push_flat(vec![
        num(cfg.alpha),
        num(0.0),
        json!("inf"),
        num(delta),
        num(ex.intercept),
        num(ex.intercept_se),
        Value::Null,
        Value::Null,
        Value::Null,
        Value::Null,
    ]);
    writeln!(log, "T=inf: H_{} = {:.5} +- {:.1e}", cfg.alpha, ex.intercept, ex.intercept_se).unwrap();
    t.summary = json!({ "intercept": num(ex.intercept), "intercept_stderr": num(ex.intercept_se), "slope": num(ex.slope) });
    Ok(t)
}

fn bounds(cfg: &ExperimentConfig, log: &mut String) -> Result<Table> {
    let p = params(cfg)?;
    need_reps(cfg.reps, 2)?;
    let (s0, s1, t0, t1) = cfg.region;
    let region = Region::new((s0, s1), (t0, t1))?;
    let field = VarianceField::fbm(&p, region);
    let tau = minimize_sigma_sq(&field)?;
    let (gamma, _) = holder_constants(&p, &region);
    // Monte Carlo grids stay above t_min so that r != 0 remains feasible.
    let mc_region = Region::new((s0.max(cfg.t_min), s1), (t0.max(cfg.t_min), t1))?;
    let (g1, g2) = region_grids(&mc_region, cfg.n)?;
    let curve = joint_survival_grid(&cfg.u, &p, &g1, &g2, cfg.reps, cfg.seed)?;
    let mc: Vec<(f64, EstimateWithCI)> = curve.points.iter().map(|pt| (pt.u, pt.best())).collect();
    let mu = match cfg.mu {
        Some(m) => m,
        None => {
            let (m1, m2) = region_grids(&mc_region, cfg.mu_n)?;
            estimate_mu(&p, &m1, &m2, cfg.mu_reps, SeedSpec::derive(cfg.seed, 1))?.estimate
        }
    };
    let (c, validated) = match cfg.c {
        Some(c) => (c, None),
        None => {
            if mc.len() < 2 {
                return Err(CliError::Config("calibrating C needs at least two thresholds".into()));
            }
            let train: Vec<_> = mc.iter().step_by(2).copied().collect();
            let validate: Vec<_> = mc.iter().skip(1).step_by(2).copied().collect();
            let cal = calibrate_piterbarg(&field, gamma, &train, &validate)?;
            (cal.c, Some(cal.validated))
        }
    };
    let mut t = Table::new(&["u", "borell", "piterbarg", "mc", "mc_stderr", "ok"]);
    let mut all_ok = true;
    for (u, e) in &mc {
        let borell = borell_bound_with(*u, tau.tau_sq, mu)?;
        let pit = piterbarg_bound_with(*u, region.measure(), tau.tau_sq, gamma, c);
        let ok = e.estimate - 3.0 * e.std_error <= borell.min(pit);
        all_ok &= ok;
        t.push_flat(vec![num(*u), num(borell), num(pit), num(e.estimate), num(e.std_error), json!(ok)]);
        writeln!(log, "u={u}: mc {:.3e}, borell {:.3e}, piterbarg {:.3e}, ok {ok}", e.estimate, borell, pit).unwrap();
    }
    t.summary = json!({
        "tau_sq": num(tau.tau_sq),
        "argmin": [num(tau.argmin.0), num(tau.argmin.1)],
        "regime": format!("{:?}", tau.regime),
        "gamma": num(gamma),
        "mu": num(mu),
        "c": num(c),
        "calibration_validated": validated,
        "all_ok": all_ok,
    });
    Ok(t)
}

fn fpt(cfg: &ExperimentConfig, log: &mut String) -> Result<Table> {
    let p = params(cfg)?;
    let g = grid(cfg)?;
    let m = method(cfg, Method::Rejection, &[Method::Rejection, Method::Is])?;
    let mut t = Table::new(&[
        "u",
        "n",
        "ks1",
        "ks2",
        "mean1",
        "mean2",
        "limit_mean1",
        "limit_mean2",
        "correlation",
        "copula_distance",
        "p_both",
        "p_both_stderr",
    ]);
    for (k, &u) in cfg.u.iter().enumerate() {
        let seed = SeedSpec::derive(cfg.seed, k as u64);
        let (rep, p_both) = match m {
            Method::Is => {
                need_reps(cfg.reps, 2)?;
                let s = conditional_fpt_weighted(u, &p, &g, &g, cfg.reps, seed)?;
                (fpt_limit_test_weighted(&s.samples, u, &p)?, s.estimate)
            }
            _ => {
                let s = conditional_fpt_sample(u, &p, &g, &g, cfg.target, seed)?;
                (fpt_limit_test(&s.samples, u, &p)?, s.acceptance)
            }
        };
        t.push_flat(vec![
            num(u),
            num(rep.n),
            num(rep.ks1),
            num(rep.ks2),
            num(rep.mean1),
            num(rep.mean2),
            num(rep.limit_mean1),
            num(rep.limit_mean2),
            num(rep.correlation),
            num(rep.copula_distance),
            num(p_both.estimate),
            num(p_both.std_error),
        ]);
        writeln!(log, "u={u}: KS {:.4} {:.4}, corr {:+.4}, n {:.0}", rep.ks1, rep.ks2, rep.correlation, rep.n).unwrap();
    }
    t.summary = json!({ "params": params_json(&p), "method": m });
    Ok(t)
}

fn verify_bonferroni(cfg: &ExperimentConfig, log: &mut String) -> Result<Table> {
    if cfg.spaces == 0 || !(1..=64).contains(&cfg.outcomes) || cfg.events < 2 {
        return Err(CliError::Config(format!(
            "need spaces >= 1, outcomes in 1..=64 and events >= 2, got {}, {}, {}",
            cfg.spaces, cfg.outcomes, cfg.events
        )));
    }
    let mut t = Table::new(&["space", "outcomes", "k", "l", "lhs", "rhs", "holds"]);
    let mut violations = 0;
    for i in 0..cfg.spaces {
        let mut rng = SeedSpec::new(cfg.seed, i as u64).rng();
        let m = rng.random_range(1..=cfg.outcomes);
        let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let space = DiscreteSpace::new(raw.iter().map(|x| x / total).collect())?;
        let k = rng.random_range(2..=cfg.events);
        let l = rng.random_range(2..=cfg.events);
        let a: Vec<u64> = (0..k).map(|_| rng.random::<u64>() & space.full()).collect();
        let b: Vec<u64> = (0..l).map(|_| rng.random::<u64>() & space.full()).collect();
        let res = bonferroni_check(&space, &a, &b)?;
        if !res.holds {
            violations += 1;
        }
        t.push_flat(vec![json!(i), json!(m), json!(k), json!(l), num(res.lhs), num(res.rhs), json!(res.holds)]);
    }
    writeln!(log, "verify-bonferroni: {} spaces, {violations} violations", cfg.spaces).unwrap();
    t.summary = json!({ "spaces": cfg.spaces, "violations": violations });
    if violations > 0 {
        return Err(CliError::Violation(violations));
    }
    Ok(t)
}
