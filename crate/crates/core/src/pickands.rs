//! Pickands-type constants `E exp(sup_{t in L} (sqrt(2) B(t) - |t|^alpha - b t))`.
//!
//! The default estimator draws the path under a mixture of exponentially
//! tilted measures (one per grid point), which keeps every replicate bounded
//! by the number of grid points. Each run evaluates the grid with step
//! `delta/2` and its even sub-grid with step `delta` on the same draws and
//! extrapolates in `delta^{alpha/2}`.

use crate::error::{Error, Result};
use crate::montecarlo::{replicate, EstimateWithCI};
use crate::sampler::{FbmSampler, SeedSpec};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, Ordering};

/// Compact interval `[lo, hi]`; `lo == hi` is a single point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let (a, b) = (self.lo * factor, self.hi * factor);
        Self { lo: a.min(b), hi: a.max(b) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PickandsMethod {
    /// Mixture change of measure; bounded replicates.
    Mixture,
    /// Plain mean of `exp(sup)`.
    Crude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PickandsOptions {
    pub delta: f64,
    pub replications: u64,
    pub seed: u64,
    pub method: PickandsMethod,
    /// Also evaluate at `delta/2` and extrapolate.
    pub refine: bool,
}

impl PickandsOptions {
    pub fn new(delta: f64, replications: u64, seed: u64) -> Self {
        Self { delta, replications, seed, method: PickandsMethod::Mixture, refine: true }
    }
}

/// Grid step used when none is given: rougher paths get a finer grid.
pub fn default_delta(alpha: f64) -> f64 {
    if alpha < 1.0 {
        0.005
    } else {
        0.01
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PickandsEstimate {
    /// Headline value: extrapolated when `at_half_delta` is present.
    pub value: f64,
    pub std_error: f64,
    pub alpha: f64,
    pub b: f64,
    pub interval: Interval,
    /// Window length `T`.
    pub horizon: f64,
    pub delta: f64,
    pub replications: u64,
    pub at_delta: f64,
    pub at_delta_se: f64,
    pub at_half_delta: Option<f64>,
    pub at_half_delta_se: Option<f64>,
    pub method: PickandsMethod,
}

impl PickandsEstimate {
    fn scaled(mut self, f: f64) -> Self {
        self.value *= f;
        self.std_error *= f;
        self.at_delta *= f;
        self.at_delta_se *= f;
        self.at_half_delta = self.at_half_delta.map(|v| v * f);
        self.at_half_delta_se = self.at_half_delta_se.map(|v| v * f);
        self
    }
}

const OVERFLOW_EXPONENT: f64 = 700.0;

fn check_alpha2(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha out of (0,2]: {alpha}")))
    }
}

/// Draws `B` on the lattice `k * step`, `k = k_lo..=k_hi` (with `k_lo <= 0 <= k_hi`).
enum TwoSided {
    Zero,
    Line,
    Fbm(FbmSampler),
}

struct Lattice {
    k_lo: i64,
    k_hi: i64,
    step: f64,
    source: TwoSided,
}

impl Lattice {
    fn new(alpha: f64, step: f64, k_lo: i64, k_hi: i64) -> Result<Self> {
        debug_assert!(k_lo <= 0 && k_hi >= 0);
        let m = (k_hi - k_lo) as usize;
        let source = if m == 0 {
            TwoSided::Zero
        } else if alpha == 2.0 {
            TwoSided::Line
        } else {
            TwoSided::Fbm(FbmSampler::new(alpha, step, m)?)
        };
        Ok(Self { k_lo, k_hi, step, source })
    }

    fn len(&self) -> usize {
        (self.k_hi - self.k_lo) as usize + 1
    }

    /// Fills `out[k - k_lo] = B(k * step)`.
    fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.source {
            TwoSided::Zero => out[0] = 0.0,
            TwoSided::Line => {
                let z: f64 = rng.sample(StandardNormal);
                for (j, x) in out.iter_mut().enumerate() {
                    *x = (self.k_lo + j as i64) as f64 * self.step * z;
                }
            }
            TwoSided::Fbm(s) => {
                s.sample_into(rng, out);
                let origin = out[(-self.k_lo) as usize];
                out.iter_mut().for_each(|x| *x -= origin);
            }
        }
    }
}

fn lattice_range(iv: &Interval, step: f64) -> Result<(i64, i64)> {
    let eps = 1e-9;
    let first = (iv.lo / step - eps).ceil() as i64;
    let last = (iv.hi / step + eps).floor() as i64;
    if first > last {
        return Err(Error::InvalidGrid(format!(
            "interval [{}, {}] contains no lattice point of step {step}",
            iv.lo, iv.hi
        )));
    }
    Ok((first, last))
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn pick_index<R: Rng>(rng: &mut R, cumulative: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

/// Evaluation points (fine lattice), with a mark for the coarse sub-lattice.
struct Plan {
    lattice: Lattice,
    /// Offsets into the lattice buffer.
    index: Vec<usize>,
    coarse: Vec<bool>,
    t: Vec<f64>,
    t_pow: Vec<f64>,
    /// `(|j| * step)^alpha` for lags `j` between evaluation points.
    lag_pow: Vec<f64>,
    /// Log mixture weights and their cumulative sums.
    log_w: Vec<f64>,
    cumulative: Vec<f64>,
    log_z: f64,
}

impl Plan {
    fn new(alpha: f64, b: f64, interval: &Interval, step: f64, coarse_every: i64) -> Result<Self> {
        let (first, last) = lattice_range(interval, step)?;
        let lattice = Lattice::new(alpha, step, first.min(0), last.max(0))?;
        let ks: Vec<i64> = (first..=last).collect();
        let index = ks.iter().map(|k| (k - lattice.k_lo) as usize).collect();
        let coarse = ks.iter().map(|k| k.rem_euclid(coarse_every) == 0).collect();
        let t: Vec<f64> = ks.iter().map(|&k| k as f64 * step).collect();
        let t_pow = t.iter().map(|x| x.abs().powf(alpha)).collect();
        let lag_pow = (0..ks.len()).map(|j| (j as f64 * step).powf(alpha)).collect();
        let log_w: Vec<f64> = t.iter().map(|x| -b * x).collect();
        let log_z = log_sum_exp(log_w.iter().copied());
        let mut acc = 0.0;
        let cumulative = log_w
            .iter()
            .map(|lw| {
                acc += (lw - log_z).exp();
                acc
            })
            .collect();
        Ok(Self { lattice, index, coarse, t, t_pow, lag_pow, log_w, cumulative, log_z })
    }
}

/// Per-replicate estimates `(coarse, fine)` of the constant.
fn drifted_replicate<R: Rng>(
    plan: &Plan,
    b: f64,
    method: PickandsMethod,
    rng: &mut R,
    path: &mut Vec<f64>,
    y: &mut Vec<f64>,
) -> (f64, f64, f64) {
    let n = plan.t.len();
    let tau = match method {
        PickandsMethod::Mixture => Some(pick_index(rng, &plan.cumulative)),
        PickandsMethod::Crude => None,
    };
    path.resize(plan.lattice.len(), 0.0);
    plan.lattice.sample(rng, path);
    y.resize(n, 0.0);
    let sqrt2 = std::f64::consts::SQRT_2;
    for k in 0..n {
        let base = sqrt2 * path[plan.index[k]];
        y[k] = match tau {
            Some(j) => base + plan.t_pow[j] - plan.lag_pow[k.abs_diff(j)],
            None => base - plan.t_pow[k],
        };
    }
    let mut m_fine = f64::NEG_INFINITY;
    let mut m_coarse = f64::NEG_INFINITY;
    for k in 0..n {
        let v = y[k] - b * plan.t[k];
        m_fine = m_fine.max(v);
        if plan.coarse[k] {
            m_coarse = m_coarse.max(v);
        }
    }
    let log_lr = match tau {
        Some(_) => plan.log_z - log_sum_exp((0..n).map(|k| y[k] + plan.log_w[k])),
        None => 0.0,
    };
    ((m_coarse + log_lr).exp(), (m_fine + log_lr).exp(), m_fine + log_lr)
}

/// `H^b_alpha[interval]` with the mixture estimator at `delta` and `delta/2`.
pub fn estimate_drifted_constant(
    alpha: f64,
    b: f64,
    interval: Interval,
    delta: f64,
    replications: u64,
    seed: u64,
) -> Result<PickandsEstimate> {
    estimate_drifted_constant_with(alpha, b, interval, &PickandsOptions::new(delta, replications, seed))
}

pub fn estimate_drifted_constant_with(
    alpha: f64,
    b: f64,
    interval: Interval,
    opts: &PickandsOptions,
) -> Result<PickandsEstimate> {
    check_alpha2(alpha)?;
    if !(opts.delta > 0.0) || opts.replications == 0 || !b.is_finite() {
        return Err(Error::Domain(format!(
            "delta {} replications {} b {b}",
            opts.delta, opts.replications
        )));
    }
    let (step, every) = if opts.refine { (opts.delta / 2.0, 2) } else { (opts.delta, 1) };
    let plan = Plan::new(alpha, b, &interval, step, every)?;
    let gain = 1.0 / (2f64.powf(alpha / 2.0) - 1.0);
    let overflow = AtomicBool::new(false);
    let mom = replicate(
        opts.replications,
        3,
        || (Vec::new(), Vec::new()),
        |(path, y), i, out| {
            let mut rng = SeedSpec::new(opts.seed, i).rng();
            let (c, f, expo) = drifted_replicate(&plan, b, opts.method, &mut rng, path, y);
            if expo > OVERFLOW_EXPONENT {
                overflow.store(true, Ordering::Relaxed);
            }
            out[0] = c;
            out[1] = f;
            out[2] = f + (f - c) * gain;
        },
    );
    if overflow.load(Ordering::Relaxed) {
        return Err(Error::OverflowGuard { exponent: OVERFLOW_EXPONENT });
    }
    let (value, se, at_delta, at_delta_se, half, half_se) = if opts.refine {
        (mom.mean[2], mom.std_error(2), mom.mean[0], mom.std_error(0), Some(mom.mean[1]), Some(mom.std_error(1)))
    } else {
        (mom.mean[1], mom.std_error(1), mom.mean[1], mom.std_error(1), None, None)
    };
    Ok(PickandsEstimate {
        value,
        std_error: se,
        alpha,
        b,
        interval,
        horizon: interval.length(),
        delta: opts.delta,
        replications: opts.replications,
        at_delta,
        at_delta_se,
        at_half_delta: half,
        at_half_delta_se: half_se,
        method: opts.method,
    })
}

/// Crude estimates of several `(b, interval)` queries on one set of paths,
/// all drawn on the lattice spanning `hull`. Estimates are pathwise monotone
/// in the interval and the drift.
pub fn coupled_crude_constants(
    alpha: f64,
    hull: Interval,
    queries: &[(f64, Interval)],
    delta: f64,
    replications: u64,
    seed: u64,
) -> Result<Vec<EstimateWithCI>> {
    check_alpha2(alpha)?;
    let (first, last) = lattice_range(&hull, delta)?;
    let lattice = Lattice::new(alpha, delta, first.min(0), last.max(0))?;
    let mut ranges = Vec::with_capacity(queries.len());
    for (_, iv) in queries {
        if iv.lo < hull.lo - 1e-12 || iv.hi > hull.hi + 1e-12 {
            return Err(Error::Domain(format!("query [{}, {}] outside hull", iv.lo, iv.hi)));
        }
        ranges.push(lattice_range(iv, delta)?);
    }
    let overflow = AtomicBool::new(false);
    let mom = replicate(replications, queries.len(), Vec::new, |path, i, out| {
        let mut rng = SeedSpec::new(seed, i).rng();
        path.resize(lattice.len(), 0.0);
        lattice.sample(&mut rng, path);
        for (q, ((b, _), (a, z))) in queries.iter().zip(&ranges).enumerate() {
            let mut m = f64::NEG_INFINITY;
            for k in *a..=*z {
                let t = k as f64 * delta;
                let v = std::f64::consts::SQRT_2 * path[(k - lattice.k_lo) as usize] - t.abs().powf(alpha) - b * t;
                m = m.max(v);
            }
            if m > OVERFLOW_EXPONENT {
                overflow.store(true, Ordering::Relaxed);
            }
            out[q] = m.exp();
        }
    });
    if overflow.load(Ordering::Relaxed) {
        return Err(Error::OverflowGuard { exponent: OVERFLOW_EXPONENT });
    }
    Ok((0..queries.len())
        .map(|q| EstimateWithCI::new(mom.mean[q], mom.std_error(q), replications, seed, 0))
        .collect())
}

/// `H^0_alpha[0, T] / T`.
pub fn estimate_pickands(alpha: f64, horizon: f64, delta: f64, replications: u64, seed: u64) -> Result<PickandsEstimate> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("window must be positive: {horizon}")));
    }
    let est = estimate_drifted_constant(alpha, 0.0, Interval::new(0.0, horizon)?, delta, replications, seed)?;
    Ok(est.scaled(1.0 / horizon))
}

/// Raw window estimates and the weighted least-squares fit of
/// `H^0[0,T]/T = H + c/T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickandsExtrapolation {
    pub alpha: f64,
    pub raw: Vec<PickandsEstimate>,
    pub intercept: f64,
    pub intercept_se: f64,
    pub slope: f64,
}

pub fn pickands_extrapolation(
    alpha: f64,
    horizons: &[f64],
    delta: f64,
    replications: u64,
    seed: u64,
) -> Result<PickandsExtrapolation> {
    if horizons.len() < 2 {
        return Err(Error::Domain("need at least two windows".into()));
    }
    let raw = horizons
        .iter()
        .enumerate()
        .map(|(j, &t)| estimate_pickands(alpha, t, delta, replications, SeedSpec::derive(seed, j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let (intercept, intercept_se, slope) = weighted_line(
        &raw.iter().map(|e| 1.0 / e.horizon).collect::<Vec<_>>(),
        &raw.iter().map(|e| e.value).collect::<Vec<_>>(),
        &raw.iter().map(|e| e.std_error).collect::<Vec<_>>(),
    );
    Ok(PickandsExtrapolation { alpha, raw, intercept, intercept_se, slope })
}

/// Weighted least squares `y = a + b x`; returns `(a, se(a), b)`.
fn weighted_line(x: &[f64], y: &[f64], se: &[f64]) -> (f64, f64, f64) {
    let w: Vec<f64> = se.iter().map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1e30 }).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    (intercept, (sxx / det).sqrt(), slope)
}

/// The local constant `Q_alpha[interval]` for correlation `r`, as a drifted
/// constant on the rescaled interval.
pub fn lemma_a_constant(
    alpha: f64,
    r: f64,
    interval: Interval,
    delta: f64,
    replications: u64,
    seed: u64,
) -> Result<PickandsEstimate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("local constant needs alpha in (0,1]: {alpha}")));
    }
    if !(r > -1.0 && r < 1.0) {
        return Err(Error::Domain(format!("r out of (-1,1): {r}")));
    }
    let (scale, b) = lemma_a_scaling(alpha, r);
    estimate_drifted_constant(alpha, b, interval.scaled(scale), delta, replications, seed)
}

/// `(interval scale, drift)` mapping the local constant to a drifted one.
pub fn lemma_a_scaling(alpha: f64, r: f64) -> (f64, f64) {
    let scale = (1.0 / (std::f64::consts::SQRT_2 * (1.0 + r))).powf(2.0 / alpha);
    let b = if alpha == 1.0 { -(1.0 + r) } else { 0.0 };
    (scale, b)
}

/// `E exp(min(S1, S2))` with `S1`, `S2` the sups of `sqrt(2) B(t) - |t|^alpha`
/// over `[0, T]` and `[nT, (n+1)T]`.
pub fn cross_term_constant(
    alpha: f64,
    n: u32,
    horizon: f64,
    delta: f64,
    replications: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    check_alpha2(alpha)?;
    if n < 1 || !(horizon > 0.0) || !(delta > 0.0) || replications == 0 {
        return Err(Error::Domain(format!("n {n}, T {horizon}, delta {delta}")));
    }
    let w1 = lattice_range(&Interval::new(0.0, horizon)?, delta)?;
    let w2 = lattice_range(&Interval::new(n as f64 * horizon, (n + 1) as f64 * horizon)?, delta)?;
    let lattice = Lattice::new(alpha, delta, 0, w2.1)?;
    let ks: Vec<i64> = (w1.0..=w1.1).chain(w2.0..=w2.1).collect();
    let in_first: Vec<bool> = ks.iter().map(|&k| k <= w1.1).collect();
    let t_pow: Vec<f64> = ks.iter().map(|&k| (k as f64 * delta).abs().powf(alpha)).collect();
    let log_m = (ks.len() as f64).ln();
    let overflow = AtomicBool::new(false);
    let mom = replicate(replications, 1, || (Vec::new(), Vec::new()), |(path, y): &mut (Vec<f64>, Vec<f64>), i, out| {
        let mut rng = SeedSpec::new(seed, i).rng();
        let tau = rng.random_range(0..ks.len());
        path.resize(lattice.len(), 0.0);
        lattice.sample(&mut rng, path);
        y.clear();
        let kt = ks[tau];
        for &k in &ks {
            let lag = ((k - kt).abs() as f64 * delta).powf(alpha);
            y.push(std::f64::consts::SQRT_2 * path[k as usize] + t_pow[tau] - lag);
        }
        let mut s1 = f64::NEG_INFINITY;
        let mut s2 = f64::NEG_INFINITY;
        for (j, &v) in y.iter().enumerate() {
            if in_first[j] {
                s1 = s1.max(v);
            } else {
                s2 = s2.max(v);
            }
        }
        let expo = s1.min(s2) + log_m - log_sum_exp(y.iter().copied());
        if expo > OVERFLOW_EXPONENT {
            overflow.store(true, Ordering::Relaxed);
        }
        out[0] = expo.exp();
    });
    if overflow.load(Ordering::Relaxed) {
        return Err(Error::OverflowGuard { exponent: OVERFLOW_EXPONENT });
    }
    Ok(EstimateWithCI::new(mom.mean[0], mom.std_error(0), replications, seed, ks.len()))
}
