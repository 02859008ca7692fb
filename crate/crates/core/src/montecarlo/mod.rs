//! Monte Carlo estimators and the replication harness they share.

mod bonferroni;
mod fpt;
mod importance;
mod local;
mod survival;

pub use bonferroni::{bonferroni_check, BonferroniResult, DiscreteSpace};
pub use fpt::{
    conditional_fpt_sample, conditional_fpt_weighted, fpt_limit_test, fpt_limit_test_weighted, fpt_pair, ConditionalSample, FptLimitReport,
    FptSample, WeightedConditionalSample,
};
pub use importance::{joint_survival_is, ImportanceSampler};
pub use local::{lemma_a_rhs, local_prob, local_window, LocalWindow};
pub use survival::{
    independence_ratio, joint_survival, joint_survival_grid, region_grids, union_prob, SurvivalCurve, SurvivalPoint,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Point estimate with a normal-theory 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub replications: u64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub seed: u64,
    /// Number of grid points per coordinate (0 when not applicable).
    pub grid_points: usize,
}

const Z975: f64 = 1.959_963_984_540_054;

impl EstimateWithCI {
    pub fn new(estimate: f64, std_error: f64, replications: u64, seed: u64, grid_points: usize) -> Self {
        Self {
            estimate,
            replications,
            std_error,
            ci95: (estimate - Z975 * std_error, estimate + Z975 * std_error),
            seed,
            grid_points,
        }
    }

    /// Indicator mean with `stderr = sqrt(p (1 - p) / N)`.
    pub fn from_count(hits: u64, replications: u64, seed: u64, grid_points: usize) -> Self {
        let p = hits as f64 / replications as f64;
        let se = (p * (1.0 - p) / replications as f64).sqrt();
        let mut e = Self::new(p, se, replications, seed, grid_points);
        e.ci95 = (e.ci95.0.max(0.0), e.ci95.1.min(1.0));
        e
    }

    /// Whether `value` is within `k` standard errors.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error
    }
}

pub(crate) const MAX_DIM: usize = 64;

/// Streaming means and co-moments of a fixed-size vector statistic.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Moments {
    pub n: u64,
    pub mean: Vec<f64>,
    /// Row-major `k x k` sums of centered cross products.
    pub comoment: Vec<f64>,
}

impl Moments {
    pub fn new(k: usize) -> Self {
        Self { n: 0, mean: vec![0.0; k], comoment: vec![0.0; k * k] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let k = self.dim();
        self.n += 1;
        let n = self.n as f64;
        assert!(k <= MAX_DIM, "statistic dimension above {MAX_DIM}");
        let mut d = [0.0f64; MAX_DIM];
        for i in 0..k {
            d[i] = x[i] - self.mean[i];
            self.mean[i] += d[i] / n;
        }
        for i in 0..k {
            let di = x[i] - self.mean[i];
            for j in 0..k {
                self.comoment[i * k + j] += di * d[j];
            }
        }
    }

    pub fn merge(a: &Moments, b: &Moments) -> Moments {
        if a.n == 0 {
            return b.clone();
        }
        if b.n == 0 {
            return a.clone();
        }
        let k = a.dim();
        let n = a.n + b.n;
        let (na, nb, nf) = (a.n as f64, b.n as f64, n as f64);
        let delta: Vec<f64> = (0..k).map(|i| b.mean[i] - a.mean[i]).collect();
        let mean = (0..k).map(|i| a.mean[i] + delta[i] * nb / nf).collect();
        let mut comoment = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                comoment[i * k + j] =
                    a.comoment[i * k + j] + b.comoment[i * k + j] + delta[i] * delta[j] * na * nb / nf;
            }
        }
        Moments { n, mean, comoment }
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.covariance(i, i)
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.comoment[i * self.dim() + j] / (self.n - 1) as f64
    }

    /// Standard error of the mean of component `i`.
    pub fn std_error(&self, i: usize) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance(i).max(0.0) / self.n as f64).sqrt()
    }
}

fn merge_tree(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => unreachable!(),
        1 => parts[0].clone(),
        len => {
            let (l, r) = parts.split_at(len / 2);
            Moments::merge(&merge_tree(l), &merge_tree(r))
        }
    }
}

pub(crate) const CHUNK: u64 = 1024;

/// Runs `n` replications in fixed chunks; the result depends only on `n`
/// and `f`, never on the thread count.
pub(crate) fn replicate<S, I, F>(n: u64, k: usize, init: I, f: F) -> Moments
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, u64, &mut [f64]) + Sync,
{
    if n == 0 {
        return Moments::new(k);
    }
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init();
            let mut m = Moments::new(k);
            let mut buf = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                buf.iter_mut().for_each(|x| *x = 0.0);
                f(&mut state, i, &mut buf);
                m.push(&buf);
            }
            m
        })
        .collect();
    merge_tree(&parts)
}

/// Integer counters summed over replications (exact, order independent).
pub(crate) fn replicate_counts<S, I, F>(n: u64, k: usize, init: I, f: F) -> Vec<u64>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, u64, &mut [u64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init();
            let mut acc = vec![0u64; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(&mut state, i, &mut acc);
            }
            acc
        })
        .reduce(|| vec![0u64; k], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

/// Parallel map over replications with results in index order.
pub(crate) fn replicate_collect<T, S, I, F>(n: u64, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync,
    F: Fn(&mut S, u64) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init();
            (c * CHUNK..((c + 1) * CHUNK).min(n)).map(|i| f(&mut state, i)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}
