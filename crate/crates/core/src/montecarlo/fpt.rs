//! First passage times on grids and their law given both occur by time 1.

use super::importance::ImportanceSampler;
use super::{replicate, replicate_collect, EstimateWithCI};
use crate::asymptotics::fpt_limit_law;
use crate::error::{Error, Result};
use crate::model::{Grid, ModelParams};
use crate::sampler::{PairSampler, SeedSpec};
use crate::special::{correlation, ks_distance, weighted_correlation, weighted_ks_distance};
use serde::{Deserialize, Serialize};

/// First grid times at which the paths exceed `u`; `f64::INFINITY` if never.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FptSample {
    pub tau1: f64,
    pub tau2: f64,
    /// Both passages happen at or before time 1.
    pub both_by_one: bool,
}

impl FptSample {
    fn new(tau1: f64, tau2: f64) -> Self {
        Self { tau1, tau2, both_by_one: tau1 <= 1.0 && tau2 <= 1.0 }
    }
}

fn first_passage(x: &[f64], grid: &Grid, u: f64) -> f64 {
    x.iter().position(|&v| v > u).map_or(f64::INFINITY, |i| grid.points()[i])
}

/// One joint draw reduced to its passage times.
pub fn fpt_pair(u: f64, params: &ModelParams, grid1: &Grid, grid2: &Grid, seed: SeedSpec) -> Result<FptSample> {
    if !(u > 0.0) {
        return Err(Error::Domain(format!("passage level must be positive: {u}")));
    }
    let p = PairSampler::new(params, grid1, grid2)?.sample(seed);
    Ok(FptSample::new(first_passage(&p.x1[1..], grid1, u), first_passage(&p.x2[1..], grid2, u)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSample {
    pub samples: Vec<FptSample>,
    /// Path draws consumed (joint draws, or single paths summed over both
    /// coordinates in product form).
    pub attempts: u64,
    /// Estimate of `P(tau1 <= 1, tau2 <= 1)` on the grid.
    pub acceptance: EstimateWithCI,
    /// Coordinates were sampled independently (`r = 0`).
    pub product_form: bool,
}

const PROBE: u64 = 1 << 20;
const MAX_BATCH: u64 = 1 << 22;

/// Rejection over consecutive streams until `target` draws are accepted;
/// returns the accepted values in stream order and the number of streams used.
fn reject_until<T, S, I, F>(target: usize, init: I, f: F) -> Result<(Vec<T>, u64)>
where
    T: Send,
    I: Fn() -> S + Sync,
    F: Fn(&mut S, u64) -> Option<T> + Sync,
{
    let mut accepted: Vec<T> = Vec::with_capacity(target);
    let mut used = 0u64;
    let mut batch = 1u64 << 14;
    while accepted.len() < target {
        let start = used;
        let out = replicate_collect(batch, &init, |s, i| f(s, start + i));
        for (i, v) in out.into_iter().enumerate() {
            if let Some(v) = v {
                accepted.push(v);
                if accepted.len() == target {
                    used = start + i as u64 + 1;
                    break;
                }
            }
        }
        if accepted.len() < target {
            used = start + batch;
        }
        let rate = accepted.len() as f64 / used as f64;
        if used >= PROBE && rate < 1e-6 {
            return Err(Error::Timeout { rate, probe: used });
        }
        let remaining = (target - accepted.len()) as f64;
        let want = if accepted.is_empty() { 4.0 * batch as f64 } else { 1.2 * remaining / rate };
        batch = (want.ceil() as u64).clamp(1 << 14, MAX_BATCH);
    }
    Ok((accepted, used))
}

/// Passage pairs conditioned on both passages by time 1, by rejection.
///
/// At `r = 0` the coordinates are independent and each is rejected on its
/// own, which keeps the cost linear in the single-path exceedance rate.
pub fn conditional_fpt_sample(
    u: f64,
    params: &ModelParams,
    grid1: &Grid,
    grid2: &Grid,
    target: usize,
    seed: u64,
) -> Result<ConditionalSample> {
    if !(u > 0.0) || target == 0 {
        return Err(Error::Domain(format!("need u > 0 and a positive target: u = {u}, target = {target}")));
    }
    let pts = grid1.len().max(grid2.len());
    if params.r() == 0.0 {
        let one = |p: &ModelParams, g: &Grid, h: &Grid, tag: u64| -> Result<(Vec<f64>, u64)> {
            let sampler = PairSampler::new(p, g, h)?;
            let family = SeedSpec::derive(seed, tag);
            reject_until(
                target,
                || (Vec::new(), vec![0.0; g.len()]),
                |(scratch, x), i| {
                    let mut rng = SeedSpec::new(family, i).rng();
                    sampler.sample_first(&mut rng, scratch, x);
                    let t = first_passage(x, g, u);
                    (t <= 1.0).then_some(t)
                },
            )
        };
        let (t1, n1) = one(params, grid1, grid2, 1)?;
        let (t2, n2) = one(&params.swapped(), grid2, grid1, 2)?;
        let samples = t1.iter().zip(&t2).map(|(&a, &b)| FptSample::new(a, b)).collect();
        // (n_i - 1) keeps each stopped rate unbiased under inverse sampling
        let p1 = (target as f64 - 1.0).max(1.0) / (n1 as f64 - 1.0).max(1.0);
        let p2 = (target as f64 - 1.0).max(1.0) / (n2 as f64 - 1.0).max(1.0);
        let v1 = p1 * (1.0 - p1) / n1 as f64;
        let v2 = p2 * (1.0 - p2) / n2 as f64;
        let se = (p1 * p1 * v2 + p2 * p2 * v1 + v1 * v2).sqrt();
        return Ok(ConditionalSample {
            samples,
            attempts: n1 + n2,
            acceptance: EstimateWithCI::new(p1 * p2, se, n1 + n2, seed, pts),
            product_form: true,
        });
    }
    let sampler = PairSampler::new(params, grid1, grid2)?;
    let (samples, used) = reject_until(
        target,
        || (Vec::new(), vec![0.0; grid1.len()], vec![0.0; grid2.len()]),
        |(scratch, x1, x2), i| {
            let mut rng = SeedSpec::new(seed, i).rng();
            let a1 = sampler.sample_first(&mut rng, scratch, x1);
            let t1 = first_passage(x1, grid1, u);
            if t1 > 1.0 {
                return None;
            }
            sampler.sample_second(&mut rng, scratch, a1, x2);
            let t2 = first_passage(x2, grid2, u);
            (t2 <= 1.0).then(|| FptSample::new(t1, t2))
        },
    )?;
    Ok(ConditionalSample {
        samples,
        attempts: used,
        acceptance: EstimateWithCI::from_count(target as u64, used, seed, pts),
        product_form: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedConditionalSample {
    /// Draws from the importance proposal with their likelihood-ratio weights.
    pub samples: Vec<(FptSample, f64)>,
    /// Mean weight, an estimate of `P(tau1 <= 1, tau2 <= 1)` on the grid.
    pub estimate: EstimateWithCI,
    /// Kish effective sample size.
    pub ess: f64,
}

/// Conditional passage pairs from the joint-survival importance sampler.
/// Every proposal draw lies in the conditioning event, so nothing is
/// rejected; the weights correct the law.
pub fn conditional_fpt_weighted(
    u: f64,
    params: &ModelParams,
    grid1: &Grid,
    grid2: &Grid,
    n: u64,
    seed: u64,
) -> Result<WeightedConditionalSample> {
    if n < 2 {
        return Err(Error::Domain("need at least two draws".into()));
    }
    let is = ImportanceSampler::new(params, grid1, grid2, u)?;
    let samples: Vec<(FptSample, f64)> = replicate_collect(
        n,
        || (Vec::new(), vec![0.0; grid1.len()], vec![0.0; grid2.len()]),
        |(scratch, x1, x2), i| {
            let mut rng = SeedSpec::new(seed, i).rng();
            let w = is.draw(&mut rng, scratch, x1, x2);
            (FptSample::new(first_passage(x1, grid1, u), first_passage(x2, grid2, u)), w)
        },
    );
    let m = replicate(n, 1, || (), |_, i, out| out[0] = samples[i as usize].1);
    let sw: f64 = samples.iter().map(|s| s.1).sum();
    let sw2: f64 = samples.iter().map(|s| s.1 * s.1).sum();
    Ok(WeightedConditionalSample {
        estimate: EstimateWithCI::new(m.mean[0], m.std_error(0), n, seed, grid1.len().max(grid2.len())),
        ess: sw * sw / sw2,
        samples,
    })
}

/// Distance of the rescaled passage pair from its exponential limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FptLimitReport {
    /// KS distance of `u^2 (1 - tau1)` from the limiting exponential.
    pub ks1: f64,
    pub ks2: f64,
    pub mean1: f64,
    pub mean2: f64,
    pub limit_mean1: f64,
    pub limit_mean2: f64,
    /// Pearson correlation of the rescaled coordinates.
    pub correlation: f64,
    /// `max |C_n(a,b) - ab|` of the empirical copula on a 20 x 20 grid.
    pub copula_distance: f64,
    /// Sample size (effective size for weighted samples).
    pub n: f64,
}

/// Compares `u^2 (1 - tau_i)` of conditioned samples with the limit law.
pub fn fpt_limit_test(samples: &[FptSample], u: f64, params: &ModelParams) -> Result<FptLimitReport> {
    let weighted: Vec<(FptSample, f64)> = samples.iter().map(|s| (*s, 1.0)).collect();
    let mut rep = fpt_limit_test_weighted(&weighted, u, params)?;
    let (x, y) = rescaled(&weighted, u);
    rep.ks1 = ks_distance(&x, |v| exp_cdf(v, rep.limit_mean1));
    rep.ks2 = ks_distance(&y, |v| exp_cdf(v, rep.limit_mean2));
    rep.correlation = correlation(&x, &y);
    Ok(rep)
}

/// Weighted version of [`fpt_limit_test`].
pub fn fpt_limit_test_weighted(samples: &[(FptSample, f64)], u: f64, params: &ModelParams) -> Result<FptLimitReport> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    if samples.iter().any(|(s, w)| !s.both_by_one || !(*w >= 0.0)) {
        return Err(Error::Domain("samples must satisfy both passages by time 1 with nonnegative weights".into()));
    }
    let (m1, m2) = fpt_limit_law(params);
    let (x, y) = rescaled(samples, u);
    let w: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|v| v * v).sum();
    let pair = |v: &[f64]| -> Vec<(f64, f64)> { v.iter().copied().zip(w.iter().copied()).collect() };
    Ok(FptLimitReport {
        ks1: weighted_ks_distance(&pair(&x), |v| exp_cdf(v, m1)),
        ks2: weighted_ks_distance(&pair(&y), |v| exp_cdf(v, m2)),
        mean1: x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw,
        mean2: y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw,
        limit_mean1: m1,
        limit_mean2: m2,
        correlation: weighted_correlation(&x, &y, &w),
        copula_distance: copula_distance(&x, &y, &w),
        n: sw * sw / sw2,
    })
}

fn exp_cdf(x: f64, mean: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-x / mean).exp()
    }
}

fn rescaled(samples: &[(FptSample, f64)], u: f64) -> (Vec<f64>, Vec<f64>) {
    let u2 = u * u;
    samples.iter().map(|(s, _)| (u2 * (1.0 - s.tau1), u2 * (1.0 - s.tau2))).unzip()
}

/// Weighted empirical CDF evaluated at each sample (ties share the value).
fn ecdf_at_samples(x: &[f64], w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    let mut cum = 0.0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            cum += w[idx[j]];
            j += 1;
        }
        for &k in &idx[i..j] {
            out[k] = cum / total;
        }
        i = j;
    }
    out
}

fn copula_distance(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    const K: usize = 20;
    let fx = ecdf_at_samples(x, w);
    let fy = ecdf_at_samples(y, w);
    let total: f64 = w.iter().sum();
    let mut d = 0.0f64;
    for i in 1..=K {
        let a = i as f64 / K as f64;
        for j in 1..=K {
            let b = j as f64 / K as f64;
            let c: f64 = (0..x.len()).filter(|&k| fx[k] <= a + 1e-12 && fy[k] <= b + 1e-12).map(|k| w[k]).sum();
            d = d.max((c / total - a * b).abs());
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn bm() -> ModelParams {
        ModelParams::new(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn passage_sentinel_and_first_point() {
        let g = Grid::uniform(4, 1.0).unwrap();
        assert_eq!(first_passage(&[0.1, 0.2, 0.1, 0.0], &g, 1.0), f64::INFINITY);
        assert_eq!(first_passage(&[0.1, 0.2, 0.1, 0.0], &g, 0.0), 0.25);
        assert_eq!(first_passage(&[-0.1, 2.0, 3.0, 0.0], &g, 1.0), 0.5);
    }

    #[test]
    fn synthetic_exponentials_pass() {
        let mut rng = SeedSpec::new(9, 0).rng();
        let u = 3.0;
        let samples: Vec<FptSample> = (0..20_000)
            .map(|_| {
                let e1 = -2.0 * (1.0 - rng.random::<f64>()).ln();
                let e2 = -2.0 * (1.0 - rng.random::<f64>()).ln();
                FptSample::new(1.0 - e1 / (u * u), 1.0 - e2 / (u * u))
            })
            .filter(|s| s.tau1 >= 0.0 && s.tau2 >= 0.0)
            .collect();
        let rep = fpt_limit_test(&samples, u, &bm()).unwrap();
        assert!(rep.ks1 < 0.02 && rep.ks2 < 0.02, "{rep:?}");
        assert!(rep.correlation.abs() < 0.03);
        assert!(rep.copula_distance < 0.02);
        assert_eq!((rep.limit_mean1, rep.limit_mean2), (2.0, 2.0));
    }

    #[test]
    fn rejection_is_deterministic_and_conditioned() {
        let g = Grid::uniform(64, 1.0).unwrap();
        let p = ModelParams::new(1.0, 1.0, 0.3).unwrap();
        let g1 = Grid::uniform_window(64, 1.0, 1.0 / 16.0).unwrap();
        let a = conditional_fpt_sample(1.0, &p, &g1, &g1, 200, 4).unwrap();
        let b = conditional_fpt_sample(1.0, &p, &g1, &g1, 200, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|s| s.both_by_one));
        let c = conditional_fpt_sample(1.0, &bm(), &g, &g, 200, 4).unwrap();
        assert!(c.product_form && c.samples.len() == 200);
    }
}
