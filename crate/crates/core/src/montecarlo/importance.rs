//! Importance sampler for `P(max X1 > u, max X2 > u)` on grids.
//!
//! A grid pair `(i, j)` is chosen with probability proportional to
//! `p_ij = P(X1(s_i) > u, X2(t_j) > u)`; the two values are drawn from
//! their law conditioned on that event and the rest of both paths by
//! exact Gaussian conditioning. The likelihood ratio of the resulting
//! mixture is `C1 C2 / sum p_ij` where `C_k` counts grid exceedances, so
//! each draw contributes `sum p_ij / (C1 C2)`.

use super::survival::{max_over, richardson_gain};
use super::{replicate, EstimateWithCI, SurvivalCurve, SurvivalPoint};
use crate::error::{Error, Result};
use crate::model::{fbm_cov_unchecked, Grid, ModelParams};
use crate::sampler::{PairSampler, SeedSpec};
use crate::special::{bvn_upper, inv_mills, ln_norm_sf};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Covariances `K(x_k, x_i)` of one coordinate, via lag tables on lattices.
struct CovTable {
    pow: Vec<f64>,
    points: Vec<f64>,
    alpha: f64,
    lag: Option<Vec<f64>>,
}

impl CovTable {
    fn new(grid: &Grid, alpha: f64) -> Self {
        let points = grid.points().to_vec();
        let pow = points.iter().map(|x| x.powf(alpha)).collect();
        let lag = grid
            .lattice()
            .map(|l| (0..points.len()).map(|j| (j as f64 * l.step).powf(alpha)).collect());
        Self { pow, points, alpha, lag }
    }

    #[inline]
    fn cov(&self, k: usize, i: usize) -> f64 {
        match &self.lag {
            Some(l) => 0.5 * (self.pow[k] + self.pow[i] - l[k.abs_diff(i)]),
            None => fbm_cov_unchecked(self.points[k], self.points[i], self.alpha),
        }
    }
}

pub struct ImportanceSampler {
    sampler: PairSampler,
    r: f64,
    u: f64,
    sd1: Vec<f64>,
    sd2: Vec<f64>,
    cov1: CovTable,
    cov2: CovTable,
    cumulative: Vec<f64>,
    p_bar: f64,
}

impl std::fmt::Debug for ImportanceSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImportanceSampler").field("u", &self.u).field("p_bar", &self.p_bar).finish_non_exhaustive()
    }
}

impl ImportanceSampler {
    pub fn new(params: &ModelParams, grid1: &Grid, grid2: &Grid, u: f64) -> Result<Self> {
        if !(u > 0.0) {
            return Err(Error::Domain(format!("importance sampling needs u > 0: {u}")));
        }
        let sampler = PairSampler::new(params, grid1, grid2)?;
        let r = params.r();
        let sd1: Vec<f64> = grid1.points().iter().map(|s| s.powf(params.alpha1() / 2.0)).collect();
        let sd2: Vec<f64> = grid2.points().iter().map(|t| t.powf(params.alpha2() / 2.0)).collect();
        let rows: Vec<Vec<f64>> = sd1
            .par_iter()
            .map(|a| sd2.iter().map(|b| bvn_upper(u / a, u / b, r)).collect())
            .collect();
        let mut acc = 0.0;
        let cumulative: Vec<f64> = rows
            .iter()
            .flatten()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::Domain(format!("no grid pair can exceed u = {u}")));
        }
        Ok(Self {
            sampler,
            r,
            u,
            sd1,
            sd2,
            cov1: CovTable::new(grid1, params.alpha1()),
            cov2: CovTable::new(grid2, params.alpha2()),
            cumulative,
            p_bar: acc,
        })
    }

    /// `sum_ij P(X1(s_i) > u, X2(t_j) > u)`, an upper bound of the target.
    pub fn p_bar(&self) -> f64 {
        self.p_bar
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    /// Fills both paths (grid points only) with a proposal draw and returns
    /// its weight `p_bar / (C1 C2)`.
    pub fn draw<R: Rng>(&self, rng: &mut R, scratch: &mut Vec<f64>, x1: &mut [f64], x2: &mut [f64]) -> f64 {
        let n2 = self.sd2.len();
        let pick = rng.random::<f64>() * self.p_bar;
        let flat = self.cumulative.partition_point(|&c| c <= pick).min(self.cumulative.len() - 1);
        let (i, j) = (flat / n2, flat % n2);
        let (s1, s2) = (self.sd1[i], self.sd2[j]);
        let (w1, w2) = truncated_bvn(rng, self.u / s1, self.u / s2, self.r);
        let a1 = self.sampler.sample_first(rng, scratch, x1);
        self.sampler.sample_second(rng, scratch, a1, x2);
        let d1 = s1 * w1 - x1[i];
        let d2 = s2 * w2 - x2[j];
        let (v1, v2, c) = (s1 * s1, s2 * s2, self.r * s1 * s2);
        let det = v1 * v2 - c * c;
        let b1 = (v2 * d1 - c * d2) / det;
        let b2 = (v1 * d2 - c * d1) / det;
        for (k, x) in x1.iter_mut().enumerate() {
            *x += b1 * self.cov1.cov(k, i) + b2 * self.r * self.sd1[k] * s2;
        }
        for (k, x) in x2.iter_mut().enumerate() {
            *x += b1 * self.r * s1 * self.sd2[k] + b2 * self.cov2.cov(k, j);
        }
        x1[i] = s1 * w1;
        x2[j] = s2 * w2;
        let c1 = x1.iter().filter(|&&x| x > self.u).count().max(1);
        let c2 = x2.iter().filter(|&&x| x > self.u).count().max(1);
        self.p_bar / (c1 as f64 * c2 as f64)
    }
}

/// `Z > c` for standard normal `Z`.
pub(crate) fn truncated_normal<R: Rng>(rng: &mut R, c: f64) -> f64 {
    if c < 0.5 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > c {
                return z;
            }
        }
    }
    let lam = (c + (c * c + 4.0).sqrt()) / 2.0;
    loop {
        let z = c - (1.0 - rng.random::<f64>()).ln() / lam;
        if rng.random::<f64>() <= (-(z - lam).powi(2) / 2.0).exp() {
            return z;
        }
    }
}

/// Standard bivariate normal with correlation `r` conditioned on
/// `W1 > a, W2 > b`. `W1` has the log-concave density
/// `phi(w) P(Z > (b - r w)/rho)` on `(a, inf)`, sampled by rejection from a
/// flat-top exponential envelope; `W2 | W1` is a truncated normal.
pub(crate) fn truncated_bvn<R: Rng>(rng: &mut R, a: f64, b: f64, r: f64) -> (f64, f64) {
    let rho = (1.0 - r * r).sqrt();
    let g = |w: f64| -0.5 * w * w + ln_norm_sf((b - r * w) / rho);
    let dg = |w: f64| -w + r / rho * inv_mills((b - r * w) / rho);
    let mode = if dg(a) <= 0.0 {
        a
    } else {
        let mut hi = a + 1.0;
        while dg(hi) > 0.0 {
            hi = a + 2.0 * (hi - a);
        }
        bisect(|w| dg(w) > 0.0, a, hi)
    };
    let gm = g(mode);
    let right = {
        let mut hi = mode + 1.0;
        while g(hi) > gm - 1.0 {
            hi = mode + 2.0 * (hi - mode);
        }
        bisect(|w| g(w) > gm - 1.0, mode, hi) - mode
    };
    // Left envelope: exponential shoulder when the density drops by e before `a`, else flat.
    let left = if mode > a && g(a) < gm - 1.0 { Some(mode - bisect(|w| g(w) < gm - 1.0, a, mode)) } else { None };
    let area_right = 2.0 * right;
    let area_left = match left {
        Some(d) => 2.0 * d,
        None => mode - a,
    };
    let w1 = loop {
        let side_right = rng.random::<f64>() * (area_left + area_right) < area_right;
        let (x, log_env) = if side_right {
            if rng.random::<bool>() {
                (mode + right * rng.random::<f64>(), 0.0)
            } else {
                let e = -(1.0 - rng.random::<f64>()).ln();
                (mode + right * (1.0 + e), -e)
            }
        } else {
            match left {
                None => (a + (mode - a) * rng.random::<f64>(), 0.0),
                Some(d) => {
                    if rng.random::<bool>() {
                        (mode - d * rng.random::<f64>(), 0.0)
                    } else {
                        let e = -(1.0 - rng.random::<f64>()).ln();
                        (mode - d * (1.0 + e), -e)
                    }
                }
            }
        };
        if x <= a {
            continue;
        }
        let v: f64 = 1.0 - rng.random::<f64>();
        if v.ln() <= g(x) - gm - log_env {
            break x;
        }
    };
    let z = truncated_normal(rng, (b - r * w1) / rho);
    (w1, r * w1 + rho * z)
}

/// Boundary of a monotone predicate that is true at `lo` and false at `hi`.
fn bisect<F: Fn(f64) -> bool>(pred: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Importance-sampled joint survival over a threshold grid. Each threshold
/// uses its own proposal; grid, even sub-grid and extrapolated estimates
/// share draws.
pub fn joint_survival_is(
    us: &[f64],
    params: &ModelParams,
    grid1: &Grid,
    grid2: &Grid,
    replications: u64,
    seed: u64,
) -> Result<SurvivalCurve> {
    if replications < 2 {
        return Err(Error::Domain("need at least two replications".into()));
    }
    let c1 = grid1.coarse_indices();
    let c2 = grid2.coarse_indices();
    let coarse = c1.is_some() && c2.is_some();
    let g = richardson_gain(params);
    let n_pts = grid1.len().max(grid2.len());
    let mut points = Vec::with_capacity(us.len());
    for (q, &u) in us.iter().enumerate() {
        let is = ImportanceSampler::new(params, grid1, grid2, u)?;
        let family = SeedSpec::derive(seed, q as u64);
        let mom = replicate(
            replications,
            3,
            || (Vec::new(), vec![0.0; grid1.len()], vec![0.0; grid2.len()]),
            |(scratch, x1, x2), i, out| {
                let mut rng = SeedSpec::new(family, i).rng();
                let w = is.draw(&mut rng, scratch, x1, x2);
                let yc = if coarse && max_over(x1, c1.as_deref()) > u && max_over(x2, c2.as_deref()) > u {
                    w
                } else {
                    0.0
                };
                out[0] = w;
                out[1] = yc;
                out[2] = w + g * (w - yc);
            },
        );
        let est = |k: usize, pts: usize| EstimateWithCI::new(mom.mean[k], mom.std_error(k), replications, family, pts);
        points.push(SurvivalPoint {
            u,
            grid: est(0, n_pts),
            coarse: coarse.then(|| est(1, n_pts / 2)),
            extrapolated: coarse.then(|| est(2, n_pts)),
        });
    }
    Ok(SurvivalCurve { params: *params, points, replications, seed, grid_points: (grid1.len(), grid2.len()) })
}
