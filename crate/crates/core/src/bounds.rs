//! Borell-TIS and Piterbarg type upper bounds for
//! `P(exists (s,t) in V: Z1(s) > u, Z2(t) > u)`.

use crate::asymptotics::nelder_mead;
use crate::error::{Error, Result};
use crate::model::{Grid, ModelParams};
use crate::montecarlo::{replicate, EstimateWithCI};
use crate::sampler::{PairSampler, SeedSpec};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Axis-aligned rectangle `[s0, s1] x [t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub s: (f64, f64),
    pub t: (f64, f64),
}

impl Region {
    pub fn new(s: (f64, f64), t: (f64, f64)) -> Result<Self> {
        if !(s.0 < s.1 && t.0 < t.1 && s.0 >= 0.0 && t.0 >= 0.0) || !(s.1.is_finite() && t.1.is_finite()) {
            return Err(Error::Domain(format!("invalid region {s:?} x {t:?}")));
        }
        Ok(Self { s, t })
    }

    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Self::new((lo, hi), (lo, hi))
    }

    pub fn measure(&self) -> f64 {
        (self.s.1 - self.s.0) * (self.t.1 - self.t.0)
    }

    pub fn contains(&self, s: f64, t: f64) -> bool {
        self.s.0 <= s && s <= self.s.1 && self.t.0 <= t && t <= self.t.1
    }
}

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Surface = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Standard deviations `sigma_1(s)`, `sigma_2(t)` and correlation `r(s,t)` on `V`.
#[derive(Clone)]
pub struct VarianceField {
    sigma1: Curve,
    sigma2: Curve,
    rho: Surface,
    pub region: Region,
}

impl std::fmt::Debug for VarianceField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VarianceField").field("region", &self.region).finish_non_exhaustive()
    }
}

impl VarianceField {
    pub fn new(
        sigma1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        rho: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        region: Region,
    ) -> Self {
        Self { sigma1: Arc::new(sigma1), sigma2: Arc::new(sigma2), rho: Arc::new(rho), region }
    }

    /// `sigma_i(t) = t^{alpha_i/2}` with constant correlation.
    pub fn fbm(params: &ModelParams, region: Region) -> Self {
        let (a1, a2, r) = (params.alpha1(), params.alpha2(), params.r());
        Self::new(move |s| s.powf(a1 / 2.0), move |t| t.powf(a2 / 2.0), move |_, _| r, region)
    }

    pub fn sigma1(&self, s: f64) -> f64 {
        (self.sigma1)(s)
    }

    pub fn sigma2(&self, t: f64) -> f64 {
        (self.sigma2)(t)
    }

    pub fn rho(&self, s: f64, t: f64) -> f64 {
        (self.rho)(s, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `r(s,t) < c(s,t)`: both coordinates carry weight.
    Mixed,
    /// `r(s,t) >= c(s,t)`: all weight on the smaller-variance coordinate.
    Single,
}

/// `c(s,t) = min(sigma1/sigma2, sigma2/sigma1)`.
pub fn c_func(s: f64, t: f64, field: &VarianceField) -> f64 {
    let (a, b) = (field.sigma1(s), field.sigma2(t));
    (a / b).min(b / a)
}

pub fn regime(s: f64, t: f64, field: &VarianceField) -> Regime {
    if field.rho(s, t) < c_func(s, t, field) {
        Regime::Mixed
    } else {
        Regime::Single
    }
}

/// Inverse variance of the optimally weighted combination; in the mixed
/// regime both algebraic forms are evaluated and compared.
pub fn sigma_sq(s: f64, t: f64, field: &VarianceField) -> Result<f64> {
    let (a, b) = (field.sigma1(s), field.sigma2(t));
    let r = field.rho(s, t);
    let c = (a / b).min(b / a);
    let m = a.min(b);
    if r < c {
        let first = (1.0 + (c - r).powi(2) / (1.0 - r * r)) / (m * m);
        let second = (a * a + b * b - 2.0 * a * b * r) / (a * a * b * b * (1.0 - r * r));
        if (first - second).abs() > 1e-10 * first.abs().max(1.0) {
            return Err(Error::InternalMismatch { general: first, reduced: second });
        }
        Ok(first)
    } else {
        Ok(1.0 / (m * m))
    }
}

/// Weights `(a, b)` with `a + b = 1` from the Borell-TIS reduction.
pub fn weights(s: f64, t: f64, field: &VarianceField) -> (f64, f64) {
    let (x, y) = (field.sigma1(s), field.sigma2(t));
    let r = field.rho(s, t);
    if r < c_func(s, t, field) {
        let big_a = x * x + y * y - 2.0 * x * y * r;
        let a = (y * y - x * y * r) / big_a;
        (a, 1.0 - a)
    } else if x <= y {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    }
}

/// `1 / Var(a Z1(s) + b Z2(t))` for the weights above.
pub fn weighted_inverse_variance(s: f64, t: f64, field: &VarianceField) -> f64 {
    let (a, b) = weights(s, t, field);
    let (x, y) = (field.sigma1(s), field.sigma2(t));
    1.0 / (a * a * x * x + b * b * y * y + 2.0 * a * b * x * y * field.rho(s, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauBound {
    pub tau_sq: f64,
    pub argmin: (f64, f64),
    pub regime: Regime,
}

const SCAN: usize = 256;

/// Infimum of `sigma_sq` over the region: grid scan (including the edges)
/// then Nelder-Mead inside the region.
pub fn minimize_sigma_sq(field: &VarianceField) -> Result<TauBound> {
    let reg = field.region;
    let at = |i: usize, lo: f64, hi: f64| lo + (hi - lo) * i as f64 / SCAN as f64;
    let mut best = (f64::INFINITY, (reg.s.1, reg.t.1));
    for i in 0..=SCAN {
        let s = at(i, reg.s.0, reg.s.1);
        for j in 0..=SCAN {
            let t = at(j, reg.t.0, reg.t.1);
            if s == 0.0 || t == 0.0 {
                continue;
            }
            let v = sigma_sq(s, t, field)?;
            if v < best.0 {
                best = (v, (s, t));
            }
        }
    }
    let f = |x: [f64; 2]| {
        if !reg.contains(x[0], x[1]) || x[0] <= 0.0 || x[1] <= 0.0 {
            f64::INFINITY
        } else {
            sigma_sq(x[0], x[1], field).unwrap_or(f64::INFINITY)
        }
    };
    let step = (reg.s.1 - reg.s.0).min(reg.t.1 - reg.t.0) / SCAN as f64;
    let (x, v) = nelder_mead(f, [best.1 .0, best.1 .1], step, 1e-14, 5_000);
    let (argmin, tau_sq) = if v < best.0 { ((x[0], x[1]), v) } else { (best.1, best.0) };
    Ok(TauBound { tau_sq, argmin, regime: regime(argmin.0, argmin.1, field) })
}

/// `exp(-(u - mu)^2 tau^2 / 2)`.
pub fn borell_bound(u: f64, field: &VarianceField, mu: f64) -> Result<f64> {
    let tau = minimize_sigma_sq(field)?;
    borell_bound_with(u, tau.tau_sq, mu)
}

pub fn borell_bound_with(u: f64, tau_sq: f64, mu: f64) -> Result<f64> {
    if u < mu {
        return Err(Error::ThresholdBelowMu { u, mu });
    }
    Ok((-(u - mu).powi(2) * tau_sq / 2.0).exp())
}

/// `C mes(V) u^{4/gamma - 1} exp(-u^2 tau^2 / 2)`.
pub fn piterbarg_bound(u: f64, field: &VarianceField, gamma: f64, c: f64) -> Result<f64> {
    let tau = minimize_sigma_sq(field)?;
    Ok(piterbarg_bound_with(u, field.region.measure(), tau.tau_sq, gamma, c))
}

pub fn piterbarg_bound_with(u: f64, measure: f64, tau_sq: f64, gamma: f64, c: f64) -> f64 {
    c * measure * u.powf(4.0 / gamma - 1.0) * (-u * u * tau_sq / 2.0).exp()
}

/// The fBm version of `sigma_sq` written with `c_hat`.
pub fn f_func(s: f64, t: f64, params: &ModelParams) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0 && t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("(s,t) must lie in (0,1]^2: ({s}, {t})")));
    }
    let (a1, a2, r) = (params.alpha1(), params.alpha2(), params.r());
    let x = s.powf(a1 / 2.0);
    let y = t.powf(a2 / 2.0);
    let c_hat = (y / x).min(x / y);
    let m = (x * x).min(y * y);
    let extra = if r < c_hat { (c_hat - r).powi(2) / (1.0 - r * r) } else { 0.0 };
    Ok((1.0 + extra) / m)
}

/// Infimum of `f_func` over a `k x k` grid of `(0,1]^2` minus `[1-eps,1]^2`.
pub fn f_infimum_outside(params: &ModelParams, eps: f64, k: usize) -> Result<f64> {
    let mut best = f64::INFINITY;
    for i in 1..=k {
        let s = i as f64 / k as f64;
        for j in 1..=k {
            let t = j as f64 / k as f64;
            if s >= 1.0 - eps && t >= 1.0 - eps {
                continue;
            }
            best = best.min(f_func(s, t, params)?);
        }
    }
    Ok(best)
}

/// Hölder pair `(gamma, L)` with `E(Z_i(v) - Z_i(w))^2 <= L |v - w|^gamma`
/// on the region, for fBm coordinates.
pub fn holder_constants(params: &ModelParams, region: &Region) -> (f64, f64) {
    let gamma = params.alpha1().min(params.alpha2());
    let mut l: f64 = 0.0;
    for (alpha, side) in [(params.alpha1(), region.s.1 - region.s.0), (params.alpha2(), region.t.1 - region.t.0)] {
        for k in 1..=1000 {
            let d = side * k as f64 / 1000.0;
            l = l.max(d.powf(alpha - gamma));
        }
    }
    (gamma, l)
}

/// `E sup_V (a Z1(s) + b Z2(t))` over the product of two grids.
pub fn estimate_mu(params: &ModelParams, grid1: &Grid, grid2: &Grid, replications: u64, seed: u64) -> Result<EstimateWithCI> {
    let sampler = PairSampler::new(params, grid1, grid2)?;
    let region = Region::new(
        (grid1.points()[0], grid1.horizon()),
        (grid2.points()[0], grid2.horizon()),
    )?;
    let field = VarianceField::fbm(params, region);
    let (n1, n2) = (grid1.len(), grid2.len());
    let mut wa = vec![0.0; n1 * n2];
    let mut wb = vec![0.0; n1 * n2];
    for (i, &s) in grid1.points().iter().enumerate() {
        for (j, &t) in grid2.points().iter().enumerate() {
            let (a, b) = weights(s, t, &field);
            wa[i * n2 + j] = a;
            wb[i * n2 + j] = b;
        }
    }
    let mom = replicate(
        replications,
        1,
        || (Vec::new(), vec![0.0; n1], vec![0.0; n2]),
        |(scratch, x1, x2), i, out| {
            let mut rng = SeedSpec::new(seed, i).rng();
            let a1 = sampler.sample_first(&mut rng, scratch, x1);
            sampler.sample_second(&mut rng, scratch, a1, x2);
            let mut m = f64::NEG_INFINITY;
            for (ii, xi) in x1.iter().enumerate() {
                let ra = &wa[ii * n2..(ii + 1) * n2];
                let rb = &wb[ii * n2..(ii + 1) * n2];
                for j in 0..n2 {
                    m = m.max(ra[j] * xi + rb[j] * x2[j]);
                }
            }
            out[0] = m;
        },
    );
    Ok(EstimateWithCI::new(mom.mean[0], mom.std_error(0), replications, seed, n1.max(n2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c: f64,
    /// `(u, bound, estimate, std_error)` on the validation grid.
    pub validation: Vec<(f64, f64, f64, f64)>,
    /// Every validation point satisfies `estimate - 3 se <= bound`.
    pub validated: bool,
    /// Smallest validation `u` above which domination holds throughout.
    pub dominates_from: Option<f64>,
}

/// Smallest `C` for which the bound dominates the training estimates,
/// checked on a disjoint validation grid.
pub fn calibrate_piterbarg(
    field: &VarianceField,
    gamma: f64,
    train: &[(f64, EstimateWithCI)],
    validate: &[(f64, EstimateWithCI)],
) -> Result<Calibration> {
    if train.iter().any(|(u, _)| validate.iter().any(|(v, _)| v == u)) {
        return Err(Error::Domain("training and validation grids overlap".into()));
    }
    let tau = minimize_sigma_sq(field)?.tau_sq;
    let mes = field.region.measure();
    let c = train
        .iter()
        .map(|(u, e)| e.estimate / piterbarg_bound_with(*u, mes, tau, gamma, 1.0))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut validation: Vec<(f64, f64, f64, f64)> = validate
        .iter()
        .map(|(u, e)| (*u, piterbarg_bound_with(*u, mes, tau, gamma, c), e.estimate, e.std_error))
        .collect();
    validation.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ok = |v: &(f64, f64, f64, f64)| v.2 - 3.0 * v.3 <= v.1;
    let validated = validation.iter().all(ok);
    let dominates_from = (0..validation.len()).find(|&k| validation[k..].iter().all(ok)).map(|k| validation[k].0);
    Ok(Calibration { c, validation, validated, dominates_from })
}
