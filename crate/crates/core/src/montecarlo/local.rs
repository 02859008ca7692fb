//! Exceedance probabilities over shrinking windows around a point.

use super::survival::joint_survival_grid;
use super::{replicate_counts, EstimateWithCI};
use crate::asymptotics::{h, joint_prefactor};
use crate::error::{Error, Result};
use crate::model::{Grid, ModelParams};
use crate::pickands::Interval;
use crate::sampler::SeedSpec;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// The window `(s0, t0) + (u^{-2/a1} L1, u^{-2/a2} L2)` in original time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalWindow {
    pub s: Interval,
    pub t: Interval,
}

pub fn local_window(
    u: f64,
    params: &ModelParams,
    s0: f64,
    t0: f64,
    lambda1: Interval,
    lambda2: Interval,
) -> Result<LocalWindow> {
    check_hypothesis(u, s0, "s0")?;
    check_hypothesis(u, t0, "t0")?;
    let shift = |x0: f64, l: Interval, a: f64| {
        let k = u.powf(-2.0 / a);
        Interval { lo: x0 + k * l.lo, hi: x0 + k * l.hi }
    };
    let w = LocalWindow { s: shift(s0, lambda1, params.alpha1()), t: shift(t0, lambda2, params.alpha2()) };
    if w.s.lo <= 0.0 || w.t.lo <= 0.0 {
        return Err(Error::Domain("window reaches t <= 0".into()));
    }
    Ok(w)
}

fn check_hypothesis(u: f64, x0: f64, name: &str) -> Result<()> {
    if !(u > 1.0) {
        return Err(Error::Domain(format!("local windows need u > 1: {u}")));
    }
    let tol = u.ln().powi(2) / (u * u);
    if !(x0 <= 1.0 && 1.0 - x0 <= tol) {
        return Err(Error::HypothesisViolated(format!("{name} = {x0} is not within (ln u)^2/u^2 = {tol:.4} below 1")));
    }
    Ok(())
}

/// Lattice grid through `x0` covering `x0 + k * lambda` with step `k * step`
/// (adjusted so that `x0` is a lattice point).
fn window_grid(x0: f64, k: f64, lambda: Interval, step: f64) -> Result<Grid> {
    let h = x0 / (x0 / (k * step)).round();
    let centre = (x0 / h).round() as i64;
    let lo = centre + (k * lambda.lo / h).round() as i64;
    let hi = centre + (k * lambda.hi / h).round() as i64;
    if lo < 1 {
        return Err(Error::Domain("window reaches t <= 0".into()));
    }
    Grid::lattice_segment(h, lo as usize, hi as usize)
}

/// `P(max over the window of X1 > u, max over the window of X2 > u)`.
///
/// `step` is the grid step in rescaled units. Non-degenerate windows are
/// sampled on lattices and the result is extrapolated from the step and
/// twice the step; single points use bivariate draws.
#[allow(clippy::too_many_arguments)]
pub fn local_prob(
    u: f64,
    params: &ModelParams,
    s0: f64,
    t0: f64,
    lambda1: Interval,
    lambda2: Interval,
    step: f64,
    replications: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    local_window(u, params, s0, t0, lambda1, lambda2)?;
    if !(step > 0.0) || replications == 0 {
        return Err(Error::Domain(format!("step {step}, replications {replications}")));
    }
    let k1 = u.powf(-2.0 / params.alpha1());
    let k2 = u.powf(-2.0 / params.alpha2());
    if lambda1.length() == 0.0 && lambda2.length() == 0.0 {
        let s = s0 + k1 * lambda1.lo;
        let t = t0 + k2 * lambda2.lo;
        let (a, b) = (u / s.powf(params.alpha1() / 2.0), u / t.powf(params.alpha2() / 2.0));
        let r = params.r();
        let rho = (1.0 - r * r).sqrt();
        let hits = replicate_counts(replications, 1, || (), |_, i, acc| {
            let mut rng = SeedSpec::new(seed, i).rng();
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            if z1 > a && r * z1 + rho * z2 > b {
                acc[0] += 1;
            }
        });
        return Ok(EstimateWithCI::from_count(hits[0], replications, seed, 1));
    }
    let grid_for = |x0: f64, k: f64, l: Interval| -> Result<Grid> {
        if l.length() == 0.0 {
            // even lattice index keeps the point on the coarse grid
            let x = x0 + k * l.lo;
            let m = 2 * ((x / (k * step) / 2.0).round() as usize).max(1);
            Grid::lattice_segment(x / m as f64, m, m)
        } else {
            window_grid(x0, k, l, step)
        }
    };
    let g1 = grid_for(s0, k1, lambda1)?;
    let g2 = grid_for(t0, k2, lambda2)?;
    let curve = joint_survival_grid(&[u], params, &g1, &g2, replications, seed)?;
    let mut est = curve.points[0].best();
    est.grid_points = g1.len().max(g2.len());
    Ok(est)
}

/// `Q1 Q2 (1+r)^{3/2} / (2 pi sqrt(1-r)) u^{-2} exp(-u^2 h(s0,t0)/2)`.
pub fn lemma_a_rhs(u: f64, params: &ModelParams, s0: f64, t0: f64, q1: f64, q2: f64) -> Result<f64> {
    check_hypothesis(u, s0, "s0")?;
    check_hypothesis(u, t0, "t0")?;
    let hv = h(s0, t0, params)?;
    Ok(q1 * q2 * joint_prefactor(params.r()) * u.powi(-2) * (-u * u * hv / 2.0).exp())
}
