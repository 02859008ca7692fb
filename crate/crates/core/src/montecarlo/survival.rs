use super::{replicate_counts, EstimateWithCI};
use crate::bounds::Region;
use crate::error::{Error, Result};
use crate::model::{Grid, ModelParams};
use crate::sampler::{PairSampler, SeedSpec};
use serde::{Deserialize, Serialize};

/// Estimates at one threshold: on the grid, on its even sub-grid (same
/// draws), and the extrapolation of the two in `step^{min(alpha)/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub u: f64,
    pub grid: EstimateWithCI,
    pub coarse: Option<EstimateWithCI>,
    pub extrapolated: Option<EstimateWithCI>,
}

impl SurvivalPoint {
    /// The extrapolated estimate when available, else the grid estimate.
    pub fn best(&self) -> EstimateWithCI {
        self.extrapolated.unwrap_or(self.grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub params: ModelParams,
    pub points: Vec<SurvivalPoint>,
    pub replications: u64,
    pub seed: u64,
    pub grid_points: (usize, usize),
}

pub(crate) fn max_over(x: &[f64], idx: Option<&[usize]>) -> f64 {
    match idx {
        None => x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Some(ix) => ix.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max),
    }
}

/// `(mean, se)` of `Y_f + g (Y_f - Y_c)` from the counts of the patterns
/// `(1,0)` and `(1,1)`; `(0,1)` cannot occur since the coarse grid is a subset.
pub(crate) fn extrapolate_counts(fine_only: u64, both: u64, n: u64, g: f64) -> (f64, f64) {
    let nf = n as f64;
    let a = fine_only as f64 / nf;
    let b = both as f64 / nf;
    let mean = a * (1.0 + g) + b;
    let second = a * (1.0 + g).powi(2) + b;
    let var = (second - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
    (mean, (var / nf).sqrt())
}

pub(crate) fn richardson_gain(params: &ModelParams) -> f64 {
    let p = params.alpha1().min(params.alpha2()) / 2.0;
    1.0 / (2f64.powf(p) - 1.0)
}

/// Crude joint survival over a threshold grid with common random numbers.
pub fn joint_survival_grid(
    us: &[f64],
    params: &ModelParams,
    grid1: &Grid,
    grid2: &Grid,
    replications: u64,
    seed: u64,
) -> Result<SurvivalCurve> {
    if us.is_empty() || us.iter().any(|u| !(*u >= 0.0)) {
        return Err(Error::Domain("thresholds must be nonnegative".into()));
    }
    if replications == 0 {
        return Err(Error::Domain("need at least one replication".into()));
    }
    let sampler = PairSampler::new(params, grid1, grid2)?;
    let c1 = grid1.coarse_indices();
    let c2 = grid2.coarse_indices();
    let coarse = c1.is_some() && c2.is_some();
    let u_min = us.iter().copied().fold(f64::INFINITY, f64::min);
    let k = us.len();
    let counts = replicate_counts(
        replications,
        2 * k,
        || (Vec::new(), vec![0.0; grid1.len()], vec![0.0; grid2.len()]),
        |(scratch, x1, x2), i, acc| {
            let mut rng = SeedSpec::new(seed, i).rng();
            let a1 = sampler.sample_first(&mut rng, scratch, x1);
            let m1 = max_over(x1, None);
            if !(m1 > u_min) {
                return;
            }
            let m1c = max_over(x1, c1.as_deref());
            sampler.sample_second(&mut rng, scratch, a1, x2);
            let m2 = max_over(x2, None);
            let m2c = max_over(x2, c2.as_deref());
            for (q, &u) in us.iter().enumerate() {
                if m1 > u && m2 > u {
                    if coarse && m1c > u && m2c > u {
                        acc[2 * q + 1] += 1;
                    } else {
                        acc[2 * q] += 1;
                    }
                }
            }
        },
    );
    let g = richardson_gain(params);
    let n_pts = grid1.len().max(grid2.len());
    let points = us
        .iter()
        .enumerate()
        .map(|(q, &u)| {
            let (only, both) = (counts[2 * q], counts[2 * q + 1]);
            let grid = EstimateWithCI::from_count(only + both, replications, seed, n_pts);
            let (coarse_e, extra) = if coarse {
                let (m, se) = extrapolate_counts(only, both, replications, g);
                (
                    Some(EstimateWithCI::from_count(both, replications, seed, n_pts / 2)),
                    Some(EstimateWithCI::new(m, se, replications, seed, n_pts)),
                )
            } else {
                (None, None)
            };
            SurvivalPoint { u, grid, coarse: coarse_e, extrapolated: extra }
        })
        .collect();
    Ok(SurvivalCurve { params: *params, points, replications, seed, grid_points: (grid1.len(), grid2.len()) })
}

/// Fraction of joint draws whose grid maxima both exceed `u`.
pub fn joint_survival(u: f64, params: &ModelParams, grid: &Grid, replications: u64, seed: u64) -> Result<EstimateWithCI> {
    Ok(joint_survival_grid(&[u], params, grid, grid, replications, seed)?.points[0].grid)
}

/// Grids with `n` steps per unit horizon restricted to a rectangle.
pub fn region_grids(region: &Region, n: usize) -> Result<(Grid, Grid)> {
    Ok((
        Grid::uniform_window(n, region.s.1, region.s.0)?,
        Grid::uniform_window(n, region.t.1, region.t.0)?,
    ))
}

/// `P(exists (s,t) in V: X1(s) > u, X2(t) > u)` for a rectangle `V`, which
/// reduces to both coordinate maxima over the sides exceeding `u`.
pub fn union_prob(
    u: f64,
    params: &ModelParams,
    region: &Region,
    n: usize,
    replications: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    let (g1, g2) = region_grids(region, n)?;
    Ok(joint_survival_grid(&[u], params, &g1, &g2, replications, seed)?.points[0].grid)
}

/// `P(M1 > u, M2 > u) / P(M2 > u)` on shared draws, delta-method error.
pub fn independence_ratio(u: f64, params: &ModelParams, grid: &Grid, replications: u64, seed: u64) -> Result<EstimateWithCI> {
    let sampler = PairSampler::new(params, grid, grid)?;
    let counts = replicate_counts(
        replications,
        2,
        || (Vec::new(), vec![0.0; grid.len()], vec![0.0; grid.len()]),
        |(scratch, x1, x2), i, acc| {
            let mut rng = SeedSpec::new(seed, i).rng();
            let a1 = sampler.sample_first(&mut rng, scratch, x1);
            sampler.sample_second(&mut rng, scratch, a1, x2);
            if max_over(x2, None) > u {
                acc[1] += 1;
                if max_over(x1, None) > u {
                    acc[0] += 1;
                }
            }
        },
    );
    if counts[1] == 0 {
        return Err(Error::DegenerateDenominator { n: replications });
    }
    let n = replications as f64;
    let p1 = counts[0] as f64 / n;
    let p2 = counts[1] as f64 / n;
    let ratio = p1 / p2;
    // numerator event is contained in the denominator event
    let (v11, v22, v12) = (p1 * (1.0 - p1), p2 * (1.0 - p2), p1 * (1.0 - p2));
    let var = (v11 / (p2 * p2) - 2.0 * p1 * v12 / p2.powi(3) + p1 * p1 * v22 / p2.powi(4)) / n;
    Ok(EstimateWithCI::new(ratio, var.max(0.0).sqrt(), replications, seed, grid.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_from_counts() {
        let (m, se) = extrapolate_counts(0, 50, 100, 2.4);
        assert!((m - 0.5).abs() < 1e-15);
        assert!(se > 0.0);
        let (m, _) = extrapolate_counts(10, 40, 100, 1.0);
        assert!((m - 0.6).abs() < 1e-15);
    }
}
