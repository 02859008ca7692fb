//! Exact samplers: single fBm paths by circulant embedding, joint pairs by
//! Cholesky of the full covariance, and a fast exact pair sampler that
//! exploits the rank-one cross-covariance.

use crate::error::{Error, Result};
use crate::model::{check_alpha, fbm_cov_unchecked, Grid, JointCovariance, ModelParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Counter-based seed: `(master, stream)` fixes a draw independently of
/// scheduling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }

    /// A seed family for a sub-experiment; streams of different families
    /// never collide.
    pub fn derive(master: u64, tag: u64) -> u64 {
        // splitmix64 finalizer
        let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// One joint realization; both paths start with the deterministic value at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub seed: SeedSpec,
}

/// Maximum and first index attaining it.
pub fn path_supremum(path: &[f64]) -> (f64, usize) {
    assert!(!path.is_empty(), "path_supremum of an empty path");
    let mut best = (path[0], 0);
    for (i, &x) in path.iter().enumerate().skip(1) {
        if x > best.0 {
            best = (x, i);
        }
    }
    best
}

pub(crate) fn fill_normals<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for z in out.iter_mut() {
        *z = rng.sample(StandardNormal);
    }
}

/// Draws a joint path pair `x = L z` from the full joint covariance.
pub fn sample_pair(cov: &JointCovariance, seed: SeedSpec) -> PathPair {
    let mut rng = seed.rng();
    let n = cov.dim();
    let mut z = vec![0.0; n];
    fill_normals(&mut rng, &mut z);
    let x = cov.factor() * DVector::from_vec(z);
    let n1 = cov.grid1().len();
    let mut x1 = Vec::with_capacity(n1 + 1);
    x1.push(0.0);
    x1.extend(x.iter().take(n1));
    let mut x2 = Vec::with_capacity(n - n1 + 1);
    x2.push(0.0);
    x2.extend(x.iter().skip(n1));
    PathPair { x1, x2, seed }
}

fn fgn_autocov(k: usize, alpha: f64) -> f64 {
    let k = k as f64;
    0.5 * ((k + 1.0).powf(alpha) + (k - 1.0).abs().powf(alpha) - 2.0 * k.powf(alpha))
}

enum Method {
    /// alpha = 1: independent increments.
    White,
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Cholesky { factor: DMatrix<f64> },
}

/// Exact sampler of fBm on the lattice `{k * step : k = 0..=increments}`.
pub struct FbmSampler {
    alpha: f64,
    step: f64,
    increments: usize,
    method: Method,
}

impl std::fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let m = match self.method {
            Method::White => "white",
            Method::Circulant { .. } => "circulant",
            Method::Cholesky { .. } => "cholesky",
        };
        f.debug_struct("FbmSampler")
            .field("alpha", &self.alpha)
            .field("step", &self.step)
            .field("increments", &self.increments)
            .field("method", &m)
            .finish()
    }
}

const NEGATIVE_EIG_TOL: f64 = 1e-10;

impl FbmSampler {
    pub fn new(alpha: f64, step: f64, increments: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if !(step > 0.0) || increments == 0 {
            return Err(Error::InvalidGrid(format!("step {step}, increments {increments}")));
        }
        if alpha == 1.0 {
            return Ok(Self { alpha, step, increments, method: Method::White });
        }
        let method = match Self::circulant(alpha, increments) {
            Some(m) => m,
            None => Self::cholesky(alpha, increments)?,
        };
        Ok(Self { alpha, step, increments, method })
    }

    /// Forces the dense Cholesky route (reference sampler for tests).
    pub fn new_cholesky(alpha: f64, step: f64, increments: usize) -> Result<Self> {
        check_alpha(alpha)?;
        let method = Self::cholesky(alpha, increments)?;
        Ok(Self { alpha, step, increments, method })
    }

    fn circulant(alpha: f64, increments: usize) -> Option<Method> {
        let half = increments.next_power_of_two();
        let size = 2 * half;
        let mut row: Vec<Complex<f64>> = (0..size)
            .map(|j| {
                let k = if j <= half { j } else { size - j };
                Complex::new(fgn_autocov(k, alpha), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(0.0f64, f64::max);
        if row.iter().any(|c| c.re < -NEGATIVE_EIG_TOL * max) {
            return None;
        }
        let sqrt_eig = row.iter().map(|c| (c.re.max(0.0) / size as f64).sqrt()).collect();
        Some(Method::Circulant { sqrt_eig, fft })
    }

    fn cholesky(alpha: f64, increments: usize) -> Result<Method> {
        let m = DMatrix::from_fn(increments, increments, |i, j| fgn_autocov(i.abs_diff(j), alpha));
        crate::model::cholesky_with_jitter(&m)
            .map(|(factor, _)| Method::Cholesky { factor })
            .map_err(|e| Error::EmbeddingFailed(e.to_string()))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn increments(&self) -> usize {
        self.increments
    }

    pub fn uses_circulant(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    /// Two independent paths (each of length `increments + 1`, starting at 0).
    pub fn sample_two<R: Rng>(&self, rng: &mut R, a: &mut [f64], b: &mut [f64]) {
        let m = self.increments;
        assert!(a.len() == m + 1 && b.len() == m + 1);
        match &self.method {
            Method::Circulant { sqrt_eig, fft } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|&s| Complex::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                fft.process(&mut buf);
                let scale = self.step.powf(self.alpha / 2.0);
                a[0] = 0.0;
                b[0] = 0.0;
                for k in 0..m {
                    a[k + 1] = a[k] + scale * buf[k].re;
                    b[k + 1] = b[k] + scale * buf[k].im;
                }
            }
            _ => {
                self.sample_into(rng, a);
                self.sample_into(rng, b);
            }
        }
    }

    /// One path of length `increments + 1`, starting at 0.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let m = self.increments;
        assert_eq!(out.len(), m + 1);
        out[0] = 0.0;
        match &self.method {
            Method::White => {
                let s = self.step.sqrt();
                for k in 0..m {
                    let z: f64 = rng.sample(StandardNormal);
                    out[k + 1] = out[k] + s * z;
                }
            }
            Method::Circulant { .. } => {
                let mut other = vec![0.0; m + 1];
                self.sample_two(rng, out, &mut other);
            }
            Method::Cholesky { factor } => {
                let mut z = vec![0.0; m];
                fill_normals(rng, &mut z);
                let g = factor * DVector::from_vec(z);
                let scale = self.step.powf(self.alpha / 2.0);
                for k in 0..m {
                    out[k + 1] = out[k] + scale * g[k];
                }
            }
        }
    }
}

/// fBm path on a uniform grid, with the value at t = 0 prepended.
pub fn sample_fbm_path(alpha: f64, grid: &Grid, seed: SeedSpec) -> Result<Vec<f64>> {
    let lat = grid
        .lattice()
        .filter(|l| l.first == 1)
        .ok_or_else(|| Error::InvalidGrid("sample_fbm_path needs a uniform grid starting at one step".into()))?;
    let sampler = FbmSampler::new(alpha, lat.step, grid.len())?;
    let mut out = vec![0.0; grid.len() + 1];
    sampler.sample_into(&mut seed.rng(), &mut out);
    Ok(out)
}

/// `(K^{-1} v, v^T K^{-1} v)` for `v(t) = t^{alpha/2}` and the fBm
/// covariance `K` on `grid`.
pub fn variance_projection(grid: &Grid, alpha: f64) -> Result<(Vec<f64>, f64)> {
    check_alpha(alpha)?;
    let pts = grid.points();
    let n = pts.len();
    let k = DMatrix::from_fn(n, n, |i, j| fbm_cov_unchecked(pts[i], pts[j], alpha));
    let v = DVector::from_iterator(n, pts.iter().map(|t| t.powf(alpha / 2.0)));
    let ch = k.cholesky().ok_or_else(|| Error::NotPositiveSemiDefinite {
        min_eigenvalue: f64::NAN,
        max_jitter: 0.0,
    })?;
    let w = ch.solve(&v);
    let q = v.dot(&w);
    Ok((w.iter().copied().collect(), q))
}

/// Draws one coordinate on its grid (without the t = 0 point).
enum Marginal {
    /// Brownian motion on a lattice window: Gaussian start plus independent steps.
    Brownian { step: f64, first: usize },
    Lattice { sampler: FbmSampler, first: usize },
    Dense { factor: DMatrix<f64> },
}

impl Marginal {
    fn new(grid: &Grid, alpha: f64) -> Result<Self> {
        match grid.lattice() {
            Some(lat) if alpha == 1.0 => Ok(Marginal::Brownian { step: lat.step, first: lat.first }),
            Some(lat) => {
                let sampler = FbmSampler::new(alpha, lat.step, lat.first + grid.len() - 1)?;
                Ok(Marginal::Lattice { sampler, first: lat.first })
            }
            None => {
                let p = grid.points();
                let k = DMatrix::from_fn(p.len(), p.len(), |i, j| fbm_cov_unchecked(p[i], p[j], alpha));
                let (factor, _) = crate::model::cholesky_with_jitter(&k)?;
                Ok(Marginal::Dense { factor })
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R, scratch: &mut Vec<f64>, out: &mut [f64]) {
        match self {
            Marginal::Brownian { step, first } => {
                let sd = step.sqrt();
                fill_normals(rng, out);
                out[0] *= (*first as f64 * step).sqrt();
                for k in 1..out.len() {
                    out[k] = out[k - 1] + sd * out[k];
                }
            }
            Marginal::Lattice { sampler, first } => {
                scratch.resize(sampler.increments() + 1, 0.0);
                sampler.sample_into(rng, scratch);
                out.copy_from_slice(&scratch[*first..*first + out.len()]);
            }
            Marginal::Dense { factor } => {
                let mut z = vec![0.0; out.len()];
                fill_normals(rng, &mut z);
                let x = factor * DVector::from_vec(z);
                out.copy_from_slice(x.as_slice());
            }
        }
    }
}

/// Exact fast sampler for the correlated pair.
///
/// With `v_i(t) = t^{alpha_i/2}`, `w_i = K_i^{-1} v_i` and `q_i = v_i^T w_i`,
/// each coordinate splits into the projection `a_i = w_i^T Y_i ~ N(0, q_i)`
/// and an independent residual. Recombining the projections with
/// covariance `r q_1 q_2` reproduces the cross block `r v_1 v_2^T` exactly;
/// this is possible iff `r^2 q_1 q_2 <= 1`, the PSD condition of the joint
/// covariance.
pub struct PairSampler {
    params: ModelParams,
    grid1: Grid,
    grid2: Grid,
    m1: Marginal,
    m2: Marginal,
    /// `(w_1, q_1, w_2, q_2, v_2)`, present iff `r != 0`.
    coupling: Option<Coupling>,
}

struct Coupling {
    w1: Vec<f64>,
    q1: f64,
    w2: Vec<f64>,
    q2: f64,
    v2: Vec<f64>,
    resid: f64,
}

impl PairSampler {
    pub fn new(params: &ModelParams, grid1: &Grid, grid2: &Grid) -> Result<Self> {
        let m1 = Marginal::new(grid1, params.alpha1())?;
        let m2 = Marginal::new(grid2, params.alpha2())?;
        let coupling = if params.r() == 0.0 {
            None
        } else {
            let (w1, q1) = variance_projection(grid1, params.alpha1())?;
            let (w2, q2) = variance_projection(grid2, params.alpha2())?;
            let r = params.r();
            let slack = 1.0 - r * r * q1 * q2;
            if slack < -1e-12 {
                return Err(Error::InfeasibleCorrelation { r, max_abs_r: 1.0 / (q1 * q2).sqrt() });
            }
            let resid = (q2 * slack.max(0.0)).sqrt() / q2.sqrt();
            let v2 = grid2.points().iter().map(|t| t.powf(params.alpha2() / 2.0)).collect();
            Some(Coupling { w1, q1, w2, q2, v2, resid })
        };
        Ok(Self { params: *params, grid1: grid1.clone(), grid2: grid2.clone(), m1, m2, coupling })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid1(&self) -> &Grid {
        &self.grid1
    }

    pub fn grid2(&self) -> &Grid {
        &self.grid2
    }

    /// `q_1, q_2` (both 0 when `r = 0`).
    pub fn projections(&self) -> (f64, f64) {
        self.coupling.as_ref().map(|c| (c.q1, c.q2)).unwrap_or((0.0, 0.0))
    }

    /// Draws `X1` into `x1` (grid points only) and returns the state needed
    /// to draw `X2` afterwards from the same generator.
    pub fn sample_first<R: Rng>(&self, rng: &mut R, scratch: &mut Vec<f64>, x1: &mut [f64]) -> f64 {
        self.m1.sample(rng, scratch, x1);
        match &self.coupling {
            Some(c) => dot(&c.w1, x1),
            None => 0.0,
        }
    }

    /// Draws `X2` given the projection `a1` returned by [`Self::sample_first`].
    pub fn sample_second<R: Rng>(&self, rng: &mut R, scratch: &mut Vec<f64>, a1: f64, x2: &mut [f64]) {
        self.m2.sample(rng, scratch, x2);
        if let Some(c) = &self.coupling {
            let a2 = dot(&c.w2, x2);
            let b2 = self.params.r() * c.q2 * a1 + c.resid * a2;
            let shift = (b2 - a2) / c.q2;
            for (x, v) in x2.iter_mut().zip(&c.v2) {
                *x += v * shift;
            }
        }
    }

    /// Full pair with prepended zeros, in the layout of [`PathPair`].
    pub fn sample(&self, seed: SeedSpec) -> PathPair {
        let mut rng = seed.rng();
        let mut scratch = Vec::new();
        let mut x1 = vec![0.0; self.grid1.len() + 1];
        let mut x2 = vec![0.0; self.grid2.len() + 1];
        let a1 = self.sample_first(&mut rng, &mut scratch, &mut x1[1..]);
        self.sample_second(&mut rng, &mut scratch, a1, &mut x2[1..]);
        PathPair { x1, x2, seed }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_joint_covariance;

    #[test]
    fn supremum_examples() {
        assert_eq!(path_supremum(&[0.0, 0.0, 0.0]), (0.0, 0));
        assert_eq!(path_supremum(&[0.0, 1.0, -1.0]), (1.0, 1));
        assert_eq!(path_supremum(&[0.0, 0.5, 1.0, 2.0]), (2.0, 3));
        assert_eq!(path_supremum(&[0.0, 2.0, 2.0]), (2.0, 1));
    }

    #[test]
    fn sample_pair_is_deterministic() {
        let g = Grid::uniform(16, 1.0).unwrap();
        let p = ModelParams::new(0.8, 1.2, 0.2).unwrap();
        let c = build_joint_covariance(&g, &g, &p).unwrap();
        let a = sample_pair(&c, SeedSpec::new(3, 9));
        let b = sample_pair(&c, SeedSpec::new(3, 9));
        assert_eq!(a, b);
        assert_eq!(a.x1[0], 0.0);
        assert_eq!(a.x2[0], 0.0);
        assert_eq!(a.x1.len(), 17);
        assert_ne!(a, sample_pair(&c, SeedSpec::new(3, 10)));
    }

    #[test]
    fn fbm_path_is_deterministic_and_zero_started() {
        let g = Grid::uniform(64, 1.0).unwrap();
        for alpha in [0.4, 1.0, 1.6] {
            let a = sample_fbm_path(alpha, &g, SeedSpec::new(1, 2)).unwrap();
            let b = sample_fbm_path(alpha, &g, SeedSpec::new(1, 2)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 65);
            assert_eq!(a[0], 0.0);
        }
        assert!(sample_fbm_path(2.0, &g, SeedSpec::new(1, 2)).is_err());
    }

    #[test]
    fn circulant_is_used_for_fractional_alpha() {
        for alpha in [0.1, 0.5, 1.5, 1.9] {
            let s = FbmSampler::new(alpha, 1.0 / 64.0, 64).unwrap();
            assert!(s.uses_circulant(), "alpha {alpha}");
        }
    }

    #[test]
    fn pair_sampler_reproduces_projection_identity() {
        let g1 = Grid::uniform(32, 1.0).unwrap();
        let g2 = Grid::uniform_window(32, 1.0, 0.2).unwrap();
        let p = ModelParams::new(0.7, 1.3, 0.3).unwrap();
        let s = PairSampler::new(&p, &g1, &g2).unwrap();
        let (q1, q2) = s.projections();
        assert!(q1 >= 1.0 && q2 >= 1.0);
        let a = s.sample(SeedSpec::new(5, 1));
        let b = s.sample(SeedSpec::new(5, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn pair_sampler_rejects_infeasible_correlation() {
        let g = Grid::uniform(512, 1.0).unwrap();
        let p = ModelParams::new(1.0, 1.0, 0.5).unwrap();
        assert!(matches!(PairSampler::new(&p, &g, &g), Err(Error::InfeasibleCorrelation { .. })));
        let w = Grid::uniform_window(512, 1.0, 1.0 / 16.0).unwrap();
        assert!(PairSampler::new(&p, &w, &w).is_ok());
    }
}
