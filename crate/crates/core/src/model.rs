//! Model parameters, time grids and the exact joint covariance of a pair of
//! standard fBm's with constant cross-correlation.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Hurst exponents (as `alpha = 2H`) and the constant cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr")]
pub struct ModelParams {
    alpha1: f64,
    alpha2: f64,
    r: f64,
}

#[derive(Deserialize)]
struct ParamsRepr {
    alpha1: f64,
    alpha2: f64,
    r: f64,
}

impl TryFrom<ParamsRepr> for ModelParams {
    type Error = Error;

    fn try_from(p: ParamsRepr) -> Result<Self> {
        Self::new(p.alpha1, p.alpha2, p.r)
    }
}

impl ModelParams {
    pub fn new(alpha1: f64, alpha2: f64, r: f64) -> Result<Self> {
        check_alpha(alpha1)?;
        check_alpha(alpha2)?;
        if !(r > -1.0 && r < 1.0) {
            return Err(Error::Domain(format!("r out of (-1,1): {r}")));
        }
        Ok(Self { alpha1, alpha2, r })
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Same model with the two coordinates exchanged.
    pub fn swapped(&self) -> Self {
        Self { alpha1: self.alpha2, alpha2: self.alpha1, r: self.r }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha out of (0,2): {alpha}")))
    }
}

/// Positions of grid points on the lattice `step * k`, when the grid is one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub step: f64,
    /// Lattice index of the first grid point.
    pub first: usize,
}

/// Strictly increasing, non-negative sample times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    lattice: Option<Lattice>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {}", points.len())));
        }
        if points.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidGrid("points must be finite and non-negative".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self { points, lattice: None })
    }

    /// `n` equispaced points `horizon * k / n`, `k = 1..=n` (t = 0 excluded).
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        Self::uniform_window(n, horizon, 0.0)
    }

    /// The points of `uniform(n, horizon)` that are `>= t_min`.
    pub fn uniform_window(n: usize, horizon: f64, t_min: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive: {horizon}")));
        }
        if !(0.0..horizon).contains(&t_min) {
            return Err(Error::InvalidGrid(format!("t_min must lie in [0, horizon): {t_min}")));
        }
        let step = horizon / n as f64;
        let first = ((t_min / step - 1e-9).ceil() as usize).max(1);
        let points: Vec<f64> = (first..=n).map(|k| k as f64 * step).collect();
        let mut g = Self::new(points)?;
        g.lattice = Some(Lattice { step, first });
        Ok(g)
    }

    /// Lattice points `step * k` for `k = first..=last`; a single point is allowed.
    pub fn lattice_segment(step: f64, first: usize, last: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidGrid(format!("step must be positive: {step}")));
        }
        if first == 0 || last < first {
            return Err(Error::InvalidGrid(format!("need 1 <= first <= last, got {first}..{last}")));
        }
        let points = (first..=last).map(|k| k as f64 * step).collect();
        Ok(Self { points, lattice: Some(Lattice { step, first }) })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().expect("grid is non-empty")
    }

    pub fn lattice(&self) -> Option<Lattice> {
        self.lattice
    }

    /// Indices (into `points`) of the grid points with even lattice index,
    /// i.e. the grid with twice the step. Only defined for lattice grids.
    pub fn coarse_indices(&self) -> Option<Vec<usize>> {
        let lat = self.lattice?;
        Some((0..self.len()).filter(|i| (lat.first + i) % 2 == 0).collect())
    }
}

/// `Cov(B(s), B(t)) = (|s|^a + |t|^a - |t - s|^a) / 2`.
pub fn fbm_covariance(s: f64, t: f64, alpha: f64) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return Err(Error::Domain(format!("negative time: s={s}, t={t}")));
    }
    check_alpha(alpha)?;
    Ok(fbm_cov_unchecked(s, t, alpha))
}

#[inline]
pub(crate) fn fbm_cov_unchecked(s: f64, t: f64, alpha: f64) -> f64 {
    0.5 * (s.abs().powf(alpha) + t.abs().powf(alpha) - (t - s).abs().powf(alpha))
}

/// `Cov(X1(s), X2(t)) = r s^{a1/2} t^{a2/2}`.
pub fn cross_covariance(s: f64, t: f64, params: &ModelParams) -> f64 {
    params.r * s.powf(params.alpha1 / 2.0) * t.powf(params.alpha2 / 2.0)
}

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-12;

/// Joint covariance of `(X1 on grid1, X2 on grid2)` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct JointCovariance {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
    grid1: Grid,
    grid2: Grid,
    params: ModelParams,
    jitter: f64,
}

pub fn build_joint_covariance(grid1: &Grid, grid2: &Grid, params: &ModelParams) -> Result<JointCovariance> {
    let (n1, n2) = (grid1.len(), grid2.len());
    let n = n1 + n2;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, &s) in grid1.points().iter().enumerate() {
        for (j, &t) in grid1.points().iter().enumerate() {
            m[(i, j)] = fbm_cov_unchecked(s, t, params.alpha1);
        }
        for (j, &t) in grid2.points().iter().enumerate() {
            let c = cross_covariance(s, t, params);
            m[(i, n1 + j)] = c;
            m[(n1 + j, i)] = c;
        }
    }
    for (i, &s) in grid2.points().iter().enumerate() {
        for (j, &t) in grid2.points().iter().enumerate() {
            m[(n1 + i, n1 + j)] = fbm_cov_unchecked(s, t, params.alpha2);
        }
    }
    JointCovariance::from_parts(m, grid1.clone(), grid2.clone(), *params)
}

/// Cholesky with diagonal jitter `eps * max_diag`, `eps` doubling from
/// 1e-12 to 1e-8. Returns the factor and the absolute jitter used.
pub(crate) fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok((ch.l(), 0.0));
    }
    let max_diag = m.diagonal().iter().cloned().fold(0.0f64, f64::max);
    let mut eps = JITTER_START;
    while eps <= JITTER_MAX * (1.0 + 1e-12) {
        let mut mj = m.clone();
        for i in 0..mj.nrows() {
            mj[(i, i)] += eps * max_diag;
        }
        if let Some(ch) = mj.cholesky() {
            return Ok((ch.l(), eps * max_diag));
        }
        eps *= 2.0;
    }
    let min_eigenvalue = SymmetricEigen::new(m.clone()).eigenvalues.min();
    Err(Error::NotPositiveSemiDefinite { min_eigenvalue, max_jitter: JITTER_MAX * max_diag })
}

impl JointCovariance {
    fn from_parts(matrix: DMatrix<f64>, grid1: Grid, grid2: Grid, params: ModelParams) -> Result<Self> {
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Domain(format!("covariance not symmetric: {asym:e}")));
        }
        let (factor, jitter) = cholesky_with_jitter(&matrix)?;
        Ok(Self { matrix, factor, grid1, grid2, params, jitter })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular `L` with `L L^T = matrix + jitter * I`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn grid1(&self) -> &Grid {
        &self.grid1
    }

    pub fn grid2(&self) -> &Grid {
        &self.grid2
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Writes the binary cache file (see `docs/formats.md`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(64 + 16 * self.dim() * self.dim());
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(self.grid1.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.grid2.len() as u64).to_le_bytes());
        for v in [self.params.alpha1, self.params.alpha2, self.params.r, self.jitter] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let n = self.dim();
        let doubles = self
            .grid1
            .points()
            .iter()
            .chain(self.grid2.points())
            .copied()
            .chain((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.matrix[(i, j)]))
            .chain((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.factor[(i, j)]));
        for v in doubles {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&buf)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    /// Reads a cache file written by [`JointCovariance::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 56 || &bytes[..8] != CACHE_MAGIC {
            return Err(Error::Io("not a covariance cache file".into()));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (n1, n2) = (u64_at(8) as usize, u64_at(16) as usize);
        let params = ModelParams::new(f64_at(24), f64_at(32), f64_at(40))?;
        let jitter = f64_at(48);
        let n = n1 + n2;
        let expected = 56 + 8 * (n + 2 * n * n);
        if bytes.len() != expected {
            return Err(Error::Io(format!("cache size {} != expected {expected}", bytes.len())));
        }
        let mut off = 56;
        let mut next = || {
            let v = f64_at(off);
            off += 8;
            v
        };
        let g1: Vec<f64> = (0..n1).map(|_| next()).collect();
        let g2: Vec<f64> = (0..n2).map(|_| next()).collect();
        let matrix = DMatrix::from_row_iterator(n, n, (0..n * n).map(|_| next()).collect::<Vec<_>>());
        let factor = DMatrix::from_row_iterator(n, n, (0..n * n).map(|_| next()).collect::<Vec<_>>());
        Ok(Self { matrix, factor, grid1: Grid::new(g1)?, grid2: Grid::new(g2)?, params, jitter })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"CFBMCOV1";

/// Largest `|r|` for which the joint covariance on `(grid1, grid2)` is PSD:
/// `1 / sqrt(q1 q2)` with `q_i = v_i^T K_i^{-1} v_i`, `v_i(t) = t^{alpha_i/2}`.
pub fn max_feasible_correlation(grid1: &Grid, grid2: &Grid, alpha1: f64, alpha2: f64) -> Result<f64> {
    let q1 = crate::sampler::variance_projection(grid1, alpha1)?.1;
    let q2 = crate::sampler::variance_projection(grid2, alpha2)?.1;
    Ok(1.0 / (q1 * q2).sqrt())
}
