//! Closed-form asymptotics for the joint survival function and friends.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn check_unit(s: f64, name: &str) -> Result<()> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must lie in (0,1]: {s}")))
    }
}

/// `h(s,t) = (t^a2 + s^a1 - 2 r s^{a1/2} t^{a2/2}) / (s^a1 t^a2 (1 - r^2))`.
pub fn h(s: f64, t: f64, params: &ModelParams) -> Result<f64> {
    check_unit(s, "s")?;
    check_unit(t, "t")?;
    Ok(h_unchecked(s, t, params))
}

pub(crate) fn h_unchecked(s: f64, t: f64, p: &ModelParams) -> f64 {
    let (a1, a2, r) = (p.alpha1(), p.alpha2(), p.r());
    let x = s.powf(-a1 / 2.0);
    let y = t.powf(-a2 / 2.0);
    (x * x + y * y - 2.0 * r * x * y) / (1.0 - r * r)
}

/// Analytic gradient `(dh/ds, dh/dt)`.
pub fn h_gradient(s: f64, t: f64, params: &ModelParams) -> Result<(f64, f64)> {
    check_unit(s, "s")?;
    check_unit(t, "t")?;
    let (a1, a2, r) = (params.alpha1(), params.alpha2(), params.r());
    let x = s.powf(-a1 / 2.0);
    let y = t.powf(-a2 / 2.0);
    let k = 1.0 / (1.0 - r * r);
    // d x / d s = -(a1/2) x / s
    let dx = -0.5 * a1 * x / s;
    let dy = -0.5 * a2 * y / t;
    Ok((k * (2.0 * x - 2.0 * r * y) * dx, k * (2.0 * y - 2.0 * r * x) * dy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HAnalysis {
    pub minimizer: (f64, f64),
    pub min_value: f64,
    /// Coefficients of `(1 - s)` and `(1 - t)` in the expansion at `(1,1)`.
    pub taylor: (f64, f64),
}

const SCAN: usize = 512;

/// Grid scan over `(0,1]^2` followed by Nelder-Mead refinement.
pub fn analyze_h(params: &ModelParams) -> Result<HAnalysis> {
    let mut best = (f64::INFINITY, (1.0, 1.0));
    for i in 1..=SCAN {
        let s = i as f64 / SCAN as f64;
        for j in 1..=SCAN {
            let t = j as f64 / SCAN as f64;
            let v = h_unchecked(s, t, params);
            if v < best.0 {
                best = (v, (s, t));
            }
        }
    }
    let f = |x: [f64; 2]| {
        if x[0] <= 0.0 || x[1] <= 0.0 || x[0] > 1.0 || x[1] > 1.0 {
            f64::INFINITY
        } else {
            h_unchecked(x[0], x[1], params)
        }
    };
    let step = 1.0 / SCAN as f64;
    let (x, v) = nelder_mead(f, [best.1 .0, best.1 .1], step, 1e-10, 10_000);
    let (x, v) = if v <= best.0 { (x, v) } else { ([best.1 .0, best.1 .1], best.0) };
    let found = (x[0], x[1]);
    if (found.0 - 1.0).abs() > 1e-4 || (found.1 - 1.0).abs() > 1e-4 {
        return Err(Error::MinimizerMismatch { found });
    }
    let r = params.r();
    Ok(HAnalysis {
        minimizer: found,
        min_value: v,
        taylor: (params.alpha1() / (1.0 + r), params.alpha2() / (1.0 + r)),
    })
}

/// Minimal 2-D Nelder-Mead; returns the best vertex.
pub(crate) fn nelder_mead<F: Fn([f64; 2]) -> f64>(f: F, x0: [f64; 2], step: f64, tol: f64, max_iter: usize) -> ([f64; 2], f64) {
    let mut simplex = [x0, [x0[0] - step, x0[1]], [x0[0], x0[1] - step]];
    let mut vals = simplex.map(&f);
    for _ in 0..max_iter {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.map(|i| simplex[i]);
        vals = idx.map(|i| vals[i]);
        if (vals[2] - vals[0]).abs() <= tol * (1.0 + vals[0].abs()) {
            let spread = (simplex[2][0] - simplex[0][0]).abs() + (simplex[2][1] - simplex[0][1]).abs();
            if spread < 1e-9 {
                break;
            }
        }
        let c = [(simplex[0][0] + simplex[1][0]) / 2.0, (simplex[0][1] + simplex[1][1]) / 2.0];
        let along = |k: f64| [c[0] + k * (simplex[2][0] - c[0]), c[1] + k * (simplex[2][1] - c[1])];
        let xr = along(-1.0);
        let fr = f(xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(xe);
            if fe < fr {
                simplex[2] = xe;
                vals[2] = fe;
            } else {
                simplex[2] = xr;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            simplex[2] = xr;
            vals[2] = fr;
        } else {
            let xc = if fr < vals[2] { along(-0.5) } else { along(0.5) };
            let fc = f(xc);
            if fc < vals[2].min(fr) {
                simplex[2] = xc;
                vals[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = [
                        simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
                    ];
                    vals[k] = f(simplex[k]);
                }
            }
        }
    }
    let mut b = 0;
    for k in 1..3 {
        if vals[k] < vals[b] {
            b = k;
        }
    }
    (simplex[b], vals[b])
}

fn check_u(u: f64) -> Result<()> {
    if u > 0.0 && u.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("threshold must be positive: {u}")))
    }
}

fn need_h(alpha: f64, pickands: Option<f64>) -> Result<f64> {
    pickands.ok_or(Error::MissingPickands { alpha })
}

/// Tail `P(sup_{[0,1]} B_alpha > u)` to first order.
pub fn single_fbm_asymptotic(u: f64, alpha: f64, pickands: Option<f64>) -> Result<f64> {
    check_u(u)?;
    crate::model::check_alpha(alpha)?;
    let f = if alpha < 1.0 {
        let hh = need_h(alpha, pickands)?;
        2f64.powf(1.0 - 1.0 / alpha) / alpha * hh * u.powf(2.0 / alpha - 2.0)
    } else if alpha == 1.0 {
        2.0
    } else {
        1.0
    };
    Ok(f / u * (-u * u / 2.0).exp() / (2.0 * PI).sqrt())
}

/// The per-coordinate factor of the joint asymptotics.
pub fn upsilon(u: f64, alpha: f64, r: f64, pickands: Option<f64>) -> Result<f64> {
    check_u(u)?;
    crate::model::check_alpha(alpha)?;
    if !(r > -1.0 && r < 1.0) {
        return Err(Error::Domain(format!("r out of (-1,1): {r}")));
    }
    if alpha < 1.0 {
        let hh = need_h(alpha, pickands)?;
        Ok(2f64.powf(1.0 - 1.0 / alpha) * (1.0 + r).powf(1.0 - 2.0 / alpha) / alpha * hh * u.powf(2.0 / alpha - 2.0))
    } else if alpha == 1.0 {
        Ok((2.0 + r) / (1.0 + r))
    } else {
        Ok(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticValue {
    pub u: f64,
    pub value: f64,
    pub upsilon1: f64,
    pub upsilon2: f64,
    /// `(1+r)^{3/2} / (2 pi sqrt(1-r))`.
    pub prefactor: f64,
    /// `u^{-2}`.
    pub u_factor: f64,
    /// `exp(-u^2 / (1+r))`.
    pub psi: f64,
    pub pickands1: Option<f64>,
    pub pickands2: Option<f64>,
}

pub fn joint_prefactor(r: f64) -> f64 {
    (1.0 + r).powf(1.5) / (2.0 * PI * (1.0 - r).sqrt())
}

/// First-order approximation of the joint survival function.
pub fn joint_asymptotic(u: f64, params: &ModelParams, h1: Option<f64>, h2: Option<f64>) -> Result<AsymptoticValue> {
    let r = params.r();
    let upsilon1 = upsilon(u, params.alpha1(), r, h1)?;
    let upsilon2 = upsilon(u, params.alpha2(), r, h2)?;
    let prefactor = joint_prefactor(r);
    let u_factor = u.powi(-2);
    let psi = (-u * u / (1.0 + r)).exp();
    Ok(AsymptoticValue {
        u,
        value: prefactor * upsilon1 * upsilon2 * u_factor * psi,
        upsilon1,
        upsilon2,
        prefactor,
        u_factor,
        psi,
        pickands1: if params.alpha1() < 1.0 { h1 } else { None },
        pickands2: if params.alpha2() < 1.0 { h2 } else { None },
    })
}

/// Means `2(1+r)/alpha_i` of the independent exponential limits of
/// `u^2 (1 - tau_i)` given both passages occur by time 1.
pub fn fpt_limit_law(params: &ModelParams) -> (f64, f64) {
    let k = 2.0 * (1.0 + params.r());
    (k / params.alpha1(), k / params.alpha2())
}

/// Limit of `P(M1 > u + x1/u, M2 > u + x2/u | M1 > u, M2 > u)`.
pub fn conditional_maxima_limit(x1: f64, x2: f64, r: f64) -> Result<f64> {
    if !(x1 >= 0.0 && x2 >= 0.0) {
        return Err(Error::Domain(format!("offsets must be nonnegative: {x1}, {x2}")));
    }
    Ok((-(x1 + x2) / (1.0 + r)).exp())
}
