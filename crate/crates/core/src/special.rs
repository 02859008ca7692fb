//! Normal distribution helpers, the bivariate normal orthant probability and
//! Kolmogorov-Smirnov utilities.

use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const TWO_PI: f64 = 2.0 * PI;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TWO_PI.sqrt()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `P(Z > x)`, accurate in the upper tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Inverse Mills ratio `phi(x) / P(Z > x)`.
pub fn inv_mills(x: f64) -> f64 {
    if x < 30.0 {
        let sf = norm_sf(x);
        if sf > 0.0 {
            return norm_pdf(x) / sf;
        }
    }
    // Asymptotic expansion once the tail underflows.
    let x2 = x * x;
    x / (1.0 - 1.0 / (x2 + 2.0) + 1.0 / ((x2 + 2.0) * (x2 + 4.0)))
}

/// `ln P(Z > x)` without underflow in the upper tail.
pub fn ln_norm_sf(x: f64) -> f64 {
    if x < 30.0 {
        let sf = norm_sf(x);
        if sf > 0.0 {
            return sf.ln();
        }
    }
    -0.5 * x * x - 0.5 * TWO_PI.ln() - inv_mills(x).ln()
}

// Gauss-Legendre half-node sets (positive nodes on [-1, 1]) for 6, 12 and 20 points.
const GL6_W: [f64; 3] = [0.1713244923791705, 0.3607615730481384, 0.4679139345726904];
const GL6_X: [f64; 3] = [0.9324695142031522, 0.6612093864662647, 0.2386191860831970];
const GL12_W: [f64; 6] = [
    0.04717533638651177,
    0.1069393259953183,
    0.1600783285433464,
    0.2031674267230659,
    0.2334925365383547,
    0.2491470458134029,
];
const GL12_X: [f64; 6] = [
    0.9815606342467191,
    0.9041172563704750,
    0.7699026741943050,
    0.5873179542866171,
    0.3678314989981802,
    0.1252334085114692,
];
const GL20_W: [f64; 10] = [
    0.01761400713915212,
    0.04060142980038694,
    0.06267204833410906,
    0.08327674157670475,
    0.1019301198172404,
    0.1181945319615184,
    0.1316886384491766,
    0.1420961093183821,
    0.1491729864726037,
    0.1527533871307259,
];
const GL20_X: [f64; 10] = [
    0.9931285991850949,
    0.9639719272779138,
    0.9122344282513259,
    0.8391169718222188,
    0.7463319064601508,
    0.6360536807265150,
    0.5108670019508271,
    0.3737060887154196,
    0.2277858511416451,
    0.07652652113349733,
];

/// Upper orthant probability `P(Z1 > h, Z2 > k)` for standard bivariate
/// normal with correlation `r` (Genz's BVND algorithm, ~1e-15 absolute).
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { norm_sf(k) };
    }
    if k == f64::NEG_INFINITY {
        return norm_sf(h);
    }
    if r == 0.0 {
        return norm_sf(h) * norm_sf(k);
    }
    if r >= 1.0 {
        return norm_sf(h.max(k));
    }
    if r <= -1.0 {
        return (norm_sf(h) - norm_cdf(-k)).max(0.0);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_W, &GL6_X)
    } else if r.abs() < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (wi, xi) in w.iter().zip(x) {
            for s in [1.0, -1.0] {
                let sn = (asr * (s * xi + 1.0) / 2.0).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / (2.0 * TWO_PI) + norm_sf(h) * norm_sf(k);
    } else {
        let mut kk = k;
        if r < 0.0 {
            kk = -kk;
            hk = -hk;
        }
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - kk) * (h - kk);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / as_ + hk) / 2.0).exp()
            * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * TWO_PI.sqrt()
                * norm_sf(b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (wi, xi) in w.iter().zip(x) {
            for s in [1.0, -1.0] {
                let xs = (a * (s * xi + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * wi
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / TWO_PI;
        if r > 0.0 {
            bvn += norm_sf(h.max(kk));
        } else {
            bvn = -bvn + (norm_sf(h) - norm_sf(kk)).max(0.0);
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// One-sample KS distance between `sample` (any order) and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let f = cdf(x);
        acc.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// KS distance for a weighted sample (weights need not be normalized).
pub fn weighted_ks_distance<F: Fn(f64) -> f64>(sample: &[(f64, f64)], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = xs.iter().map(|p| p.1).sum();
    let mut cum = 0.0;
    let mut d = 0.0f64;
    for (x, w) in xs {
        let f = cdf(x);
        let before = cum / total;
        cum += w;
        let after = cum / total;
        d = d.max(after - f).max(f - before);
    }
    d
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_two_sample_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}

/// Pearson correlation of paired observations.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Weighted Pearson correlation.
pub fn weighted_correlation(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, w)| a * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(b, w)| b * w).sum::<f64>() / sw;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for ((a, b), w) in x.iter().zip(y).zip(w) {
        sxy += w * (a - mx) * (b - my);
        sxx += w * (a - mx) * (a - mx);
        syy += w * (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Pairwise (cascade) summation; fixes the association order of a reduction.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
