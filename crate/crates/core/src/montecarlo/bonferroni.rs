//! Exact check of the two-index Bonferroni lower bound on finite spaces.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Finite probability space with at most 64 outcomes; events are bitmasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSpace {
    masses: Vec<f64>,
}

impl DiscreteSpace {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() || masses.len() > 64 {
            return Err(Error::InvalidSpace(format!("need 1..=64 outcomes, got {}", masses.len())));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidSpace("masses must be finite and non-negative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpace(format!("masses sum to {total}")));
        }
        Ok(Self { masses })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Mask containing every outcome.
    pub fn full(&self) -> u64 {
        if self.masses.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.masses.len()) - 1
        }
    }

    pub fn prob(&self, event: u64) -> f64 {
        let mut e = event & self.full();
        let mut p = 0.0;
        while e != 0 {
            p += self.masses[e.trailing_zeros() as usize];
            e &= e - 1;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonferroniResult {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `P(U_{k,l} A_k B_l) >= sum P(A_k B_l) - sum_k sum_{l<l'} P(A_k B_l B_l')
/// - sum_l sum_{k<k'} P(A_k A_k' B_l)`, both sides by enumeration.
pub fn bonferroni_check(space: &DiscreteSpace, a: &[u64], b: &[u64]) -> Result<BonferroniResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidSpace(format!("need at least two events of each kind, got {} and {}", a.len(), b.len())));
    }
    let union = a.iter().flat_map(|&x| b.iter().map(move |&y| x & y)).fold(0, |u, e| u | e);
    let lhs = space.prob(union);
    let mut rhs = 0.0;
    for &x in a {
        for &y in b {
            rhs += space.prob(x & y);
        }
    }
    for &x in a {
        for (i, &y1) in b.iter().enumerate() {
            for &y2 in &b[i + 1..] {
                rhs -= space.prob(x & y1 & y2);
            }
        }
    }
    for &y in b {
        for (i, &x1) in a.iter().enumerate() {
            for &x2 in &a[i + 1..] {
                rhs -= space.prob(x1 & x2 & y);
            }
        }
    }
    Ok(BonferroniResult { lhs, rhs, holds: lhs >= rhs - 1e-12 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_events() {
        let s = DiscreteSpace::new(vec![0.25; 4]).unwrap();
        let f = s.full();
        let r = bonferroni_check(&s, &[f, f], &[f, f]).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert_eq!(r.rhs, 0.0);
        let r = bonferroni_check(&s, &[f; 3], &[f; 3]).unwrap();
        assert_eq!(r.rhs, 9.0 - 3.0 * 3.0 - 3.0 * 3.0);
        assert!(r.holds);
    }

    #[test]
    fn disjoint_events_are_equality() {
        let s = DiscreteSpace::new(vec![0.125; 8]).unwrap();
        let r = bonferroni_check(&s, &[0b0000_1111, 0b1111_0000], &[0b0011_0011, 0b1100_1100]).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert_eq!(r.lhs, 1.0);
    }

    #[test]
    fn validation() {
        assert!(matches!(DiscreteSpace::new(vec![0.5, 0.4]), Err(Error::InvalidSpace(_))));
        let s = DiscreteSpace::new(vec![0.5, 0.5]).unwrap();
        assert!(bonferroni_check(&s, &[1], &[1, 2]).is_err());
    }
}
