//! Discrete probability measures with exact rational weights.

use crate::error::{Error, Result};
use crate::ratio::{self, ratio_serde};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Weighted finite measure over the points of a ground set, indexed 0..n.
///
/// Weights are nonnegative rationals summing to one exactly. Inputs whose
/// sum is off by at most `tol` can be normalized via [`DiscreteMeasure::normalized`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    #[serde(with = "ratio_serde::vec")]
    pub weights: Vec<BigRational>,
}

impl DiscreteMeasure {
    /// Validates nonnegativity and exact unit mass.
    pub fn new(weights: Vec<BigRational>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInstance("empty measure".into()));
        }
        if weights.iter().any(|w| w.is_negative()) {
            return Err(Error::InvalidInstance("negative weight".into()));
        }
        let sum: BigRational = weights.iter().sum();
        if !sum.is_one() {
            return Err(Error::MarginalMismatch(format!(
                "weights sum to {}, expected 1",
                ratio::format_ratio(&sum)
            )));
        }
        Ok(Self { weights })
    }

    /// Accepts weights whose sum is within `tol` of one and rescales exactly.
    pub fn normalized(weights: Vec<BigRational>, tol: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInstance("empty measure".into()));
        }
        if weights.iter().any(|w| w.is_negative()) {
            return Err(Error::InvalidInstance("negative weight".into()));
        }
        let sum: BigRational = weights.iter().sum();
        if sum.is_zero() {
            return Err(Error::InvalidInstance("zero total mass".into()));
        }
        let err = (ratio::rational_to_f64(&sum) - 1.0).abs();
        if err > tol {
            return Err(Error::MarginalMismatch(format!(
                "weights sum to {} (off by {err:.3e}, tol {tol:.3e})",
                ratio::format_ratio(&sum)
            )));
        }
        let weights = weights.into_iter().map(|w| w / &sum).collect();
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        let w = BigRational::new(BigInt::one(), BigInt::from(n as i64));
        Self {
            weights: vec![w; n],
        }
    }

    /// Strictly positive random rational weights (every point charged), the
    /// discrete stand-in for an absolutely continuous marginal. Weights are
    /// integers over a common power-of-two denominator, so downstream integer
    /// scaling stays small.
    pub fn random_positive(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // 20-bit grains: coarse enough for fast exact arithmetic, fine enough
        // to make subset-sum ties essentially impossible.
        let grains: Vec<u64> = (0..n).map(|_| 1 + rng.gen_range(0..(1u64 << 20))).collect();
        let total: u64 = grains.iter().sum();
        let weights = grains
            .into_iter()
            .map(|g| BigRational::new(BigInt::from(g), BigInt::from(total)))
            .collect();
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> BigRational {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::parse_ratio;

    #[test]
    fn uniform_sums_to_one() {
        for n in [1, 3, 7, 360] {
            assert!(DiscreteMeasure::uniform(n).total().is_one());
        }
    }

    #[test]
    fn rejects_negative_and_bad_sum() {
        assert!(DiscreteMeasure::new(vec![parse_ratio("-1/2").unwrap()]).is_err());
        assert!(DiscreteMeasure::new(vec![parse_ratio("1/2").unwrap()]).is_err());
    }

    #[test]
    fn random_positive_is_fully_supported_and_reproducible() {
        let a = DiscreteMeasure::random_positive(40, 7);
        let b = DiscreteMeasure::random_positive(40, 7);
        assert_eq!(a, b);
        assert!(a.total().is_one());
        assert!(a.weights.iter().all(|w| w.is_positive()));
        let c = DiscreteMeasure::random_positive(40, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn normalized_fixes_small_drift() {
        let w = vec![
            parse_ratio("0.30000000000000004").unwrap(),
            parse_ratio("0.7").unwrap(),
        ];
        let m = DiscreteMeasure::normalized(w, 1e-12).unwrap();
        assert!(m.total().is_one());
    }

    #[test]
    fn json_round_trip_exact() {
        let m = DiscreteMeasure::random_positive(5, 1);
        let s = serde_json::to_string(&m).unwrap();
        let back: DiscreteMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
