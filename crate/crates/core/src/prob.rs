//! Categorical distributions over a token vocabulary.
//!
//! Probabilities are stored densely in linear space. Entropy is measured in
//! nats and uses the convention `0 · ln 0 = 0`, so sparse distributions need
//! no smoothing.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `Σ p = 1`. Deviations below it are renormalized
/// away, larger ones are rejected.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Index of a token in a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    /// Begin-of-sequence marker. Never generated, only used to pad windows.
    pub const BOS: TokenId = TokenId(0);
    /// End-of-sequence marker. Absorbing once emitted.
    pub const EOS: TokenId = TokenId(1);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Entropy in natural-log units. Always non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nats(f64);

impl Nats {
    pub const ZERO: Nats = Nats(0.0);

    /// Rounding can push a mathematically non-negative quantity slightly
    /// below zero; those values are clamped.
    pub fn new(value: f64) -> Self {
        debug_assert!(value >= -1e-9, "negative entropy {value}");
        Nats(value.max(0.0))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl Add for Nats {
    type Output = Nats;
    fn add(self, rhs: Nats) -> Nats {
        Nats(self.0 + rhs.0)
    }
}

impl AddAssign for Nats {
    fn add_assign(&mut self, rhs: Nats) {
        self.0 += rhs.0;
    }
}

impl fmt::Display for Nats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} nats", self.0)
    }
}

/// A probability distribution over `len()` tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    /// Validates `probs`: finite, non-negative, summing to one within
    /// [`SUM_TOLERANCE`]. Deviations larger than summation rounding are
    /// renormalized; anything closer is kept bit for bit, so
    /// `new(d.probs())` reproduces `d` exactly.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        check_weights(&probs)?;
        let sum: f64 = probs.iter().sum();
        let deviation = (sum - 1.0).abs();
        if deviation > SUM_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        if deviation > rounding_slack(probs.len()) {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Categorical { probs })
    }

    /// Rescales non-negative weights to a distribution.
    pub fn normalize(weights: &[f64]) -> Result<Self> {
        check_weights(weights)?;
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::AllZero);
        }
        Ok(Categorical {
            probs: weights.iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty vocabulary");
        Categorical {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(n: usize, token: TokenId) -> Self {
        assert!(token.index() < n, "one-hot token {token} out of range {n}");
        let mut probs = vec![0.0; n];
        probs[token.index()] = 1.0;
        Categorical { probs }
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> Result<f64> {
        self.probs
            .get(token.index())
            .copied()
            .ok_or(Error::OutOfVocab {
                token: token.0,
                vocab_size: self.probs.len(),
            })
    }

    /// `ln p(token)`. Zero-mass tokens give `f64::NEG_INFINITY`, which
    /// callers treat as an eliminating score.
    pub fn log_prob(&self, token: TokenId) -> Result<f64> {
        self.prob(token).map(f64::ln)
    }

    /// `−Σ p ln p` with `0 · ln 0 = 0`.
    pub fn entropy(&self) -> Nats {
        let h: f64 = self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum();
        Nats::new(h)
    }

    /// Entrywise weighted average of `dists`. Weights are normalized first.
    pub fn mixture(dists: &[Categorical], weights: &[f64]) -> Result<Self> {
        let first = dists.first().ok_or(Error::EmptyEnsemble)?;
        if weights.len() != dists.len() {
            return Err(Error::ShapeMismatch {
                expected: dists.len(),
                found: weights.len(),
            });
        }
        let n = first.len();
        if let Some(bad) = dists.iter().find(|d| d.len() != n) {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        let weights = Categorical::normalize(weights)?;
        let mut probs = vec![0.0; n];
        for (d, &w) in dists.iter().zip(weights.probs()) {
            for (acc, &p) in probs.iter_mut().zip(d.probs()) {
                *acc += w * p;
            }
        }
        Categorical::new(probs)
    }

    /// Index of the most probable token; the lowest index wins ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        TokenId(best as u32)
    }

    /// Applies a token relabeling: entry `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                found: perm.len(),
            });
        }
        let mut probs = vec![0.0; self.len()];
        for (i, &j) in perm.iter().enumerate() {
            probs[j] = self.probs[i];
        }
        Ok(Categorical { probs })
    }
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = Error;
    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Categorical::new(probs)
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(d: Categorical) -> Self {
        d.probs
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::AllZero);
    }
    for (index, &value) in weights.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index, value });
        }
        if value < 0.0 {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    Ok(())
}

/// Bound on the rounding error of summing `n` values that add up to one.
fn rounding_slack(n: usize) -> f64 {
    n.max(1) as f64 * f64::EPSILON
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(Categorical::normalize(&[2.0, 2.0]).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(Categorical::normalize(&[1.0, 3.0]).unwrap().probs(), &[0.25, 0.75]);
        assert!(matches!(Categorical::normalize(&[0.0, 0.0]), Err(Error::AllZero)));
        assert!(matches!(
            Categorical::normalize(&[1.0, -0.5]),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(
            Categorical::normalize(&[f64::NAN, 1.0]),
            Err(Error::NonFinite { index: 0, .. })
        ));
        assert!(matches!(
            Categorical::normalize(&[1.0, f64::INFINITY]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn new_renormalizes_within_tolerance_only() {
        let d = Categorical::new(vec![0.5, 0.5 + 1e-10]).unwrap();
        assert_abs_diff_eq!(d.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(matches!(
            Categorical::new(vec![0.5, 0.4]),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(Categorical::uniform(4).entropy().get(), 4f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(Categorical::uniform(4).entropy().get(), 1.386294, epsilon = 1e-6);
        assert_eq!(Categorical::one_hot(3, TokenId(1)).entropy().get(), 0.0);
        let d = Categorical::new(vec![0.5, 0.25, 0.25]).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * 4f64.ln();
        assert_abs_diff_eq!(d.entropy().get(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(d.entropy().get(), 1.039721, epsilon = 1e-6);
    }

    #[test]
    fn log_prob_examples() {
        let half = Categorical::uniform(2);
        assert_abs_diff_eq!(half.log_prob(TokenId(0)).unwrap(), -std::f64::consts::LN_2, epsilon = 1e-15);
        let certain = Categorical::one_hot(2, TokenId(0));
        assert_eq!(certain.log_prob(TokenId(0)).unwrap(), 0.0);
        assert_eq!(certain.log_prob(TokenId(1)).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(
            certain.log_prob(TokenId(2)),
            Err(Error::OutOfVocab { token: 2, vocab_size: 2 })
        ));
    }

    #[test]
    fn mixture_examples() {
        let a = Categorical::one_hot(2, TokenId(0));
        let b = Categorical::one_hot(2, TokenId(1));
        let m = Categorical::mixture(&[a, b], &[1.0, 1.0]).unwrap();
        assert_eq!(m.probs(), &[0.5, 0.5]);

        let d = Categorical::new(vec![0.1, 0.3, 0.6]).unwrap();
        let m = Categorical::mixture(&[d.clone(), d.clone()], &[1.0, 1.0]).unwrap();
        for (x, y) in m.probs().iter().zip(d.probs()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }

        let a = Categorical::new(vec![0.8, 0.2]).unwrap();
        let b = Categorical::new(vec![0.4, 0.6]).unwrap();
        let m = Categorical::mixture(&[a, b], &[0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(m.probs()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.probs()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn mixture_rejects_shape_mismatch() {
        let a = Categorical::uniform(2);
        let b = Categorical::uniform(3);
        assert!(matches!(
            Categorical::mixture(&[a.clone(), b], &[1.0, 1.0]),
            Err(Error::ShapeMismatch { expected: 2, found: 3 })
        ));
        assert!(matches!(
            Categorical::mixture(&[a.clone(), a], &[0.0, 0.0]),
            Err(Error::AllZero)
        ));
    }

    #[test]
    fn serde_rejects_invalid_probs() {
        let ok: Categorical = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(ok.probs(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<Categorical>("[0.5,0.4]").is_err());
        assert!(serde_json::from_str::<Categorical>("[1.5,-0.5]").is_err());
    }

    fn weights(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![1 => Just(0.0), 4 => 0.0f64..10.0],
            1..max_len,
        )
        .prop_filter("needs positive mass", |w| w.iter().any(|&x| x > 0.0))
    }

    proptest! {
        #[test]
        fn entropy_bounded(w in weights(64)) {
            let d = Categorical::normalize(&w).unwrap();
            let h = d.entropy().get();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (d.len() as f64).ln() + 1e-9);
        }

        #[test]
        fn mixture_entropy_is_concave(
            members in prop::collection::vec(prop::collection::vec(0.01f64..5.0, 6), 1..8),
            mix in prop::collection::vec(0.01f64..1.0, 8),
        ) {
            let dists: Vec<_> = members.iter().map(|w| Categorical::normalize(w).unwrap()).collect();
            let mix = &mix[..dists.len()];
            let m = Categorical::mixture(&dists, mix).unwrap();
            let total: f64 = mix.iter().sum();
            let mean_h: f64 = dists.iter().zip(mix).map(|(d, w)| w / total * d.entropy().get()).sum();
            prop_assert!(m.entropy().get() + 1e-9 >= mean_h);
        }

        #[test]
        fn normalize_idempotent(w in weights(32)) {
            let once = Categorical::normalize(&w).unwrap();
            let twice = Categorical::normalize(once.probs()).unwrap();
            for (a, b) in once.probs().iter().zip(twice.probs()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn log_prob_consistent(w in weights(32)) {
            let d = Categorical::normalize(&w).unwrap();
            for (t, &p) in d.probs().iter().enumerate() {
                let lp = d.log_prob(TokenId(t as u32)).unwrap();
                if p > 0.0 {
                    prop_assert!((lp.exp() - p).abs() <= 1e-12);
                } else {
                    prop_assert_eq!(lp, f64::NEG_INFINITY);
                }
            }
        }
    }
}
