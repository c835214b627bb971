//! TD-learning of action values between concepts.

use rand::Rng;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LearnError {
    #[error("weighted value undefined: weights sum to zero")]
    Undefined,
    #[error("learning rate must lie in (0, 1]")]
    BadAlpha,
    #[error("discount factor must lie in [0, 1)")]
    BadGamma,
    #[error("initial action value must be non-negative")]
    BadInitial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnParams<F> {
    pub alpha: F,
    pub gamma: F,
    /// Value given to a freshly created action.
    pub q0: F,
}

impl<F: Scalar> Default for LearnParams<F> {
    fn default() -> Self {
        LearnParams {
            alpha: F::lit(0.1),
            gamma: F::lit(0.9),
            q0: F::lit(0.1),
        }
    }
}

impl<F: Scalar> LearnParams<F> {
    pub fn check(&self) -> Result<(), LearnError> {
        if !(self.alpha > F::zero() && self.alpha <= F::one()) {
            return Err(LearnError::BadAlpha);
        }
        if !(self.gamma >= F::zero() && self.gamma < F::one()) {
            return Err(LearnError::BadGamma);
        }
        if !(self.q0 >= F::zero()) {
            return Err(LearnError::BadInitial);
        }
        Ok(())
    }
}

fn clamp<F: Scalar>(q: F) -> F {
    if q > F::zero() {
        q
    } else {
        F::zero()
    }
}

/// Probability-weighted mean of a concept's action values.
///
/// Each entry is `(p_j, Q_j)` with `p_j` the match probability of the
/// concept that action `j` points to.
pub fn weighted_value<F: Scalar>(children: &[(F, F)]) -> Result<F, LearnError> {
    let (num, den) = children
        .iter()
        .fold((F::zero(), F::zero()), |(n, d), &(p, q)| (n + p * q, d + p));
    if !(den > F::zero()) {
        return Err(LearnError::Undefined);
    }
    Ok(num / den)
}

/// `Q + alpha (r + gamma V - Q)`, clamped at zero.
pub fn td_update<F: Scalar>(q: F, reward: F, next_value: F, params: &LearnParams<F>) -> F {
    clamp(q + params.alpha * (reward + params.gamma * next_value - q))
}

/// Rule for an action that points at an actuator copy: no immediate reward,
/// the copy's own value `A` replaces the descendant average.
pub fn td_update_terminal<F: Scalar>(q: F, actuator_value: F, params: &LearnParams<F>) -> F {
    clamp(q + params.alpha * (params.gamma * actuator_value - q))
}

/// Draw an action index with probability `Q_i / sum Q`. Falls back to a
/// uniform draw when every value is zero. `None` for an empty slice.
pub fn select_action<F: Scalar, R: Rng + ?Sized>(values: &[F], rng: &mut R) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let total = values.iter().fold(F::zero(), |a, &q| a + clamp(q));
    if !(total > F::zero()) {
        return Some(rng.gen_range(0..values.len()));
    }
    let u: f64 = rng.gen();
    let mut threshold = F::from_f64(u).unwrap_or_else(F::zero) * total;
    for (i, &q) in values.iter().enumerate() {
        let q = clamp(q);
        if threshold < q {
            return Some(i);
        }
        threshold = threshold - q;
    }
    // Rounding left a sliver past the last bucket.
    values.iter().rposition(|&q| q > F::zero())
}
