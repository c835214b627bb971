//! Intrinsic reward from binary partitioning of a codelet's input space.
//!
//! A codelet splits what it sees into positive (matching) and negative
//! examples. The match probability `p` yields the self-information `-log2 p`
//! of a positive example and the mean reward `-p log2 p`, which is the
//! immediate reward fed to TD-learning. All immediate rewards accumulate
//! into one exponentially decayed global average.

use std::collections::VecDeque;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("probability undefined without examples")]
    Undefined,
    #[error("probability {0} outside (0, 1]")]
    Domain(f64),
    #[error("time went backwards: {now} < {last}")]
    TimeRegression { now: f64, last: f64 },
    #[error("parameter `{0}` must be strictly positive")]
    NonPositive(&'static str),
}

/// Positive/negative example counts of one concept in one input context.
///
/// Cumulative by default; [`PartitionStats::windowed`] keeps only the most
/// recent `window` examples.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionStats {
    n_pos: u64,
    n_neg: u64,
    window: Option<usize>,
    recent: VecDeque<bool>,
}

impl PartitionStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_counts(n_pos: u64, n_neg: u64) -> Self {
        PartitionStats {
            n_pos,
            n_neg,
            ..Self::default()
        }
    }

    pub fn windowed(window: usize) -> Self {
        PartitionStats {
            window: Some(window.max(1)),
            ..Self::default()
        }
    }

    pub fn n_pos(&self) -> u64 {
        self.n_pos
    }

    pub fn n_neg(&self) -> u64 {
        self.n_neg
    }

    pub fn total(&self) -> u64 {
        self.n_pos + self.n_neg
    }

    pub fn window(&self) -> Option<usize> {
        self.window
    }

    /// Most recent examples (oldest first) when windowed.
    pub fn history(&self) -> impl Iterator<Item = bool> + '_ {
        self.recent.iter().copied()
    }

    pub fn record_positive(&mut self) {
        self.record(true);
    }

    pub fn record_negative(&mut self) {
        self.record(false);
    }

    pub fn record(&mut self, positive: bool) {
        if positive {
            self.n_pos += 1;
        } else {
            self.n_neg += 1;
        }
        if let Some(w) = self.window {
            self.recent.push_back(positive);
            if self.recent.len() > w {
                match self.recent.pop_front() {
                    Some(true) => self.n_pos -= 1,
                    Some(false) => self.n_neg -= 1,
                    None => {}
                }
            }
        }
    }

    /// Rebuild windowed stats from their history.
    pub fn from_history(window: usize, history: impl IntoIterator<Item = bool>) -> Self {
        let mut s = Self::windowed(window);
        for h in history {
            s.record(h);
        }
        s
    }

    /// Merge counts of several contexts (cumulative result).
    pub fn sum<'a>(all: impl IntoIterator<Item = &'a PartitionStats>) -> PartitionStats {
        all.into_iter().fold(PartitionStats::new(), |acc, s| {
            PartitionStats::with_counts(acc.n_pos + s.n_pos, acc.n_neg + s.n_neg)
        })
    }
}

/// `p = n_pos / (n_pos + n_neg)`. Zero when there are only negatives.
pub fn probability<F: Scalar>(stats: &PartitionStats) -> Result<F, RewardError> {
    let total = stats.total();
    if total == 0 {
        return Err(RewardError::Undefined);
    }
    let pos = F::from_u64(stats.n_pos).ok_or(RewardError::Undefined)?;
    let tot = F::from_u64(total).ok_or(RewardError::Undefined)?;
    Ok(pos / tot)
}

fn check_p<F: Scalar>(p: F) -> Result<(), RewardError> {
    if p > F::zero() && p <= F::one() {
        Ok(())
    } else {
        Err(RewardError::Domain(p.to_f64().unwrap_or(f64::NAN)))
    }
}

/// Self-information of a positive example, in bits.
pub fn self_information<F: Scalar>(p: F) -> Result<F, RewardError> {
    check_p(p)?;
    Ok(-p.log2())
}

/// Mean reward `-p log2 p`: expected information gain per example.
pub fn mean_reward<F: Scalar>(p: F) -> Result<F, RewardError> {
    check_p(p)?;
    Ok(-p * p.log2())
}

/// Resources granted to a matching thread: `round(beta * I)` steps.
pub fn award_resources<F: Scalar>(information: F, beta: F) -> u32 {
    let s = (beta * information).round();
    if s <= F::zero() || s.is_nan() {
        0
    } else {
        s.to_u32().unwrap_or(u32::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams<F> {
    /// Resource normalization: steps per bit.
    pub beta: F,
    /// Decay rate of the global average, per second.
    pub rho: F,
}

impl<F: Scalar> Default for RewardParams<F> {
    fn default() -> Self {
        RewardParams {
            beta: F::lit(100.0),
            rho: F::one(),
        }
    }
}

impl<F: Scalar> RewardParams<F> {
    pub fn check(&self) -> Result<(), RewardError> {
        if !(self.beta > F::zero()) {
            return Err(RewardError::NonPositive("beta"));
        }
        if !(self.rho > F::zero()) {
            return Err(RewardError::NonPositive("rho"));
        }
        Ok(())
    }
}

/// The single global decayed reward accumulator,
/// `R_t = r_t + R_t0 * exp(-rho (t - t0))`. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalReward<F> {
    value: F,
    last: F,
    rho: F,
}

impl<F: Scalar> GlobalReward<F> {
    pub fn new(rho: F) -> Result<Self, RewardError> {
        Self::restore(F::zero(), F::zero(), rho)
    }

    pub fn restore(value: F, last: F, rho: F) -> Result<Self, RewardError> {
        if !(rho > F::zero()) {
            return Err(RewardError::NonPositive("rho"));
        }
        Ok(GlobalReward { value, last, rho })
    }

    pub fn value(&self) -> F {
        self.value
    }

    pub fn last_update(&self) -> F {
        self.last
    }

    pub fn rho(&self) -> F {
        self.rho
    }

    fn regression(&self, t: F) -> RewardError {
        RewardError::TimeRegression {
            now: t.to_f64().unwrap_or(f64::NAN),
            last: self.last.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// The accumulator decayed to `t` without recording a reward.
    pub fn value_at(&self, t: F) -> Result<F, RewardError> {
        if t < self.last {
            return Err(self.regression(t));
        }
        Ok(self.value * (-self.rho * (t - self.last)).exp())
    }

    /// Record immediate reward `r` received at `t`.
    pub fn update(&mut self, r: F, t: F) -> Result<F, RewardError> {
        let decayed = self.value_at(t)?;
        self.value = r + decayed;
        self.last = t;
        Ok(self.value)
    }

    /// By-value form of [`GlobalReward::update`].
    pub fn updated(mut self, r: F, t: F) -> Result<Self, RewardError> {
        self.update(r, t)?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    #[test]
    fn probability_examples() {
        let p = |a, b| probability::<f64>(&PartitionStats::with_counts(a, b)).unwrap();
        assert_eq!(p(3, 1), 0.75);
        assert_eq!(p(1, 0), 1.0);
        assert_eq!(p(1, 3), 0.25);
        assert_eq!(
            probability::<f64>(&PartitionStats::new()),
            Err(RewardError::Undefined)
        );
    }

    #[test]
    fn information_examples() {
        assert!((self_information(0.5f64).unwrap() - 1.0).abs() < TOL);
        assert_eq!(self_information(1.0f64).unwrap(), 0.0);
        assert!((self_information(0.25f64).unwrap() - 2.0).abs() < TOL);
        assert!(self_information(0.0f64).is_err());
        assert!(self_information(1.5f64).is_err());
        assert!(self_information(f64::NAN).is_err());
    }

    #[test]
    fn mean_reward_examples() {
        assert!((mean_reward(0.5f64).unwrap() - 0.5).abs() < TOL);
        assert_eq!(mean_reward(1.0f64).unwrap(), 0.0);
        assert!(mean_reward(-0.1f64).is_err());
        // Independent evaluation at 1/e: log2(e)/e.
        let peak = std::f64::consts::LOG2_E / std::f64::consts::E;
        let at = |p: f64| mean_reward(p).unwrap();
        let inv_e = (-1.0f64).exp();
        assert!((at(inv_e) - peak).abs() < TOL);
        assert!((peak - 0.530_737_845_423_043).abs() < 1e-12);
        assert!(at(inv_e) > at(inv_e + 1e-4));
        assert!(at(inv_e) > at(inv_e - 1e-4));
    }

    #[test]
    fn mean_reward_is_unimodal_on_grid() {
        let inv_e = (-1.0f64).exp();
        let grid: Vec<f64> = (1..1000).map(|k| k as f64 * 1e-3).collect();
        for w in grid.windows(2) {
            let (a, b) = (mean_reward(w[0]).unwrap(), mean_reward(w[1]).unwrap());
            assert!(a > 0.0 && b > 0.0);
            if w[1] <= inv_e {
                assert!(b > a, "not increasing at {}", w[1]);
            } else if w[0] >= inv_e {
                assert!(b < a, "not decreasing at {}", w[1]);
            }
        }
    }

    #[test]
    fn global_update_examples() {
        let g = GlobalReward::restore(1.0f64, 5.0, 1.0).unwrap();
        assert!((g.updated(0.3, 5.0).unwrap().value() - 1.3).abs() < TOL);

        let g = GlobalReward::restore(2.0f64, 0.0, std::f64::consts::LN_2).unwrap();
        let g = g.updated(0.0, 1.0).unwrap();
        assert!((g.value() - 1.0).abs() < TOL);
        assert_eq!(g.last_update(), 1.0);

        assert!(matches!(
            g.updated(0.1, 0.5),
            Err(RewardError::TimeRegression { .. })
        ));
        assert!(GlobalReward::new(0.0f64).is_err());
    }

    #[test]
    fn unit_rewards_converge_to_geometric_limit() {
        let (rho, tau) = (1.0f64, 0.1f64);
        let mut g = GlobalReward::new(rho).unwrap();
        for k in 0..1000 {
            g.update(1.0, k as f64 * tau).unwrap();
        }
        // Oracle: sum of e^{-k rho tau} over k >= 0.
        let limit = 1.0 / (1.0 - (-rho * tau).exp());
        assert!((g.value() - limit).abs() < TOL);
    }

    #[test]
    fn award_examples() {
        assert_eq!(award_resources(1.0f64, 100.0), 100);
        assert_eq!(award_resources(0.0f64, 100.0), 0);
        assert_eq!(award_resources(2.5f64, 100.0), 250);
        assert_eq!(award_resources(2.5f32, 100.0), 250);
    }

    #[test]
    fn windowed_counts_forget() {
        let mut s = PartitionStats::windowed(3);
        s.record_positive();
        s.record_negative();
        s.record_negative();
        s.record_negative();
        assert_eq!((s.n_pos(), s.n_neg()), (0, 3));
        let back = PartitionStats::from_history(3, s.history().collect::<Vec<_>>());
        assert_eq!(back, s);
    }

    #[test]
    fn params_must_be_positive() {
        assert!(RewardParams::<f64>::default().check().is_ok());
        let p = RewardParams {
            beta: 0.0f64,
            rho: 1.0,
        };
        assert_eq!(p.check(), Err(RewardError::NonPositive("beta")));
    }

    proptest! {
        #[test]
        fn probability_is_monotone(pos in 1u64..500, neg in 0u64..500) {
            let base: f64 = probability(&PartitionStats::with_counts(pos, neg)).unwrap();
            let more_pos: f64 = probability(&PartitionStats::with_counts(pos + 1, neg)).unwrap();
            let more_neg: f64 = probability(&PartitionStats::with_counts(pos, neg + 1)).unwrap();
            prop_assert!(more_pos >= base);
            prop_assert!(more_neg <= base);
        }

        #[test]
        fn update_is_linear(
            events in proptest::collection::vec((0.0f64..2.0, 0.0f64..0.5), 1..40),
            c in 0.1f64..10.0,
        ) {
            let mut a = GlobalReward::new(1.3f64).unwrap();
            let mut b = GlobalReward::new(1.3f64).unwrap();
            let mut t = 0.0;
            for (r, dt) in events {
                t += dt;
                a.update(r, t).unwrap();
                b.update(c * r, t).unwrap();
            }
            prop_assert!((b.value() - c * a.value()).abs() <= 1e-9 * (1.0 + b.value().abs()));
        }

        #[test]
        fn idle_decay_is_exact(r0 in 0.0f64..10.0, dt in 0.0f64..5.0, rho in 0.01f64..5.0) {
            let g = GlobalReward::restore(r0, 1.0, rho).unwrap();
            let later = g.updated(0.0, 1.0 + dt).unwrap();
            prop_assert!((later.value() - r0 * (-rho * dt).exp()).abs() < 1e-9);
        }
    }
}
