//! Actuator-concept evaluation.
//!
//! Every context an actuator is linked into gets its own copy, valued
//! independently. A request carrying `s` resources fires the actuator with
//! probability `s / C(x)`. Once a firing has had time to show up in the
//! sensors, the copy's value moves by its share of the change in global
//! reward minus the firing cost (in bits):
//! `A <- A + alpha (delta (R_t - R_t0) - X)`.

use num_traits::Num;
use rand::Rng;

use crate::ids::{ConceptId, Millis, TemplateId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActuatorError {
    #[error("integrator oracle needs identical inputs across requests")]
    MixedInputs,
    #[error("parameter `{0}` out of range")]
    BadParam(&'static str),
}

/// Activation cost in resource steps: `base + per_unit * |x1[0]|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel<F> {
    pub base: F,
    pub per_unit: F,
}

impl<F: Scalar> CostModel<F> {
    pub fn new(base: F, per_unit: F) -> Result<Self, ActuatorError> {
        if !(base > F::zero()) {
            return Err(ActuatorError::BadParam("cost base"));
        }
        if !(per_unit >= F::zero()) {
            return Err(ActuatorError::BadParam("cost per_unit"));
        }
        Ok(CostModel { base, per_unit })
    }

    pub fn cost(&self, inputs: &[Vec<i64>]) -> F {
        let magnitude = inputs
            .first()
            .and_then(|v| v.first())
            .map(|x| x.unsigned_abs())
            .unwrap_or(0);
        self.base + self.per_unit * F::from_u64(magnitude).unwrap_or_else(F::max_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorParams<F> {
    pub alpha: F,
    /// Removal threshold on the copy value.
    pub theta: F,
    /// Exploration constant.
    pub a_const: F,
    /// Initial value of a new copy.
    pub a0: F,
    /// Wait between firing and value update.
    pub settle_ms: Millis,
    /// Copy limit per template; `None` means unlimited.
    pub n_max: Option<usize>,
}

impl<F: Scalar> Default for ActuatorParams<F> {
    fn default() -> Self {
        ActuatorParams {
            alpha: F::lit(0.1),
            theta: F::lit(0.05),
            a_const: F::one(),
            a0: F::one(),
            settle_ms: 300,
            n_max: Some(50),
        }
    }
}

impl<F: Scalar> ActuatorParams<F> {
    pub fn check(&self) -> Result<(), ActuatorError> {
        if !(self.alpha > F::zero() && self.alpha <= F::one()) {
            return Err(ActuatorError::BadParam("alpha"));
        }
        if !(self.theta > F::zero()) {
            return Err(ActuatorError::BadParam("theta"));
        }
        if !(self.a_const > F::zero()) {
            return Err(ActuatorError::BadParam("a_const"));
        }
        if !(self.a0 > self.theta) {
            return Err(ActuatorError::BadParam("a0"));
        }
        if self.settle_ms == 0 {
            return Err(ActuatorError::BadParam("settle_ms"));
        }
        if self.n_max == Some(0) {
            return Err(ActuatorError::BadParam("n_max"));
        }
        Ok(())
    }
}

/// A firing awaiting its value update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingActivation<F> {
    pub t0: Millis,
    /// Cost at firing time, in bits (`C / beta`).
    pub cost_bits: F,
    /// Global reward at firing time.
    pub reward_t0: F,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Activation<F> {
    Activated { cost: F, probability: F },
    NotActivated { cost: F, probability: F },
}

impl<F> Activation<F> {
    pub fn fired(&self) -> bool {
        matches!(self, Activation::Activated { .. })
    }
}

/// One value update applied to a copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueUpdate<F> {
    pub record: PendingActivation<F>,
    pub delta: F,
    pub value: F,
    pub below_threshold: bool,
}

/// Per-context copy of an actuator template.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorCopy<F> {
    pub template: TemplateId,
    /// The concept this copy is linked under.
    pub context: ConceptId,
    value: F,
    pending: Vec<PendingActivation<F>>,
}

impl<F: Scalar> ActuatorCopy<F> {
    pub fn new(template: TemplateId, context: ConceptId, a0: F) -> Self {
        ActuatorCopy {
            template,
            context,
            value: a0,
            pending: Vec::new(),
        }
    }

    pub fn restore(
        template: TemplateId,
        context: ConceptId,
        value: F,
        pending: Vec<PendingActivation<F>>,
    ) -> Self {
        ActuatorCopy {
            template,
            context,
            value,
            pending,
        }
    }

    pub fn value(&self) -> F {
        self.value
    }

    pub fn pending(&self) -> &[PendingActivation<F>] {
        &self.pending
    }

    /// Probabilistically fire on a request carrying `resources`.
    ///
    /// On firing a pending record is appended; the caller issues the
    /// physical command and counts the live activation.
    #[allow(clippy::too_many_arguments)]
    pub fn maybe_activate<R: Rng + ?Sized>(
        &mut self,
        inputs: &[Vec<i64>],
        resources: F,
        cost_model: &CostModel<F>,
        beta: F,
        reward_now: F,
        now: Millis,
        rng: &mut R,
    ) -> Activation<F> {
        let cost = cost_model.cost(inputs);
        let probability = activation_probability(resources, cost);
        let u = F::from_f64(rng.gen::<f64>()).unwrap_or_else(F::one);
        if u < probability {
            self.pending.push(PendingActivation {
                t0: now,
                cost_bits: cost / beta,
                reward_t0: reward_now,
            });
            Activation::Activated { cost, probability }
        } else {
            Activation::NotActivated { cost, probability }
        }
    }

    /// Oldest pending record whose settle delay has elapsed at `now`.
    pub fn due(&self, now: Millis, settle_ms: Millis) -> bool {
        self.pending
            .first()
            .is_some_and(|p| now.saturating_sub(p.t0) >= settle_ms)
    }

    /// Apply the value rule to the oldest due record, consuming it.
    pub fn value_update(
        &mut self,
        reward_now: F,
        now: Millis,
        delta: F,
        params: &ActuatorParams<F>,
    ) -> Option<ValueUpdate<F>> {
        if !self.due(now, params.settle_ms) {
            return None;
        }
        let record = self.pending.remove(0);
        self.value = apply_value_rule(self.value, reward_now - record.reward_t0, record.cost_bits, delta, params.alpha);
        Some(ValueUpdate {
            record,
            delta,
            value: self.value,
            below_threshold: below_threshold(self.value, params.theta),
        })
    }
}

/// `A + alpha (delta dR - X)`.
pub fn apply_value_rule<F: Scalar>(value: F, reward_change: F, cost_bits: F, delta: F, alpha: F) -> F {
    value + alpha * (delta * reward_change - cost_bits)
}

/// Whether a value has fallen to the removal threshold. Values within
/// floating-point noise of the threshold count as having reached it.
pub fn below_threshold<F: Scalar>(value: F, theta: F) -> bool {
    let tol = F::epsilon().sqrt() * theta.abs().max(F::one());
    value < theta + tol
}

/// `min(s / C, 1)`; zero for non-positive `s`. Works for any ordered
/// field, including exact rationals.
pub fn activation_probability<T: Num + PartialOrd + Copy>(resources: T, cost: T) -> T {
    if !(resources > T::zero()) || !(cost > T::zero()) {
        return T::zero();
    }
    let p = resources / cost;
    if p > T::one() {
        T::one()
    } else {
        p
    }
}

/// Share of the reward change credited to one of `live` pending firings.
pub fn delta_share<F: Scalar>(live: usize) -> Option<F> {
    (live > 0).then(|| F::one() / F::from_usize(live).unwrap_or_else(F::max_value))
}

/// Probability of adding another copy of a template whose existing copies
/// have the given values.
pub fn exploration_probability<F: Scalar>(values: &[F], a_const: F) -> F {
    let sum = values.iter().fold(F::zero(), |a, &v| a + v.max(F::zero()));
    a_const / (a_const + sum)
}

/// Resource integrator: fires whenever the running sum reaches the cost,
/// then subtracts it. Only meaningful for a stream with constant inputs.
pub fn integrator_oracle<F: Scalar>(
    requests: &[(F, Vec<Vec<i64>>)],
    cost_model: &CostModel<F>,
) -> Result<usize, ActuatorError> {
    let Some((_, first)) = requests.first() else {
        return Ok(0);
    };
    if requests.iter().any(|(_, x)| x != first) {
        return Err(ActuatorError::MixedInputs);
    }
    let cost = cost_model.cost(first);
    let tol = F::epsilon().sqrt() * cost;
    let mut sum = F::zero();
    let mut fired = 0;
    for &(s, _) in requests {
        sum = sum + s;
        while sum + tol >= cost {
            sum = sum - cost;
            fired += 1;
        }
    }
    Ok(fired)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-9;

    fn copy(a: f64) -> ActuatorCopy<f64> {
        ActuatorCopy::new(TemplateId(0), ConceptId(1), a)
    }

    fn params() -> ActuatorParams<f64> {
        ActuatorParams {
            settle_ms: 300,
            ..ActuatorParams::default()
        }
    }

    #[test]
    fn probability_examples() {
        assert_eq!(activation_probability(40.0f64, 40.0), 1.0);
        assert_eq!(activation_probability(20.0f64, 40.0), 0.5);
        assert_eq!(activation_probability(0.0f64, 40.0), 0.0);
        assert_eq!(activation_probability(400.0f64, 40.0), 1.0);
        assert!(activation_probability(30.0f64, 40.0) > activation_probability(20.0, 40.0));
    }

    #[test]
    fn cost_model_grows_with_magnitude() {
        let m = CostModel::new(100.0f64, 2.0).unwrap();
        assert_eq!(m.cost(&[vec![-5, 9]]), 110.0);
        assert_eq!(m.cost(&[vec![]]), 100.0);
        assert!(CostModel::new(0.0f64, 1.0).is_err());
    }

    #[test]
    fn oracle_examples() {
        let m = CostModel::new(100.0f64, 0.0).unwrap();
        let x = vec![vec![1]];
        let quarter: Vec<_> = (0..4).map(|_| (25.0, x.clone())).collect();
        assert_eq!(integrator_oracle(&quarter, &m), Ok(1));
        let short: Vec<_> = (0..3).map(|_| (25.0, x.clone())).collect();
        assert_eq!(integrator_oracle(&short, &m), Ok(0));
        let tenth: Vec<_> = (0..10).map(|_| (10.0, x.clone())).collect();
        assert_eq!(integrator_oracle(&tenth, &m), Ok(1));
        let mixed = vec![(50.0, vec![vec![1]]), (50.0, vec![vec![-1]])];
        assert_eq!(integrator_oracle(&mixed, &m), Err(ActuatorError::MixedInputs));
    }

    #[test]
    fn contradictory_requests_do_not_pool() {
        // Two half-cost requests with opposite inputs: each is judged alone,
        // so both fire with probability 1/2 independently.
        let m = CostModel::new(100.0f64, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut both = 0;
        let n = 20_000;
        for _ in 0..n {
            let mut c = copy(1.0);
            let a = c.maybe_activate(&[vec![1]], 50.0, &m, 100.0, 0.0, 0, &mut rng);
            let b = c.maybe_activate(&[vec![-1]], 50.0, &m, 100.0, 0.0, 0, &mut rng);
            if a.fired() && b.fired() {
                both += 1;
            }
        }
        let freq = both as f64 / n as f64;
        assert!((freq - 0.25).abs() < 0.02, "{freq}");
    }

    #[test]
    fn activation_records_pending() {
        let m = CostModel::new(50.0f64, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = copy(1.0);
        let a = c.maybe_activate(&[vec![3]], 50.0, &m, 100.0, 0.7, 1234, &mut rng);
        assert!(a.fired());
        assert_eq!(
            c.pending(),
            &[PendingActivation {
                t0: 1234,
                cost_bits: 0.5,
                reward_t0: 0.7
            }]
        );
        let a = c.maybe_activate(&[vec![3]], 0.0, &m, 100.0, 0.7, 1300, &mut rng);
        assert!(!a.fired());
        assert_eq!(c.pending().len(), 1);
    }

    #[test]
    fn value_update_examples() {
        let p = params();
        // Bracket is zero.
        let mut c = ActuatorCopy::restore(
            TemplateId(0),
            ConceptId(1),
            2.0,
            vec![PendingActivation {
                t0: 0,
                cost_bits: 0.2,
                reward_t0: 1.0,
            }],
        );
        let u = c.value_update(1.4, 300, 0.5, &p).unwrap();
        assert!((u.value - 2.0).abs() < TOL);

        // No reward change: cost alone pulls the value down.
        let mut c = ActuatorCopy::restore(
            TemplateId(0),
            ConceptId(1),
            2.0,
            vec![PendingActivation {
                t0: 0,
                cost_bits: 0.2,
                reward_t0: 1.0,
            }],
        );
        let u = c.value_update(1.0, 400, 1.0, &p).unwrap();
        assert!((u.value - (2.0 - 0.1 * 0.2)).abs() < TOL);

        let mut c = ActuatorCopy::restore(
            TemplateId(0),
            ConceptId(1),
            2.0,
            vec![PendingActivation {
                t0: 0,
                cost_bits: 0.2,
                reward_t0: 3.0,
            }],
        );
        let u = c.value_update(4.0, 300, 0.5, &p).unwrap();
        assert!((u.value - 2.03).abs() < TOL);
        assert!(c.pending().is_empty());
    }

    #[test]
    fn update_waits_for_settle_delay() {
        let p = params();
        let mut c = ActuatorCopy::restore(
            TemplateId(0),
            ConceptId(1),
            1.0,
            vec![PendingActivation {
                t0: 100,
                cost_bits: 0.2,
                reward_t0: 0.0,
            }],
        );
        assert!(c.value_update(0.0, 399, 1.0, &p).is_none());
        assert!(c.value_update(0.0, 400, 1.0, &p).is_some());
        assert!(c.value_update(0.0, 10_000, 1.0, &p).is_none());
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_share::<f64>(1), Some(1.0));
        assert_eq!(delta_share::<f64>(4), Some(0.25));
        assert_eq!(delta_share::<f64>(0), None);
        let mut live = 2;
        live -= 1;
        assert_eq!(delta_share::<f64>(live), Some(1.0));
    }

    #[test]
    fn exploration_examples() {
        assert_eq!(exploration_probability::<f64>(&[], 2.0), 1.0);
        assert_eq!(exploration_probability(&[1.5f64, 0.5], 2.0), 0.5);
        assert_eq!(exploration_probability(&[20.0f64], 2.0), 2.0 / 22.0);
        assert!(exploration_probability(&[1e9f64], 2.0) < 1e-8);
    }

    #[test]
    fn drain_takes_ceiling_updates() {
        // (A0 - theta) / (alpha X) = 0.95 / 0.05 = 19
        let p = ActuatorParams {
            alpha: 0.1,
            theta: 0.05,
            a0: 1.0,
            ..params()
        };
        let mut c = copy(1.0);
        let mut updates = 0;
        loop {
            c.pending.push(PendingActivation {
                t0: 0,
                cost_bits: 0.5,
                reward_t0: 0.0,
            });
            updates += 1;
            if c.value_update(0.0, 1000, 1.0, &p).unwrap().below_threshold {
                break;
            }
        }
        assert_eq!(updates, 19);
    }

    #[test]
    fn params_validation() {
        assert!(ActuatorParams::<f64>::default().check().is_ok());
        let bad = ActuatorParams {
            a0: 0.01,
            ..ActuatorParams::<f64>::default()
        };
        assert_eq!(bad.check(), Err(ActuatorError::BadParam("a0")));
    }

    proptest! {
        #[test]
        fn probability_sum_is_one(cost in 1.0f64..1e4, k in 1usize..50) {
            let s = cost / k as f64;
            let total: f64 = (0..k).map(|_| activation_probability(s, cost)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn exploration_decreases(values in proptest::collection::vec(0.01f64..5.0, 0..20), extra in 0.01f64..5.0) {
            let before = exploration_probability(&values, 1.0);
            let mut more = values.clone();
            more.push(extra);
            prop_assert!(exploration_probability(&more, 1.0) < before);
        }

        #[test]
        fn drain_bound_holds(a0 in 0.2f64..5.0, x in 0.01f64..2.0, alpha in 0.01f64..1.0) {
            let p = ActuatorParams { alpha, theta: 0.05, a0, ..params() };
            let bound = ((a0 - 0.05) / (alpha * x)).ceil() as usize;
            let mut c = copy(a0);
            let mut n = 0;
            loop {
                c.pending.push(PendingActivation { t0: 0, cost_bits: x, reward_t0: 0.0 });
                n += 1;
                if c.value_update(0.0, 1000, 1.0, &p).unwrap().below_threshold {
                    break;
                }
                prop_assert!(n <= bound);
            }
            prop_assert!(n <= bound);
        }
    }
}
