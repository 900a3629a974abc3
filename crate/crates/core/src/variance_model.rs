//! Closed-form moments of the multi-episode accuracy estimator.
//!
//! Each episode `p` has a true accuracy `a_p` drawn i.i.d. with mean `a` and
//! variance `σ²`. Measuring it on `Kq` queries is `Kq` Bernoulli trials, and
//! the estimator averages the `Kp` per-episode measurements. By the law of
//! total variance
//!
//! ```text
//! Var[ã] = (1/Kp) · ( a(1−a)/Kq + (1 − 1/Kq)·σ² )
//! ```
//!
//! `Kq` is always the total number of queries in an episode, summed over
//! classes. Use [`EvalDesign::from_per_class`] when a benchmark is described
//! per class (e.g. 15 queries per class in a 5-way task is `Kq = 75`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack on `std² ≤ mean·(1−mean)`, for round-tripped floats.
pub const PRIOR_SLACK: f64 = 1e-12;

/// Two-sided 95% normal quantile used for planning half-widths.
pub const Z95: f64 = 1.96;

/// Mean and spread of the true per-episode accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior")]
pub struct AccuracyPrior {
    mean: f64,
    std: f64,
}

#[derive(Deserialize)]
struct RawPrior {
    mean: f64,
    std: f64,
}

impl TryFrom<RawPrior> for AccuracyPrior {
    type Error = Error;

    fn try_from(raw: RawPrior) -> Result<Self> {
        AccuracyPrior::new(raw.mean, raw.std)
    }
}

impl AccuracyPrior {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(0.0..=1.0).contains(&mean) {
            return Err(Error::domain(format!("accuracy mean {mean} is outside [0, 1]")));
        }
        if !std.is_finite() || std < 0.0 {
            return Err(Error::domain(format!("accuracy std {std} must be finite and non-negative")));
        }
        let bound = mean * (1.0 - mean);
        if std * std > bound + PRIOR_SLACK {
            return Err(Error::domain(format!(
                "accuracy variance {:e} exceeds the Bernoulli bound mean·(1−mean) = {bound:e}",
                std * std
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }

    /// `a(1−a)`, the variance of a single query outcome.
    pub fn bernoulli_variance(&self) -> f64 {
        self.mean * (1.0 - self.mean)
    }

    /// Variance of one episode's measured accuracy over `queries` queries.
    pub fn per_episode_variance(&self, queries: u64) -> f64 {
        let kq = queries as f64;
        self.bernoulli_variance() / kq + (1.0 - 1.0 / kq) * self.variance()
    }
}

/// Evaluation shape: `episodes` (Kp) × `queries_per_episode` (Kq, total over classes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDesign")]
pub struct EvalDesign {
    episodes: u64,
    queries_per_episode: u64,
}

#[derive(Deserialize)]
struct RawDesign {
    episodes: u64,
    queries_per_episode: u64,
}

impl TryFrom<RawDesign> for EvalDesign {
    type Error = Error;

    fn try_from(raw: RawDesign) -> Result<Self> {
        EvalDesign::new(raw.episodes, raw.queries_per_episode)
    }
}

impl EvalDesign {
    pub fn new(episodes: u64, queries_per_episode: u64) -> Result<Self> {
        if episodes == 0 {
            return Err(Error::domain("episode count must be at least 1"));
        }
        if queries_per_episode == 0 {
            return Err(Error::domain("query count per episode must be at least 1"));
        }
        Ok(Self {
            episodes,
            queries_per_episode,
        })
    }

    /// Design with `per_class` queries for each of `ways` classes.
    pub fn from_per_class(episodes: u64, per_class: u64, ways: u64) -> Result<Self> {
        let total = per_class
            .checked_mul(ways)
            .ok_or_else(|| Error::domain("per-class queries × ways overflows"))?;
        Self::new(episodes, total)
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn queries_per_episode(&self) -> u64 {
        self.queries_per_episode
    }
}

/// Exact, approximate and asymptotic variance of `ã` for one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub exact_var: f64,
    pub approx_var: f64,
    pub asymptote_var: f64,
    /// Normal-approximation 95% half-width, `1.96·sqrt(exact_var)`.
    pub ci95_halfwidth: f64,
}

/// `Var[ã]` exactly: `(1/Kp)·[a(1−a)/Kq + (1−1/Kq)·σ²]`.
pub fn estimator_variance(prior: &AccuracyPrior, design: &EvalDesign) -> f64 {
    prior.per_episode_variance(design.queries_per_episode) / design.episodes as f64
}

/// Large-`Kq` approximation `(1/Kp)·[a(1−a)/Kq + σ²]`; never below the exact value.
pub fn estimator_variance_approx(prior: &AccuracyPrior, design: &EvalDesign) -> f64 {
    let kq = design.queries_per_episode as f64;
    (prior.bernoulli_variance() / kq + prior.variance()) / design.episodes as f64
}

/// Limit of `Var[ã]` as `Kq → ∞`: only inter-episode variance remains.
pub fn variance_asymptote(prior: &AccuracyPrior, episodes: u64) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::domain("episode count must be at least 1"));
    }
    Ok(prior.variance() / episodes as f64)
}

pub fn variance_report(prior: &AccuracyPrior, design: &EvalDesign) -> Result<VarianceReport> {
    let exact_var = estimator_variance(prior, design);
    Ok(VarianceReport {
        exact_var,
        approx_var: estimator_variance_approx(prior, design),
        asymptote_var: variance_asymptote(prior, design.episodes)?,
        ci95_halfwidth: Z95 * exact_var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn prior(a: f64, s: f64) -> AccuracyPrior {
        AccuracyPrior::new(a, s).unwrap()
    }

    fn design(kp: u64, kq: u64) -> EvalDesign {
        EvalDesign::new(kp, kq).unwrap()
    }

    #[test]
    fn exact_variance_examples() {
        assert_relative_eq!(
            estimator_variance(&prior(0.87, 0.05), &design(600, 75)),
            6.6245e-6,
            max_relative = 1e-4
        );
        assert_eq!(estimator_variance(&prior(0.5, 0.0), &design(1, 1)), 0.25);
        assert_relative_eq!(
            estimator_variance(&prior(0.93, 0.028), &design(120, 2975)),
            6.7135e-6,
            max_relative = 1e-4
        );
    }

    #[test]
    fn approx_variance_examples() {
        assert_relative_eq!(
            estimator_variance_approx(&prior(0.87, 0.05), &design(600, 75)),
            6.6800e-6,
            max_relative = 1e-4
        );
        // (0.0651/2975 + 7.84e-4)/120 = 8.058824e-4/120
        assert_relative_eq!(
            estimator_variance_approx(&prior(0.93, 0.028), &design(120, 2975)),
            6.7157e-6,
            max_relative = 1e-4
        );
        let p = prior(0.31, 0.0);
        let d = design(17, 9);
        assert_eq!(estimator_variance_approx(&p, &d), estimator_variance(&p, &d));
    }

    #[test]
    fn asymptote_examples() {
        assert_relative_eq!(variance_asymptote(&prior(0.93, 0.028), 120).unwrap(), 6.5333e-6, max_relative = 1e-4);
        assert_eq!(variance_asymptote(&prior(0.7, 0.0), 600).unwrap(), 0.0);
        assert_relative_eq!(variance_asymptote(&prior(0.87, 0.05), 600).unwrap(), 4.1667e-6, max_relative = 1e-4);
        assert!(variance_asymptote(&prior(0.87, 0.05), 0).is_err());
    }

    #[test]
    fn report_examples() {
        let r = variance_report(&prior(0.93, 0.028), &design(120, 2975)).unwrap();
        assert!((r.ci95_halfwidth * 100.0 - 0.51).abs() <= 0.02, "{}", r.ci95_halfwidth);

        let r = variance_report(&prior(0.87, 0.05), &design(600, 75)).unwrap();
        assert_relative_eq!(r.exact_var, 6.6245e-6, max_relative = 1e-4);
        assert_relative_eq!(r.approx_var, 6.6800e-6, max_relative = 1e-4);
        assert_relative_eq!(r.asymptote_var, 4.1667e-6, max_relative = 1e-4);

        let r = variance_report(&prior(1.0, 0.0), &design(5, u64::MAX)).unwrap();
        assert_eq!((r.exact_var, r.approx_var, r.asymptote_var), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(AccuracyPrior::new(1.2, 0.0).is_err());
        assert!(AccuracyPrior::new(-0.1, 0.0).is_err());
        assert!(AccuracyPrior::new(0.5, -0.1).is_err());
        assert!(AccuracyPrior::new(0.5, f64::NAN).is_err());
        assert!(AccuracyPrior::new(0.9, 0.31).is_err());
        // Bernoulli bound itself is a valid (two-point) prior.
        assert!(AccuracyPrior::new(0.5, 0.5).is_ok());
        assert!(EvalDesign::new(0, 5).is_err());
        assert!(EvalDesign::new(5, 0).is_err());
    }

    #[test]
    fn per_class_helper_multiplies_by_ways() {
        let d = EvalDesign::from_per_class(600, 15, 5).unwrap();
        assert_eq!(d.queries_per_episode(), 75);
        assert_eq!(EvalDesign::from_per_class(120, 595, 5).unwrap().queries_per_episode(), 2975);
    }

    #[test]
    fn serde_validates() {
        let p: AccuracyPrior = serde_json::from_str(r#"{"mean":0.93,"std":0.028}"#).unwrap();
        assert_eq!(p, prior(0.93, 0.028));
        assert!(serde_json::from_str::<AccuracyPrior>(r#"{"mean":0.93,"std":0.5}"#).is_err());
        assert!(serde_json::from_str::<EvalDesign>(r#"{"episodes":0,"queries_per_episode":3}"#).is_err());
    }

    fn valid_prior() -> impl Strategy<Value = AccuracyPrior> {
        (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, frac)| {
            let s = frac * (a * (1.0 - a)).sqrt();
            AccuracyPrior::new(a, s).unwrap()
        })
    }

    proptest! {
        #[test]
        fn doubling_episodes_halves_variance(p in valid_prior(), kp in 1u64..10_000, kq in 1u64..100_000) {
            let v1 = estimator_variance(&p, &design(kp, kq));
            let v2 = estimator_variance(&p, &design(2 * kp, kq));
            prop_assert!((v1 - 2.0 * v2).abs() <= 1e-14 * v1.max(1e-300));
        }

        #[test]
        fn ordering_and_gap(p in valid_prior(), kp in 1u64..10_000, kq in 1u64..100_000) {
            let d = design(kp, kq);
            let exact = estimator_variance(&p, &d);
            let approx = estimator_variance_approx(&p, &d);
            let asym = variance_asymptote(&p, kp).unwrap();
            let tol = 1e-15;
            prop_assert!(asym <= exact + tol);
            prop_assert!(exact <= approx + tol);
            let gap = (p.bernoulli_variance() - p.variance()) / (kp as f64 * kq as f64);
            prop_assert!(((exact - asym) - gap).abs() <= 1e-12 * exact.max(1e-300) + 1e-18);
        }

        #[test]
        fn non_increasing_in_queries(p in valid_prior(), kp in 1u64..1000, kq in 1u64..100_000) {
            let v1 = estimator_variance(&p, &design(kp, kq));
            let v2 = estimator_variance(&p, &design(kp, kq + 1));
            prop_assert!(v2 <= v1 * (1.0 + 1e-14));
        }

        #[test]
        fn symmetric_in_accuracy(a in 0.0..=1.0f64, frac in 0.0..=1.0f64, kp in 1u64..1000, kq in 1u64..1000) {
            let s = frac * (a * (1.0 - a)).sqrt();
            let v1 = estimator_variance(&prior(a, s), &design(kp, kq));
            let v2 = estimator_variance(&prior(1.0 - a, s), &design(kp, kq));
            prop_assert!((v1 - v2).abs() <= 1e-14 * v1.max(1e-300) + 1e-20);
        }

        #[test]
        fn pure_binomial_case(a in 0.0..=1.0f64, kq in 1u64..10_000) {
            let v = estimator_variance(&prior(a, 0.0), &design(1, kq));
            prop_assert!((v - a * (1.0 - a) / kq as f64).abs() <= 1e-16);
        }
    }
}
