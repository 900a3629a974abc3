//! Inverse problems over the estimator variance: how many episodes reach a
//! target, how variance trades between episodes and queries, and which design
//! is cheapest under a linear compute model.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::variance_model::{estimator_variance, variance_report, AccuracyPrior, EvalDesign, VarianceReport, Z95};

/// Linear evaluation cost: `Kp·cost_per_episode + Kp·Kq·cost_per_query`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    cost_per_episode: f64,
    cost_per_query: f64,
}

impl CostModel {
    pub fn new(cost_per_episode: f64, cost_per_query: f64) -> Result<Self> {
        for (name, v) in [("cost_per_episode", cost_per_episode), ("cost_per_query", cost_per_query)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if cost_per_episode == 0.0 && cost_per_query == 0.0 {
            return Err(Error::domain("cost_per_episode and cost_per_query cannot both be zero"));
        }
        Ok(Self {
            cost_per_episode,
            cost_per_query,
        })
    }

    pub fn cost_per_episode(&self) -> f64 {
        self.cost_per_episode
    }

    pub fn cost_per_query(&self) -> f64 {
        self.cost_per_query
    }

    pub fn total(&self, episodes: u64, queries_per_episode: u64) -> f64 {
        let kp = episodes as f64;
        kp * self.cost_per_episode + kp * queries_per_episode as f64 * self.cost_per_query
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub episodes: u64,
    pub queries_per_episode: u64,
    pub predicted_var: f64,
    pub predicted_ci95: f64,
    pub total_cost: f64,
}

/// One cell of a trade-off grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffCell {
    pub episodes: u64,
    pub queries_per_episode: u64,
    pub report: VarianceReport,
}

fn variance_at(prior: &AccuracyPrior, episodes: u64, queries: u64) -> f64 {
    // Both counts are non-zero here, so the design is always valid.
    estimator_variance(prior, &EvalDesign::new(episodes, queries).expect("non-zero counts"))
}

/// Smallest `Kp` with `estimator_variance(prior, Kp, Kq) ≤ target_var`.
pub fn min_episodes_for_variance(prior: &AccuracyPrior, queries_per_episode: u64, target_var: f64) -> Result<u64> {
    if target_var.is_nan() || target_var <= 0.0 || !target_var.is_finite() {
        return Err(Error::domain(format!("target variance {target_var} must be positive and finite")));
    }
    if queries_per_episode == 0 {
        return Err(Error::domain("query count per episode must be at least 1"));
    }
    let per_episode = prior.per_episode_variance(queries_per_episode);
    let real = (per_episode / target_var).ceil();
    if real > (1u64 << 53) as f64 {
        return Err(Error::domain(format!(
            "target variance {target_var:e} needs more than 2^53 episodes"
        )));
    }
    let mut kp = (real as u64).max(1);
    // Settle floating-point boundary cases against the formula itself.
    while variance_at(prior, kp, queries_per_episode) > target_var {
        kp += 1;
    }
    while kp > 1 && variance_at(prior, kp - 1, queries_per_episode) <= target_var {
        kp -= 1;
    }
    Ok(kp)
}

/// Smallest `Kp` whose normal 95% half-width is at most `target_halfwidth`.
pub fn min_episodes_for_ci(prior: &AccuracyPrior, queries_per_episode: u64, target_halfwidth: f64) -> Result<u64> {
    if !(target_halfwidth > 0.0 && target_halfwidth < 1.0) {
        return Err(Error::domain(format!("target half-width {target_halfwidth} must lie in (0, 1)")));
    }
    let sd = target_halfwidth / Z95;
    min_episodes_for_variance(prior, queries_per_episode, sd * sd)
}

/// Variance reports over the cartesian grid `kp_values × kq_values`, row-major by `Kp`.
pub fn tradeoff_table(prior: &AccuracyPrior, kp_values: &[u64], kq_values: &[u64]) -> Result<Vec<TradeoffCell>> {
    if kp_values.is_empty() || kq_values.is_empty() {
        return Err(Error::domain("trade-off grid needs at least one Kp and one Kq value"));
    }
    let mut cells = Vec::with_capacity(kp_values.len() * kq_values.len());
    for &kp in kp_values {
        for &kq in kq_values {
            let design = EvalDesign::new(kp, kq)?;
            cells.push(TradeoffCell {
                episodes: kp,
                queries_per_episode: kq,
                report: variance_report(prior, &design)?,
            });
        }
    }
    Ok(cells)
}

pub const TRADEOFF_CSV_HEADER: [&str; 6] = ["kp", "kq", "exact_var", "approx_var", "asymptote_var", "ci95"];

/// Writes `kp,kq,exact_var,approx_var,asymptote_var,ci95` rows.
pub fn write_tradeoff_csv<W: Write>(cells: &[TradeoffCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRADEOFF_CSV_HEADER)?;
    for c in cells {
        w.write_record([
            c.episodes.to_string(),
            c.queries_per_episode.to_string(),
            format!("{:e}", c.report.exact_var),
            format!("{:e}", c.report.approx_var),
            format!("{:e}", c.report.asymptote_var),
            format!("{:e}", c.report.ci95_halfwidth),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cheapest `(Kp, Kq)` with `Kq ≤ kq_max` meeting `target_var`.
///
/// Every `Kq` in `1..=kq_max` is paired with its minimal `Kp`. Ties in cost go
/// to the smaller `Kp`, then to the lower predicted variance. With a positive
/// query cost the second tie never fires; with free queries it picks the
/// largest `Kq` that still needs only the minimal `Kp`.
pub fn min_cost_design(prior: &AccuracyPrior, cost: &CostModel, target_var: f64, kq_max: u64) -> Result<PlanResult> {
    if kq_max == 0 {
        return Err(Error::domain("kq_max must be at least 1"));
    }
    let mut best: Option<PlanResult> = None;
    for kq in 1..=kq_max {
        let kp = min_episodes_for_variance(prior, kq, target_var)?;
        let var = variance_at(prior, kp, kq);
        let candidate = PlanResult {
            episodes: kp,
            queries_per_episode: kq,
            predicted_var: var,
            predicted_ci95: Z95 * var.sqrt(),
            total_cost: cost.total(kp, kq),
        };
        let better = match &best {
            None => true,
            Some(b) => {
                (candidate.total_cost, candidate.episodes, candidate.predicted_var)
                    .partial_cmp(&(b.total_cost, b.episodes, b.predicted_var))
                    == Some(std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("kq_max >= 1 yields at least one candidate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prior(a: f64, s: f64) -> AccuracyPrior {
        AccuracyPrior::new(a, s).unwrap()
    }

    /// Linear scan from Kp = 1; independent of the closed-form inversion.
    fn brute_min_episodes(p: &AccuracyPrior, kq: u64, target: f64) -> u64 {
        (1..).find(|&kp| variance_at(p, kp, kq) <= target).unwrap()
    }

    #[test]
    fn min_episodes_examples() {
        let p = prior(0.93, 0.028);
        assert_eq!(min_episodes_for_variance(&p, 2975, 7e-6).unwrap(), 116);
        assert_eq!(brute_min_episodes(&p, 2975, 7e-6), 116);
        assert_eq!(min_episodes_for_variance(&prior(0.5, 0.0), 1, 0.25).unwrap(), 1);
        let q = prior(0.87, 0.05);
        let v600 = variance_at(&q, 600, 75);
        assert_eq!(min_episodes_for_variance(&q, 75, v600).unwrap(), 600);
        assert_eq!(min_episodes_for_variance(&q, 75, 6.6245e-6).unwrap(), brute_min_episodes(&q, 75, 6.6245e-6));
    }

    #[test]
    fn min_episodes_errors() {
        let p = prior(0.93, 0.028);
        assert!(min_episodes_for_variance(&p, 75, 0.0).is_err());
        assert!(min_episodes_for_variance(&p, 75, -1.0).is_err());
        assert!(min_episodes_for_variance(&p, 75, f64::NAN).is_err());
        assert!(min_episodes_for_variance(&p, 0, 1e-3).is_err());
        assert!(min_episodes_for_variance(&p, 75, 1e-300).is_err());
    }

    #[test]
    fn min_episodes_for_ci_examples() {
        let p = prior(0.93, 0.028);
        assert_eq!(min_episodes_for_ci(&p, 2975, 0.0051).unwrap(), 119);
        assert_eq!(min_episodes_for_ci(&prior(0.4, 0.0), u64::MAX, 0.001).unwrap(), 1);
        let q = prior(0.87, 0.05);
        let target = (0.00504f64 / 1.96).powi(2);
        let n = min_episodes_for_ci(&q, 75, 0.00504).unwrap();
        assert_eq!(n, brute_min_episodes(&q, 75, target));
        assert_eq!(n, 602);
        assert!(min_episodes_for_ci(&q, 75, 0.0).is_err());
        assert!(min_episodes_for_ci(&q, 75, 1.0).is_err());
    }

    #[test]
    fn tradeoff_examples() {
        let p87 = prior(0.87, 0.05);
        let p93 = prior(0.93, 0.028);
        let a = tradeoff_table(&p87, &[600], &[75]).unwrap();
        let b = tradeoff_table(&p93, &[120], &[2975]).unwrap();
        assert!((a[0].report.exact_var - 6.62e-6).abs() < 0.01e-6);
        assert!((b[0].report.exact_var - 6.71e-6).abs() < 0.01e-6);

        let z = tradeoff_table(&prior(0.0, 0.0), &[1], &[1]).unwrap();
        assert_eq!(z[0].report.exact_var, 0.0);

        let grid = tradeoff_table(&p93, &[10, 20], &[5, 50]).unwrap();
        let order: Vec<_> = grid.iter().map(|c| (c.episodes, c.queries_per_episode)).collect();
        assert_eq!(order, vec![(10, 5), (10, 50), (20, 5), (20, 50)]);
        for c in &grid {
            assert_eq!(c.report.exact_var, variance_at(&p93, c.episodes, c.queries_per_episode));
        }

        assert!(tradeoff_table(&p93, &[], &[1]).is_err());
        assert!(tradeoff_table(&p93, &[1], &[]).is_err());
        assert!(tradeoff_table(&p93, &[0], &[1]).is_err());
    }

    #[test]
    fn tradeoff_csv_layout() {
        let grid = tradeoff_table(&prior(0.5, 0.0), &[1], &[1, 4]).unwrap();
        let mut buf = Vec::new();
        write_tradeoff_csv(&grid, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "kp,kq,exact_var,approx_var,asymptote_var,ci95");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,1,2.5e-1,2.5e-1,0e0,"));
    }

    #[test]
    fn cost_model_validation() {
        assert!(CostModel::new(0.0, 0.0).is_err());
        assert!(CostModel::new(-1.0, 1.0).is_err());
        assert!(CostModel::new(1.0, f64::INFINITY).is_err());
        assert!(CostModel::new(5.59, 0.0).is_ok());
    }

    #[test]
    fn free_queries_maximise_kq() {
        let p = prior(0.93, 0.028);
        let cost = CostModel::new(5.59, 0.0).unwrap();
        let plan = min_cost_design(&p, &cost, 7e-6, 2975).unwrap();
        assert_eq!(plan.queries_per_episode, 2975);
        assert_eq!(plan.episodes, min_episodes_for_variance(&p, 2975, 7e-6).unwrap());
        assert_eq!(plan.episodes, 116);
        assert!((plan.total_cost - 648.0).abs() < 1.0, "{}", plan.total_cost);
        assert!(plan.predicted_var <= 7e-6);
    }

    #[test]
    fn tiny_query_cost_keeps_full_query_budget() {
        let p = prior(0.93, 0.028);
        let cost = CostModel::new(5.59, 1e-9).unwrap();
        let plan = min_cost_design(&p, &cost, 7e-6, 2975).unwrap();
        assert_eq!(plan.episodes, 116);
        assert!((plan.total_cost - 648.0).abs() < 1.0);
    }

    /// Exhaustive search over a (Kp, Kq) rectangle large enough to contain the optimum.
    fn brute_min_cost(p: &AccuracyPrior, cost: &CostModel, target: f64, kq_max: u64, kp_max: u64) -> (f64, u64) {
        let mut best = (f64::INFINITY, u64::MAX);
        for kq in 1..=kq_max {
            for kp in 1..=kp_max {
                if variance_at(p, kp, kq) <= target {
                    let c = cost.total(kp, kq);
                    if c < best.0 || (c == best.0 && kp < best.1) {
                        best = (c, kp);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn query_only_cost_matches_brute_force() {
        let p = prior(0.6, 0.0);
        let cost = CostModel::new(0.0, 1.0).unwrap();
        let target = 0.01;
        let plan = min_cost_design(&p, &cost, target, 40).unwrap();
        let (c, kp) = brute_min_cost(&p, &cost, target, 40, 40);
        assert_eq!(plan.total_cost, c);
        assert_eq!(plan.episodes, kp);
        // Pure binomial case: Kp·Kq must reach a(1−a)/target.
        let needed = (0.24f64 / target).ceil();
        assert!((plan.episodes * plan.queries_per_episode) as f64 >= needed);
        assert!(plan.predicted_var <= target);
    }

    #[test]
    fn min_cost_errors() {
        let p = prior(0.6, 0.1);
        let cost = CostModel::new(1.0, 1.0).unwrap();
        assert!(min_cost_design(&p, &cost, 0.0, 10).is_err());
        assert!(min_cost_design(&p, &cost, 1e-3, 0).is_err());
    }

    fn valid_prior() -> impl Strategy<Value = AccuracyPrior> {
        (0.01..=0.99f64, 0.05..=0.95f64).prop_map(|(a, frac)| {
            AccuracyPrior::new(a, frac * (a * (1.0 - a)).sqrt()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn inverse_round_trip(p in valid_prior(), kp in 1u64..5000, kq in 1u64..5000) {
            let v = variance_at(&p, kp, kq);
            prop_assert_eq!(min_episodes_for_variance(&p, kq, v).unwrap(), kp);
        }

        #[test]
        fn monotone_in_target_and_queries(p in valid_prior(), target in 1e-6..1e-2f64, kq in 1u64..5000) {
            let base = min_episodes_for_variance(&p, kq, target).unwrap();
            prop_assert!(min_episodes_for_variance(&p, kq, target * 1.5).unwrap() <= base);
            prop_assert!(min_episodes_for_variance(&p, kq + 7, target).unwrap() <= base);
        }

        #[test]
        fn min_cost_is_feasible_and_optimal(
            p in valid_prior(),
            ce in 0.0..5.0f64,
            cq in 0.001..1.0f64,
            target in 2e-3..2e-2f64,
            kq_max in 1u64..25,
        ) {
            let cost = CostModel::new(ce, cq).unwrap();
            let plan = min_cost_design(&p, &cost, target, kq_max).unwrap();
            prop_assert!(plan.queries_per_episode <= kq_max);
            prop_assert!(plan.predicted_var <= target);
            prop_assert_eq!(plan.predicted_var, variance_at(&p, plan.episodes, plan.queries_per_episode));

            // Local optimality: cheaper grid neighbours are infeasible.
            for (dkp, dkq) in [(-1i64, 0i64), (0, -1), (-1, -1), (-1, 1), (1, -1)] {
                let kp = plan.episodes as i64 + dkp;
                let kq = plan.queries_per_episode as i64 + dkq;
                if kp < 1 || kq < 1 || kq as u64 > kq_max {
                    continue;
                }
                let (kp, kq) = (kp as u64, kq as u64);
                if cost.total(kp, kq) < plan.total_cost {
                    prop_assert!(variance_at(&p, kp, kq) > target);
                }
            }

            // Global optimality: Kp never needs to exceed the Kq = 1 solution.
            let kp_cap = min_episodes_for_variance(&p, 1, target).unwrap();
            let (c, _) = brute_min_cost(&p, &cost, target, kq_max, kp_cap);
            prop_assert_eq!(plan.total_cost, c);
        }
    }
}
