//! Hierarchical Beta-Bernoulli simulation of the multi-episode estimator.
//!
//! One replication draws `Kp` true episode accuracies from a Beta law with the
//! prior's mean and variance, runs `Kq` Bernoulli queries per episode and
//! records the averaged empirical accuracy. Many replications give empirical
//! moments of `ã` to hold against the closed form in [`crate::variance_model`].
//!
//! Replication `r` draws from its own stream seeded with
//! `splitmix64(master_seed ^ r)`, and per-replication results are reduced in
//! index order, so a report is bit-identical for any thread count.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episode_protocol::EpisodeResult;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::variance_model::{estimator_variance, AccuracyPrior, EvalDesign, PRIOR_SLACK};

/// Above this many queries an episode's success count comes from one binomial draw.
const BERNOULLI_LOOP_MAX: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub prior: AccuracyPrior,
    pub design: EvalDesign,
    pub replications: u64,
    pub master_seed: u64,
}

impl SimConfig {
    pub fn new(prior: AccuracyPrior, design: EvalDesign, replications: u64, master_seed: u64) -> Result<Self> {
        let config = Self {
            prior,
            design,
            replications,
            master_seed,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::domain("at least 2 replications are needed to estimate a variance"));
        }
        if self.prior.std() > 0.0 {
            fit_beta(&self.prior)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub empirical_mean: f64,
    pub empirical_var: f64,
    pub theoretical_mean: f64,
    pub theoretical_var: f64,
    /// `|empirical_var / theoretical_var − 1|`. Zero when both variances are
    /// zero, `None` (JSON `null`) when only the theoretical one is.
    pub rel_var_error: Option<f64>,
    pub replications: u64,
}

/// Measured terms of the law of total variance for one episode's estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    /// Sample variance of the drawn true accuracies `a_p`; estimates `σ²`.
    pub between_episode_var: f64,
    /// Mean of `(ã_p − a_p)²`; estimates `E[a_p(1−a_p)]/Kq`.
    pub within_episode_var: f64,
    pub theoretical_between: f64,
    /// `(a − σ² − a²)/Kq`.
    pub theoretical_within: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOutcome {
    pub report: SimReport,
    pub decomposition: VarianceDecomposition,
}

/// Moment-matched Beta shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Beta law with the prior's mean and variance: `ν = a(1−a)/σ² − 1`, `α = aν`, `β = (1−a)ν`.
pub fn fit_beta(prior: &AccuracyPrior) -> Result<BetaParams> {
    let mean = prior.mean();
    let var = prior.variance();
    if var == 0.0 {
        return Err(Error::DegeneratePrior { mean });
    }
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::domain(format!("a Beta fit needs 0 < mean < 1, got {mean}")));
    }
    let bound = mean * (1.0 - mean);
    if var >= bound - PRIOR_SLACK {
        return Err(Error::domain(format!(
            "variance {var:e} is too close to the Bernoulli bound {bound:e} for a Beta fit"
        )));
    }
    let nu = bound / var - 1.0;
    Ok(BetaParams {
        alpha: mean * nu,
        beta: (1.0 - mean) * nu,
    })
}

/// Source of true per-episode accuracies.
enum AccuracyLaw {
    PointMass(f64),
    /// Beta(α, β) as `X / (X + Y)` with `X ~ Gamma(α)`, `Y ~ Gamma(β)`.
    Beta(Gamma<f64>, Gamma<f64>),
}

impl AccuracyLaw {
    fn from_prior(prior: &AccuracyPrior) -> Result<Self> {
        match fit_beta(prior) {
            Ok(p) => {
                let gamma = |shape: f64| Gamma::new(shape, 1.0).map_err(|e| Error::Numeric(e.to_string()));
                Ok(AccuracyLaw::Beta(gamma(p.alpha)?, gamma(p.beta)?))
            }
            Err(Error::DegeneratePrior { mean }) => Ok(AccuracyLaw::PointMass(mean)),
            Err(e) => Err(e),
        }
    }

    #[inline]
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        match self {
            AccuracyLaw::PointMass(a) => *a,
            AccuracyLaw::Beta(gx, gy) => {
                let x = gx.sample(rng);
                let y = gy.sample(rng);
                x / (x + y)
            }
        }
    }
}

#[inline]
fn successes(rng: &mut StreamRng, trials: u64, p: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    if trials <= BERNOULLI_LOOP_MAX {
        (0..trials).filter(|_| rng.random::<f64>() < p).count() as u64
    } else {
        Binomial::new(trials, p).expect("p in (0, 1)").sample(rng)
    }
}

/// Per-replication sufficient statistics.
#[derive(Debug, Clone, Copy)]
struct Replication {
    estimate: f64,
    /// Mean and sum of squared deviations of the true accuracies `a_p`.
    truth_mean: f64,
    truth_m2: f64,
    /// Sum of `(ã_p − a_p)²` over episodes.
    within_ss: f64,
}

fn run_replication(law: &AccuracyLaw, design: &EvalDesign, seed: u64) -> Replication {
    let mut rng = rng::stream(seed);
    let kq = design.queries_per_episode();
    let kq_f = kq as f64;
    let mut sum_est = 0.0;
    let mut truth_mean = 0.0;
    let mut truth_m2 = 0.0;
    let mut within_ss = 0.0;
    for p in 0..design.episodes() {
        let a_p = law.draw(&mut rng);
        let est = successes(&mut rng, kq, a_p) as f64 / kq_f;
        sum_est += est;
        let delta = a_p - truth_mean;
        truth_mean += delta / (p + 1) as f64;
        truth_m2 += delta * (a_p - truth_mean);
        within_ss += (est - a_p) * (est - a_p);
    }
    Replication {
        estimate: sum_est / design.episodes() as f64,
        truth_mean,
        truth_m2,
        within_ss,
    }
}

/// Runs the simulation and also reports the two law-of-total-variance terms.
pub fn simulate_with_decomposition(config: &SimConfig) -> Result<SimOutcome> {
    config.validate()?;
    let law = AccuracyLaw::from_prior(&config.prior)?;
    let design = config.design;
    let reps: Vec<Replication> = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(&law, &design, rng::substream_seed(config.master_seed, r)))
        .collect();

    let n = reps.len() as f64;
    let empirical_mean = reps.iter().map(|r| r.estimate).sum::<f64>() / n;
    let empirical_var = reps
        .iter()
        .map(|r| (r.estimate - empirical_mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);

    // Chan et al. pairwise merge of the per-replication truth moments, in index order.
    let kp = design.episodes() as f64;
    let (mut count, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    for r in &reps {
        let total = count + kp;
        let delta = r.truth_mean - mean;
        mean += delta * kp / total;
        m2 += r.truth_m2 + delta * delta * count * kp / total;
        count = total;
    }
    let within_total: f64 = reps.iter().map(|r| r.within_ss).sum();

    let prior = &config.prior;
    let theoretical_var = estimator_variance(prior, &design);
    let rel_var_error = if theoretical_var > 0.0 {
        Some((empirical_var / theoretical_var - 1.0).abs())
    } else if empirical_var == 0.0 {
        Some(0.0)
    } else {
        None
    };

    Ok(SimOutcome {
        report: SimReport {
            empirical_mean,
            empirical_var,
            theoretical_mean: prior.mean(),
            theoretical_var,
            rel_var_error,
            replications: config.replications,
        },
        decomposition: VarianceDecomposition {
            between_episode_var: if count > 1.0 { m2 / (count - 1.0) } else { 0.0 },
            within_episode_var: within_total / count,
            theoretical_between: prior.variance(),
            theoretical_within: (prior.bernoulli_variance() - prior.variance())
                / design.queries_per_episode() as f64,
        },
    })
}

pub fn simulate(config: &SimConfig) -> Result<SimReport> {
    simulate_with_decomposition(config).map(|o| o.report)
}

/// Per-episode `(correct, total)` outcomes for one simulated evaluation run,
/// as a classifier harness would report them. All episodes come from one
/// stream seeded with `splitmix64(seed)`.
pub fn simulate_episode_results(prior: &AccuracyPrior, design: &EvalDesign, seed: u64) -> Result<Vec<EpisodeResult>> {
    let law = AccuracyLaw::from_prior(prior)?;
    let kq = design.queries_per_episode();
    // One stream for the whole run, so nearby seeds give unrelated runs.
    let mut rng = rng::stream(rng::splitmix64(seed));
    (0..design.episodes())
        .map(|p| {
            let a_p = law.draw(&mut rng);
            EpisodeResult::new(p, successes(&mut rng, kq, a_p), kq)
        })
        .collect()
}

/// One simulation per `Kq`; entry `i` uses seed `sequence_seed(master_seed, i)`.
pub fn sweep(
    prior: &AccuracyPrior,
    kq_values: &[u64],
    episodes: u64,
    replications: u64,
    master_seed: u64,
) -> Result<Vec<SimReport>> {
    if kq_values.is_empty() {
        return Err(Error::domain("sweep needs at least one Kq value"));
    }
    kq_values
        .iter()
        .enumerate()
        .map(|(i, &kq)| {
            let design = EvalDesign::new(episodes, kq)?;
            let config = SimConfig::new(*prior, design, replications, rng::sequence_seed(master_seed, i as u64))?;
            simulate(&config)
        })
        .collect()
}
