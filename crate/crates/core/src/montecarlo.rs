//! Monte Carlo check that the standardized prediction statistic really is
//! t-distributed on a given district geometry.
//!
//! Each replication redraws every district's candidate-1 mail count from
//! `k · ballot_c1 + N(0, σ² · mail_total)`, rounded and clamped to
//! `[0, mail_total]`, refits on the fitting set and standardizes the realized
//! red-district total.
//!
//! # Random streams
//!
//! Draws come from ChaCha8 seeded with [`ChaCha8Rng::seed_from_u64`]. The
//! replication index selects the ChaCha stream, and district `i` (dataset
//! order) starts at word position `i * WORDS_PER_DISTRICT` within it. Every
//! draw therefore depends only on `(seed, replication, district)`, and
//! parallel runs reproduce serial ones bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::election_data::{
    aggregate_red, partition_variant, DistrictRecord, ElectionDataset, Variant,
};
use crate::prediction::prediction_sd;
use crate::special_fn::{student_t_cdf, student_t_quantile};
use crate::wls::fit_through_origin;

/// Word offset between consecutive districts inside a replication's stream.
pub const WORDS_PER_DISTRICT: u128 = 1024;

pub const MIN_REPLICATIONS: usize = 100;

/// Probabilities at which empirical and theoretical quantiles are compared.
pub const PROBE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonteCarloError {
    #[error("noise scale must be finite and positive, got {0}")]
    BadSigma(f64),
    #[error("slope must be finite, got {0}")]
    BadSlope(f64),
    #[error("need at least {MIN_REPLICATIONS} replications, got {0}")]
    TooFewReplications(usize),
    #[error("template has no {0} districts")]
    EmptyGroup(&'static str),
    #[error("every replication failed to produce a statistic")]
    AllFailed,
}

/// True model constants for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParameters {
    k: f64,
    sigma: f64,
}

impl ModelParameters {
    pub fn new(k: f64, sigma: f64) -> Result<Self, MonteCarloError> {
        if !k.is_finite() {
            return Err(MonteCarloError::BadSlope(k));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(MonteCarloError::BadSigma(sigma));
        }
        Ok(ModelParameters { k, sigma })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

fn district_rng(seed: u64, replication: u64, district: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng.set_word_pos(district as u128 * WORDS_PER_DISTRICT);
    rng
}

/// Draws one district's mail count; returns `(count, clamped)`.
fn draw_mail_c1(d: &DistrictRecord, params: &ModelParameters, rng: &mut ChaCha8Rng) -> (u64, bool) {
    let m = d.mail_total();
    let z: f64 = StandardNormal.sample(rng);
    let value = (params.k * d.ballot_c1() as f64 + params.sigma * (m as f64).sqrt() * z).round();
    if value < 0.0 {
        (0, true)
    } else if value > m as f64 {
        (m, true)
    } else {
        (value as u64, false)
    }
}

fn simulate_replication(
    template: &ElectionDataset,
    params: &ModelParameters,
    seed: u64,
    replication: u64,
) -> (ElectionDataset, usize) {
    let mut clamped = 0;
    let districts = template
        .districts()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = district_rng(seed, replication, i);
            let (v, c) = draw_mail_c1(d, params, &mut rng);
            clamped += c as usize;
            d.with_mail_c1(v).expect("clamped to the mail total")
        })
        .collect();
    (
        ElectionDataset::new(districts).expect("ids unchanged"),
        clamped,
    )
}

/// Replaces every district's candidate-1 mail count with a draw from the
/// model. Ballot counts, mail totals and statuses are kept.
pub fn simulate_election(
    template: &ElectionDataset,
    params: &ModelParameters,
    seed: u64,
) -> ElectionDataset {
    simulate_replication(template, params, seed, 0).0
}

/// Same as [`simulate_election`] but also reports how many districts were
/// clamped to `[0, mail_total]`.
pub fn simulate_election_counting_clamps(
    template: &ElectionDataset,
    params: &ModelParameters,
    seed: u64,
    replication: u64,
) -> (ElectionDataset, usize) {
    simulate_replication(template, params, seed, replication)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileProbe {
    pub p: f64,
    pub empirical: f64,
    pub theoretical: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub replications: usize,
    pub seed: u64,
    pub k: f64,
    pub sigma: f64,
    pub variant: Variant,
    pub dof: usize,
    /// Replications whose fit or statistic could not be formed.
    pub failures: usize,
    /// One statistic per successful replication, in replication order.
    pub t_stats: Vec<f64>,
    pub ks_distance: f64,
    /// `1.36 / √n`, the 95% critical value for the one-sample KS test.
    pub ks_critical_95: f64,
    pub ks_pass: bool,
    pub quantile_errors: Vec<QuantileProbe>,
    pub median_t: f64,
    pub clamped_draws: usize,
    /// `clamped_draws / (replications · districts)`
    pub clamp_rate: f64,
    /// Mean realized candidate-1 mail total over the held-out districts.
    pub mean_red_total: f64,
    /// `k · Σ ballot_c1` over the held-out districts.
    pub expected_red_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

struct ReplicationOutcome {
    t_stat: Option<f64>,
    clamped: usize,
    red_total: u64,
}

fn run_replication(
    template: &ElectionDataset,
    params: &ModelParameters,
    variant: Variant,
    seed: u64,
    replication: u64,
) -> ReplicationOutcome {
    let (sim, clamped) = simulate_replication(template, params, seed, replication);
    let part = partition_variant(&sim, variant);
    let agg = aggregate_red(&part.red).expect("held-out set checked non-empty");
    let t_stat = fit_through_origin(&part.green).ok().and_then(|fit| {
        let sd = prediction_sd(&fit, &agg);
        let t = (agg.mail_c1_counted as f64 - fit.k_hat * agg.ballot_c1 as f64) / sd;
        (fit.sigma2_hat > 0.0 && t.is_finite()).then_some(t)
    });
    ReplicationOutcome {
        t_stat,
        clamped,
        red_total: agg.mail_c1_counted,
    }
}

/// One-sample Kolmogorov-Smirnov distance between `sorted` and `cdf`.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Linear-interpolation sample quantile (type 7) of sorted data.
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn calibrate(
    template: &ElectionDataset,
    params: &ModelParameters,
    variant: Variant,
    replications: usize,
    seed: u64,
) -> Result<CalibrationReport, MonteCarloError> {
    calibrate_with(
        template,
        params,
        variant,
        replications,
        seed,
        Execution::default(),
    )
}

/// Runs `replications` simulated elections and compares the standardized
/// statistic with `t(N - 1)`.
pub fn calibrate_with(
    template: &ElectionDataset,
    params: &ModelParameters,
    variant: Variant,
    replications: usize,
    seed: u64,
    execution: Execution,
) -> Result<CalibrationReport, MonteCarloError> {
    if replications < MIN_REPLICATIONS {
        return Err(MonteCarloError::TooFewReplications(replications));
    }
    let part = partition_variant(template, variant);
    if part.red.is_empty() {
        return Err(MonteCarloError::EmptyGroup("held-out"));
    }
    if part.green.is_empty() {
        return Err(MonteCarloError::EmptyGroup("fitting"));
    }
    let dof = part
        .green
        .iter()
        .filter(|d| d.mail_total() > 0)
        .count()
        .saturating_sub(1);
    let expected_red_total = params.k * part.red.iter().map(|d| d.ballot_c1() as f64).sum::<f64>();

    let run = |r: usize| run_replication(template, params, variant, seed, r as u64);
    let outcomes: Vec<ReplicationOutcome> = match execution {
        Execution::Serial => (0..replications).map(run).collect(),
        Execution::Parallel => (0..replications).into_par_iter().map(run).collect(),
    };

    let t_stats: Vec<f64> = outcomes.iter().filter_map(|o| o.t_stat).collect();
    let failures = replications - t_stats.len();
    if t_stats.is_empty() || dof == 0 {
        return Err(MonteCarloError::AllFailed);
    }
    let clamped_draws: usize = outcomes.iter().map(|o| o.clamped).sum();
    let mean_red_total =
        outcomes.iter().map(|o| o.red_total as f64).sum::<f64>() / replications as f64;

    let mut sorted = t_stats.clone();
    sorted.sort_by(f64::total_cmp);
    let nu = dof as f64;
    let ks = ks_distance(&sorted, |x| student_t_cdf(x, nu).expect("dof > 0"));
    let ks_critical_95 = 1.36 / (sorted.len() as f64).sqrt();
    let quantile_errors = PROBE_LEVELS
        .iter()
        .map(|&p| {
            let empirical = sample_quantile(&sorted, p);
            let theoretical = student_t_quantile(p, nu).expect("valid probe");
            QuantileProbe {
                p,
                empirical,
                theoretical,
                abs_error: (empirical - theoretical).abs(),
            }
        })
        .collect();

    Ok(CalibrationReport {
        replications,
        seed,
        k: params.k,
        sigma: params.sigma,
        variant,
        dof,
        failures,
        median_t: sample_quantile(&sorted, 0.5),
        t_stats,
        ks_distance: ks,
        ks_critical_95,
        ks_pass: ks < ks_critical_95,
        quantile_errors,
        clamped_draws,
        clamp_rate: clamped_draws as f64 / (replications * template.len()) as f64,
        mean_red_total,
        expected_red_total,
    })
}
