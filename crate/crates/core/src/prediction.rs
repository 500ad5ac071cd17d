//! Prediction of the held-out mail total and the reversal probability.
//!
//! Under the fitted model the true mail total for candidate 1 over the red
//! districts is predicted by `V̂ = k̂ · v_b + ε`, `var(ε) = σ² · m`, where
//! `v_b` and `m` are the red districts' candidate-1 ballot votes and total mail
//! votes. With `σ̂` in place of `σ`,
//!
//! ```text
//! (V̂ - k̂ v_b) / (σ̂ √(v_b² / s_xx + m))  ~  t(dof)
//! ```
//!
//! and the reversal probability is the upper tail of that statistic at the
//! threshold `Ṽ`.

use serde::Serialize;
use thiserror::Error;

use crate::election_data::{aggregate_red, DataError, DistrictRecord, RedAggregate};
use crate::special_fn::{student_t_quantile, student_t_sf, SpecialFnError, TailProbability};
use crate::wls::RegressionFit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictionError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Special(#[from] SpecialFnError),
    #[error("interval level {0} must lie strictly between 0 and 1")]
    BadLevel(f64),
    /// σ̂ = 0: the fit is exact and the t statistic is undefined. The report
    /// is still returned, flagged, with `p` set by the sign of `Ṽ - k̂ v_b`.
    #[error("degenerate fit (sigma^2 = 0); reversal probability is {} by construction", .0.p_reversal.value)]
    DegenerateFit(Box<ReversalReport>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversalReport {
    /// Σ candidate-1 ballot votes over red districts.
    pub v_b_red: u64,
    /// Σ mail votes over red districts.
    pub m_red: u64,
    /// Σ counted candidate-1 mail votes over red districts.
    pub v_m_counted: u64,
    /// Mail total candidate 1 needs in the red districts (`Ṽ`).
    pub v_threshold: u64,
    /// `k̂ · v_b_red`
    pub point_prediction: f64,
    /// `σ̂ √(v_b_red² / s_xx + m_red)`
    pub pred_sd: f64,
    pub t_stat: f64,
    pub dof: usize,
    /// `P[V ≥ Ṽ]`
    pub p_reversal: TailProbability,
    pub degenerate: bool,
}

/// Standard deviation of `V̂ - k̂ v_b`, i.e. `√(var(k̂) v_b² + σ̂² m)`.
pub fn prediction_sd(fit: &RegressionFit, agg: &RedAggregate) -> f64 {
    let vb = agg.ballot_c1 as f64;
    let m = agg.mail_total as f64;
    fit.sigma_hat() * (vb * vb / fit.s_xx + m).sqrt()
}

/// Upper tail `P[V ≥ threshold]` for a real-valued threshold.
pub fn tail_at(
    fit: &RegressionFit,
    agg: &RedAggregate,
    threshold: f64,
) -> Result<(f64, TailProbability), PredictionError> {
    let point = fit.k_hat * agg.ballot_c1 as f64;
    let sd = prediction_sd(fit, agg);
    let t = (threshold - point) / sd;
    Ok((t, student_t_sf(t, fit.dof as f64)?))
}

/// Probability that the red districts' true mail total for candidate 1
/// reaches `v_threshold`.
pub fn reversal_probability(
    fit: &RegressionFit,
    red: &[DistrictRecord],
    v_threshold: u64,
) -> Result<ReversalReport, PredictionError> {
    let agg = aggregate_red(red)?;
    let point_prediction = fit.k_hat * agg.ballot_c1 as f64;
    let pred_sd = prediction_sd(fit, &agg);
    let mut report = ReversalReport {
        v_b_red: agg.ballot_c1,
        m_red: agg.mail_total,
        v_m_counted: agg.mail_c1_counted,
        v_threshold,
        point_prediction,
        pred_sd,
        t_stat: f64::NAN,
        dof: fit.dof,
        p_reversal: TailProbability::from_value(f64::NAN),
        degenerate: false,
    };

    if fit.sigma2_hat.is_nan() || fit.sigma2_hat <= 0.0 {
        let gap = v_threshold as f64 - point_prediction;
        report.degenerate = true;
        report.t_stat = if gap > 0.0 {
            f64::INFINITY
        } else if gap < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        report.p_reversal = TailProbability::from_value(if gap > 0.0 { 0.0 } else { 1.0 });
        return Err(PredictionError::DegenerateFit(Box::new(report)));
    }

    let (t_stat, p) = tail_at(fit, &agg, v_threshold as f64)?;
    report.t_stat = t_stat;
    report.p_reversal = p;
    Ok(report)
}

/// Two-sided prediction interval for the red districts' mail total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionInterval {
    pub level: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PredictionInterval {
    pub fn contains(&self, value: f64) -> bool {
        (self.lower..=self.upper).contains(&value)
    }
}

/// `k̂ v_b ± t_{(1+level)/2, dof} · pred_sd`
pub fn prediction_interval(
    fit: &RegressionFit,
    red: &[DistrictRecord],
    level: f64,
) -> Result<PredictionInterval, PredictionError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PredictionError::BadLevel(level));
    }
    let agg = aggregate_red(red)?;
    let point = fit.k_hat * agg.ballot_c1 as f64;
    let sd = prediction_sd(fit, &agg);
    let q = student_t_quantile(0.5 * (1.0 + level), fit.dof as f64)?;
    Ok(PredictionInterval {
        level,
        point,
        lower: point - q * sd,
        upper: point + q * sd,
    })
}
