//! End-to-end pipeline: partition, fit on the accepted districts, predict
//! the held-out mail total and compute the reversal probability.

use serde::Serialize;

use crate::election_data::{
    partition_variant, reversal_threshold_with, ElectionDataset, ThresholdRule, Variant,
};
use crate::prediction::{
    prediction_interval, reversal_probability, PredictionInterval, ReversalReport,
};
use crate::wls::{fit_through_origin, RegressionFit};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub variant: Variant,
    pub rule: ThresholdRule,
    /// Districts in the fitting set.
    pub n_green: usize,
    /// Districts held out.
    pub n_red: usize,
    pub margin_official: i64,
    pub fit: RegressionFit,
    pub report: ReversalReport,
    pub interval: Option<PredictionInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalysisOptions {
    pub variant: Variant,
    pub rule: ThresholdRule,
    /// Also compute a two-sided prediction interval at this level.
    pub level: Option<f64>,
}

/// Runs the full analysis on `ds`.
///
/// ```
/// use ballot_audit::analysis::{analyze, AnalysisOptions};
/// use ballot_audit::election_data::bundled_dataset;
///
/// let a = analyze(&bundled_dataset(), &AnalysisOptions::default()).unwrap();
/// assert_eq!((a.n_green, a.n_red), (106, 11));
/// assert_eq!(a.report.dof, 105);
/// assert!(a.report.p_reversal.value < 1e-9);
/// ```
pub fn analyze(ds: &ElectionDataset, opts: &AnalysisOptions) -> Result<Analysis, Error> {
    let part = partition_variant(ds, opts.variant);
    let fit = fit_through_origin(&part.green)?;
    let threshold = reversal_threshold_with(ds, &part.red, opts.rule)?;
    let report = reversal_probability(&fit, &part.red, threshold)?;
    let interval = opts
        .level
        .map(|level| prediction_interval(&fit, &part.red, level))
        .transpose()?;
    Ok(Analysis {
        variant: opts.variant,
        rule: opts.rule,
        n_green: part.green.len(),
        n_red: part.red.len(),
        margin_official: ds.margin_official(),
        fit,
        report,
        interval,
    })
}
