//! Statistical audit of a contested vote count.
//!
//! Mail votes in "red" districts are treated as unreliable. A heteroskedastic
//! through-origin regression of candidate-1 mail votes on candidate-1 ballot
//! votes is fitted on the remaining districts, and used to predict what the
//! red districts' mail total should have been. The Student-t tail of that
//! prediction at the reversal threshold is the probability that a clean count
//! would have reversed the national result.
//!
//! | module | role |
//! |---|---|
//! | [`special_fn`] | log-gamma, incomplete beta, Student-t tails and quantiles |
//! | [`election_data`] | CSV ingestion, partitioning, aggregates, threshold |
//! | [`wls`] | weighted least squares, general and through-origin |
//! | [`prediction`] | prediction statistic, reversal probability, intervals |
//! | [`scenario`] | counterfactual vote reassignment |
//! | [`montecarlo`] | simulation and calibration of the t statistic |
//! | [`plot`] | SVG scatter |
//! | [`analysis`] | the pipeline tying these together |

pub mod analysis;
pub mod election_data;
pub mod linalg;
pub mod montecarlo;
pub mod plot;
pub mod prediction;
pub mod scenario;
pub mod special_fn;
pub mod wls;

use thiserror::Error;

/// Any failure of the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] election_data::ParseError),
    #[error(transparent)]
    Data(#[from] election_data::DataError),
    #[error(transparent)]
    Fit(#[from] wls::WlsError),
    #[error(transparent)]
    Prediction(#[from] prediction::PredictionError),
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    MonteCarlo(#[from] montecarlo::MonteCarloError),
}
