//! Weighted least squares with diagonal heteroskedastic noise.
//!
//! The general model is `y = X β + ε` with `cov(ε) = σ² W`, `W` diagonal.
//! The audit itself only needs the one-regressor, no-intercept case
//! `mail_c1 = k · ballot_c1 + ε` with `var(ε) = σ² · mail_total`, which
//! [`fit_through_origin`] solves in closed form.

use serde::Serialize;
use thiserror::Error;

use crate::election_data::DistrictRecord;
use crate::linalg::{householder_lstsq, Matrix};

/// Pivot tolerance, relative to the largest diagonal entry of R.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WlsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("weight {index} is {value}; weights must be finite and positive")]
    BadWeight { index: usize, value: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(
        "design matrix is rank deficient (column {column}: pivot {pivot:e} vs largest {largest:e})"
    )]
    RankDeficient {
        column: usize,
        pivot: f64,
        largest: f64,
    },
    #[error("need at least {needed} usable districts, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("every usable district has zero ballot votes for candidate 1")]
    AllZeroRegressor,
}

/// `y = X β + ε`, `var(ε_n) = σ² w_n`.
#[derive(Debug, Clone)]
pub struct GeneralWlsProblem {
    x: Matrix,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl GeneralWlsProblem {
    pub fn new(x: Matrix, y: Vec<f64>, w: Vec<f64>) -> Result<Self, WlsError> {
        let (n, p) = (x.rows(), x.cols());
        if p == 0 || n < p {
            return Err(WlsError::Dimension(format!(
                "design is {n} x {p}; need rows >= cols >= 1"
            )));
        }
        if y.len() != n || w.len() != n {
            return Err(WlsError::Dimension(format!(
                "design has {n} rows but y has {} and w has {}",
                y.len(),
                w.len()
            )));
        }
        if let Some((index, &value)) = w
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(WlsError::BadWeight { index, value });
        }
        if !x.is_finite() {
            return Err(WlsError::NonFinite("design matrix"));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(WlsError::NonFinite("response"));
        }
        Ok(GeneralWlsProblem { x, y, w })
    }

    pub fn design(&self) -> &Matrix {
        &self.x
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }
}

#[derive(Debug, Clone)]
pub struct GeneralWlsFit {
    pub beta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    /// `σ̂² (X' W⁻¹ X)⁻¹`
    pub cov_beta: Matrix,
    pub dof: usize,
    /// Unscaled residuals `y - X β̂`.
    pub residuals: Vec<f64>,
}

/// Generalized least squares for a diagonal `W`.
///
/// Rows are scaled by `1/√w_n` and the resulting ordinary problem is solved
/// by Householder QR; the normal equations are never formed.
pub fn solve_general(problem: &GeneralWlsProblem) -> Result<GeneralWlsFit, WlsError> {
    let (n, p) = (problem.x.rows(), problem.x.cols());
    if n == p {
        return Err(WlsError::InsufficientData {
            needed: p + 1,
            got: n,
        });
    }
    let inv_sqrt_w: Vec<f64> = problem.w.iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut scaled = problem.x.clone();
    for (i, s) in inv_sqrt_w.iter().enumerate() {
        for j in 0..p {
            scaled[(i, j)] *= s;
        }
    }
    let rhs: Vec<f64> = problem
        .y
        .iter()
        .zip(&inv_sqrt_w)
        .map(|(y, s)| y * s)
        .collect();

    let ls =
        householder_lstsq(&scaled, &rhs, RANK_TOLERANCE).map_err(|e| WlsError::RankDeficient {
            column: e.column,
            pivot: e.pivot,
            largest: e.largest,
        })?;

    let fitted = problem.x.mul_vec(&ls.solution);
    let residuals: Vec<f64> = problem.y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let dof = n - p;
    let rss: f64 = residuals
        .iter()
        .zip(&problem.w)
        .map(|(r, w)| r * r / w)
        .sum();
    let sigma2_hat = rss / dof as f64;

    let ri = &ls.r_inverse;
    let mut cov_beta = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v: f64 = (i.max(j)..p).map(|k| ri[(i, k)] * ri[(j, k)]).sum::<f64>() * sigma2_hat;
            cov_beta[(i, j)] = v;
            cov_beta[(j, i)] = v;
        }
    }

    Ok(GeneralWlsFit {
        beta_hat: ls.solution,
        sigma2_hat,
        cov_beta,
        dof,
        residuals,
    })
}

/// Through-origin fit of candidate 1's mail votes on their ballot votes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    pub k_hat: f64,
    pub sigma2_hat: f64,
    /// `Σ ballot_c1² / mail_total` over the fitted districts.
    pub s_xx: f64,
    /// `σ̂² / s_xx`
    pub var_k_hat: f64,
    pub dof: usize,
    pub n_used: usize,
    /// Ids of fitted districts, aligned with `residuals`.
    pub used_ids: Vec<String>,
    /// `mail_c1 - k̂ · ballot_c1` per fitted district.
    pub residuals: Vec<f64>,
    /// Districts dropped because they have no mail votes (weight undefined).
    pub excluded_zero_mail: Vec<String>,
}

impl RegressionFit {
    pub fn sigma_hat(&self) -> f64 {
        self.sigma2_hat.sqrt()
    }
}

fn usable(green: &[DistrictRecord]) -> impl Iterator<Item = &DistrictRecord> {
    green.iter().filter(|d| d.mail_total() > 0)
}

/// Weighted fit of `mail_c1 = k · ballot_c1 + ε`, `var(ε) = σ² · mail_total`.
///
/// ```
/// use ballot_audit::election_data::{DistrictRecord, Status};
/// use ballot_audit::wls::fit_through_origin;
///
/// let green = vec![
///     DistrictRecord::new("a", "A", 300, 100, 50, 40, Status::Green).unwrap(),
///     DistrictRecord::new("b", "B", 300, 200, 100, 80, Status::Green).unwrap(),
/// ];
/// let fit = fit_through_origin(&green).unwrap();
/// assert!((fit.k_hat - 0.4).abs() < 1e-15);
/// assert_eq!(fit.sigma2_hat, 0.0);
/// assert_eq!(fit.dof, 1);
/// ```
pub fn fit_through_origin(green: &[DistrictRecord]) -> Result<RegressionFit, WlsError> {
    let excluded_zero_mail: Vec<String> = green
        .iter()
        .filter(|d| d.mail_total() == 0)
        .map(|d| d.district_id().to_string())
        .collect();
    let n_used = green.len() - excluded_zero_mail.len();
    if n_used < 2 {
        return Err(WlsError::InsufficientData {
            needed: 2,
            got: n_used,
        });
    }

    let (s_xx, s_xy) = usable(green).fold((0.0, 0.0), |(sxx, sxy), d| {
        let x = d.ballot_c1() as f64;
        let y = d.mail_c1() as f64;
        let m = d.mail_total() as f64;
        (sxx + x * x / m, sxy + x * y / m)
    });
    if s_xx == 0.0 {
        return Err(WlsError::AllZeroRegressor);
    }
    let k_hat = s_xy / s_xx;

    let mut used_ids = Vec::with_capacity(n_used);
    let mut residuals = Vec::with_capacity(n_used);
    let mut rss = 0.0;
    for d in usable(green) {
        let r = d.mail_c1() as f64 - k_hat * d.ballot_c1() as f64;
        rss += r * r / d.mail_total() as f64;
        used_ids.push(d.district_id().to_string());
        residuals.push(r);
    }
    let dof = n_used - 1;
    let sigma2_hat = rss / dof as f64;

    Ok(RegressionFit {
        k_hat,
        sigma2_hat,
        s_xx,
        var_k_hat: sigma2_hat / s_xx,
        dof,
        n_used,
        used_ids,
        residuals,
        excluded_zero_mail,
    })
}

/// The one-column problem that [`fit_through_origin`] specializes.
pub fn through_origin_problem(green: &[DistrictRecord]) -> Result<GeneralWlsProblem, WlsError> {
    let x: Vec<f64> = usable(green).map(|d| d.ballot_c1() as f64).collect();
    let y = usable(green).map(|d| d.mail_c1() as f64).collect();
    let w = usable(green).map(|d| d.mail_total() as f64).collect();
    if x.is_empty() {
        return Err(WlsError::InsufficientData { needed: 2, got: 0 });
    }
    GeneralWlsProblem::new(Matrix::column(&x), y, w)
}
