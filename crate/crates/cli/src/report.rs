//! Output shapes for each subcommand and their text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::process::ExitCode;

use ballot_audit::analysis::Analysis;
use ballot_audit::election_data::{partition, ElectionDataset, Status, ThresholdRule, Variant};
use ballot_audit::montecarlo::CalibrationReport;
use ballot_audit::prediction::{PredictionError, PredictionInterval, ReversalReport};
use ballot_audit::scenario::{AllocationBase, ScenarioResult};
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Io { path: String, source: io::Error },
    Audit(ballot_audit::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(1)
    }

    fn kind(&self) -> &'static str {
        use ballot_audit::Error as E;
        match self {
            CliError::Io { .. } => "io",
            CliError::Audit(E::Parse(_)) => "parse",
            CliError::Audit(E::Data(_)) => "data",
            CliError::Audit(E::Fit(_)) => "fit",
            CliError::Audit(E::Prediction(_)) => "prediction",
            CliError::Audit(E::Scenario(_)) => "scenario",
            CliError::Audit(E::MonteCarlo(_)) => "calibration",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
            CliError::Audit(e) => write!(f, "{e}"),
        }
    }
}

impl From<ballot_audit::Error> for CliError {
    fn from(e: ballot_audit::Error) -> Self {
        CliError::Audit(e)
    }
}

#[derive(Serialize)]
pub struct ErrorBody {
    kind: &'static str,
    message: String,
    /// Input line for parse errors.
    line: Option<u64>,
    /// The flagged report when the fit was exact (σ̂² = 0).
    degenerate_report: Option<ReversalReport>,
}

/// `{command, ok, result}` or `{command, ok, error}`.
#[derive(Serialize)]
pub struct Envelope {
    command: &'static str,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorBody>,
}

impl Envelope {
    pub fn ok(command: &'static str, result: serde_json::Value) -> Self {
        Envelope {
            command,
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    pub fn err(command: &'static str, e: &CliError) -> Self {
        let line = match e {
            CliError::Audit(ballot_audit::Error::Parse(p)) => Some(p.line),
            _ => None,
        };
        let degenerate_report = match e {
            CliError::Audit(ballot_audit::Error::Prediction(PredictionError::DegenerateFit(r))) => {
                Some((**r).clone())
            }
            _ => None,
        };
        Envelope {
            command,
            ok: false,
            result: None,
            error: Some(ErrorBody {
                kind: e.kind(),
                message: e.to_string(),
                line,
                degenerate_report,
            }),
        }
    }
}

/// Ten significant digits, switching to exponent form for very small or
/// large magnitudes.
fn sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..10).contains(&mag) {
        format!("{x:.9e}")
    } else {
        let decimals = (9 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    }
}

fn variant_label(v: Variant) -> &'static str {
    match v {
        Variant::RedOnly => "red only",
        Variant::IncludeDubious => "red + dubious",
    }
}

#[derive(Serialize)]
pub struct AnalyzeReport {
    variant: Variant,
    threshold_rule: ThresholdRule,
    n_green: usize,
    n_red: usize,
    /// Fitting districts actually used (mail_total > 0).
    n_used: usize,
    margin_official: i64,
    k_hat: f64,
    sigma2_hat: f64,
    var_k_hat: f64,
    s_xx: f64,
    dof: usize,
    v_b_red: u64,
    m_red: u64,
    v_m_counted: u64,
    v_threshold: u64,
    point_prediction: f64,
    pred_sd: f64,
    t_stat: f64,
    p: f64,
    log10_p: f64,
    interval: Option<PredictionInterval>,
}

impl From<&Analysis> for AnalyzeReport {
    fn from(a: &Analysis) -> Self {
        AnalyzeReport {
            variant: a.variant,
            threshold_rule: a.rule,
            n_green: a.n_green,
            n_red: a.n_red,
            n_used: a.fit.n_used,
            margin_official: a.margin_official,
            k_hat: a.fit.k_hat,
            sigma2_hat: a.fit.sigma2_hat,
            var_k_hat: a.fit.var_k_hat,
            s_xx: a.fit.s_xx,
            dof: a.report.dof,
            v_b_red: a.report.v_b_red,
            m_red: a.report.m_red,
            v_m_counted: a.report.v_m_counted,
            v_threshold: a.report.v_threshold,
            point_prediction: a.report.point_prediction,
            pred_sd: a.report.pred_sd,
            t_stat: a.report.t_stat,
            p: a.report.p_reversal.value,
            log10_p: a.report.p_reversal.log10(),
            interval: a.interval,
        }
    }
}

impl AnalyzeReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant            {}", variant_label(self.variant));
        let _ = writeln!(
            s,
            "districts          N = {} fitting, M = {} held out",
            self.n_green, self.n_red
        );
        let _ = writeln!(s, "official margin    {}", self.margin_official);
        let _ = writeln!(s, "k_hat              {}", sig(self.k_hat));
        let _ = writeln!(s, "sigma2_hat         {}", sig(self.sigma2_hat));
        let _ = writeln!(s, "var(k_hat)         {}", sig(self.var_k_hat));
        let _ = writeln!(s, "v_b (held out)     {}", self.v_b_red);
        let _ = writeln!(s, "m (held out)       {}", self.m_red);
        let _ = writeln!(s, "v_m counted        {}", self.v_m_counted);
        let _ = writeln!(s, "predicted v_m      {}", sig(self.point_prediction));
        let _ = writeln!(s, "prediction sd      {}", sig(self.pred_sd));
        let _ = writeln!(s, "threshold V~       {}", self.v_threshold);
        let _ = writeln!(s, "t statistic        {}", sig(self.t_stat));
        let _ = writeln!(s, "dof                {}", self.dof);
        let _ = writeln!(s, "p(reversal)        {:.9e}", self.p);
        let _ = writeln!(s, "log10 p            {}", sig(self.log10_p));
        if let Some(iv) = &self.interval {
            let _ = writeln!(
                s,
                "{:.1}% interval     [{}, {}]",
                100.0 * iv.level,
                sig(iv.lower),
                sig(iv.upper)
            );
        }
        s
    }
}

#[derive(Serialize)]
pub struct ScenarioReport {
    districts_changed: usize,
    total_moved: u64,
    resulting_margin: i64,
    base: AllocationBase,
    votes_moved_per_district: BTreeMap<String, u64>,
    output_path: Option<String>,
    /// The modified dataset when no output path was given.
    csv: Option<String>,
}

impl ScenarioReport {
    pub fn new(s: &ScenarioResult, out: Option<&Path>, csv: String) -> Self {
        ScenarioReport {
            districts_changed: s.votes_moved_per_district.len(),
            total_moved: s.total_moved,
            resulting_margin: s.resulting_margin,
            base: s.base,
            votes_moved_per_district: s.votes_moved_per_district.clone(),
            output_path: out.map(|p| p.display().to_string()),
            csv: out.is_none().then_some(csv),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "moved {} votes across {} districts",
            self.total_moved, self.districts_changed
        );
        let _ = writeln!(
            s,
            "resulting margin (candidate 1 - candidate 2): {:+}",
            self.resulting_margin
        );
        if let Some(p) = &self.output_path {
            let _ = writeln!(s, "wrote {p}");
        }
        s
    }
}

#[derive(Serialize)]
pub struct PlotReport {
    pub path: String,
    pub green_points: usize,
    pub red_points: usize,
    pub dubious_points: usize,
}

impl PlotReport {
    pub fn to_text(&self) -> String {
        format!(
            "wrote {} ({} green, {} red, {} dubious points)\n",
            self.path, self.green_points, self.red_points, self.dubious_points
        )
    }
}

#[derive(Serialize)]
pub struct ValidateReport {
    districts: usize,
    green: usize,
    red: usize,
    dubious: usize,
    partition_red_only: [usize; 2],
    partition_include_dubious: [usize; 2],
    total_c1: u64,
    total_c2: u64,
    margin_official: i64,
    red_mail_total: u64,
    zero_mail_districts: usize,
}

impl ValidateReport {
    pub fn new(ds: &ElectionDataset) -> Self {
        let sizes = |flag| {
            let p = partition(ds, flag);
            [p.green.len(), p.red.len()]
        };
        ValidateReport {
            districts: ds.len(),
            green: ds.count_status(Status::Green),
            red: ds.count_status(Status::Red),
            dubious: ds.count_status(Status::Dubious),
            partition_red_only: sizes(false),
            partition_include_dubious: sizes(true),
            total_c1: ds.total_c1(),
            total_c2: ds.total_c2(),
            margin_official: ds.margin_official(),
            red_mail_total: ds
                .districts()
                .iter()
                .filter(|d| d.status() == Status::Red)
                .map(|d| d.mail_total())
                .sum(),
            zero_mail_districts: ds
                .districts()
                .iter()
                .filter(|d| d.mail_total() == 0)
                .count(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} districts: {} green, {} red, {} dubious",
            self.districts, self.green, self.red, self.dubious
        );
        let _ = writeln!(
            s,
            "partition (fitting, held out): {:?} red only, {:?} with dubious",
            self.partition_red_only, self.partition_include_dubious
        );
        let _ = writeln!(s, "candidate 1 total  {}", self.total_c1);
        let _ = writeln!(s, "candidate 2 total  {}", self.total_c2);
        let _ = writeln!(s, "official margin    {}", self.margin_official);
        let _ = writeln!(s, "red mail total     {}", self.red_mail_total);
        if self.zero_mail_districts > 0 {
            let _ = writeln!(
                s,
                "{} districts have no mail votes and will not be fitted",
                self.zero_mail_districts
            );
        }
        s
    }
}

pub fn calibration_text(r: &CalibrationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "variant            {}", variant_label(r.variant));
    let _ = writeln!(
        s,
        "replications       {} (seed {}, {} failed)",
        r.replications, r.seed, r.failures
    );
    let _ = writeln!(s, "true k, sigma      {}, {}", sig(r.k), sig(r.sigma));
    let _ = writeln!(s, "dof                {}", r.dof);
    let _ = writeln!(
        s,
        "KS distance        {} (95% critical {}) {}",
        sig(r.ks_distance),
        sig(r.ks_critical_95),
        if r.ks_pass { "pass" } else { "FAIL" }
    );
    let _ = writeln!(s, "median t           {}", sig(r.median_t));
    let _ = writeln!(s, "clamp rate         {}", sig(r.clamp_rate));
    let _ = writeln!(
        s,
        "quantiles          p   empirical      t(dof)         |diff|"
    );
    for q in &r.quantile_errors {
        let _ = writeln!(
            s,
            "                   {:<4} {:<14} {:<14} {}",
            q.p,
            sig(q.empirical),
            sig(q.theoretical),
            sig(q.abs_error)
        );
    }
    s
}
