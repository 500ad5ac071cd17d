use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ballot_audit::analysis::{analyze, AnalysisOptions};
use ballot_audit::election_data::{
    parse_dataset, partition_variant, votes_to_reverse, ElectionDataset, ThresholdRule, Variant,
};
use ballot_audit::montecarlo::{calibrate_with, Execution, ModelParameters, MIN_REPLICATIONS};
use ballot_audit::plot::{plot_points, render_svg, PlotOptions};
use ballot_audit::scenario::{build_reversal_scenario, AllocationBase};
use ballot_audit::wls::fit_through_origin;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod report;

use report::{CliError, Envelope};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "ballot-audit",
    version,
    about = "Regression audit of contested mail-vote counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// District CSV file
    input: PathBuf,
    /// Treat dubious districts as contaminated too
    #[arg(long)]
    include_dubious: bool,
    /// Print a JSON envelope instead of text
    #[arg(long)]
    json: bool,
}

impl Common {
    fn variant(&self) -> Variant {
        Variant::from_flag(self.include_dubious)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    MailTotal,
    CandidateTwoMail,
}

impl From<BaseArg> for AllocationBase {
    fn from(b: BaseArg) -> Self {
        match b {
            BaseArg::MailTotal => AllocationBase::MailTotal,
            BaseArg::CandidateTwoMail => AllocationBase::CandidateTwoMail,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model and report the reversal probability
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Also report a two-sided prediction interval at this level
        #[arg(long)]
        level: Option<f64>,
        /// Require a strict win (margin/2 + 1) instead of half the margin rounded up
        #[arg(long)]
        strict_win: bool,
    },
    /// Build the counterfactual dataset with votes reassigned in red districts
    Scenario {
        #[command(flatten)]
        common: Common,
        /// Votes to move [default: half the official margin, rounded up]
        #[arg(long)]
        votes: Option<u64>,
        #[arg(long, value_enum, default_value = "mail-total")]
        base: BaseArg,
        /// Write the modified CSV here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write an SVG scatter of ballot vs mail percentages
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Plot the counterfactual dataset with this many votes moved
        #[arg(long)]
        votes: Option<u64>,
    },
    /// Check that the t approximation holds on this district geometry
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000, value_parser = parse_replications)]
        replications: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// True slope [default: fitted value]
        #[arg(long)]
        k: Option<f64>,
        /// True noise scale [default: fitted value]
        #[arg(long)]
        sigma: Option<f64>,
        /// Run replications on one thread
        #[arg(long)]
        serial: bool,
    },
    /// Parse and summarize a district CSV
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_replications(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n < MIN_REPLICATIONS {
        return Err(format!("need at least {MIN_REPLICATIONS} replications"));
    }
    Ok(n)
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze { .. } => "analyze",
            Command::Scenario { .. } => "scenario",
            Command::Plot { .. } => "plot",
            Command::Calibrate { .. } => "calibrate",
            Command::Validate { .. } => "validate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Analyze { common, .. }
            | Command::Scenario { common, .. }
            | Command::Plot { common, .. }
            | Command::Calibrate { common, .. }
            | Command::Validate { common } => common,
        }
    }
}

fn load(path: &Path) -> Result<ElectionDataset, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(parse_dataset(io::BufReader::new(file)).map_err(ballot_audit::Error::from)?)
}

/// Result of a subcommand: JSON payload plus its text rendering.
struct Output {
    json: serde_json::Value,
    text: String,
}

impl Output {
    fn new<T: Serialize>(value: &T, text: String) -> Self {
        Output {
            json: serde_json::to_value(value).expect("report serializes"),
            text,
        }
    }
}

fn run(cmd: &Command) -> Result<Output, CliError> {
    let common = cmd.common();
    let ds = load(&common.input)?;
    let variant = common.variant();
    match cmd {
        Command::Analyze {
            level, strict_win, ..
        } => {
            let opts = AnalysisOptions {
                variant,
                rule: if *strict_win {
                    ThresholdRule::StrictWin
                } else {
                    ThresholdRule::HalfMarginRoundedUp
                },
                level: *level,
            };
            let a = analyze(&ds, &opts)?;
            let r = report::AnalyzeReport::from(&a);
            Ok(Output::new(&r, r.to_text()))
        }
        Command::Scenario {
            votes, base, out, ..
        } => {
            let red = partition_variant(&ds, variant).red;
            let votes = match votes {
                Some(v) => *v,
                None => votes_to_reverse(ds.margin_official(), ThresholdRule::HalfMarginRoundedUp)
                    .map_err(ballot_audit::Error::from)?,
            };
            let s = build_reversal_scenario(&ds, &red, votes, (*base).into())
                .map_err(ballot_audit::Error::from)?;
            let csv = s.modified.to_csv_string();
            if let Some(path) = out {
                fs::write(path, &csv).map_err(|e| CliError::io(path, e))?;
            }
            let r = report::ScenarioReport::new(&s, out.as_deref(), csv);
            Ok(Output::new(&r, r.to_text()))
        }
        Command::Plot { out, votes, .. } => {
            let (ds, title) = match votes {
                Some(v) => {
                    let red = partition_variant(&ds, variant).red;
                    let s = build_reversal_scenario(&ds, &red, *v, AllocationBase::MailTotal)
                        .map_err(ballot_audit::Error::from)?;
                    (s.modified, "Mail and ballot vote percentages (modified)")
                }
                None => (ds, "Mail and ballot vote percentages"),
            };
            let opts = PlotOptions {
                title: title.to_string(),
                variant,
            };
            fs::write(out, render_svg(&ds, &opts)).map_err(|e| CliError::io(out, e))?;
            let points = plot_points(&ds, variant);
            let r = report::PlotReport {
                path: out.display().to_string(),
                green_points: points.iter().filter(|p| !p.red).count(),
                red_points: points.iter().filter(|p| p.red).count(),
                dubious_points: points.iter().filter(|p| p.dubious).count(),
            };
            Ok(Output::new(&r, r.to_text()))
        }
        Command::Calibrate {
            replications,
            seed,
            k,
            sigma,
            serial,
            ..
        } => {
            let (k, sigma) = match (k, sigma) {
                (Some(k), Some(s)) => (*k, *s),
                _ => {
                    let fit = fit_through_origin(&partition_variant(&ds, variant).green)
                        .map_err(ballot_audit::Error::from)?;
                    (k.unwrap_or(fit.k_hat), sigma.unwrap_or(fit.sigma_hat()))
                }
            };
            let params = ModelParameters::new(k, sigma).map_err(ballot_audit::Error::from)?;
            let execution = if *serial {
                Execution::Serial
            } else {
                Execution::Parallel
            };
            let rep = calibrate_with(&ds, &params, variant, *replications, *seed, execution)
                .map_err(ballot_audit::Error::from)?;
            Ok(Output::new(&rep, report::calibration_text(&rep)))
        }
        Command::Validate { .. } => {
            let r = report::ValidateReport::new(&ds);
            Ok(Output::new(&r, r.to_text()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = &cli.command;
    let json = cmd.common().json;
    let result = run(cmd);
    let stdout = io::stdout();
    let mut out = stdout.lock();

    // The scenario CSV goes to stdout in text mode unless --out was given;
    // the summary then moves to stderr.
    let csv_to_stdout = matches!(cmd, Command::Scenario { out: None, .. }) && !json;

    let code = match &result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => e.exit_code(),
    };
    let written = match result {
        Ok(output) if json => {
            let env = Envelope::ok(cmd.name(), output.json);
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&env).expect("serializes")
            )
        }
        Ok(output) if csv_to_stdout => {
            let csv = output.json["csv"].as_str().unwrap_or_default().to_string();
            eprint!("{}", output.text);
            out.write_all(csv.as_bytes())
        }
        Ok(output) => write!(out, "{}", output.text),
        Err(e) if json => {
            let env = Envelope::err(cmd.name(), &e);
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&env).expect("serializes")
            )
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(())
        }
    };
    match written {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
            eprintln!("error: writing output: {e}");
            ExitCode::FAILURE
        }
        _ => code,
    }
}
