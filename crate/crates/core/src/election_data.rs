//! District records, CSV ingestion and the red-district aggregates.
//!
//! A dataset is a list of districts, each with ballot and mail counts for a
//! two-candidate race. "Candidate 1" is the trailing candidate whose possible
//! loss through miscounted mail votes is being audited; "candidate 2" is the
//! official winner. Every count is a count of valid votes.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header line of the CSV format, field for field.
pub const CSV_HEADER: [&str; 7] = [
    "district_id",
    "name",
    "ballot_total",
    "ballot_c1",
    "mail_total",
    "mail_c1",
    "status",
];

/// The bundled 117-district dataset.
pub const BUNDLED_CSV: &str = include_str!("../data/districts.csv");

/// Contamination label of a district.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    /// Counting found to be regular; used as fitting data.
    Green,
    /// Mail-vote counting found to be irregular.
    Red,
    /// Questionable, but not part of the irregular set by default.
    Dubious,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Green => "green",
            Status::Red => "red",
            Status::Dubious => "dubious",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "green" => Ok(Status::Green),
            "red" => Ok(Status::Red),
            "dubious" => Ok(Status::Dubious),
            other => Err(other.to_string()),
        }
    }
}

/// Which districts are treated as contaminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Only `red` districts; `dubious` ones stay in the fitting set.
    #[default]
    RedOnly,
    /// `red` and `dubious` districts are both held out.
    IncludeDubious,
}

impl Variant {
    pub fn include_dubious(self) -> bool {
        matches!(self, Variant::IncludeDubious)
    }

    pub fn from_flag(include_dubious: bool) -> Self {
        if include_dubious {
            Variant::IncludeDubious
        } else {
            Variant::RedOnly
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("ballot votes for candidate exceed ballot total ({ballot_c1} > {ballot_total})")]
    BallotInversion { ballot_c1: u64, ballot_total: u64 },
    #[error("mail votes for candidate exceed mail total ({mail_c1} > {mail_total})")]
    MailInversion { mail_c1: u64, mail_total: u64 },
}

/// One voting district.
///
/// Invariants: `ballot_c1 <= ballot_total` and `mail_c1 <= mail_total`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistrictRecord {
    district_id: String,
    name: String,
    ballot_total: u64,
    ballot_c1: u64,
    mail_total: u64,
    mail_c1: u64,
    status: Status,
}

impl DistrictRecord {
    pub fn new(
        district_id: impl Into<String>,
        name: impl Into<String>,
        ballot_total: u64,
        ballot_c1: u64,
        mail_total: u64,
        mail_c1: u64,
        status: Status,
    ) -> Result<Self, RecordError> {
        if ballot_c1 > ballot_total {
            return Err(RecordError::BallotInversion {
                ballot_c1,
                ballot_total,
            });
        }
        if mail_c1 > mail_total {
            return Err(RecordError::MailInversion {
                mail_c1,
                mail_total,
            });
        }
        Ok(DistrictRecord {
            district_id: district_id.into(),
            name: name.into(),
            ballot_total,
            ballot_c1,
            mail_total,
            mail_c1,
            status,
        })
    }

    pub fn district_id(&self) -> &str {
        &self.district_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn ballot_total(&self) -> u64 {
        self.ballot_total
    }

    pub fn ballot_c1(&self) -> u64 {
        self.ballot_c1
    }

    pub fn ballot_c2(&self) -> u64 {
        self.ballot_total - self.ballot_c1
    }

    pub fn mail_total(&self) -> u64 {
        self.mail_total
    }

    pub fn mail_c1(&self) -> u64 {
        self.mail_c1
    }

    pub fn mail_c2(&self) -> u64 {
        self.mail_total - self.mail_c1
    }

    /// All valid votes, ballot plus mail.
    pub fn total_votes(&self) -> u64 {
        self.ballot_total + self.mail_total
    }

    pub fn votes_c1(&self) -> u64 {
        self.ballot_c1 + self.mail_c1
    }

    pub fn votes_c2(&self) -> u64 {
        self.ballot_c2() + self.mail_c2()
    }

    /// Candidate 1's share of the ballot votes, `None` when there were none.
    pub fn ballot_share_c1(&self) -> Option<f64> {
        (self.ballot_total > 0).then(|| self.ballot_c1 as f64 / self.ballot_total as f64)
    }

    /// Candidate 1's share of the mail votes, `None` when there were none.
    pub fn mail_share_c1(&self) -> Option<f64> {
        (self.mail_total > 0).then(|| self.mail_c1 as f64 / self.mail_total as f64)
    }

    /// Replaces candidate 1's mail count; the mail total stays fixed.
    pub fn with_mail_c1(&self, mail_c1: u64) -> Result<Self, RecordError> {
        if mail_c1 > self.mail_total {
            return Err(RecordError::MailInversion {
                mail_c1,
                mail_total: self.mail_total,
            });
        }
        Ok(DistrictRecord {
            mail_c1,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("duplicate district id {0:?}")]
    DuplicateId(String),
    #[error("the set of contaminated districts is empty")]
    EmptyRedSet,
    #[error("candidate 2 does not lead (margin {margin}); there is no result to reverse")]
    NoLeadToReverse { margin: i64 },
}

/// A validated collection of districts with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ElectionDataset {
    districts: Vec<DistrictRecord>,
}

impl ElectionDataset {
    pub fn new(districts: Vec<DistrictRecord>) -> Result<Self, DataError> {
        let mut seen = HashSet::with_capacity(districts.len());
        for d in &districts {
            if !seen.insert(d.district_id.as_str()) {
                return Err(DataError::DuplicateId(d.district_id.clone()));
            }
        }
        Ok(ElectionDataset { districts })
    }

    pub fn districts(&self) -> &[DistrictRecord] {
        &self.districts
    }

    pub fn len(&self) -> usize {
        self.districts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.districts.is_empty()
    }

    pub fn get(&self, district_id: &str) -> Option<&DistrictRecord> {
        self.districts.iter().find(|d| d.district_id == district_id)
    }

    pub fn total_c1(&self) -> u64 {
        self.districts.iter().map(DistrictRecord::votes_c1).sum()
    }

    pub fn total_c2(&self) -> u64 {
        self.districts.iter().map(DistrictRecord::votes_c2).sum()
    }

    /// Official margin: candidate 2's total minus candidate 1's total.
    pub fn margin_official(&self) -> i64 {
        self.total_c2() as i64 - self.total_c1() as i64
    }

    pub fn count_status(&self, status: Status) -> usize {
        self.districts.iter().filter(|d| d.status == status).count()
    }

    /// Writes the dataset in the CSV format read by [`parse_dataset`].
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        out.write_record(CSV_HEADER)?;
        for d in &self.districts {
            out.write_record([
                d.district_id.as_str(),
                d.name.as_str(),
                &d.ballot_total.to_string(),
                &d.ballot_c1.to_string(),
                &d.mail_total.to_string(),
                &d.mail_c1.to_string(),
                d.status.as_str(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing CSV to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("input is empty; expected header `{}`", CSV_HEADER.join(","))]
    MissingHeader,
    #[error("bad header {found:?}; expected `{}`", CSV_HEADER.join(","))]
    BadHeader { found: String },
    #[error("missing column `{column}` (row has {found} fields, need 7)")]
    MissingColumn { column: &'static str, found: usize },
    #[error("too many fields ({found}, need 7)")]
    ExtraColumns { found: usize },
    #[error("bad integer {value:?} in column `{column}`")]
    BadInteger { column: &'static str, value: String },
    #[error("empty district id")]
    EmptyId,
    #[error("unknown status {0:?} (expected green, red or dubious)")]
    UnknownStatus(String),
    #[error("duplicate district id {0:?}")]
    DuplicateId(String),
    #[error("{0}")]
    Record(#[from] RecordError),
    #[error("malformed CSV: {0}")]
    Syntax(String),
}

/// A CSV ingestion failure, pinned to a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: u64,
    pub kind: ParseErrorKind,
}

fn parse_count(raw: &str, column: &'static str) -> Result<u64, ParseErrorKind> {
    let bad = || ParseErrorKind::BadInteger {
        column,
        value: raw.to_string(),
    };
    if raw.is_empty() || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    raw.parse().map_err(|_| bad())
}

fn record_from_fields(fields: &csv::StringRecord) -> Result<DistrictRecord, ParseErrorKind> {
    if fields.len() < CSV_HEADER.len() {
        return Err(ParseErrorKind::MissingColumn {
            column: CSV_HEADER[fields.len()],
            found: fields.len(),
        });
    }
    if fields.len() > CSV_HEADER.len() {
        return Err(ParseErrorKind::ExtraColumns {
            found: fields.len(),
        });
    }
    let id = &fields[0];
    if id.is_empty() {
        return Err(ParseErrorKind::EmptyId);
    }
    let ballot_total = parse_count(&fields[2], CSV_HEADER[2])?;
    let ballot_c1 = parse_count(&fields[3], CSV_HEADER[3])?;
    let mail_total = parse_count(&fields[4], CSV_HEADER[4])?;
    let mail_c1 = parse_count(&fields[5], CSV_HEADER[5])?;
    let status = fields[6]
        .parse::<Status>()
        .map_err(ParseErrorKind::UnknownStatus)?;
    Ok(DistrictRecord::new(
        id,
        &fields[1],
        ballot_total,
        ballot_c1,
        mail_total,
        mail_c1,
        status,
    )?)
}

fn syntax_error(err: csv::Error, fallback_line: u64) -> ParseError {
    let line = err.position().map_or(fallback_line, |p| p.line());
    let kind = match err.kind() {
        csv::ErrorKind::Utf8 { .. } => ParseErrorKind::Syntax("invalid UTF-8".to_string()),
        _ => ParseErrorKind::Syntax(err.to_string()),
    };
    ParseError { line, kind }
}

/// Parses and validates a dataset from CSV text.
///
/// The first line must be exactly the [`CSV_HEADER`] fields. Integers are
/// plain base-10 digits. LF and CRLF endings are both accepted, and fields may
/// be double-quoted.
pub fn parse_dataset<R: Read>(source: R) -> Result<ElectionDataset, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();

    let header = match records.next() {
        None => {
            return Err(ParseError {
                line: 1,
                kind: ParseErrorKind::MissingHeader,
            })
        }
        Some(Err(e)) => return Err(syntax_error(e, 1)),
        Some(Ok(h)) => h,
    };
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(ParseError {
            line: header.position().map_or(1, |p| p.line()),
            kind: ParseErrorKind::BadHeader {
                found: header.iter().collect::<Vec<_>>().join(","),
            },
        });
    }

    let mut districts = Vec::new();
    let mut seen = HashSet::new();
    let mut last_line = 1;
    for row in records {
        let row = row.map_err(|e| syntax_error(e, last_line + 1))?;
        let line = row.position().map_or(last_line + 1, |p| p.line());
        last_line = line;
        let record = record_from_fields(&row).map_err(|kind| ParseError { line, kind })?;
        if !seen.insert(record.district_id.clone()) {
            return Err(ParseError {
                line,
                kind: ParseErrorKind::DuplicateId(record.district_id),
            });
        }
        districts.push(record);
    }
    Ok(ElectionDataset { districts })
}

pub fn parse_dataset_str(text: &str) -> Result<ElectionDataset, ParseError> {
    parse_dataset(text.as_bytes())
}

/// The bundled 117-district dataset (103 green, 11 red, 3 dubious).
pub fn bundled_dataset() -> ElectionDataset {
    parse_dataset_str(BUNDLED_CSV).expect("bundled dataset is valid")
}

/// Districts split into the fitting set and the held-out set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub green: Vec<DistrictRecord>,
    pub red: Vec<DistrictRecord>,
}

/// Splits districts into fitting (`green`) and held-out (`red`) sets.
///
/// `dubious` districts go with the red ones only when
/// `include_dubious_as_red` is set. Dataset order is preserved in both lists.
pub fn partition(ds: &ElectionDataset, include_dubious_as_red: bool) -> Partition {
    let (red, green) = ds.districts.iter().cloned().partition(|d| match d.status {
        Status::Red => true,
        Status::Dubious => include_dubious_as_red,
        Status::Green => false,
    });
    Partition { green, red }
}

pub fn partition_variant(ds: &ElectionDataset, variant: Variant) -> Partition {
    partition(ds, variant.include_dubious())
}

/// Sums over the held-out districts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedAggregate {
    /// Candidate 1's ballot votes.
    pub ballot_c1: u64,
    /// All mail votes.
    pub mail_total: u64,
    /// Candidate 1's counted mail votes.
    pub mail_c1_counted: u64,
}

pub fn aggregate_red(red: &[DistrictRecord]) -> Result<RedAggregate, DataError> {
    if red.is_empty() {
        return Err(DataError::EmptyRedSet);
    }
    Ok(red.iter().fold(
        RedAggregate {
            ballot_c1: 0,
            mail_total: 0,
            mail_c1_counted: 0,
        },
        |acc, d| RedAggregate {
            ballot_c1: acc.ballot_c1 + d.ballot_c1,
            mail_total: acc.mail_total + d.mail_total,
            mail_c1_counted: acc.mail_c1_counted + d.mail_c1,
        },
    ))
}

/// How many switched votes count as reversing the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// Half the margin, rounded up. An even margin then only reaches a tie.
    #[default]
    HalfMarginRoundedUp,
    /// Smallest number of switched votes giving candidate 1 a strict win.
    StrictWin,
}

/// Votes that must move from candidate 2 to candidate 1 to reverse `margin`.
pub fn votes_to_reverse(margin: i64, rule: ThresholdRule) -> Result<u64, DataError> {
    if margin <= 0 {
        return Err(DataError::NoLeadToReverse { margin });
    }
    let margin = margin as u64;
    Ok(match rule {
        ThresholdRule::HalfMarginRoundedUp => margin.div_ceil(2),
        ThresholdRule::StrictWin => margin / 2 + 1,
    })
}

/// Candidate 1's mail total in the red districts needed to reverse the
/// official result: counted votes plus half the margin, rounded up.
pub fn reversal_threshold(ds: &ElectionDataset, red: &[DistrictRecord]) -> Result<u64, DataError> {
    reversal_threshold_with(ds, red, ThresholdRule::default())
}

pub fn reversal_threshold_with(
    ds: &ElectionDataset,
    red: &[DistrictRecord],
    rule: ThresholdRule,
) -> Result<u64, DataError> {
    let agg = aggregate_red(red)?;
    Ok(agg.mail_c1_counted + votes_to_reverse(ds.margin_official(), rule)?)
}
