//! Reading and writing of the ledger CSV format.
//!
//! Field data arrives the way it was written down in the orchard: dates like
//! `Mar-2` without a year, weights like `0,29` with a decimal comma. Parsing
//! accepts those; emission is always canonical (ISO dates, decimal points,
//! deterministic row order) so a parse/emit round trip is the identity.

use std::io::Read;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::phenology::{BbchStage, CountRecord, ObjectType, RuleId, SeasonLedger, Violation};

/// Column names of the ledger format, matched case-insensitively.
pub const LEDGER_COLUMNS: [&str; 8] = [
    "Date",
    "BBCH",
    "treeID",
    "branchID",
    "branchColor",
    "objectType",
    "objectCount",
    "cropWeight",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
}

/// Accepted CSV dialect. Decimal separators and date formats are fixed
/// behavior (both `.` and `,` decimals, both `MMM-D` and ISO dates are read);
/// only the field delimiter varies.
#[derive(Debug, Clone, Copy)]
pub struct CsvDialect {
    pub delimiter: u8,
}

impl Default for CsvDialect {
    fn default() -> Self {
        CsvDialect { delimiter: b',' }
    }
}

const MONTHS: [&str; 12] = [
    "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
];

/// Parse a campaign date: either `MMM-D` / `MMM-DD` resolved into the season
/// year, or a full ISO `YYYY-MM-DD`.
pub fn parse_flex_date(s: &str, season_year: i32) -> Result<NaiveDate, String> {
    let trimmed = s.trim();
    if let Ok(date) = NaiveDate::parse_from_str(trimmed, "%Y-%m-%d") {
        return Ok(date);
    }
    let (month_str, day_str) = trimmed
        .split_once('-')
        .ok_or_else(|| format!("unrecognized date {trimmed:?}"))?;
    let month = MONTHS
        .iter()
        .position(|m| month_str.eq_ignore_ascii_case(m))
        .ok_or_else(|| format!("unknown month {month_str:?}"))? as u32
        + 1;
    let day: u32 = day_str
        .trim()
        .parse()
        .map_err(|_| format!("bad day of month {day_str:?}"))?;
    NaiveDate::from_ymd_opt(season_year, month, day)
        .ok_or_else(|| format!("no such date: {trimmed} in {season_year}"))
}

/// Parse a weight accepting both decimal separators: `0.29` and `0,29` both
/// give 0.29.
pub fn parse_flex_decimal(s: &str) -> Result<f64, String> {
    let trimmed = s.trim();
    let normalized = if trimmed.matches(',').count() == 1 && !trimmed.contains('.') {
        trimmed.replace(',', ".")
    } else {
        trimmed.to_string()
    };
    normalized
        .parse::<f64>()
        .map_err(|_| format!("not a number: {trimmed:?}"))
}

fn row_key(line: u64) -> Vec<String> {
    vec![format!("row {line}")]
}

/// Read ledger rows from a CSV stream.
///
/// The header must contain exactly the eight known column names, in any
/// order. Malformed rows are skipped and reported as violations carrying the
/// row number; only an unreadable stream or a broken header is a hard error.
///
/// One repair rule applies: a decimal-comma weight that was written without
/// quotes splits the last column in two, so a row with exactly one extra
/// field whose final two tokens rejoin into a number is accepted.
pub fn parse_csv<R: Read>(
    reader: R,
    season_year: i32,
    dialect: &CsvDialect,
) -> Result<(Vec<CountRecord>, Vec<Violation>), IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(dialect.delimiter)
        .from_reader(reader);

    let mut rows = csv_reader.records();
    let header = match rows.next() {
        Some(record) => record?,
        None => return Err(IngestError::Header("empty input, no header row".into())),
    };
    let trimmed: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let mut column_index = [0usize; 8];
    for (slot, name) in LEDGER_COLUMNS.iter().enumerate() {
        match trimmed.iter().position(|h| h.eq_ignore_ascii_case(name)) {
            Some(idx) => column_index[slot] = idx,
            None => {
                return Err(IngestError::Header(format!("missing column {name:?}")));
            }
        }
    }
    if trimmed.len() != LEDGER_COLUMNS.len() {
        let unknown: Vec<&String> = trimmed
            .iter()
            .filter(|h| !LEDGER_COLUMNS.iter().any(|c| h.eq_ignore_ascii_case(c)))
            .collect();
        return Err(IngestError::Header(format!("unknown columns {unknown:?}")));
    }
    let weight_idx = column_index[7];

    let mut records = Vec::new();
    let mut violations = Vec::new();

    for (i, row) in rows.enumerate() {
        let line = i as u64 + 2;
        let row = row?;
        let mut fields: Vec<String> = row.iter().map(|f| f.to_string()).collect();

        if fields.len() == LEDGER_COLUMNS.len() + 1 && weight_idx == LEDGER_COLUMNS.len() - 1 {
            // Unquoted decimal-comma weight: rejoin the split last column.
            let frac = fields.pop().expect("checked length");
            let whole = fields.pop().expect("checked length");
            if whole.trim().parse::<u64>().is_ok() && frac.trim().parse::<u64>().is_ok() {
                fields.push(format!("{},{}", whole.trim(), frac.trim()));
            } else {
                violations.push(Violation::error(
                    RuleId::MalformedRow,
                    format!(
                        "expected {} fields, found {}",
                        LEDGER_COLUMNS.len(),
                        row.len()
                    ),
                    row_key(line),
                ));
                continue;
            }
        } else if fields.len() != LEDGER_COLUMNS.len() {
            violations.push(Violation::error(
                RuleId::MalformedRow,
                format!(
                    "expected {} fields, found {}",
                    LEDGER_COLUMNS.len(),
                    fields.len()
                ),
                row_key(line),
            ));
            continue;
        }

        let field = |slot: usize| fields[column_index[slot]].trim();

        let date = match parse_flex_date(field(0), season_year) {
            Ok(d) => d,
            Err(msg) => {
                violations.push(Violation::error(RuleId::InvalidDate, msg, row_key(line)));
                continue;
            }
        };
        let bbch = match field(1).parse::<i64>() {
            Ok(code) => match BbchStage::new(code) {
                Ok(stage) => stage,
                Err(e) => {
                    violations.push(Violation::error(
                        RuleId::BbchOutOfRange,
                        e.to_string(),
                        row_key(line),
                    ));
                    continue;
                }
            },
            Err(_) => {
                violations.push(Violation::error(
                    RuleId::InvalidNumber,
                    format!("BBCH code is not an integer: {:?}", field(1)),
                    row_key(line),
                ));
                continue;
            }
        };
        let tree_id = field(2).to_string();
        let branch_id = field(3).to_string();
        if tree_id.is_empty() || branch_id.is_empty() {
            violations.push(Violation::error(
                RuleId::MalformedRow,
                "empty tree or branch identifier",
                row_key(line),
            ));
            continue;
        }
        let branch_color = match field(4) {
            "" => None,
            color => Some(color.to_string()),
        };
        let object_type = match ObjectType::parse(field(5)) {
            Ok(t) => t,
            Err(_) => {
                violations.push(Violation::error(
                    RuleId::UnknownObjectType,
                    format!("unknown object type {:?}", field(5)),
                    row_key(line),
                ));
                continue;
            }
        };
        let object_count = match field(6).parse::<i64>() {
            Ok(c) => c,
            Err(_) => {
                violations.push(Violation::error(
                    RuleId::InvalidNumber,
                    format!("object count is not an integer: {:?}", field(6)),
                    row_key(line),
                ));
                continue;
            }
        };
        let crop_weight_kg = match field(7) {
            "" => None,
            raw => match parse_flex_decimal(raw) {
                Ok(w) => Some(w),
                Err(msg) => {
                    violations.push(Violation::error(RuleId::InvalidNumber, msg, row_key(line)));
                    continue;
                }
            },
        };

        records.push(CountRecord {
            date,
            season: season_year,
            bbch,
            tree_id,
            branch_id,
            branch_color,
            object_type,
            object_count,
            crop_weight_kg,
        });
    }

    Ok((records, violations))
}

/// Convenience wrapper over [`parse_csv`] for in-memory text.
pub fn parse_csv_str(
    text: &str,
    season_year: i32,
) -> Result<(Vec<CountRecord>, Vec<Violation>), IngestError> {
    parse_csv(text.as_bytes(), season_year, &CsvDialect::default())
}

/// Emit a ledger in canonical form: ISO dates, decimal points, rows sorted
/// by `(tree_id, branch_id, date, object_type)`. Weights print in shortest
/// round-trip form, so `parse(emit(ledger))` reproduces the ledger exactly.
pub fn emit_csv(ledger: &SeasonLedger) -> String {
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    writer
        .write_record(LEDGER_COLUMNS)
        .expect("writing to memory cannot fail");
    for r in ledger.records() {
        writer
            .write_record([
                r.date.format("%Y-%m-%d").to_string(),
                r.bbch.to_string(),
                r.tree_id.clone(),
                r.branch_id.clone(),
                r.branch_color.clone().unwrap_or_default(),
                r.object_type.to_string(),
                r.object_count.to_string(),
                r.crop_weight_kg.map(|w| w.to_string()).unwrap_or_default(),
            ])
            .expect("writing to memory cannot fail");
    }
    String::from_utf8(writer.into_inner().expect("flush to memory"))
        .expect("csv output is valid utf-8")
}

/// Season year to use when re-parsing an emitted ledger.
pub fn season_of(ledger: &SeasonLedger) -> i32 {
    ledger
        .season()
        .unwrap_or_else(|| ledger.records().first().map(|r| r.date.year()).unwrap_or(0))
}
