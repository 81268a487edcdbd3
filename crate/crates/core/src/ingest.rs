//! Outage record ingestion.
//!
//! Records arrive as a headered CSV with one failure per row:
//!
//! ```text
//! record_id,occurred_at,restored_at,customers,device,lat,lon,major_storm
//! r1,1000,1060,150,SubstationBreaker,42.7,-73.9,true
//! ```
//!
//! Timestamps are integer minutes since an arbitrary epoch. Malformed rows
//! are never dropped silently: each one is listed in the [`ValidationReport`]
//! with its line number and a reason code.
//!
//! Event delimitation ([`group_into_events`]) is our own construction: the
//! operator feed does not mark where one storm ends and the next begins, so
//! an event is closed once a quiet gap passes with no repair pending.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "record_id,occurred_at,restored_at,customers,device,lat,lon,major_storm";
const COLUMNS: [&str; 8] = [
    "record_id",
    "occurred_at",
    "restored_at",
    "customers",
    "device",
    "lat",
    "lon",
    "major_storm",
];

/// Default quiet window separating two events (12 hours).
pub const DEFAULT_QUIET_GAP: i64 = 720;

/// Type of the disrupted component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceType {
    SubstationBreaker,
    Recloser,
    FusedDisc,
    Transformer,
    FusedCutout,
    Other,
}

impl DeviceType {
    pub const ALL: [DeviceType; 6] = [
        DeviceType::SubstationBreaker,
        DeviceType::Recloser,
        DeviceType::FusedDisc,
        DeviceType::Transformer,
        DeviceType::FusedCutout,
        DeviceType::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DeviceType::SubstationBreaker => "SubstationBreaker",
            DeviceType::Recloser => "Recloser",
            DeviceType::FusedDisc => "FusedDisc",
            DeviceType::Transformer => "Transformer",
            DeviceType::FusedCutout => "FusedCutout",
            DeviceType::Other => "Other",
        }
    }

    /// Case-insensitive label lookup. Unknown labels map to `Other`.
    pub fn from_label(label: &str) -> DeviceType {
        let wanted = label.trim();
        DeviceType::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(wanted))
            .unwrap_or(DeviceType::Other)
    }
}

impl fmt::Display for DeviceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeviceType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(DeviceType::from_label(s))
    }
}

/// One outage: a damaged component or an opened protective device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub record_id: String,
    pub occurred_at: i64,
    pub restored_at: i64,
    pub customers: u64,
    pub device: DeviceType,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub major_storm: bool,
}

impl FailureRecord {
    /// Downtime in minutes.
    pub fn duration(&self) -> i64 {
        self.restored_at - self.occurred_at
    }

    /// Whether the failure is waiting for repair at minute `t`.
    pub fn is_pending_at(&self, t: i64) -> bool {
        self.occurred_at <= t && t < self.restored_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    FieldCount,
    EmptyId,
    DuplicateId,
    BadTimestamp,
    NegativeDuration,
    BadCustomers,
    BadCoordinate,
    BadStormFlag,
    InvalidUtf8,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::FieldCount => "FIELD_COUNT",
            RejectReason::EmptyId => "EMPTY_ID",
            RejectReason::DuplicateId => "DUPLICATE_ID",
            RejectReason::BadTimestamp => "BAD_TIMESTAMP",
            RejectReason::NegativeDuration => "NEGATIVE_DURATION",
            RejectReason::BadCustomers => "BAD_CUSTOMERS",
            RejectReason::BadCoordinate => "BAD_COORDINATE",
            RejectReason::BadStormFlag => "BAD_STORM_FLAG",
            RejectReason::InvalidUtf8 => "INVALID_UTF8",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: u64,
    pub reason: RejectReason,
}

/// Outcome of a parse: `accepted + rejected` equals the number of data rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accepted: usize,
    pub rejected: usize,
    pub rejection_reasons: Vec<Rejection>,
}

impl ValidationReport {
    pub fn total(&self) -> usize {
        self.accepted + self.rejected
    }
}

fn parse_row(fields: &[&str]) -> std::result::Result<FailureRecord, RejectReason> {
    if fields.len() != COLUMNS.len() {
        return Err(RejectReason::FieldCount);
    }
    let record_id = fields[0].trim();
    if record_id.is_empty() {
        return Err(RejectReason::EmptyId);
    }
    let occurred_at: i64 = fields[1].trim().parse().map_err(|_| RejectReason::BadTimestamp)?;
    let restored_at: i64 = fields[2].trim().parse().map_err(|_| RejectReason::BadTimestamp)?;
    if restored_at < occurred_at {
        return Err(RejectReason::NegativeDuration);
    }
    let customers: u64 = fields[3].trim().parse().map_err(|_| RejectReason::BadCustomers)?;
    if customers == 0 {
        return Err(RejectReason::BadCustomers);
    }
    let device = DeviceType::from_label(fields[4]);
    let latitude = parse_coordinate(fields[5], 90.0)?;
    let longitude = parse_coordinate(fields[6], 180.0)?;
    let major_storm = match fields[7].trim().to_ascii_lowercase().as_str() {
        "true" => true,
        "false" => false,
        _ => return Err(RejectReason::BadStormFlag),
    };
    Ok(FailureRecord {
        record_id: record_id.to_string(),
        occurred_at,
        restored_at,
        customers,
        device,
        latitude,
        longitude,
        major_storm,
    })
}

fn parse_coordinate(raw: &str, bound: f64) -> std::result::Result<Option<f64>, RejectReason> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let value: f64 = raw.parse().map_err(|_| RejectReason::BadCoordinate)?;
    if !value.is_finite() || value.abs() > bound {
        return Err(RejectReason::BadCoordinate);
    }
    Ok(Some(value))
}

/// Parse an outage CSV stream.
///
/// A missing or mismatched header is fatal. Every other problem rejects only
/// the offending row. Record order follows the input.
pub fn parse_outage_csv<R: Read>(stream: R) -> Result<(Vec<FailureRecord>, ValidationReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(stream);

    let mut row = csv::ByteRecord::new();
    let header_ok = reader.read_byte_record(&mut row)?
        && row.len() == COLUMNS.len()
        && row
            .iter()
            .zip(COLUMNS)
            .all(|(got, want)| std::str::from_utf8(got).map(|s| s.trim() == want).unwrap_or(false));
    if !header_ok {
        return Err(Error::MissingHeader {
            expected: CSV_HEADER,
        });
    }

    let mut records = Vec::new();
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    while reader.read_byte_record(&mut row)? {
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let parsed = row
            .iter()
            .map(std::str::from_utf8)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| RejectReason::InvalidUtf8)
            .and_then(|fields| parse_row(&fields))
            .and_then(|rec| {
                if seen.insert(rec.record_id.clone()) {
                    Ok(rec)
                } else {
                    Err(RejectReason::DuplicateId)
                }
            });
        match parsed {
            Ok(rec) => {
                records.push(rec);
                report.accepted += 1;
            }
            Err(reason) => {
                report.rejected += 1;
                report.rejection_reasons.push(Rejection { line, reason });
            }
        }
    }
    Ok((records, report))
}

/// Serialize records back into the ingest CSV schema.
pub fn write_outage_csv<W: Write>(records: &[FailureRecord], sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(COLUMNS)?;
    for r in records {
        let lat = r.latitude.map(|v| v.to_string()).unwrap_or_default();
        let lon = r.longitude.map(|v| v.to_string()).unwrap_or_default();
        writer.write_record([
            r.record_id.as_str(),
            &r.occurred_at.to_string(),
            &r.restored_at.to_string(),
            &r.customers.to_string(),
            r.device.as_str(),
            &lat,
            &lon,
            if r.major_storm { "true" } else { "false" },
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<csv sink>", e))?;
    Ok(())
}

fn canonical_order(a: &FailureRecord, b: &FailureRecord) -> std::cmp::Ordering {
    a.occurred_at
        .cmp(&b.occurred_at)
        .then(a.restored_at.cmp(&b.restored_at))
        .then_with(|| a.record_id.cmp(&b.record_id))
        .then(a.customers.cmp(&b.customers))
        .then(a.device.cmp(&b.device))
}

/// Split records into events.
///
/// Records are sorted by occurrence. A new event starts when the gap since the
/// previous occurrence exceeds `quiet_gap` and nothing from the current event
/// is still pending. Declared-storm and non-storm records are delimited
/// separately, so every event carries a single storm flag. Events are
/// returned in order of first occurrence.
pub fn group_into_events(records: &[FailureRecord], quiet_gap: i64) -> Vec<Vec<FailureRecord>> {
    let mut events = Vec::new();
    for storm in [false, true] {
        let mut stream: Vec<&FailureRecord> = records.iter().filter(|r| r.major_storm == storm).collect();
        stream.sort_by(|a, b| canonical_order(a, b));

        let mut current: Vec<FailureRecord> = Vec::new();
        let mut last_occurrence = i64::MIN;
        let mut latest_restoration = i64::MIN;
        for rec in stream {
            let quiet = rec.occurred_at.saturating_sub(last_occurrence) > quiet_gap;
            let idle = latest_restoration <= rec.occurred_at;
            if !current.is_empty() && quiet && idle {
                events.push(std::mem::take(&mut current));
            }
            last_occurrence = rec.occurred_at;
            latest_restoration = latest_restoration.max(rec.restored_at);
            current.push(rec.clone());
        }
        if !current.is_empty() {
            events.push(current);
        }
    }
    events.sort_by(|a, b| canonical_order(&a[0], &b[0]));
    events
}
