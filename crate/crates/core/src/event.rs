//! Failure events: severity, pending repairs and the two-stage split.
//!
//! The number of pending repairs at minute `t` is the number of records with
//! `occurred_at <= t < restored_at`. Its maximum separates the failure stage
//! (Stage 1, occurrences dominate) from the recovery stage (Stage 2).
//! Peaks are located exactly by sweeping interval endpoints; the reporting
//! grid step never influences the partition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dependence::CategoryLabel;
use crate::error::{Error, Result};
use crate::ingest::FailureRecord;

pub const DEFAULT_STEP: i64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeverityClass {
    Moderate,
    Severe,
    Extreme,
    /// Everyday failures below the moderate floor; excluded downstream.
    Sporadic,
}

impl SeverityClass {
    pub const ANALYZED: [SeverityClass; 3] = [SeverityClass::Moderate, SeverityClass::Severe, SeverityClass::Extreme];

    pub fn as_str(&self) -> &'static str {
        match self {
            SeverityClass::Moderate => "Moderate",
            SeverityClass::Severe => "Severe",
            SeverityClass::Extreme => "Extreme",
            SeverityClass::Sporadic => "Sporadic",
        }
    }
}

/// Failure-count floors for the severity classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityThresholds {
    /// Smallest declared-storm event counted as extreme.
    pub extreme_min_failures: usize,
    /// Smallest non-storm event counted as moderate.
    pub moderate_min_failures: usize,
}

impl Default for SeverityThresholds {
    fn default() -> Self {
        Self {
            extreme_min_failures: 1373,
            moderate_min_failures: 100,
        }
    }
}

pub fn classify_severity(major_storm: bool, failures: usize, thresholds: &SeverityThresholds) -> SeverityClass {
    match (major_storm, failures) {
        (true, n) if n >= thresholds.extreme_min_failures => SeverityClass::Extreme,
        (true, _) => SeverityClass::Severe,
        (false, n) if n >= thresholds.moderate_min_failures => SeverityClass::Moderate,
        (false, _) => SeverityClass::Sporadic,
    }
}

/// Pending-repair counts on a uniform grid starting at the first occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingSeries {
    pub start: i64,
    pub step: i64,
    pub counts: Vec<u64>,
    /// Earliest minute at which the exact maximum is reached.
    pub peak_time: i64,
    pub peak_value: u64,
}

impl PendingSeries {
    pub fn time_grid(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.counts.len() as i64).map(move |i| self.start + i * self.step)
    }

    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["t_minutes", "count"])?;
        for (t, c) in self.time_grid().zip(&self.counts) {
            w.write_record([t.to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

/// Exact maximum of the pending count and the earliest minute it occurs.
///
/// With no positive-duration record the maximum is 0 at `start`.
pub fn exact_peak<'a, I>(records: I, start: i64) -> (i64, u64)
where
    I: IntoIterator<Item = &'a FailureRecord>,
{
    // (time, delta): restorations sort before occurrences at the same minute
    let mut edges: Vec<(i64, i64)> = Vec::new();
    for r in records {
        if r.restored_at > r.occurred_at {
            edges.push((r.occurred_at, 1));
            edges.push((r.restored_at, -1));
        }
    }
    edges.sort_unstable();
    let (mut best_time, mut best) = (start, 0i64);
    let mut level = 0i64;
    let mut i = 0;
    while i < edges.len() {
        let t = edges[i].0;
        while i < edges.len() && edges[i].0 == t {
            level += edges[i].1;
            i += 1;
        }
        if level > best {
            best = level;
            best_time = t;
        }
    }
    (best_time, best as u64)
}

fn counts_on_grid<'a, I>(records: I, start: i64, step: i64, len: usize) -> Vec<u64>
where
    I: IntoIterator<Item = &'a FailureRecord>,
{
    let mut occ = Vec::new();
    let mut rest = Vec::new();
    for r in records {
        occ.push(r.occurred_at);
        rest.push(r.restored_at);
    }
    occ.sort_unstable();
    rest.sort_unstable();
    (0..len as i64)
        .map(|i| {
            let t = start + i * step;
            let occurred = occ.partition_point(|&o| o <= t);
            let restored = rest.partition_point(|&r| r <= t);
            (occurred - restored) as u64
        })
        .collect()
}

fn grid_span(records: &[FailureRecord], step: i64) -> Result<(i64, usize)> {
    if step < 1 {
        return Err(Error::InvalidConfig(format!("series step must be >= 1, got {step}")));
    }
    let start = records.iter().map(|r| r.occurred_at).min().ok_or(Error::EmptyEvent)?;
    let end = records.iter().map(|r| r.restored_at).max().ok_or(Error::EmptyEvent)?;
    let intervals = (end - start + step - 1) / step;
    Ok((start, intervals as usize + 1))
}

/// Pending-repairs series for a set of records.
///
/// The grid runs from the first occurrence until the first grid point at or
/// after the last restoration, so the final count is always 0.
pub fn pending_series(records: &[FailureRecord], step: i64) -> Result<PendingSeries> {
    let (start, len) = grid_span(records, step)?;
    let counts = counts_on_grid(records, start, step, len);
    let (peak_time, peak_value) = exact_peak(records, start);
    Ok(PendingSeries {
        start,
        step,
        counts,
        peak_time,
        peak_value,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePartition {
    pub split_time: i64,
    pub stage1_ids: Vec<String>,
    pub stage2_ids: Vec<String>,
}

/// Stage 1 holds every record that occurred at or before the pending peak.
pub fn split_stages(records: &[FailureRecord], pending: &PendingSeries) -> StagePartition {
    let split_time = pending.peak_time;
    let (stage1, stage2): (Vec<_>, Vec<_>) = records.iter().partition(|r| r.occurred_at <= split_time);
    StagePartition {
        split_time,
        stage1_ids: stage1.into_iter().map(|r| r.record_id.clone()).collect(),
        stage2_ids: stage2.into_iter().map(|r| r.record_id.clone()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub event_id: String,
    pub major_storm: bool,
    pub severity: SeverityClass,
    pub records: Vec<FailureRecord>,
    pub pending: PendingSeries,
    pub partition: StagePartition,
}

impl FailureEvent {
    pub fn new(
        event_id: impl Into<String>,
        records: Vec<FailureRecord>,
        step: i64,
        thresholds: &SeverityThresholds,
    ) -> Result<Self> {
        let major_storm = records.first().ok_or(Error::EmptyEvent)?.major_storm;
        if records.iter().any(|r| r.major_storm != major_storm) {
            return Err(Error::MixedStormFlags);
        }
        let pending = pending_series(&records, step)?;
        let partition = split_stages(&records, &pending);
        Ok(Self {
            event_id: event_id.into(),
            major_storm,
            severity: classify_severity(major_storm, records.len(), thresholds),
            records,
            pending,
            partition,
        })
    }

    pub fn stage1(&self) -> Vec<FailureRecord> {
        let t = self.partition.split_time;
        self.records.iter().filter(|r| r.occurred_at <= t).cloned().collect()
    }
}

/// Pending series per category on the event's own grid.
///
/// The four series sum pointwise to the event total.
pub fn category_pending_series(
    records: &[FailureRecord],
    labels: &BTreeMap<String, CategoryLabel>,
    step: i64,
) -> Result<BTreeMap<CategoryLabel, PendingSeries>> {
    let (start, len) = grid_span(records, step)?;
    let mut groups: BTreeMap<CategoryLabel, Vec<&FailureRecord>> =
        CategoryLabel::ALL.iter().map(|&c| (c, Vec::new())).collect();
    for r in records {
        let label = labels.get(&r.record_id).ok_or_else(|| Error::MissingLabel {
            record_id: r.record_id.clone(),
        })?;
        groups.get_mut(label).expect("all labels present").push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(label, recs)| {
            let counts = counts_on_grid(recs.iter().copied(), start, step, len);
            let (peak_time, peak_value) = exact_peak(recs.iter().copied(), start);
            (
                label,
                PendingSeries {
                    start,
                    step,
                    counts,
                    peak_time,
                    peak_value,
                },
            )
        })
        .collect())
}
