use serde::{Deserialize, Serialize};

use crate::ingest::{DeviceType, FailureRecord};

/// A failure placed on the (size, speed) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSample {
    pub record_id: String,
    pub size_x: u64,
    /// Midrank-normalized recovery speed in (0, 1); larger is faster.
    pub speed_y: f64,
    pub duration: i64,
    pub device: DeviceType,
}

/// Rank records by downtime within one population.
///
/// Rank `r` is assigned ascending by duration, tied blocks share the mean of
/// their ranks, and `speed_y = 1 - (r - 0.5) / n`. Output follows input order.
pub fn rank_recovery_speed(records: &[FailureRecord]) -> Vec<RankedSample> {
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| records[i].duration());

    let mut speed = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let d = records[order[start]].duration();
        let mut end = start;
        while end < n && records[order[end]].duration() == d {
            end += 1;
        }
        // ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        let y = 1.0 - (rank - 0.5) / n as f64;
        for &i in &order[start..end] {
            speed[i] = y;
        }
        start = end;
    }

    records
        .iter()
        .zip(speed)
        .map(|(r, speed_y)| RankedSample {
            record_id: r.record_id.clone(),
            size_x: r.customers,
            speed_y,
            duration: r.duration(),
            device: r.device,
        })
        .collect()
}
