//! Failure and recovery scaling laws.
//!
//! The recovery curve walks failures from fastest to slowest restoration and
//! tracks the cumulative share of affected customers against the cumulative
//! share of interruption duration. The failure curve is the exceedance
//! distribution of failure size together with the share of customers hit by
//! failures above each size.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dependence::{CategoryLabel, LabeledSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    /// Fraction of failures restored so far.
    pub d: f64,
    pub p_c: f64,
    pub p_r: f64,
    pub category: CategoryLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub points: Vec<ScalingPoint>,
}

impl ScalingCurve {
    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["d", "p_c", "p_r", "category"])?;
        for p in &self.points {
            w.write_record([p.d.to_string(), p.p_c.to_string(), p.p_r.to_string(), p.category.as_str().into()])?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

fn fastest_first(samples: &[LabeledSample]) -> Vec<&LabeledSample> {
    let mut sorted: Vec<&LabeledSample> = samples.iter().collect();
    sorted.sort_by(|a, b| {
        a.sample
            .duration
            .cmp(&b.sample.duration)
            .then_with(|| a.sample.record_id.cmp(&b.sample.record_id))
    });
    sorted
}

/// Recovery scaling curve over all failures, ranked fastest first.
pub fn recovery_scaling(samples: &[LabeledSample]) -> Result<ScalingCurve> {
    if samples.is_empty() {
        return Err(Error::EmptyEvent);
    }
    let total_customers: u128 = samples.iter().map(|s| s.sample.size_x as u128).sum();
    let total_duration: i128 = samples.iter().map(|s| s.sample.duration as i128).sum();
    if total_duration == 0 {
        return Err(Error::DegenerateDurations);
    }
    let n = samples.len() as f64;
    let (mut customers, mut duration) = (0u128, 0i128);
    let points = fastest_first(samples)
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            customers += s.sample.size_x as u128;
            duration += s.sample.duration as i128;
            ScalingPoint {
                d: (k + 1) as f64 / n,
                p_c: customers as f64 / total_customers as f64,
                p_r: duration as f64 / total_duration as f64,
                category: s.category,
            }
        })
        .collect();
    Ok(ScalingCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureScalingPoint {
    pub x: u64,
    pub p_exceed: f64,
    pub p_c: f64,
    pub p_exceed_std: f64,
    pub p_c_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureScalingCurve {
    pub events: usize,
    pub points: Vec<FailureScalingPoint>,
}

impl FailureScalingCurve {
    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["x", "p_exceed", "p_c", "std", "std_exceed"])?;
        for p in &self.points {
            w.write_record([
                p.x.to_string(),
                p.p_exceed.to_string(),
                p.p_c.to_string(),
                p.p_c_std.to_string(),
                p.p_exceed_std.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

/// Fraction of failures larger than `x` and the share of customers they affect.
pub fn exceedance_at(sizes: &[u64], x: u64) -> (f64, f64) {
    if sizes.is_empty() {
        return (0.0, 0.0);
    }
    let total: u128 = sizes.iter().map(|&s| s as u128).sum();
    let above: Vec<u64> = sizes.iter().copied().filter(|&s| s > x).collect();
    let customers: u128 = above.iter().map(|&s| s as u128).sum();
    (above.len() as f64 / sizes.len() as f64, customers as f64 / total as f64)
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// Failure scaling averaged over events on a shared grid {0, 1, 2, 4, ...}.
///
/// Each element of `events` holds the failure sizes of one event; callers
/// pass Stage-1 records. Empty events are skipped.
pub fn failure_scaling(events: &[Vec<u64>]) -> Result<FailureScalingCurve> {
    let events: Vec<&Vec<u64>> = events.iter().filter(|e| !e.is_empty()).collect();
    if events.is_empty() {
        return Err(Error::EmptyEvent);
    }
    let max_size = events.iter().flat_map(|e| e.iter()).copied().max().unwrap_or(1);
    let mut grid = vec![0u64];
    let mut x = 1u64;
    loop {
        grid.push(x);
        if x >= max_size || x > u64::MAX / 2 {
            break;
        }
        x *= 2;
    }
    let points = grid
        .into_iter()
        .map(|x| {
            let per: Vec<(f64, f64)> = events.iter().map(|e| exceedance_at(e, x)).collect();
            let (p_exceed, p_exceed_std) = mean_std(&per.iter().map(|p| p.0).collect::<Vec<_>>());
            let (p_c, p_c_std) = mean_std(&per.iter().map(|p| p.1).collect::<Vec<_>>());
            FailureScalingPoint {
                x,
                p_exceed,
                p_c,
                p_exceed_std,
                p_c_std,
            }
        })
        .collect();
    Ok(FailureScalingCurve {
        events: events.len(),
        points,
    })
}

/// Customer share of the top `fraction` of failures by size.
///
/// The top set holds `ceil(fraction * n)` failures.
pub fn top_customer_share(sizes: &[u64], fraction: f64) -> f64 {
    if sizes.is_empty() {
        return 0.0;
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let k = ((fraction * sorted.len() as f64).ceil() as usize).min(sorted.len());
    let top: u128 = sorted[..k].iter().map(|&s| s as u128).sum();
    let total: u128 = sorted.iter().map(|&s| s as u128).sum();
    top as f64 / total as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryShares {
    pub customer_share: f64,
    pub downtime_share: f64,
    pub failure_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub shares: BTreeMap<CategoryLabel, CategoryShares>,
}

impl RuleSummary {
    /// Summed shares of the two large-failure categories.
    pub fn large(&self) -> CategoryShares {
        self.shares
            .iter()
            .filter(|(c, _)| c.is_large())
            .fold(CategoryShares::default(), |acc, (_, s)| CategoryShares {
                customer_share: acc.customer_share + s.customer_share,
                downtime_share: acc.downtime_share + s.downtime_share,
                failure_share: acc.failure_share + s.failure_share,
            })
    }
}

/// Per-category shares of customers, downtime and failure count.
///
/// With zero total downtime every downtime share is reported as 0.
pub fn rule_summary(samples: &[LabeledSample]) -> RuleSummary {
    let mut sums: BTreeMap<CategoryLabel, (u128, i128, usize)> =
        CategoryLabel::ALL.iter().map(|&c| (c, (0, 0, 0))).collect();
    for s in samples {
        let e = sums.get_mut(&s.category).expect("all categories present");
        e.0 += s.sample.size_x as u128;
        e.1 += s.sample.duration as i128;
        e.2 += 1;
    }
    let total_c: u128 = sums.values().map(|v| v.0).sum();
    let total_d: i128 = sums.values().map(|v| v.1).sum();
    let total_n: usize = sums.values().map(|v| v.2).sum();
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    RuleSummary {
        shares: sums
            .into_iter()
            .map(|(c, (cust, dur, n))| {
                (
                    c,
                    CategoryShares {
                        customer_share: ratio(cust as f64, total_c as f64),
                        downtime_share: ratio(dur as f64, total_d as f64),
                        failure_share: ratio(n as f64, total_n as f64),
                    },
                )
            })
            .collect(),
    }
}
