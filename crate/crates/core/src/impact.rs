//! Customer impact: interruption minutes, downtime growth and device mix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dependence::{CategoryLabel, LabeledSample};
use crate::error::{Error, Result};
use crate::ingest::{DeviceType, FailureRecord};

/// Customer minutes of interruption.
pub fn cmi(records: &[FailureRecord]) -> u64 {
    records.iter().map(|r| r.customers * r.duration() as u64).sum()
}

/// Customer-minutes accrued by `records` up to minute `t`.
pub fn cumulative_downtime(records: &[&FailureRecord], t: i64) -> u64 {
    records
        .iter()
        .map(|r| r.customers * (t - r.occurred_at).clamp(0, r.duration()) as u64)
        .sum()
}

/// Ordinary least-squares slope of `ys` against `xs`.
fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryGrowth {
    pub records: usize,
    /// Customer-minutes per minute of event time.
    pub slope: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DowntimeGrowth {
    pub window_start: i64,
    pub window_end: i64,
    pub step: i64,
    pub categories: BTreeMap<CategoryLabel, CategoryGrowth>,
    /// `ProlongedSmall/NonPrioritizedLarge` style slope ratios.
    pub ratios: BTreeMap<String, f64>,
    /// Rows of `(t, category, customer_minutes)`.
    pub curves: Vec<(i64, CategoryLabel, u64)>,
}

impl DowntimeGrowth {
    pub fn write_curves_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["t", "category", "customer_minutes"])?;
        for (t, c, v) in &self.curves {
            w.write_record([t.to_string(), c.as_str().to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

/// Growth rate of cumulative customer downtime per category.
///
/// Each category's cumulative downtime is sampled every `step` minutes over
/// the event window (first occurrence to last restoration) and fitted with a
/// least-squares line. Categories with fewer than two records get no slope.
pub fn cumulative_downtime_growth(
    records: &[FailureRecord],
    labels: &BTreeMap<String, CategoryLabel>,
    step: i64,
) -> Result<DowntimeGrowth> {
    if step < 1 {
        return Err(Error::InvalidConfig(format!("step must be >= 1, got {step}")));
    }
    let start = records.iter().map(|r| r.occurred_at).min().ok_or(Error::EmptyEvent)?;
    let end = records.iter().map(|r| r.restored_at).max().ok_or(Error::EmptyEvent)?;
    let mut grid: Vec<i64> = (0..).map(|i| start + i * step).take_while(|&t| t < end).collect();
    grid.push(end);

    let mut groups: BTreeMap<CategoryLabel, Vec<&FailureRecord>> =
        CategoryLabel::ALL.iter().map(|&c| (c, Vec::new())).collect();
    for r in records {
        let label = labels.get(&r.record_id).ok_or_else(|| Error::MissingLabel {
            record_id: r.record_id.clone(),
        })?;
        groups.get_mut(label).expect("all labels present").push(r);
    }

    let xs: Vec<f64> = grid.iter().map(|&t| (t - start) as f64).collect();
    let mut categories = BTreeMap::new();
    let mut curves = Vec::new();
    for (label, recs) in &groups {
        let ys: Vec<u64> = grid.iter().map(|&t| cumulative_downtime(recs, t)).collect();
        let growth = if recs.len() < 2 {
            CategoryGrowth {
                records: recs.len(),
                slope: None,
                note: Some(format!("{} record(s); slope needs at least 2", recs.len())),
            }
        } else {
            let yf: Vec<f64> = ys.iter().map(|&y| y as f64).collect();
            let slope = ols_slope(&xs, &yf);
            CategoryGrowth {
                records: recs.len(),
                slope,
                note: slope.is_none().then(|| "event window has a single grid point".to_string()),
            }
        };
        if !recs.is_empty() {
            curves.extend(grid.iter().zip(&ys).map(|(&t, &y)| (t, *label, y)));
        }
        categories.insert(*label, growth);
    }
    curves.sort_by_key(|&(t, c, _)| (t, c));

    let mut ratios = BTreeMap::new();
    for num in CategoryLabel::ALL {
        for den in CategoryLabel::ALL {
            if num == den {
                continue;
            }
            if let (Some(a), Some(b)) = (categories[&num].slope, categories[&den].slope) {
                if b != 0.0 {
                    ratios.insert(format!("{}/{}", num.as_str(), den.as_str()), a / b);
                }
            }
        }
    }
    Ok(DowntimeGrowth {
        window_start: start,
        window_end: end,
        step,
        categories,
        ratios,
        curves,
    })
}

/// Device-type fractions per category; categories without samples are omitted.
pub fn device_breakdown(samples: &[LabeledSample]) -> BTreeMap<CategoryLabel, BTreeMap<DeviceType, f64>> {
    let mut counts: BTreeMap<CategoryLabel, BTreeMap<DeviceType, usize>> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.category).or_default().entry(s.sample.device).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(c, devs)| {
            let total: usize = devs.values().sum();
            (c, devs.into_iter().map(|(d, k)| (d, k as f64 / total as f64)).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryImpact {
    pub failures: usize,
    pub cmi: u64,
    pub mean_cmi_per_failure: f64,
    pub affected_customers: u64,
    /// Customer-minutes accrued per hour of event time.
    pub growth_rate: Option<f64>,
    pub device_mix: BTreeMap<DeviceType, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub total_cmi: u64,
    pub categories: BTreeMap<CategoryLabel, CategoryImpact>,
}

/// Impact of one labeled event.
pub fn impact_report(records: &[FailureRecord], samples: &[LabeledSample], step: i64) -> Result<ImpactReport> {
    let labels: BTreeMap<String, CategoryLabel> =
        samples.iter().map(|s| (s.sample.record_id.clone(), s.category)).collect();
    let growth = cumulative_downtime_growth(records, &labels, step)?;
    let mix = device_breakdown(samples);
    let mut categories = BTreeMap::new();
    for label in CategoryLabel::ALL {
        let recs: Vec<FailureRecord> = records
            .iter()
            .filter(|r| labels.get(&r.record_id) == Some(&label))
            .cloned()
            .collect();
        if recs.is_empty() {
            continue;
        }
        let total = cmi(&recs);
        categories.insert(
            label,
            CategoryImpact {
                failures: recs.len(),
                cmi: total,
                mean_cmi_per_failure: total as f64 / recs.len() as f64,
                affected_customers: recs.iter().map(|r| r.customers).sum(),
                growth_rate: growth.categories[&label].slope.map(|s| s * 60.0),
                device_mix: mix.get(&label).cloned().unwrap_or_default(),
            },
        );
    }
    Ok(ImpactReport {
        total_cmi: cmi(records),
        categories,
    })
}
