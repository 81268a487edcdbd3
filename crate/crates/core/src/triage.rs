//! Prioritization baseline and tipping point.
//!
//! The baseline restores every large failure before any small one. Walking
//! the actual restorations fastest first, `a(k)` is the fraction of large
//! failures among the first `k` and `b(k) = min(k, N_L) / N_L` is the
//! baseline. The tipping point is where `b - a` first exceeds `epsilon`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dependence::RankedSample;
use crate::error::{Error, Result};
use crate::event::SeverityClass;
use crate::scaling::mean_std;

pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselinePoint {
    pub k: usize,
    pub a: f64,
    pub b: f64,
    /// Large failures among the first `k` restorations.
    pub large_restored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCurve {
    pub large_total: usize,
    pub points: Vec<BaselinePoint>,
}

impl BaselineCurve {
    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["k", "a", "b"])?;
        for p in &self.points {
            w.write_record([p.k.to_string(), p.a.to_string(), p.b.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

/// Baseline versus actual ordering of large failures, by failure counts.
pub fn baseline_curve(samples: &[RankedSample], large_threshold: u64) -> Result<BaselineCurve> {
    let large_total = samples.iter().filter(|s| s.size_x > large_threshold).count();
    if large_total == 0 {
        return Err(Error::NoLargeFailures);
    }
    let mut sorted: Vec<&RankedSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.duration.cmp(&b.duration).then_with(|| a.record_id.cmp(&b.record_id)));

    let nl = large_total as f64;
    let mut large_restored = 0;
    let points = sorted
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.size_x > large_threshold {
                large_restored += 1;
            }
            let k = i + 1;
            BaselinePoint {
                k,
                a: large_restored as f64 / nl,
                b: k.min(large_total) as f64 / nl,
                large_restored,
            }
        })
        .collect();
    Ok(BaselineCurve { large_total, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TippingPoint {
    pub value: f64,
    pub deviation_index: Option<usize>,
}

pub fn tipping_point(curve: &BaselineCurve, epsilon: f64) -> TippingPoint {
    let nl = curve.large_total as f64;
    curve
        .points
        .iter()
        .find(|p| (p.k.min(curve.large_total) - p.large_restored) as f64 / nl > epsilon)
        .map(|p| TippingPoint {
            value: p.a,
            deviation_index: Some(p.k),
        })
        .unwrap_or(TippingPoint {
            value: 1.0,
            deviation_index: None,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TippingStats {
    pub events: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation of tipping values per severity class.
pub fn aggregate_tipping(values: &[(SeverityClass, f64)]) -> BTreeMap<SeverityClass, TippingStats> {
    let mut by_class: BTreeMap<SeverityClass, Vec<f64>> = BTreeMap::new();
    for &(class, v) in values {
        by_class.entry(class).or_default().push(v);
    }
    by_class
        .into_iter()
        .map(|(class, vals)| {
            let (mean, std) = mean_std(&vals);
            (
                class,
                TippingStats {
                    events: vals.len(),
                    mean,
                    std,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::DeviceType;

    fn s(id: &str, size: u64, duration: i64) -> RankedSample {
        RankedSample {
            record_id: id.into(),
            size_x: size,
            speed_y: 0.0,
            duration,
            device: DeviceType::Other,
        }
    }

    fn ab(curve: &BaselineCurve) -> (Vec<f64>, Vec<f64>) {
        curve.points.iter().map(|p| (p.a, p.b)).unzip()
    }

    #[test]
    fn ideal_ordering_tracks_baseline() {
        let c = baseline_curve(&[s("a", 500, 1), s("b", 200, 2), s("c", 3, 3), s("d", 1, 4)], 100).unwrap();
        let (a, b) = ab(&c);
        assert_eq!(a, b);
        let t = tipping_point(&c, DEFAULT_EPSILON);
        assert_eq!(t, TippingPoint { value: 1.0, deviation_index: None });
    }

    #[test]
    fn small_first_deviates_immediately() {
        let c = baseline_curve(&[s("a", 1, 1), s("b", 500, 2), s("c", 200, 3), s("d", 2, 4)], 100).unwrap();
        let (a, b) = ab(&c);
        assert_eq!(a, [0.0, 0.5, 1.0, 1.0]);
        assert_eq!(b, [0.5, 1.0, 1.0, 1.0]);
        let t = tipping_point(&c, 0.05);
        assert_eq!(t, TippingPoint { value: 0.0, deviation_index: Some(1) });
    }

    #[test]
    fn all_large_is_linear() {
        let c = baseline_curve(&[s("a", 101, 5), s("b", 300, 1), s("c", 999, 3)], 100).unwrap();
        for p in &c.points {
            assert_eq!(p.a, p.k as f64 / 3.0);
            assert_eq!(p.a, p.b);
        }
    }

    #[test]
    fn no_large_failures() {
        let err = baseline_curve(&[s("a", 3, 1)], 100).unwrap_err();
        assert_eq!(err.code(), "NO_LARGE_FAILURES");
    }

    #[test]
    fn larger_epsilon_never_lowers_tipping() {
        let c = baseline_curve(
            &[s("a", 500, 1), s("b", 2, 2), s("c", 300, 3), s("d", 1, 4), s("e", 200, 5), s("f", 150, 6)],
            100,
        )
        .unwrap();
        let vals: Vec<f64> = [0.0, 0.1, 0.2, 0.3, 0.5, 0.8].iter().map(|&e| tipping_point(&c, e).value).collect();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]), "{vals:?}");
    }

    #[test]
    fn aggregate_means() {
        let one = aggregate_tipping(&[(SeverityClass::Moderate, 0.3)]);
        assert_eq!(one[&SeverityClass::Moderate], TippingStats { events: 1, mean: 0.3, std: 0.0 });
        let two = aggregate_tipping(&[(SeverityClass::Severe, 0.2), (SeverityClass::Severe, 0.4)]);
        assert!((two[&SeverityClass::Severe].mean - 0.3).abs() < 1e-12);
        assert!(!two.contains_key(&SeverityClass::Extreme));
    }
}
