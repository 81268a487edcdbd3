use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RankedSample;

/// The four recovery categories on the (size, speed) plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryLabel {
    /// Large and among the fastest restorations.
    PrioritizedLarge,
    /// Large but not among the fastest.
    NonPrioritizedLarge,
    /// Small and in the slow half.
    ProlongedSmall,
    RemainingSmall,
}

impl CategoryLabel {
    pub const ALL: [CategoryLabel; 4] = [
        CategoryLabel::PrioritizedLarge,
        CategoryLabel::NonPrioritizedLarge,
        CategoryLabel::ProlongedSmall,
        CategoryLabel::RemainingSmall,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CategoryLabel::PrioritizedLarge => "PrioritizedLarge",
            CategoryLabel::NonPrioritizedLarge => "NonPrioritizedLarge",
            CategoryLabel::ProlongedSmall => "ProlongedSmall",
            CategoryLabel::RemainingSmall => "RemainingSmall",
        }
    }

    pub fn is_large(&self) -> bool {
        matches!(self, CategoryLabel::PrioritizedLarge | CategoryLabel::NonPrioritizedLarge)
    }
}

impl std::str::FromStr for CategoryLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryThresholds {
    /// Failures affecting more than this many customers are large.
    pub large_threshold: u64,
    /// Share of fastest restorations that counts as prioritized.
    pub fast_quantile: f64,
    /// Speed at or below which a small failure is prolonged.
    pub prolonged_quantile: f64,
}

impl Default for CategoryThresholds {
    fn default() -> Self {
        Self {
            large_threshold: 100,
            fast_quantile: 0.15,
            prolonged_quantile: 0.50,
        }
    }
}

pub fn label_for(size: u64, speed: f64, t: &CategoryThresholds) -> CategoryLabel {
    if size > t.large_threshold {
        if speed >= 1.0 - t.fast_quantile {
            CategoryLabel::PrioritizedLarge
        } else {
            CategoryLabel::NonPrioritizedLarge
        }
    } else if speed <= t.prolonged_quantile {
        CategoryLabel::ProlongedSmall
    } else {
        CategoryLabel::RemainingSmall
    }
}

/// A ranked sample together with its category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    #[serde(flatten)]
    pub sample: RankedSample,
    pub category: CategoryLabel,
}

pub fn label_samples(samples: &[RankedSample], t: &CategoryThresholds) -> Vec<LabeledSample> {
    samples
        .iter()
        .map(|s| LabeledSample {
            sample: s.clone(),
            category: label_for(s.size_x, s.speed_y, t),
        })
        .collect()
}

pub fn assign_categories(samples: &[RankedSample], t: &CategoryThresholds) -> BTreeMap<String, CategoryLabel> {
    samples
        .iter()
        .map(|s| (s.record_id.clone(), label_for(s.size_x, s.speed_y, t)))
        .collect()
}
