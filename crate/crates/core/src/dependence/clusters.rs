//! Cluster extraction: maximal rectangles of positive dependence.
//!
//! Seeds are cells whose dependence exceeds `threshold_frac` of the grid
//! maximum. Each seed grows greedily into the largest rectangle whose mean
//! cell dependence stays above that threshold. A region is kept only when its
//! mean also exceeds its cross-validated error bar, and its region-level
//! dependence beats the strongest region the same search finds once the
//! size/speed pairing is shuffled away.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{average_dependence, grid_from_counts, mean_and_stderr, rect_metric, BinSpec, CellRect, JointGrid};
use super::RankedSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub threshold_frac: f64,
    pub folds: usize,
    /// Shuffled replicates for the null reference; 0 disables it.
    pub null_rounds: usize,
    pub seed: u64,
    pub bins: BinSpec,
    /// Only used for the region hint.
    pub large_threshold: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            threshold_frac: 0.05,
            folds: 5,
            null_rounds: 39,
            seed: 0,
            bins: BinSpec::default(),
            large_threshold: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterHint {
    /// Large failures restored fast.
    UpperLeft,
    /// Small failures restored slowly.
    LowerRight,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRegion {
    pub rect: CellRect,
    pub mean_f: f64,
    pub mean_err: f64,
    /// Dependence of the rectangle as a whole.
    pub region_f: f64,
    /// Largest region-level f found on shuffled pairings.
    pub null_f: f64,
    pub hint: ClusterHint,
}

/// Sample bin indices, kept so folds and shuffles only recount.
struct Binned {
    xs: Vec<usize>,
    ys: Vec<usize>,
    bins: BinSpec,
}

impl Binned {
    fn new(samples: &[RankedSample], bins: &BinSpec) -> Result<Self> {
        bins.validate()?;
        Ok(Self {
            xs: samples.iter().map(|s| bins.x_bin(s.size_x)).collect(),
            ys: samples.iter().map(|s| bins.y_bin(s.speed_y)).collect(),
            bins: *bins,
        })
    }

    fn counts(&self, keep: impl Fn(usize) -> bool) -> Vec<Vec<u64>> {
        let mut c = vec![vec![0u64; self.bins.y_bins]; self.bins.x_bins];
        for i in (0..self.xs.len()).filter(|&i| keep(i)) {
            c[self.xs[i]][self.ys[i]] += 1;
        }
        c
    }

    /// Training grids of a seeded k-fold split.
    fn fold_grids(&self, folds: usize, seed: u64) -> Vec<JointGrid> {
        let mut order: Vec<usize> = (0..self.xs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut fold_of = vec![0; order.len()];
        for (pos, &i) in order.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
        (0..folds)
            .map(|k| grid_from_counts(self.counts(|i| fold_of[i] != k), &self.bins))
            .collect()
    }

    /// Largest grown-region f over grids with the speed bins shuffled.
    fn null_reference(&self, cfg: &ClusterConfig) -> f64 {
        // offset keeps the shuffle stream apart from the fold split
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e75_6c6c);
        let mut ys = self.ys.clone();
        let mut best = 0.0f64;
        for _ in 0..cfg.null_rounds {
            ys.shuffle(&mut rng);
            let mut c = vec![vec![0u64; self.bins.y_bins]; self.bins.x_bins];
            for (&x, &y) in self.xs.iter().zip(&ys) {
                c[x][y] += 1;
            }
            let grid = grid_from_counts(c, &self.bins);
            let sums = CellSums::new(&grid);
            let max_f = grid.max_f();
            if max_f <= 0.0 {
                continue;
            }
            for rect in grown_regions(&grid, &sums, cfg.threshold_frac * max_f) {
                best = best.max(rect_metric(&grid, &rect));
            }
        }
        best
    }
}

/// 2-D prefix sums of cell f for constant-time rectangle means.
struct CellSums {
    acc: Vec<Vec<f64>>,
}

impl CellSums {
    fn new(grid: &JointGrid) -> Self {
        let (nx, ny) = (grid.x_bins(), grid.y_bins());
        let mut acc = vec![vec![0.0; ny + 1]; nx + 1];
        for x in 0..nx {
            for y in 0..ny {
                acc[x + 1][y + 1] = grid.f_values[x][y] + acc[x][y + 1] + acc[x + 1][y] - acc[x][y];
            }
        }
        Self { acc }
    }

    fn mean(&self, r: &CellRect) -> f64 {
        let a = &self.acc;
        let sum = a[r.x1 + 1][r.y1 + 1] - a[r.x0][r.y1 + 1] - a[r.x1 + 1][r.y0] + a[r.x0][r.y0];
        sum / r.area() as f64
    }
}

fn check_config(n: usize, cfg: &ClusterConfig) -> Result<()> {
    if cfg.folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {}", cfg.folds)));
    }
    if !(cfg.threshold_frac >= 0.0 && cfg.threshold_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold fraction must lie in [0, 1), got {}",
            cfg.threshold_frac
        )));
    }
    if n < cfg.folds {
        return Err(Error::TooFewSamples { n, folds: cfg.folds });
    }
    Ok(())
}

fn hint_for(grid: &JointGrid, rect: &CellRect, large_threshold: u64) -> ClusterHint {
    let y_mid = (grid.y_bin_edges[rect.y0] + grid.y_bin_edges[rect.y1 + 1]) / 2.0;
    // a bin starting at edge e holds sizes up to 2e - 1
    let max_size = if rect.x1 + 1 == grid.x_bins() {
        u64::MAX
    } else {
        grid.x_bin_edges[rect.x1] * 2 - 1
    };
    let min_size = grid.x_bin_edges[rect.x0];
    if y_mid > 0.5 && max_size > large_threshold {
        ClusterHint::UpperLeft
    } else if y_mid <= 0.5 && min_size <= large_threshold {
        ClusterHint::LowerRight
    } else {
        ClusterHint::Other
    }
}

/// Greedy rectangle growth from `seed`.
///
/// Each step takes the one-row or one-column extension with the largest area
/// gain whose mean f stays above `tau`; ties prefer the lower x index, then
/// the lower y index.
fn grow(grid: &JointGrid, sums: &CellSums, seed: (usize, usize), tau: f64) -> CellRect {
    let (nx, ny) = (grid.x_bins(), grid.y_bins());
    let mut rect = CellRect::cell(seed.0, seed.1);
    loop {
        let mut options = Vec::with_capacity(4);
        if rect.x0 > 0 {
            options.push(CellRect { x0: rect.x0 - 1, ..rect });
        }
        if rect.x1 + 1 < nx {
            options.push(CellRect { x1: rect.x1 + 1, ..rect });
        }
        if rect.y0 > 0 {
            options.push(CellRect { y0: rect.y0 - 1, ..rect });
        }
        if rect.y1 + 1 < ny {
            options.push(CellRect { y1: rect.y1 + 1, ..rect });
        }
        let best = options
            .into_iter()
            .filter(|r| sums.mean(r) > tau)
            .min_by_key(|r| (std::cmp::Reverse(r.area()), r.x0, r.y0, r.x1, r.y1));
        match best {
            Some(r) => rect = r,
            None => return rect,
        }
    }
}

/// Seeds in descending f order, each grown unless an earlier region covers it.
fn grown_regions(grid: &JointGrid, sums: &CellSums, tau: f64) -> Vec<CellRect> {
    let mut seeds: Vec<(usize, usize)> = grid
        .full_rect()
        .cells()
        .filter(|&(x, y)| grid.f_values[x][y] > tau)
        .collect();
    seeds.sort_by(|a, b| {
        grid.f_values[b.0][b.1]
            .total_cmp(&grid.f_values[a.0][a.1])
            .then(a.cmp(b))
    });
    let mut grown: Vec<CellRect> = Vec::new();
    for seed in seeds {
        if grown.iter().any(|r| r.contains(seed.0, seed.1)) {
            continue;
        }
        let rect = grow(grid, sums, seed, tau);
        if !grown.contains(&rect) {
            grown.push(rect);
        }
    }
    grown
}

/// Grow, filter and merge regions on `grid`.
fn extract_with(
    grid: &JointGrid,
    cfg: &ClusterConfig,
    region_err: impl Fn(&CellRect) -> f64,
    null_f: f64,
) -> Vec<ClusterRegion> {
    let max_f = grid.max_f();
    if max_f <= 0.0 {
        return Vec::new();
    }
    let tau = cfg.threshold_frac * max_f;
    let sums = CellSums::new(grid);

    let evaluate = |rect: CellRect| -> Option<ClusterRegion> {
        let mean_f = sums.mean(&rect);
        let region_f = rect_metric(grid, &rect);
        if !(mean_f > tau && region_f > null_f) {
            return None;
        }
        let mean_err = region_err(&rect);
        (mean_f > mean_err).then(|| ClusterRegion {
            rect,
            mean_f,
            mean_err,
            region_f,
            null_f,
            hint: hint_for(grid, &rect, cfg.large_threshold),
        })
    };
    let mut accepted: Vec<ClusterRegion> = grown_regions(grid, &sums, tau).into_iter().filter_map(evaluate).collect();

    // merge overlapping rectangles while the merged region still qualifies
    'merge: loop {
        for i in 0..accepted.len() {
            for j in i + 1..accepted.len() {
                if !accepted[i].rect.intersects(&accepted[j].rect) {
                    continue;
                }
                if let Some(merged) = evaluate(accepted[i].rect.bounding(&accepted[j].rect)) {
                    accepted.remove(j);
                    accepted[i] = merged;
                    continue 'merge;
                }
            }
        }
        break;
    }

    accepted.sort_by(|a, b| b.mean_f.total_cmp(&a.mean_f).then(a.rect.cmp(&b.rect)));
    accepted.dedup_by(|a, b| a.rect == b.rect);
    accepted
}

fn region_stderr(grids: &[JointGrid], rect: &CellRect) -> f64 {
    let vals: Vec<f64> = grids.iter().map(|g| g.mean_cell_f(rect)).collect();
    mean_and_stderr(&vals).1
}

/// Full-sample grid whose `err` holds per-cell cross-validated standard errors.
pub fn cross_validated_errors(samples: &[RankedSample], cfg: &ClusterConfig) -> Result<JointGrid> {
    check_config(samples.len(), cfg)?;
    let binned = Binned::new(samples, &cfg.bins)?;
    let folds = binned.fold_grids(cfg.folds, cfg.seed);
    let mut grid = grid_from_counts(binned.counts(|_| true), &cfg.bins);
    for (x, y) in grid.full_rect().cells().collect::<Vec<_>>() {
        grid.err[x][y] = region_stderr(&folds, &CellRect::cell(x, y));
    }
    Ok(grid)
}

/// Extract dependence clusters from one sample population.
pub fn extract_clusters(samples: &[RankedSample], cfg: &ClusterConfig) -> Result<Vec<ClusterRegion>> {
    check_config(samples.len(), cfg)?;
    let binned = Binned::new(samples, &cfg.bins)?;
    let grid = grid_from_counts(binned.counts(|_| true), &cfg.bins);
    if grid.max_f() <= 0.0 {
        return Ok(Vec::new());
    }
    let folds = binned.fold_grids(cfg.folds, cfg.seed);
    let null_f = binned.null_reference(cfg);
    Ok(extract_with(&grid, cfg, |r| region_stderr(&folds, r), null_f))
}

/// Extract clusters from the average of per-event grids.
///
/// The error bar of a region is the standard error of its mean f across the
/// events; no shuffle reference is applied. A single grid has no spread, so
/// every grown region passes; callers with one event should prefer
/// [`extract_clusters`] on its samples.
pub fn extract_average_clusters(grids: &[JointGrid], cfg: &ClusterConfig) -> Result<(JointGrid, Vec<ClusterRegion>)> {
    let avg = average_dependence(grids)?;
    let regions = extract_with(&avg, cfg, |r| region_stderr(grids, r), 0.0);
    Ok((avg, regions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::estimate_joint;
    use crate::ingest::DeviceType;

    fn sample(id: usize, size: u64, speed: f64) -> RankedSample {
        RankedSample {
            record_id: format!("s{id}"),
            size_x: size,
            speed_y: speed,
            duration: 0,
            device: DeviceType::Other,
        }
    }

    /// Larger failures strictly faster: speed rank follows size rank.
    fn priority_ordered(n: usize) -> Vec<RankedSample> {
        let mut sizes: Vec<u64> = (0..n).map(|i| 1 + (i as u64 * 7919) % 2000).collect();
        sizes.sort_unstable();
        sizes
            .into_iter()
            .enumerate()
            .map(|(i, s)| sample(i, s, (i as f64 + 0.5) / n as f64))
            .collect()
    }

    #[test]
    fn too_few_samples() {
        let s: Vec<_> = (0..3).map(|i| sample(i, 1, 0.5)).collect();
        let err = extract_clusters(&s, &ClusterConfig::default()).unwrap_err();
        assert_eq!(err.code(), "TOO_FEW_SAMPLES");
    }

    #[test]
    fn bad_fold_count() {
        let s: Vec<_> = (0..10).map(|i| sample(i, 1, 0.5)).collect();
        let cfg = ClusterConfig { folds: 1, ..Default::default() };
        assert_eq!(extract_clusters(&s, &cfg).unwrap_err().code(), "INVALID_CONFIG");
    }

    #[test]
    fn prefix_sums_match_direct_means() {
        let g = estimate_joint(&priority_ordered(300), &BinSpec::default()).unwrap();
        let sums = CellSums::new(&g);
        for rect in [g.full_rect(), CellRect::cell(3, 4), CellRect { x0: 2, x1: 9, y0: 5, y1: 17 }] {
            assert!((sums.mean(&rect) - g.mean_cell_f(&rect)).abs() < 1e-15);
        }
    }

    #[test]
    fn growth_respects_threshold() {
        let bins = BinSpec { x_bins: 3, y_bins: 3 };
        let s = vec![sample(0, 1, 0.1), sample(1, 1, 0.2), sample(2, 4, 0.9), sample(3, 4, 0.8)];
        let g = estimate_joint(&s, &bins).unwrap();
        let tau = 0.05 * g.max_f();
        let r = grow(&g, &CellSums::new(&g), (0, 0), tau);
        assert!(g.mean_cell_f(&r) > tau);
        assert!(r.contains(0, 0));
    }

    #[test]
    fn ordered_samples_yield_both_corner_regions() {
        let regions = extract_clusters(&priority_ordered(1000), &ClusterConfig::default()).unwrap();
        assert!(regions.iter().any(|r| r.hint == ClusterHint::UpperLeft), "{regions:?}");
        assert!(regions.iter().any(|r| r.hint == ClusterHint::LowerRight), "{regions:?}");
        for r in &regions {
            assert!(r.mean_f > r.mean_err && r.region_f > r.null_f);
        }
    }

    #[test]
    fn extraction_is_seed_deterministic() {
        let s = priority_ordered(400);
        let cfg = ClusterConfig { seed: 9, ..Default::default() };
        assert_eq!(extract_clusters(&s, &cfg).unwrap(), extract_clusters(&s, &cfg).unwrap());
    }

    #[test]
    fn hints_follow_region_position() {
        let g = estimate_joint(&[sample(0, 1, 0.5)], &BinSpec::default()).unwrap();
        let top_large = CellRect { x0: 7, x1: 9, y0: 17, y1: 19 };
        let slow_small = CellRect { x0: 0, x1: 3, y0: 0, y1: 9 };
        assert_eq!(hint_for(&g, &top_large, 100), ClusterHint::UpperLeft);
        assert_eq!(hint_for(&g, &slow_small, 100), ClusterHint::LowerRight);
        assert_eq!(hint_for(&g, &CellRect { x0: 0, x1: 1, y0: 15, y1: 19 }, 100), ClusterHint::Other);
    }

    #[test]
    fn averaged_extraction_uses_event_spread() {
        let s = priority_ordered(500);
        let g = estimate_joint(&s, &BinSpec::default()).unwrap();
        let (avg, regions) = extract_average_clusters(&[g.clone(), g.clone()], &ClusterConfig::default()).unwrap();
        assert_eq!(avg.f_values, g.f_values);
        // identical events have zero spread, so every grown region qualifies
        assert!(regions.iter().all(|r| r.mean_err == 0.0 && r.null_f == 0.0));
        assert!(!regions.is_empty());
    }
}
