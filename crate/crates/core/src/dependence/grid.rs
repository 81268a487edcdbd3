use serde::{Deserialize, Serialize};

use super::RankedSample;
use crate::error::{Error, Result};

/// Histogram resolution. Size bins are powers of two, speed bins uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSpec {
    pub x_bins: usize,
    pub y_bins: usize,
}

impl Default for BinSpec {
    fn default() -> Self {
        // 2^12 = 4096 customers opens the last size bin; 20 speed bins put
        // the 0.15 and 0.50 category boundaries on bin edges
        Self { x_bins: 13, y_bins: 20 }
    }
}

impl BinSpec {
    pub fn validate(&self) -> Result<()> {
        if self.x_bins < 2 || self.y_bins < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 bins per axis, got {}x{}",
                self.x_bins, self.y_bins
            )));
        }
        if self.x_bins > 63 {
            return Err(Error::InvalidConfig("at most 63 size bins".into()));
        }
        Ok(())
    }

    pub fn x_bin(&self, size: u64) -> usize {
        let log2 = 63 - size.max(1).leading_zeros() as usize;
        log2.min(self.x_bins - 1)
    }

    pub fn y_bin(&self, speed: f64) -> usize {
        let idx = (speed * self.y_bins as f64).floor();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.y_bins - 1)
        }
    }
}

/// Inclusive rectangle of bin indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellRect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl CellRect {
    pub fn cell(x: usize, y: usize) -> Self {
        Self { x0: x, x1: x, y0: y, y1: y }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn intersects(&self, other: &CellRect) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }

    pub fn bounding(&self, other: &CellRect) -> CellRect {
        CellRect {
            x0: self.x0.min(other.x0),
            x1: self.x1.max(other.x1),
            y0: self.y0.min(other.y0),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.x0..=self.x1).flat_map(move |x| (self.y0..=self.y1).map(move |y| (x, y)))
    }
}

/// Binned joint distribution of (failure size, recovery speed).
///
/// Matrices are indexed `[x][y]`. Grids estimated from samples keep their
/// cell counts so region metrics are evaluated in exact integer arithmetic;
/// averaged grids have no counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointGrid {
    /// Lower edges of the size bins (1, 2, 4, ...); the last bin is open-ended.
    pub x_bin_edges: Vec<u64>,
    pub y_bin_edges: Vec<f64>,
    pub samples: usize,
    pub events: usize,
    pub counts: Option<Vec<Vec<u64>>>,
    pub joint: Vec<Vec<f64>>,
    pub x_marginal: Vec<f64>,
    pub y_marginal: Vec<f64>,
    pub f_values: Vec<Vec<f64>>,
    pub err: Vec<Vec<f64>>,
}

impl JointGrid {
    pub fn x_bins(&self) -> usize {
        self.x_bin_edges.len()
    }

    pub fn y_bins(&self) -> usize {
        self.y_bin_edges.len() - 1
    }

    pub fn max_f(&self) -> f64 {
        self.f_values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn full_rect(&self) -> CellRect {
        CellRect {
            x0: 0,
            x1: self.x_bins() - 1,
            y0: 0,
            y1: self.y_bins() - 1,
        }
    }

    /// Arithmetic mean of the cell f values inside `rect`.
    pub fn mean_cell_f(&self, rect: &CellRect) -> f64 {
        rect.cells().map(|(x, y)| self.f_values[x][y]).sum::<f64>() / rect.area() as f64
    }

    /// Heat-map rows `x_bin,y_bin,f,err`.
    pub fn write_heatmap_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["x_bin", "y_bin", "f", "err"])?;
        for x in 0..self.x_bins() {
            for y in 0..self.y_bins() {
                w.write_record([
                    x.to_string(),
                    y.to_string(),
                    self.f_values[x][y].to_string(),
                    self.err[x][y].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }

    fn same_bins(&self, other: &JointGrid) -> bool {
        self.x_bin_edges == other.x_bin_edges && self.y_bin_edges == other.y_bin_edges
    }
}

fn exact_f(c_ab: u64, c_a: u64, c_b: u64, n: u64) -> f64 {
    let num = c_ab as i128 * n as i128 - c_a as i128 * c_b as i128;
    num as f64 / (n as f64 * n as f64)
}

fn zeros(nx: usize, ny: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; ny]; nx]
}

pub(crate) fn y_edges(y_bins: usize) -> Vec<f64> {
    (0..=y_bins).map(|i| i as f64 / y_bins as f64).collect()
}

pub(crate) fn x_edges(x_bins: usize) -> Vec<u64> {
    (0..x_bins).map(|i| 1u64 << i).collect()
}

/// Empirical joint histogram with per-cell dependence.
///
/// An empty sample set yields an all-zero grid.
pub fn estimate_joint(samples: &[RankedSample], bins: &BinSpec) -> Result<JointGrid> {
    bins.validate()?;
    let (nx, ny) = (bins.x_bins, bins.y_bins);
    let mut counts = vec![vec![0u64; ny]; nx];
    for s in samples {
        counts[bins.x_bin(s.size_x)][bins.y_bin(s.speed_y)] += 1;
    }
    Ok(grid_from_counts(counts, bins))
}

pub(crate) fn grid_from_counts(counts: Vec<Vec<u64>>, bins: &BinSpec) -> JointGrid {
    let (nx, ny) = (bins.x_bins, bins.y_bins);
    let n: u64 = counts.iter().flatten().sum();
    let row: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<u64> = (0..ny).map(|y| counts.iter().map(|r| r[y]).sum()).collect();

    let (joint, x_marginal, y_marginal, f_values) = if n == 0 {
        (zeros(nx, ny), vec![0.0; nx], vec![0.0; ny], zeros(nx, ny))
    } else {
        let nf = n as f64;
        let joint = counts.iter().map(|r| r.iter().map(|&c| c as f64 / nf).collect()).collect();
        let xm = row.iter().map(|&c| c as f64 / nf).collect();
        let ym = col.iter().map(|&c| c as f64 / nf).collect();
        let f: Vec<Vec<f64>> = (0..nx)
            .map(|x| (0..ny).map(|y| exact_f(counts[x][y], row[x], col[y], n)).collect())
            .collect();
        debug_assert!(f.iter().flatten().all(|v| v.abs() <= 0.25 + 1e-12));
        (joint, xm, ym, f)
    };

    JointGrid {
        x_bin_edges: x_edges(nx),
        y_bin_edges: y_edges(ny),
        samples: n as usize,
        events: 1,
        counts: Some(counts),
        joint,
        x_marginal,
        y_marginal,
        f_values,
        err: zeros(nx, ny),
    }
}

/// Dependence of a rectangular region.
pub fn rect_metric(grid: &JointGrid, rect: &CellRect) -> f64 {
    match &grid.counts {
        Some(counts) if grid.samples > 0 => {
            let mut c_ab = 0;
            let mut c_a = 0;
            let mut c_b = 0;
            for (x, row) in counts.iter().enumerate() {
                for (y, &c) in row.iter().enumerate() {
                    let in_a = (rect.x0..=rect.x1).contains(&x);
                    let in_b = (rect.y0..=rect.y1).contains(&y);
                    if in_a {
                        c_a += c;
                    }
                    if in_b {
                        c_b += c;
                    }
                    if in_a && in_b {
                        c_ab += c;
                    }
                }
            }
            exact_f(c_ab, c_a, c_b, grid.samples as u64)
        }
        _ => {
            let p: f64 = rect.cells().map(|(x, y)| grid.joint[x][y]).sum();
            let q: f64 = grid.x_marginal[rect.x0..=rect.x1].iter().sum();
            let r: f64 = grid.y_marginal[rect.y0..=rect.y1].iter().sum();
            p - q * r
        }
    }
}

/// Dependence of an arbitrary cell set, which must tile a rectangle.
pub fn dependence_region_metric(grid: &JointGrid, region: &[(usize, usize)]) -> Result<f64> {
    let (&(fx, fy), _) = region.split_first().ok_or(Error::NonRectangular)?;
    let mut rect = CellRect::cell(fx, fy);
    for &(x, y) in region {
        rect = rect.bounding(&CellRect::cell(x, y));
    }
    if rect.x1 >= grid.x_bins() || rect.y1 >= grid.y_bins() {
        return Err(Error::NonRectangular);
    }
    let mut distinct = region.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != rect.area() {
        return Err(Error::NonRectangular);
    }
    Ok(rect_metric(grid, &rect))
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Cell-wise mean of per-event grids; `err` is the standard error across events.
pub fn average_dependence(grids: &[JointGrid]) -> Result<JointGrid> {
    let first = grids.first().ok_or(Error::EmptyEvent)?;
    if grids.iter().any(|g| !g.same_bins(first)) {
        return Err(Error::BinMismatch);
    }
    let (nx, ny) = (first.x_bins(), first.y_bins());
    let m = grids.len() as f64;
    let mean_vec = |pick: &dyn Fn(&JointGrid) -> &Vec<f64>| -> Vec<f64> {
        (0..pick(first).len())
            .map(|i| grids.iter().map(|g| pick(g)[i]).sum::<f64>() / m)
            .collect()
    };
    let mut f_values = zeros(nx, ny);
    let mut err = zeros(nx, ny);
    let mut joint = zeros(nx, ny);
    for x in 0..nx {
        for y in 0..ny {
            let fs: Vec<f64> = grids.iter().map(|g| g.f_values[x][y]).collect();
            (f_values[x][y], err[x][y]) = mean_and_stderr(&fs);
            joint[x][y] = grids.iter().map(|g| g.joint[x][y]).sum::<f64>() / m;
        }
    }
    Ok(JointGrid {
        x_bin_edges: first.x_bin_edges.clone(),
        y_bin_edges: first.y_bin_edges.clone(),
        samples: grids.iter().map(|g| g.samples).sum(),
        events: grids.iter().map(|g| g.events).sum(),
        counts: None,
        joint,
        x_marginal: mean_vec(&|g| &g.x_marginal),
        y_marginal: mean_vec(&|g| &g.y_marginal),
        f_values,
        err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::DeviceType;

    fn sample(size: u64, speed: f64) -> RankedSample {
        RankedSample {
            record_id: String::new(),
            size_x: size,
            speed_y: speed,
            duration: 0,
            device: DeviceType::Other,
        }
    }

    const TWO: BinSpec = BinSpec { x_bins: 2, y_bins: 2 };

    /// p - q r by direct enumeration over the samples.
    fn brute(samples: &[RankedSample], bins: &BinSpec, rect: &CellRect) -> f64 {
        let n = samples.len() as f64;
        let in_a = |s: &RankedSample| (rect.x0..=rect.x1).contains(&bins.x_bin(s.size_x));
        let in_b = |s: &RankedSample| (rect.y0..=rect.y1).contains(&bins.y_bin(s.speed_y));
        let p = samples.iter().filter(|s| in_a(s) && in_b(s)).count() as f64 / n;
        let q = samples.iter().filter(|s| in_a(s)).count() as f64 / n;
        let r = samples.iter().filter(|s| in_b(s)).count() as f64 / n;
        p - q * r
    }

    #[test]
    fn bin_indexing() {
        let b = BinSpec { x_bins: 4, y_bins: 20 };
        assert_eq!([1, 2, 3, 4, 7, 8, 100_000].map(|s| b.x_bin(s)), [0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(b.y_bin(0.0), 0);
        assert_eq!(b.y_bin(0.049), 0);
        assert_eq!(b.y_bin(0.05), 1);
        assert_eq!(b.y_bin(0.999), 19);
        assert_eq!(b.y_bin(1.0), 19);
    }

    #[test]
    fn degenerate_distribution_is_independent() {
        let s = vec![sample(1, 0.1); 4];
        let g = estimate_joint(&s, &TWO).unwrap();
        assert_eq!(g.joint[0][0], 1.0);
        assert_eq!(g.f_values[0][0], 0.0);
    }

    #[test]
    fn product_distribution_has_zero_f() {
        let s = vec![sample(1, 0.1), sample(1, 0.9), sample(3, 0.1), sample(3, 0.9)];
        let g = estimate_joint(&s, &TWO).unwrap();
        assert!(g.f_values.iter().flatten().all(|f| f.abs() < 1e-9));
    }

    #[test]
    fn hand_placed_cells_match_enumeration() {
        let s = vec![
            sample(1, 0.2),
            sample(1, 0.3),
            sample(1, 0.8),
            sample(2, 0.9),
            sample(3, 0.7),
            sample(2, 0.1),
        ];
        let g = estimate_joint(&s, &TWO).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                let want = brute(&s, &TWO, &CellRect::cell(x, y));
                assert!((g.f_values[x][y] - want).abs() < 1e-12);
            }
        }
        // x0 = {0.2,0.3,0.8}, x1 = {0.9,0.7,0.1}: f(0,0) = 2/6 - (3/6)(3/6)
        assert!((g.f_values[0][0] - (2.0 / 6.0 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn marginals_are_row_and_column_sums() {
        let s: Vec<_> = (1..40).map(|i| sample(i * 7 % 50 + 1, (i as f64 * 0.37) % 1.0)).collect();
        let bins = BinSpec { x_bins: 5, y_bins: 4 };
        let g = estimate_joint(&s, &bins).unwrap();
        let total: f64 = g.joint.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for x in 0..5 {
            assert!((g.joint[x].iter().sum::<f64>() - g.x_marginal[x]).abs() < 1e-9);
        }
        for y in 0..4 {
            assert!((g.joint.iter().map(|r| r[y]).sum::<f64>() - g.y_marginal[y]).abs() < 1e-9);
        }
    }

    #[test]
    fn full_grid_region_is_zero() {
        let s = vec![sample(1, 0.2), sample(5, 0.9), sample(2, 0.5)];
        let bins = BinSpec { x_bins: 3, y_bins: 3 };
        let g = estimate_joint(&s, &bins).unwrap();
        let all: Vec<_> = g.full_rect().cells().collect();
        assert_eq!(dependence_region_metric(&g, &all).unwrap(), 0.0);
    }

    #[test]
    fn single_cell_region_equals_cell_f() {
        let s = vec![sample(1, 0.2), sample(5, 0.9), sample(2, 0.5), sample(4, 0.1)];
        let bins = BinSpec { x_bins: 3, y_bins: 3 };
        let g = estimate_joint(&s, &bins).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(dependence_region_metric(&g, &[(x, y)]).unwrap(), g.f_values[x][y]);
            }
        }
    }

    #[test]
    fn top_left_block_matches_enumeration() {
        let bins = BinSpec { x_bins: 3, y_bins: 3 };
        let s = vec![
            sample(1, 0.1),
            sample(1, 0.5),
            sample(2, 0.4),
            sample(3, 0.9),
            sample(4, 0.95),
            sample(6, 0.7),
            sample(9, 0.2),
            sample(1, 0.8),
            sample(2, 0.1),
        ];
        let g = estimate_joint(&s, &bins).unwrap();
        let rect = CellRect { x0: 0, x1: 1, y0: 1, y1: 2 };
        let cells: Vec<_> = rect.cells().collect();
        let got = dependence_region_metric(&g, &cells).unwrap();
        assert!((got - brute(&s, &bins, &rect)).abs() < 1e-12);
    }

    #[test]
    fn non_rectangular_region_rejected() {
        let g = estimate_joint(&[sample(1, 0.5)], &BinSpec { x_bins: 3, y_bins: 3 }).unwrap();
        let l_shape = [(0, 0), (0, 1), (1, 0)];
        assert_eq!(dependence_region_metric(&g, &l_shape).unwrap_err().code(), "NON_RECTANGULAR");
        assert_eq!(dependence_region_metric(&g, &[]).unwrap_err().code(), "NON_RECTANGULAR");
        assert_eq!(dependence_region_metric(&g, &[(5, 0)]).unwrap_err().code(), "NON_RECTANGULAR");
    }

    #[test]
    fn average_of_one_is_identity() {
        let s = vec![sample(1, 0.2), sample(5, 0.9), sample(2, 0.5)];
        let g = estimate_joint(&s, &TWO).unwrap();
        let avg = average_dependence(std::slice::from_ref(&g)).unwrap();
        assert_eq!(avg.f_values, g.f_values);
        assert_eq!(avg.joint, g.joint);
        assert!(avg.err.iter().flatten().all(|&e| e == 0.0));
    }

    #[test]
    fn opposite_grids_cancel() {
        let s = vec![sample(1, 0.2), sample(1, 0.3), sample(5, 0.9)];
        let g = estimate_joint(&s, &TWO).unwrap();
        let mut neg = g.clone();
        neg.f_values.iter_mut().flatten().for_each(|f| *f = -*f);
        let avg = average_dependence(&[g, neg]).unwrap();
        assert!(avg.f_values.iter().flatten().all(|&f| f == 0.0));
    }

    #[test]
    fn three_event_average_is_cellwise_mean() {
        let sets = [
            vec![sample(1, 0.2), sample(3, 0.9)],
            vec![sample(1, 0.8), sample(3, 0.1), sample(1, 0.7)],
            vec![sample(3, 0.6), sample(1, 0.6), sample(3, 0.4), sample(1, 0.1)],
        ];
        let grids: Vec<_> = sets.iter().map(|s| estimate_joint(s, &TWO).unwrap()).collect();
        let avg = average_dependence(&grids).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                let vals: Vec<f64> = sets.iter().map(|s| brute(s, &TWO, &CellRect::cell(x, y))).collect();
                let mean = vals.iter().sum::<f64>() / 3.0;
                assert!((avg.f_values[x][y] - mean).abs() < 1e-12);
            }
        }
        assert_eq!(avg.events, 3);
    }

    #[test]
    fn mismatched_bins_rejected() {
        let a = estimate_joint(&[sample(1, 0.5)], &TWO).unwrap();
        let b = estimate_joint(&[sample(1, 0.5)], &BinSpec { x_bins: 2, y_bins: 3 }).unwrap();
        assert_eq!(average_dependence(&[a, b]).unwrap_err().code(), "BIN_MISMATCH");
    }
}
