//! Objective profiles along one obstacle height and the bisection that finds
//! the supremum of their basin.

use crate::geometry::{trace_link, GridSpec, LinkTrace};
use crate::obstacle::{class_excluding, fill_likelihood, hard_region, ObstacleMap, SoftFilter};
use crate::propagation::{mix_laws, PathLossParams};

use super::{Dataset, FitConfig};

/// Objective sampled along one height coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightProfile {
    pub zs: Vec<f64>,
    pub fs: Vec<f64>,
}

impl HeightProfile {
    pub fn min(&self) -> f64 {
        self.fs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `n` evenly spaced heights covering `[0, h_max]`.
pub fn uniform_heights(h_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| h_max * i as f64 / (n - 1) as f64).collect()
}

/// Measurements with every filter tap traced once, plus an inverted index
/// from grid cells to the records whose taps cross them.
#[derive(Debug, Clone)]
pub struct TracedData {
    d: Vec<f64>,
    y: Vec<f64>,
    weights: Vec<f64>,
    /// Tap `j` of record `i` lives at `i * taps + j`.
    traces: Vec<LinkTrace>,
    by_cell: Vec<Vec<u32>>,
    h_max: f64,
}

impl TracedData {
    pub fn new(data: &Dataset, grid: &GridSpec, filter: &SoftFilter) -> Self {
        let taps = filter.len();
        let mut traces = Vec::with_capacity(data.len() * taps);
        let mut by_cell: Vec<Vec<u32>> = vec![Vec::new(); grid.len()];
        for (i, r) in data.records().iter().enumerate() {
            for eps in filter.offsets() {
                let t = trace_link(&r.link.offset(eps), grid);
                for c in &t.cells {
                    let list = &mut by_cell[c.cell];
                    if list.last() != Some(&(i as u32)) {
                        list.push(i as u32);
                    }
                }
                traces.push(t);
            }
        }
        Self {
            d: data.log_distances().to_vec(),
            y: data.ys(),
            weights: filter.weights().to_vec(),
            traces,
            by_cell,
            h_max: grid.h_max_m,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn taps(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn log_distances(&self) -> &[f64] {
        &self.d
    }

    pub(crate) fn ys(&self) -> &[f64] {
        &self.y
    }

    /// Records whose traces (any tap) cross cell `m`.
    pub fn records_over(&self, m: usize) -> &[u32] {
        &self.by_cell[m]
    }

    /// Tallest map under which no record is more obstructed than its label:
    /// `h_{m,k}` sits just below the lowest critical altitude over cell `m`
    /// among records labelled below `k` (center tap only).
    pub fn label_envelope(&self, labels: &[usize], grid: &GridSpec, classes: usize) -> ObstacleMap {
        let mut map = ObstacleMap::filled(*grid, classes, grid.h_max_m);
        let taps = self.taps();
        for (i, &label) in labels.iter().enumerate() {
            for c in &self.traces[i * taps].cells {
                let below = c.z - 1e-9 * c.z.abs().max(1.0);
                for k in label + 1..=classes {
                    if below < map.get(c.cell, k) {
                        map.set(c.cell, k, below);
                    }
                }
            }
        }
        map
    }

    /// Hard class of every tap under `map`.
    pub fn classes(&self, map: &ObstacleMap) -> Vec<usize> {
        self.traces.iter().map(|t| hard_region(t, map)).collect()
    }

    pub fn likelihoods(&self, classes: &[usize], k: usize) -> Vec<Vec<f64>> {
        classes
            .chunks(self.taps())
            .map(|c| {
                let mut s = vec![0.0; k + 1];
                fill_likelihood(&mut s, c.iter().copied(), &self.weights);
                s
            })
            .collect()
    }

    fn squared_residual(&self, theta: &PathLossParams, i: usize, classes: &[usize], s: &mut [f64]) -> f64 {
        fill_likelihood(s, classes.iter().copied(), &self.weights);
        let e = self.y[i] - mix_laws(theta, self.d[i], s);
        e * e
    }

    pub fn squared_residuals(&self, theta: &PathLossParams, classes: &[usize]) -> Vec<f64> {
        let mut s = vec![0.0; theta.classes() + 1];
        classes
            .chunks(self.taps())
            .enumerate()
            .map(|(i, c)| self.squared_residual(theta, i, c, &mut s))
            .collect()
    }

    /// Mean squared residual for precomputed tap classes.
    pub fn objective_with(&self, theta: &PathLossParams, classes: &[usize]) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.squared_residuals(theta, classes).iter().sum::<f64>() / self.len() as f64
    }

    pub fn objective(&self, theta: &PathLossParams, map: &ObstacleMap) -> f64 {
        self.objective_with(theta, &self.classes(map))
    }

    /// Objective as a function of `h_{m,k}` alone, with everything else fixed.
    /// `classes` and `sq` must describe the current `map`.
    pub(crate) fn cell_problem<'a>(
        &'a self,
        theta: &'a PathLossParams,
        map: &ObstacleMap,
        classes: &[usize],
        sq: &[f64],
        m: usize,
        k: usize,
    ) -> CellProblem<'a> {
        let taps = self.taps();
        let records = &self.by_cell[m];
        let mut affected = vec![false; self.len()];
        for &i in records {
            affected[i as usize] = true;
        }
        let base: f64 = sq
            .iter()
            .zip(&affected)
            .filter(|(_, &a)| !a)
            .map(|(v, _)| v)
            .sum();
        let mut fixed = Vec::with_capacity(records.len() * taps);
        for &i in records {
            let i = i as usize;
            for j in 0..taps {
                let t = i * taps + j;
                let trace = &self.traces[t];
                if trace.z_at(m).is_none() {
                    fixed.push((classes[t], f64::INFINITY));
                } else {
                    let (c, z) = class_excluding(trace, map, m, k);
                    fixed.push((c, z.unwrap_or(f64::INFINITY)));
                }
            }
        }
        CellProblem {
            data: self,
            theta,
            k,
            base,
            records,
            fixed,
        }
    }
}

/// One-dimensional slice of the objective through `h_{m,k}`.
pub(crate) struct CellProblem<'a> {
    data: &'a TracedData,
    theta: &'a PathLossParams,
    k: usize,
    /// Squared residuals of records that never cross cell `m`.
    base: f64,
    records: &'a [u32],
    /// Per affected tap: class with `(m, k)` ignored, critical altitude over `m`.
    fixed: Vec<(usize, f64)>,
}

impl CellProblem<'_> {
    pub fn is_irrelevant(&self) -> bool {
        self.records.is_empty()
    }

    #[inline]
    fn tap_class(&self, (c, z): (usize, f64), h: f64) -> usize {
        if h >= z {
            c.max(self.k)
        } else {
            c
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        let taps = self.data.taps();
        let mut s = vec![0.0; self.theta.classes() + 1];
        let mut cls = vec![0usize; taps];
        let mut total = self.base;
        for (r, &i) in self.records.iter().enumerate() {
            for j in 0..taps {
                cls[j] = self.tap_class(self.fixed[r * taps + j], h);
            }
            total += self.data.squared_residual(self.theta, i as usize, &cls, &mut s);
        }
        total / self.data.len().max(1) as f64
    }

    pub fn profile(&self, zs: &[f64]) -> HeightProfile {
        HeightProfile {
            zs: zs.to_vec(),
            fs: zs.iter().map(|&z| self.eval(z)).collect(),
        }
    }

    /// Applies `h_{m,k} = h` to the cached tap classes and squared residuals.
    pub fn commit(&self, h: f64, classes: &mut [usize], sq: &mut [f64]) {
        let taps = self.data.taps();
        let mut s = vec![0.0; self.theta.classes() + 1];
        for (r, &i) in self.records.iter().enumerate() {
            let i = i as usize;
            for j in 0..taps {
                classes[i * taps + j] = self.tap_class(self.fixed[r * taps + j], h);
            }
            sq[i] = self
                .data
                .squared_residual(self.theta, i, &classes[i * taps..(i + 1) * taps], &mut s);
        }
    }

    /// Bisection result unless the current height or the top of the sampled
    /// basin does strictly better; noisy profiles need not be quasiconvex, so
    /// the bisection alone can climb.
    pub fn descend(&self, h_old: f64, zs: &[f64], b: f64, eps: f64) -> f64 {
        let h_bis = self.bisect(zs, b, eps);
        if self.is_irrelevant() {
            return h_bis;
        }
        let prof = self.profile(zs);
        let f_min = prof.min();
        let grid_top = prof
            .zs
            .iter()
            .zip(&prof.fs)
            .filter(|(_, &f)| f <= f_min)
            .map(|(&z, _)| z)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut best = (h_bis, self.eval(h_bis));
        for h in [grid_top, h_old] {
            let f = self.eval(h);
            if f < best.1 {
                best = (h, f);
            }
        }
        best.0
    }

    /// Bisection for the supremum of the profile's basin. A midpoint whose
    /// exact objective sits at the sampled minimum counts as inside the basin;
    /// one below or above every sampled minimizer moves towards them, so a
    /// basin narrower than the kernel window is not smoothed away. Between
    /// sampled minimizers the local-linear slope sign decides. The upper
    /// endpoint is returned unless it has stepped out of the basin while the
    /// lower one is still inside.
    pub fn bisect(&self, zs: &[f64], b: f64, eps: f64) -> f64 {
        let h_max = self.data.h_max;
        if self.is_irrelevant() {
            return h_max;
        }
        let prof = self.profile(zs);
        let f_min = prof.min();
        let tol = 1e-12 * f_min.abs().max(1.0);
        let basin: Vec<f64> = prof
            .zs
            .iter()
            .zip(&prof.fs)
            .filter(|(_, &f)| f <= f_min + tol)
            .map(|(&z, _)| z)
            .collect();
        let basin_bottom = basin.iter().copied().fold(f64::INFINITY, f64::min);
        let basin_top = basin.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let (mut lo, mut hi) = (0.0, h_max);
        while hi - lo >= eps {
            let mid = 0.5 * (lo + hi);
            let in_basin = self.eval(mid) <= f_min + tol;
            if in_basin || mid < basin_bottom {
                lo = mid;
                continue;
            }
            if mid > basin_top {
                hi = mid;
                continue;
            }
            // between separated sampled minima: follow the smoothed slope
            let a1 = local_poly_slope(&prof, mid, b);
            if a1 < 0.0 {
                lo = mid;
            } else if a1 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if lo > 0.0 && self.eval(hi) > f_min + tol && self.eval(lo) <= f_min + tol {
            lo
        } else {
            hi
        }
    }
}

/// Slope of the Epanechnikov-weighted local-linear fit to `profile` at `h`.
/// The window doubles (up to the profile span) until it holds two samples.
pub fn local_poly_slope(profile: &HeightProfile, h: f64, b: f64) -> f64 {
    let span = match (profile.zs.first(), profile.zs.last()) {
        (Some(a), Some(z)) => (z - a).max(b),
        _ => return 0.0,
    };
    let mut bw = b;
    loop {
        let pts: Vec<(f64, f64, f64)> = profile
            .zs
            .iter()
            .zip(&profile.fs)
            .filter_map(|(&z, &f)| {
                let u = (z - h) / bw;
                (u.abs() < 1.0).then(|| (z - h, f, 0.75 / bw * (1.0 - u * u)))
            })
            .collect();
        if pts.len() >= 2 {
            return weighted_slope(&pts);
        }
        if bw >= 2.0 * span {
            return 0.0;
        }
        bw *= 2.0;
    }
}

fn weighted_slope(pts: &[(f64, f64, f64)]) -> f64 {
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xbar = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    // measuring f from a sample keeps flat windows exactly flat
    let f_ref = pts[0].1;
    let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), &(x, f, w)| {
        let dx = x - xbar;
        (n + w * dx * (f - f_ref), d + w * dx * dx)
    });
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Objective profile along `h_{m,k}` over `z_grid_size` uniform heights.
#[allow(clippy::too_many_arguments)]
pub fn height_profile(
    data: &Dataset,
    theta: &PathLossParams,
    map: &ObstacleMap,
    filter: &SoftFilter,
    m: usize,
    k: usize,
    z_grid_size: usize,
) -> HeightProfile {
    let td = TracedData::new(data, map.grid(), filter);
    let classes = td.classes(map);
    let sq = td.squared_residuals(theta, &classes);
    let zs = uniform_heights(map.grid().h_max_m, z_grid_size);
    td.cell_problem(theta, map, &classes, &sq, m, k).profile(&zs)
}

/// Basin supremum of the objective along `h_{m,k}`.
#[allow(clippy::too_many_arguments)]
pub fn bisect_height(
    data: &Dataset,
    theta: &PathLossParams,
    map: &ObstacleMap,
    filter: &SoftFilter,
    m: usize,
    k: usize,
    cfg: &FitConfig,
) -> f64 {
    let td = TracedData::new(data, map.grid(), filter);
    let classes = td.classes(map);
    let sq = td.squared_residuals(theta, &classes);
    let h_max = map.grid().h_max_m;
    let zs = uniform_heights(h_max, cfg.z_grid_size);
    td.cell_problem(theta, map, &classes, &sq, m, k)
        .bisect(&zs, cfg.bandwidth(h_max), cfg.eps_height(h_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{objective_f, Measurement};
    use crate::geometry::{Link, Point3};
    use crate::obstacle::{make_filter, FilterMode};
    use crate::propagation::deterministic_gain;

    fn theta_star() -> PathLossParams {
        PathLossParams::from_pairs(&[(-22.0, -28.0), (-36.0, -22.0)])
    }

    fn line_profile(slope: f64) -> HeightProfile {
        let zs = uniform_heights(50.0, 33);
        let fs = zs.iter().map(|z| 3.0 + slope * z).collect();
        HeightProfile { zs, fs }
    }

    #[test]
    fn slope_reproduces_lines_and_symmetry() {
        for &(h, b) in &[(10.0, 6.25), (0.0, 3.0), (49.0, 20.0), (25.0, 1.0)] {
            let a = local_poly_slope(&line_profile(-1.7), h, b);
            assert!((a + 1.7).abs() < 1e-10, "{a}");
        }
        let zs = uniform_heights(50.0, 33);
        let center = zs[16];
        let fs = zs.iter().map(|z| (z - center).abs()).collect();
        let v = HeightProfile { zs, fs };
        assert!(local_poly_slope(&v, center, 6.25).abs() < 1e-10);
    }

    #[test]
    fn staircase_slope_signs() {
        // three records stepping the objective up at 12, 20 and 31 m
        let zs = uniform_heights(50.0, 33);
        let step = |z: f64| [12.0, 20.0, 31.0].iter().filter(|&&s| z >= s).count() as f64;
        let fs: Vec<f64> = zs.iter().map(|&z| step(z)).collect();
        let prof = HeightProfile { zs, fs };
        for &h in &[11.0, 19.0, 30.0] {
            let oracle = step(h + 1.6) - step(h - 1.6);
            let a = local_poly_slope(&prof, h, 3.0);
            assert_eq!(a > 0.0, oracle > 0.0, "h={h}");
        }
    }

    fn one_record_setup(z: f64) -> (Dataset, ObstacleMap) {
        // vertical-ish link confined to cell 0 with minimum altitude z
        let grid = GridSpec::new(0.0, 0.0, 10.0, 1, 1, 50.0).unwrap();
        let link = Link::new(Point3::new(2.0, 2.0, z), Point3::new(8.0, 8.0, 45.0)).unwrap();
        let map = ObstacleMap::empty(grid, 1);
        let y = deterministic_gain(&link, &theta_star(), &map, &SoftFilter::point()).unwrap();
        let data = Dataset::new(vec![Measurement { link, rss_db: y }]).unwrap();
        (data, map)
    }

    #[test]
    fn single_los_record_staircase() {
        let (data, map) = one_record_setup(10.0);
        let prof = height_profile(&data, &theta_star(), &map, &SoftFilter::point(), 0, 1, 33);
        for (z, f) in prof.zs.iter().zip(&prof.fs) {
            if *z < 10.0 {
                assert_eq!(*f, 0.0);
            } else {
                assert!(*f > 0.0);
            }
        }
        let cfg = FitConfig::default();
        let h = bisect_height(&data, &theta_star(), &map, &SoftFilter::point(), 0, 1, &cfg);
        let tol = cfg.eps_height(50.0) + 50.0 / 32.0;
        assert!((h - 10.0).abs() <= tol, "{h}");
        // the returned height keeps the record unobstructed
        assert!(h < 10.0);
    }

    #[test]
    fn irrelevant_cell_stays_at_max() {
        let (data, _) = one_record_setup(10.0);
        let grid = GridSpec::new(0.0, 0.0, 10.0, 2, 1, 50.0).unwrap();
        let map = ObstacleMap::empty(grid, 1);
        let prof = height_profile(&data, &theta_star(), &map, &SoftFilter::point(), 1, 1, 9);
        assert!(prof.fs.windows(2).all(|w| w[0] == w[1]));
        let h = bisect_height(&data, &theta_star(), &map, &SoftFilter::point(), 1, 1, &FitConfig::default());
        assert_eq!(h, 50.0);
    }

    #[test]
    fn profile_matches_full_recompute() {
        let grid = GridSpec::new(0.0, 0.0, 10.0, 4, 4, 40.0).unwrap();
        let mut map = ObstacleMap::empty(grid, 2);
        map.set(5, 1, 30.0);
        map.set(5, 2, 12.0);
        map.set(10, 1, 22.0);
        let filter = make_filter(3.0, 3.0, FilterMode::Cross).unwrap();
        let records: Vec<Measurement> = (0..40)
            .map(|i| {
                let a = i as f64;
                let link = Link::from_coords([
                    1.0 + (a * 7.3) % 38.0,
                    2.0 + (a * 3.1) % 37.0,
                    1.5,
                    (a * 11.7) % 40.0,
                    (a * 5.9) % 40.0,
                    15.0 + (a * 2.3) % 30.0,
                ]);
                Measurement { link, rss_db: -60.0 - (a * 1.37) % 25.0 }
            })
            .collect();
        let data = Dataset::new(records).unwrap();
        let theta = PathLossParams::from_pairs(&[(-22.0, -28.0), (-36.0, -22.0), (-40.0, -30.0)]);
        for &(m, k) in &[(5, 1), (5, 2), (6, 1), (10, 2)] {
            let prof = height_profile(&data, &theta, &map, &filter, m, k, 17);
            for (&z, &f) in prof.zs.iter().zip(&prof.fs) {
                let mut h = map.clone();
                h.set(m, k, z);
                let full = objective_f(&data, &theta, &h, &filter);
                assert!((f - full).abs() <= 1e-10 * full.max(1.0), "{m} {k} {z}: {f} vs {full}");
            }
        }
    }
}
