//! Multi-class virtual obstacle map and the propagation-region likelihoods it
//! induces.
//!
//! Class 0 is line of sight; classes `1..=K` are increasingly severe degrees
//! of obstruction. A link falls in class `k` when some class-`k` obstacle
//! reaches the link's critical altitude over a traced cell and no obstacle
//! of a higher class does.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{trace_link, GridSpec, Link, LinkTrace};

/// `M x K` matrix of virtual obstacle heights, stored row-major by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMap {
    grid: GridSpec,
    classes: usize,
    heights: Vec<f64>,
}

impl ObstacleMap {
    /// All-zero map (empty environment).
    pub fn empty(grid: GridSpec, classes: usize) -> Self {
        Self::filled(grid, classes, 0.0)
    }

    pub fn filled(grid: GridSpec, classes: usize, h: f64) -> Self {
        Self {
            grid,
            classes,
            heights: vec![h; grid.len() * classes],
        }
    }

    /// Builds a map from row-major heights; entries must lie in `[0, H_max]`.
    pub fn from_heights(grid: GridSpec, classes: usize, heights: Vec<f64>) -> Result<Self> {
        if heights.len() != grid.len() * classes {
            return Err(Error::InvalidInput(format!(
                "expected {} heights ({} cells x {} classes), got {}",
                grid.len() * classes,
                grid.len(),
                classes,
                heights.len()
            )));
        }
        if let Some(h) = heights
            .iter()
            .find(|h| !(**h >= 0.0 && **h <= grid.h_max_m))
        {
            return Err(Error::InvalidInput(format!(
                "obstacle height {h} outside [0, {}]",
                grid.h_max_m
            )));
        }
        Ok(Self {
            grid,
            classes,
            heights,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Number of obstacle classes K.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn cells(&self) -> usize {
        self.grid.len()
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Height of the class-`k` obstacle (`k` in `1..=K`) at cell `m`.
    #[inline]
    pub fn get(&self, m: usize, k: usize) -> f64 {
        debug_assert!(k >= 1 && k <= self.classes);
        self.heights[m * self.classes + k - 1]
    }

    #[inline]
    pub fn set(&mut self, m: usize, k: usize, h: f64) {
        debug_assert!(k >= 1 && k <= self.classes);
        self.heights[m * self.classes + k - 1] = h.clamp(0.0, self.grid.h_max_m);
    }

    /// Clips every cell to `h_{m,1} >= h_{m,2} >= ... >= h_{m,K}`.
    pub fn enforce_ordering(&mut self) {
        let k = self.classes;
        for row in self.heights.chunks_mut(k) {
            for c in 1..k {
                row[c] = row[c].min(row[c - 1]);
            }
        }
    }

    /// Restores `h_{m,1} >= ... >= h_{m,K}` by raising lower classes instead
    /// of clipping higher ones. Hard classes are unchanged: wherever a lower
    /// class is raised, the higher class already blocks the same links.
    pub fn lift_ordering(&mut self) {
        let k = self.classes;
        for row in self.heights.chunks_mut(k) {
            for c in (1..k).rev() {
                row[c - 1] = row[c - 1].max(row[c]);
            }
        }
    }

    pub fn ordering_holds(&self) -> bool {
        self.heights
            .chunks(self.classes.max(1))
            .all(|row| row.windows(2).all(|w| w[0] >= w[1]))
    }

    /// `self >= other` elementwise.
    pub fn dominates(&self, other: &ObstacleMap) -> bool {
        self.heights.len() == other.heights.len()
            && self.heights.iter().zip(&other.heights).all(|(a, b)| a >= b)
    }

    /// `(1 / MK) * ||self - other||_F`.
    pub fn normalized_frobenius_distance(&self, other: &ObstacleMap) -> f64 {
        let ss: f64 = self
            .heights
            .iter()
            .zip(&other.heights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        ss.sqrt() / self.heights.len().max(1) as f64
    }
}

/// Propagation class of a traced link under `map` (0 = line of sight).
/// An obstacle blocks when its height reaches the critical altitude.
pub fn hard_region(trace: &LinkTrace, map: &ObstacleMap) -> usize {
    let mut class = 0;
    for c in &trace.cells {
        for k in (class + 1..=map.classes).rev() {
            if map.get(c.cell, k) >= c.z {
                class = k;
                break;
            }
        }
        if class == map.classes {
            break;
        }
    }
    class
}

/// Class of the trace with entry `(m, k)` ignored, plus the critical altitude
/// over cell `m` if the trace covers it.
pub(crate) fn class_excluding(
    trace: &LinkTrace,
    map: &ObstacleMap,
    m: usize,
    k: usize,
) -> (usize, Option<f64>) {
    let mut class = 0;
    let mut z_m = None;
    for c in &trace.cells {
        if c.cell == m {
            z_m = Some(c.z);
        }
        for l in (class + 1..=map.classes).rev() {
            if (c.cell != m || l != k) && map.get(c.cell, l) >= c.z {
                class = l;
                break;
            }
        }
    }
    (class, z_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    Point,
    Cross,
}

/// Serializable description of a [`SoftFilter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub mode: FilterMode,
    #[serde(default = "default_sigma")]
    pub sigma_w_m: f64,
    #[serde(default = "default_sigma")]
    pub delta_m: f64,
}

fn default_sigma() -> f64 {
    1.0
}

impl FilterSpec {
    pub fn point() -> Self {
        Self {
            mode: FilterMode::Point,
            sigma_w_m: 1.0,
            delta_m: 1.0,
        }
    }

    pub fn cross(sigma_w_m: f64, delta_m: f64) -> Self {
        Self {
            mode: FilterMode::Cross,
            sigma_w_m,
            delta_m,
        }
    }

    pub fn build(&self) -> Result<SoftFilter> {
        make_filter(self.sigma_w_m, self.delta_m, self.mode)
    }
}

/// Spatial low-pass filter over link positions: weighted 6D offsets around
/// each link, the first of which is the link itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftFilter {
    offsets: Vec<[f64; 6]>,
    weights: Vec<f64>,
    sigma_w: f64,
    spec: FilterSpec,
}

impl SoftFilter {
    pub fn new(offsets: Vec<[f64; 6]>, weights: Vec<f64>, sigma_w: f64) -> Result<Self> {
        let f = Self {
            offsets,
            weights,
            sigma_w,
            spec: FilterSpec::point(),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn point() -> Self {
        Self {
            offsets: vec![[0.0; 6]],
            weights: vec![1.0],
            sigma_w: 1.0,
            spec: FilterSpec::point(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("soft filter: {msg}")));
        if self.offsets.is_empty() || self.offsets.len() != self.weights.len() {
            return bad("offsets and weights must be nonempty and of equal length");
        }
        if self.offsets[0] != [0.0; 6] {
            return bad("first offset must be zero");
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return bad("weights must be positive");
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("weights must sum to one");
        }
        if self.weights[0] < 2.0 / 3.0 {
            return bad("center weight must be at least 2/3");
        }
        if !(self.sigma_w > 0.0) {
            return bad("sigma_w must be positive");
        }
        Ok(())
    }

    pub fn offsets(&self) -> &[[f64; 6]] {
        &self.offsets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }

    pub fn spec(&self) -> FilterSpec {
        self.spec
    }

    /// Number of filter taps J.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_point(&self) -> bool {
        self.weights.len() == 1
    }
}

/// Builds a soft filter. `Point` is the single-tap identity filter. `Cross`
/// uses the link itself plus eight joint horizontal displacements of both
/// endpoints by `delta` (axis-aligned and diagonal), with Gaussian weights in
/// the 6D offset norm. The center weight is floored at 2/3.
pub fn make_filter(sigma_w: f64, delta: f64, mode: FilterMode) -> Result<SoftFilter> {
    if !(sigma_w > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidInput(
            "filter sigma_w and delta must be positive".into(),
        ));
    }
    let spec = FilterSpec {
        mode,
        sigma_w_m: sigma_w,
        delta_m: delta,
    };
    if mode == FilterMode::Point {
        let mut f = SoftFilter::point();
        f.sigma_w = sigma_w;
        f.spec = spec;
        return Ok(f);
    }

    let diag = delta / std::f64::consts::SQRT_2;
    let planar = [
        (delta, 0.0),
        (-delta, 0.0),
        (0.0, delta),
        (0.0, -delta),
        (diag, diag),
        (diag, -diag),
        (-diag, diag),
        (-diag, -diag),
    ];
    let mut offsets = vec![[0.0; 6]];
    offsets.extend(planar.iter().map(|&(dx, dy)| [dx, dy, 0.0, dx, dy, 0.0]));

    let raw: Vec<f64> = offsets
        .iter()
        .map(|e| (-e.iter().map(|v| v * v).sum::<f64>() / (sigma_w * sigma_w)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    if weights[0] < 2.0 / 3.0 {
        let rest: f64 = weights[1..].iter().sum();
        let scale = (1.0 / 3.0) / rest;
        weights[0] = 2.0 / 3.0;
        for w in &mut weights[1..] {
            *w *= scale;
        }
    }
    // Offsets whose weight underflowed carry no information.
    let (offsets, weights): (Vec<_>, Vec<_>) = offsets
        .into_iter()
        .zip(weights)
        .enumerate()
        .filter(|(j, (_, w))| *j == 0 || *w > 0.0)
        .map(|(_, ow)| ow)
        .unzip();
    let weights = if weights.len() == 1 { vec![1.0] } else { weights };
    let filter = SoftFilter {
        offsets,
        weights,
        sigma_w,
        spec,
    };
    filter.validate()?;
    Ok(filter)
}

/// `(S_0, ..., S_K)`: filter-weighted fraction of offset links in each class.
pub fn soft_likelihood(
    link: &Link,
    map: &ObstacleMap,
    filter: &SoftFilter,
    grid: &GridSpec,
) -> Vec<f64> {
    let classes: Vec<usize> = filter
        .offsets()
        .iter()
        .map(|eps| hard_region(&trace_link(&link.offset(eps), grid), map))
        .collect();
    likelihood_from_classes(&classes, filter.weights(), map.classes())
}

/// Accumulates per-tap classes into a likelihood vector summing to one.
pub(crate) fn likelihood_from_classes(classes: &[usize], weights: &[f64], k: usize) -> Vec<f64> {
    let mut s = vec![0.0; k + 1];
    fill_likelihood(&mut s, classes.iter().copied(), weights);
    s
}

/// In-place variant of [`likelihood_from_classes`]; `s` must hold `K + 1` slots.
#[inline]
pub(crate) fn fill_likelihood(s: &mut [f64], classes: impl Iterator<Item = usize>, weights: &[f64]) {
    s.fill(0.0);
    for (c, &w) in classes.zip(weights) {
        if c > 0 {
            s[c] += w;
        }
    }
    let blocked: f64 = s[1..].iter().sum();
    // weights may sum a hair above one
    s[0] = (1.0 - blocked).max(0.0);
}
