//! Joint estimation of the path-loss parameters and the virtual obstacle map
//! by alternating closed-form parameter solves with per-height bisection.

mod fit;
mod profile;
mod theta;

use serde::{Deserialize, Serialize};

pub use fit::{fit, nearest_law_labels, FitResult};
pub use profile::{
    bisect_height, height_profile, local_poly_slope, HeightProfile, TracedData,
};
pub use theta::{fit_line, init_theta, solve_theta};

use crate::error::{Error, Result};
use crate::geometry::{log_distance, Link};
use crate::obstacle::{soft_likelihood, ObstacleMap, SoftFilter};
use crate::propagation::{mix_laws, PathLossParams};

/// One RSS observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub link: Link,
    pub rss_db: f64,
}

/// Validated measurement records with cached log-distances.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Measurement>,
    log_d: Vec<f64>,
}

impl Dataset {
    pub fn new(records: Vec<Measurement>) -> Result<Self> {
        let mut log_d = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.link
                .validate()
                .map_err(|e| Error::InvalidInput(format!("record {i}: {e}")))?;
            if !r.rss_db.is_finite() {
                return Err(Error::InvalidInput(format!("record {i}: non-finite RSS")));
            }
            log_d.push(log_distance(&r.link)?);
        }
        Ok(Self { records, log_d })
    }

    pub fn records(&self) -> &[Measurement] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn links(&self) -> Vec<Link> {
        self.records.iter().map(|r| r.link).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rss_db).collect()
    }

    pub fn log_distances(&self) -> &[f64] {
        &self.log_d
    }

    /// Records at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            records: idx.iter().map(|&i| self.records[i]).collect(),
            log_d: idx.iter().map(|&i| self.log_d[i]).collect(),
        }
    }

    /// First `n` records and the rest.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }
}

/// Settings for [`fit`]. Heights-related defaults that scale with the grid
/// (`bandwidth_b`, `eps_height`) are `None` until resolved against `H_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub classes: usize,
    /// Bisection stop width in meters; defaults to `H_max / 256`.
    pub eps_height: Option<f64>,
    /// Outer stop threshold on `||dH||_F / (M K)`, meters.
    pub eps_outer: f64,
    pub max_outer_iters: usize,
    /// Epanechnikov window half-width in meters; defaults to `H_max / 8`.
    pub bandwidth_b: Option<f64>,
    pub z_grid_size: usize,
    pub ridge: f64,
    pub em_iters: usize,
    /// Keep the initial parameters fixed for the whole fit.
    pub freeze_theta: bool,
    /// Initial parameters; computed by [`init_theta`] when absent.
    pub theta_init: Option<PathLossParams>,
    pub init_heights: InitHeights,
    /// Never accept a height move that raises the objective.
    pub safeguard: bool,
}

/// Starting obstacle map for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitHeights {
    /// Every height at `H_max`. Links that cross several cells below `H_max`
    /// stay blocked whichever single height moves, so on dense grids the
    /// sweep rarely leaves this point.
    Max,
    /// Tallest map consistent with the class labels implied by the initial
    /// parameters (each record takes its nearest law).
    Envelope,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            classes: 1,
            eps_height: None,
            eps_outer: 0.01,
            max_outer_iters: 20,
            bandwidth_b: None,
            z_grid_size: 33,
            ridge: 1e-8,
            em_iters: 10,
            freeze_theta: false,
            theta_init: None,
            init_heights: InitHeights::Envelope,
            safeguard: true,
        }
    }
}

impl FitConfig {
    pub fn with_classes(classes: usize) -> Self {
        Self {
            classes,
            ..Self::default()
        }
    }

    pub fn eps_height(&self, h_max: f64) -> f64 {
        self.eps_height.unwrap_or(h_max / 256.0)
    }

    pub fn bandwidth(&self, h_max: f64) -> f64 {
        self.bandwidth_b.unwrap_or(h_max / 8.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: Option<f64>| v.is_none_or(|v| v > 0.0 && v.is_finite());
        if self.classes == 0
            || !positive(self.eps_height)
            || !positive(self.bandwidth_b)
            || !(self.eps_outer > 0.0)
            || self.max_outer_iters == 0
            || self.z_grid_size < 5
            || !(self.ridge >= 0.0)
        {
            return Err(Error::InvalidInput(format!("invalid fit config: {self:?}")));
        }
        if let Some(t) = &self.theta_init {
            if t.classes() != self.classes {
                return Err(Error::InvalidInput(format!(
                    "theta_init has {} classes, config has {}",
                    t.classes(),
                    self.classes
                )));
            }
        }
        Ok(())
    }
}

/// Mean squared residual of the deterministic model over the dataset,
/// evaluated from scratch.
pub fn objective_f(
    data: &Dataset,
    theta: &PathLossParams,
    map: &ObstacleMap,
    filter: &SoftFilter,
) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let sse: f64 = data
        .records()
        .iter()
        .zip(data.log_distances())
        .map(|(r, &d)| {
            let s = soft_likelihood(&r.link, map, filter, map.grid());
            let e = r.rss_db - mix_laws(theta, d, &s);
            e * e
        })
        .sum();
    sse / data.len() as f64
}

/// Likelihood rows `S_k` for every record under `(map, filter)`.
pub fn likelihood_matrix(data: &Dataset, map: &ObstacleMap, filter: &SoftFilter) -> Vec<Vec<f64>> {
    data.records()
        .iter()
        .map(|r| soft_likelihood(&r.link, map, filter, map.grid()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridSpec, Point3};

    #[test]
    fn single_record_objective() {
        let grid = GridSpec::new(0.0, 0.0, 10.0, 3, 3, 50.0).unwrap();
        let map = ObstacleMap::empty(grid, 1);
        let theta = PathLossParams::from_pairs(&[(-22.0, -28.0), (-36.0, -22.0)]);
        let link = Link::new(Point3::new(5.0, 5.0, 1.5), Point3::new(25.0, 25.0, 40.0)).unwrap();
        let g = crate::propagation::deterministic_gain(&link, &theta, &map, &SoftFilter::point()).unwrap();
        let data = Dataset::new(vec![Measurement { link, rss_db: g + 3.0 }]).unwrap();
        let f = objective_f(&data, &theta, &map, &SoftFilter::point());
        assert!((f - 9.0).abs() < 1e-12);
    }

    #[test]
    fn dataset_rejects_bad_records() {
        let link = Link::from_coords([0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert!(Dataset::new(vec![Measurement { link, rss_db: 0.0 }]).is_err());
        let link = Link::from_coords([0.0, 0.0, 1.0, 0.0, 0.0, 2.0]);
        assert!(Dataset::new(vec![Measurement { link, rss_db: f64::NAN }]).is_err());
    }

    #[test]
    fn config_defaults_scale_with_height() {
        let cfg = FitConfig::default();
        assert_eq!(cfg.bandwidth(48.0), 6.0);
        assert_eq!(cfg.eps_height(256.0), 1.0);
        cfg.validate().unwrap();
        assert!(FitConfig { z_grid_size: 4, ..cfg }.validate().is_err());
    }
}
