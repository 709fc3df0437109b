//! End-to-end map construction: joint fit of the deterministic part, then a
//! kriging model of what it leaves behind.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::{fit, Dataset, FitConfig, FitResult};
use crate::geometry::GridSpec;
use crate::kriging::{extract_residuals, fit_variogram, DEFAULT_MAX_PAIRS, DEFAULT_NEIGHBORS};
use crate::obstacle::FilterSpec;
use crate::propagation::{RadioMap, ResidualModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrigingConfig {
    pub enabled: bool,
    pub n_neighbors: usize,
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n_neighbors: DEFAULT_NEIGHBORS,
            max_pairs: DEFAULT_MAX_PAIRS,
            seed: 0,
        }
    }
}

/// Everything `fit` needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub grid: GridSpec,
    #[serde(default = "FilterSpec::point")]
    pub filter: FilterSpec,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub kriging: KrigingConfig,
}

impl MapConfig {
    pub fn new(grid: GridSpec, classes: usize) -> Self {
        Self {
            grid,
            filter: FilterSpec::point(),
            fit: FitConfig::with_classes(classes),
            kriging: KrigingConfig::default(),
        }
    }

    /// Cross filter with half-cell displacements.
    pub fn soft(mut self) -> Self {
        let delta = self.grid.spacing_m / 2.0;
        self.filter = FilterSpec::cross(delta, delta);
        self
    }
}

pub fn build_radio_map(data: &Dataset, cfg: &MapConfig) -> Result<(RadioMap, FitResult)> {
    let filter = cfg.filter.build()?;
    let result = fit(data, &cfg.grid, &filter, &cfg.fit)?;
    let mut map = RadioMap::new(result.theta.clone(), result.obstacles.clone(), cfg.filter)?;
    if cfg.kriging.enabled && data.len() >= 10 {
        let store = extract_residuals(data, &map)?;
        let variogram = fit_variogram(&store, cfg.kriging.max_pairs, cfg.kriging.seed)?;
        map = map.with_residual(ResidualModel {
            variogram,
            store,
            n_neighbors: cfg.kriging.n_neighbors,
        });
    }
    Ok((map, result))
}
