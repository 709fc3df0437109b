//! Deterministic radio map: per-class log-distance path-loss laws mixed by the
//! propagation-region likelihoods, plus the fitted map bundle that adds the
//! kriged residual shadowing on top.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{log_distance, GridSpec, Link};
use crate::kriging::{krige, ResidualStore, Variogram};
use crate::obstacle::{soft_likelihood, FilterSpec, ObstacleMap, SoftFilter};

/// Path-loss parameters `[alpha_0, beta_0, ..., alpha_K, beta_K]`: class `k`
/// predicts `beta_k + alpha_k * log10(distance)` dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathLossParams(Vec<f64>);

impl PathLossParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 2 || !theta.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "path-loss vector must have even length >= 2, got {}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("path-loss parameters must be finite".into()));
        }
        Ok(Self(theta))
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self(pairs.iter().flat_map(|&(a, b)| [a, b]).collect())
    }

    /// Number of obstacle classes K (the vector holds K + 1 laws).
    pub fn classes(&self) -> usize {
        self.0.len() / 2 - 1
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.0[2 * k]
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.0[2 * k + 1]
    }

    /// Gain of the class-`k` law at log-distance `d`.
    #[inline]
    pub fn law(&self, k: usize, d: f64) -> f64 {
        self.0[2 * k + 1] + self.0[2 * k] * d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `sum_k (beta_k + alpha_k d) S_k` for a precomputed likelihood vector.
pub fn mix_laws(theta: &PathLossParams, d: f64, likelihood: &[f64]) -> f64 {
    likelihood
        .iter()
        .enumerate()
        .map(|(k, s)| theta.law(k, d) * s)
        .sum()
}

/// Deterministic gain in dB of `link` under `(theta, map)`.
pub fn deterministic_gain(
    link: &Link,
    theta: &PathLossParams,
    map: &ObstacleMap,
    filter: &SoftFilter,
) -> Result<f64> {
    let d = log_distance(link)?;
    let s = soft_likelihood(link, map, filter, map.grid());
    Ok(mix_laws(theta, d, &s))
}

/// A fitted radio map: everything needed to answer gain queries at any link.
#[derive(Debug, Clone)]
pub struct RadioMap {
    pub theta: PathLossParams,
    pub obstacles: ObstacleMap,
    pub filter_spec: FilterSpec,
    pub filter: SoftFilter,
    pub residual: Option<ResidualModel>,
}

/// Kriging model of the residual shadowing.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    pub variogram: Variogram,
    pub store: ResidualStore,
    pub n_neighbors: usize,
}

impl RadioMap {
    pub fn new(
        theta: PathLossParams,
        obstacles: ObstacleMap,
        filter_spec: FilterSpec,
    ) -> Result<Self> {
        if theta.classes() != obstacles.classes() {
            return Err(Error::InvalidInput(format!(
                "theta has {} classes but the obstacle map has {}",
                theta.classes(),
                obstacles.classes()
            )));
        }
        let filter = filter_spec.build()?;
        Ok(Self {
            theta,
            obstacles,
            filter_spec,
            filter,
            residual: None,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.obstacles.grid()
    }

    pub fn with_residual(mut self, model: ResidualModel) -> Self {
        self.residual = Some(model);
        self
    }

    pub fn deterministic_gain(&self, link: &Link) -> Result<f64> {
        deterministic_gain(link, &self.theta, &self.obstacles, &self.filter)
    }

    pub fn residual_at(&self, link: &Link) -> f64 {
        match &self.residual {
            Some(r) => krige(link, &r.store, &r.variogram, r.n_neighbors),
            None => 0.0,
        }
    }
}

/// Deterministic gain plus the kriged residual at `link`.
pub fn full_gain(link: &Link, map: &RadioMap) -> Result<f64> {
    Ok(map.deterministic_gain(link)? + map.residual_at(link))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::obstacle::{make_filter, FilterMode};
    use proptest::prelude::*;

    fn reference_theta() -> PathLossParams {
        PathLossParams::from_pairs(&[(-22.0, -28.0), (-36.0, -22.0)])
    }

    #[test]
    fn los_and_nlos_laws() {
        let theta = reference_theta();
        assert_eq!(mix_laws(&theta, 2.0, &[1.0, 0.0]), -72.0);
        assert_eq!(mix_laws(&theta, 1.0, &[0.0, 1.0]), -58.0);
        let equal = PathLossParams::from_pairs(&[(-30.0, -20.0), (-30.0, -20.0)]);
        let d = 1.7;
        let single = mix_laws(&equal, d, &[1.0, 0.0]);
        assert!((mix_laws(&equal, d, &[0.5, 0.5]) - single).abs() < 1e-12);
    }

    #[test]
    fn deterministic_gain_over_empty_map() {
        let grid = GridSpec::new(0.0, 0.0, 10.0, 20, 20, 50.0).unwrap();
        let map = ObstacleMap::empty(grid, 1);
        let link = Link::new(Point3::new(10.0, 10.0, 1.0), Point3::new(10.0, 10.0, 101.0)).unwrap();
        let g = deterministic_gain(&link, &reference_theta(), &map, &SoftFilter::point()).unwrap();
        assert!((g + 72.0).abs() < 1e-12);
        let mut blocked = map.clone();
        blocked.set(grid.locate(10.0, 10.0).unwrap(), 1, 50.0);
        let g = deterministic_gain(&link, &reference_theta(), &blocked, &SoftFilter::point()).unwrap();
        assert!((g - (-22.0 - 72.0)).abs() < 1e-12);
    }

    #[test]
    fn full_gain_without_residual_is_deterministic() {
        let grid = GridSpec::new(0.0, 0.0, 10.0, 5, 5, 50.0).unwrap();
        let mut h = ObstacleMap::empty(grid, 1);
        h.set(7, 1, 30.0);
        let map = RadioMap::new(reference_theta(), h, FilterSpec::cross(5.0, 5.0)).unwrap();
        let link = Link::new(Point3::new(2.0, 2.0, 1.5), Point3::new(45.0, 30.0, 40.0)).unwrap();
        assert_eq!(full_gain(&link, &map).unwrap(), map.deterministic_gain(&link).unwrap());
    }

    #[test]
    fn rejects_mismatched_classes() {
        let grid = GridSpec::new(0.0, 0.0, 10.0, 2, 2, 50.0).unwrap();
        assert!(RadioMap::new(reference_theta(), ObstacleMap::empty(grid, 2), FilterSpec::point()).is_err());
        assert!(PathLossParams::new(vec![1.0, 2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn gain_is_affine_in_theta(
            theta in proptest::collection::vec(-50.0..0.0f64, 4),
            dir in proptest::collection::vec(-1.0..1.0f64, 4),
            x in 1.0..49.0f64, y in 1.0..49.0f64, z in 5.0..90.0f64,
        ) {
            let grid = GridSpec::new(0.0, 0.0, 10.0, 5, 5, 50.0).unwrap();
            let mut h = ObstacleMap::empty(grid, 1);
            h.set(12, 1, 35.0);
            h.set(13, 1, 20.0);
            let f = make_filter(4.0, 4.0, FilterMode::Cross).unwrap();
            let link = Link::from_coords([3.0, 4.0, 1.5, x, y, z]);
            let base = PathLossParams::new(theta.clone()).unwrap();
            let g0 = deterministic_gain(&link, &base, &h, &f).unwrap();

            // design row: d(g)/d(theta) = [S_k d, S_k]
            let d = log_distance(&link).unwrap();
            let s = soft_likelihood(&link, &h, &f, &grid);
            let row: Vec<f64> = s.iter().flat_map(|sk| [sk * d, *sk]).collect();
            let step = 0.5;
            let moved: Vec<f64> = theta.iter().zip(&dir).map(|(t, v)| t + step * v).collect();
            let g1 = deterministic_gain(&link, &PathLossParams::new(moved).unwrap(), &h, &f).unwrap();
            let predicted: f64 = row.iter().zip(&dir).map(|(r, v)| r * v * step).sum();
            prop_assert!((g1 - g0 - predicted).abs() < 1e-9);

            let lo = (0..2).map(|k| base.law(k, d)).fold(f64::INFINITY, f64::min);
            let hi = (0..2).map(|k| base.law(k, d)).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(g0 >= lo - 1e-9 && g0 <= hi + 1e-9);
        }
    }
}
