//! Residual shadowing: extraction, semivariogram fitting, and ordinary
//! kriging with a measurement-noise correction.

mod kdtree;
mod variogram;

use nalgebra::{DMatrix, DVector};

pub use kdtree::KdTree;
pub use variogram::{empirical_bins, fit_variogram, Variogram};

use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::geometry::{squared_distance_6d, Link};
use crate::propagation::RadioMap;

pub const DEFAULT_NEIGHBORS: usize = 64;
pub const DEFAULT_MAX_PAIRS: usize = 100_000;

/// Residuals at the training links, indexed for nearest-neighbor queries.
#[derive(Debug, Clone)]
pub struct ResidualStore {
    values: Vec<f64>,
    index: KdTree,
}

impl ResidualStore {
    pub fn new(links: &[Link], values: Vec<f64>) -> Result<Self> {
        if links.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} links but {} residuals",
                links.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("residuals must be finite".into()));
        }
        let points = links.iter().map(Link::coords).collect();
        Ok(Self {
            values,
            index: KdTree::build(points),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn points(&self) -> &[[f64; 6]] {
        self.index.points()
    }

    pub fn link(&self, i: usize) -> Link {
        Link::from_coords(self.points()[i])
    }

    /// Indices of the `n` records nearest to `p` in 6D, closest first.
    pub fn nearest(&self, p: &[f64; 6], n: usize) -> Vec<usize> {
        self.index.nearest(p, n)
    }

    /// Same records with every value shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            index: self.index.clone(),
        }
    }
}

/// `y - g_hat(p)` for every record, using the map's deterministic part.
pub fn extract_residuals(data: &Dataset, map: &RadioMap) -> Result<ResidualStore> {
    let values = data
        .records()
        .iter()
        .map(|r| Ok(r.rss_db - map.deterministic_gain(&r.link)?))
        .collect::<Result<Vec<f64>>>()?;
    ResidualStore::new(&data.links(), values)
}

/// Ordinary-kriging weights at `p` over its `n_neighbors` nearest records.
/// Returns the neighbor indices and their weights (summing to one).
pub fn krige_weights(
    p: &Link,
    store: &ResidualStore,
    vg: &Variogram,
    n_neighbors: usize,
) -> (Vec<usize>, Vec<f64>) {
    let q = p.coords();
    let idx = store.nearest(&q, n_neighbors.max(1));
    let n = idx.len();
    if n == 0 {
        return (idx, Vec::new());
    }
    let pts = store.points();
    let d0: Vec<f64> = idx
        .iter()
        .map(|&i| squared_distance_6d(&pts[i], &q).sqrt())
        .collect();

    if vg.sigma_n2 == 0.0 && d0[0] == 0.0 {
        // exact interpolation at a training link
        let mut w = vec![0.0; n];
        w[0] = 1.0;
        return (idx, w);
    }
    if vg.is_flat() || n == 1 {
        return (idx, vec![1.0 / n as f64; n]);
    }

    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for r in 0..n {
        for c in r + 1..n {
            let v = vg.value(squared_distance_6d(&pts[idx[r]], &pts[idx[c]]).sqrt());
            a[(r, c)] = v;
            a[(c, r)] = v;
        }
        a[(r, r)] = -vg.sigma_n2;
        a[(r, n)] = 1.0;
        a[(n, r)] = 1.0;
        b[r] = vg.value(d0[r]);
    }
    b[n] = 1.0;

    match a.lu().solve(&b) {
        Some(sol) if sol.iter().all(|v| v.is_finite()) && well_posed(&sol, n) => {
            (idx, sol.as_slice()[..n].to_vec())
        }
        _ => {
            log::warn!("kriging system singular; falling back to inverse-distance weights");
            (idx, inverse_distance_weights(&d0))
        }
    }
}

fn well_posed(sol: &DVector<f64>, n: usize) -> bool {
    let sum: f64 = sol.iter().take(n).sum();
    (sum - 1.0).abs() < 1e-6
}

fn inverse_distance_weights(d: &[f64]) -> Vec<f64> {
    let zeros = d.iter().filter(|&&v| v == 0.0).count() as f64;
    if zeros > 0.0 {
        return d.iter().map(|&v| if v == 0.0 { 1.0 / zeros } else { 0.0 }).collect();
    }
    let raw: Vec<f64> = d.iter().map(|v| 1.0 / (v * v)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Kriged residual at `p`.
pub fn krige(p: &Link, store: &ResidualStore, vg: &Variogram, n_neighbors: usize) -> f64 {
    let (idx, w) = krige_weights(p, store, vg, n_neighbors);
    idx.iter().zip(&w).map(|(&i, w)| w * store.values()[i]).sum()
}
