//! Comparison predictors: Gaussian-weighted KNN, kriging on raw RSS, and a
//! statistical LOS-probability model over the elevation angle.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_line, init_theta, nearest_law_labels, Dataset};
use crate::geometry::{log_distance, squared_distance_6d, Link};
use crate::kriging::{fit_variogram, krige, KdTree, ResidualStore, Variogram, DEFAULT_MAX_PAIRS, DEFAULT_NEIGHBORS};
use crate::propagation::PathLossParams;

pub const KNN_K: usize = 5;
pub const KNN_SCALE_M: f64 = 55.0;
pub const STAT_BINS: usize = 18;

/// Gaussian-weighted mean of the `k` nearest measurements in 6D.
#[derive(Debug, Clone)]
pub struct KnnModel {
    tree: KdTree,
    ys: Vec<f64>,
    k: usize,
    scale_m: f64,
}

impl KnnModel {
    pub fn new(data: &Dataset, k: usize, scale_m: f64) -> Result<Self> {
        if k == 0 || !(scale_m > 0.0) {
            return Err(Error::InvalidInput(format!("knn needs k >= 1 and s > 0, got k={k}, s={scale_m}")));
        }
        if data.len() < k {
            return Err(Error::Precondition(format!("knn needs at least {k} records, got {}", data.len())));
        }
        Ok(Self {
            tree: KdTree::build(data.links().iter().map(Link::coords).collect()),
            ys: data.ys(),
            k,
            scale_m,
        })
    }

    pub fn predict(&self, p: &Link) -> f64 {
        let q = p.coords();
        let idx = self.tree.nearest(&q, self.k);
        let d2: Vec<f64> = idx.iter().map(|&i| squared_distance_6d(&self.tree.points()[i], &q)).collect();
        // shift by the nearest distance so distant queries do not underflow
        let d0 = d2[0];
        let two_s2 = 2.0 * self.scale_m * self.scale_m;
        let (mut num, mut den) = (0.0, 0.0);
        for (&i, &d) in idx.iter().zip(&d2) {
            let w = (-(d - d0) / two_s2).exp();
            num += w * self.ys[i];
            den += w;
        }
        num / den
    }
}

/// One-shot KNN prediction; builds the index on every call.
pub fn knn_predict(p: &Link, data: &Dataset, k: usize, s: f64) -> Result<f64> {
    Ok(KnnModel::new(data, k, s)?.predict(p))
}

/// Ordinary kriging of the raw RSS around a single global path-loss line.
#[derive(Debug, Clone)]
pub struct KrigingBaseline {
    /// `(alpha, beta)` of the global line in log-distance.
    pub line: (f64, f64),
    pub variogram: Variogram,
    pub store: ResidualStore,
    pub n_neighbors: usize,
}

impl KrigingBaseline {
    pub fn fit(data: &Dataset, n_neighbors: usize, max_pairs: usize, seed: u64) -> Result<Self> {
        let all: Vec<usize> = (0..data.len()).collect();
        let ys = data.ys();
        let line = fit_line(data.log_distances(), &ys, &all);
        let resid = ys
            .iter()
            .zip(data.log_distances())
            .map(|(y, d)| y - (line.1 + line.0 * d))
            .collect();
        let store = ResidualStore::new(&data.links(), resid)?;
        let variogram = fit_variogram(&store, max_pairs, seed)?;
        Ok(Self { line, variogram, store, n_neighbors })
    }

    pub fn predict(&self, p: &Link) -> Result<f64> {
        let d = log_distance(p)?;
        Ok(self.line.1 + self.line.0 * d + krige(p, &self.store, &self.variogram, self.n_neighbors))
    }
}

pub fn kriging_baseline_predict(p: &Link, data: &Dataset) -> Result<f64> {
    KrigingBaseline::fit(data, DEFAULT_NEIGHBORS, DEFAULT_MAX_PAIRS, 0)?.predict(p)
}

/// LOS probability per elevation-angle bin plus one LOS and one NLOS law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatModel {
    /// Bin edges in radians, `STAT_BINS + 1` values from 0 to pi/2.
    pub phi_bins: Vec<f64>,
    pub p_los: Vec<f64>,
    /// LOS law (class 0) and NLOS law (class 1).
    pub laws: PathLossParams,
}

impl StatModel {
    fn bin(&self, phi: f64) -> usize {
        let n = self.p_los.len();
        let width = FRAC_PI_2 / n as f64;
        ((phi.max(0.0) / width) as usize).min(n - 1)
    }

    pub fn los_probability(&self, p: &Link) -> f64 {
        self.p_los[self.bin(p.elevation_angle())]
    }
}

/// Fits the statistical model. Without `los_labels`, records are labelled by
/// the nearer of two initial path-loss laws.
pub fn stat_fit(data: &Dataset, los_labels: Option<&[bool]>) -> Result<StatModel> {
    if data.len() < 50 {
        return Err(Error::Precondition(format!(
            "statistical model needs at least 50 records, got {}",
            data.len()
        )));
    }
    let d = data.log_distances();
    let ys = data.ys();
    let los: Vec<bool> = match los_labels {
        Some(l) if l.len() != data.len() => {
            return Err(Error::InvalidInput(format!("{} labels for {} records", l.len(), data.len())))
        }
        Some(l) => l.to_vec(),
        None => {
            let theta = init_theta(data, 1, 10)?;
            nearest_law_labels(d, &ys, &theta).iter().map(|&c| c == 0).collect()
        }
    };

    let width = FRAC_PI_2 / STAT_BINS as f64;
    let phi_bins: Vec<f64> = (0..=STAT_BINS).map(|i| i as f64 * width).collect();
    let mut counts = vec![(0usize, 0usize); STAT_BINS];
    for (r, &l) in data.records().iter().zip(&los) {
        let b = ((r.link.elevation_angle().max(0.0) / width) as usize).min(STAT_BINS - 1);
        counts[b].1 += 1;
        if l {
            counts[b].0 += 1;
        }
    }
    let filled: Vec<usize> = (0..STAT_BINS).filter(|&b| counts[b].1 > 0).collect();
    let p_los = (0..STAT_BINS)
        .map(|b| {
            let src = *filled
                .iter()
                .min_by_key(|&&c| (c.abs_diff(b), c))
                .expect("at least one populated bin");
            counts[src].0 as f64 / counts[src].1 as f64
        })
        .collect();

    let los_idx: Vec<usize> = (0..data.len()).filter(|&i| los[i]).collect();
    let nlos_idx: Vec<usize> = (0..data.len()).filter(|&i| !los[i]).collect();
    let fit_or = |own: &[usize], other: &[usize]| {
        if own.len() >= 2 { fit_line(d, &ys, own) } else { fit_line(d, &ys, other) }
    };
    let laws = PathLossParams::from_pairs(&[fit_or(&los_idx, &nlos_idx), fit_or(&nlos_idx, &los_idx)]);
    Ok(StatModel { phi_bins, p_los, laws })
}

/// `p G_0 + (1 - p) G_1` with `p` the LOS probability of the link's angle bin.
pub fn stat_predict(p: &Link, model: &StatModel) -> Result<f64> {
    let d = log_distance(p)?;
    let q = model.los_probability(p);
    Ok(q * model.laws.law(0, d) + (1.0 - q) * model.laws.law(1, d))
}
