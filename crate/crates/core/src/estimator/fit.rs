use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::obstacle::{ObstacleMap, SoftFilter};
use crate::propagation::PathLossParams;

use super::profile::{uniform_heights, TracedData};
use super::theta::solve_theta_raw;
use super::{init_theta, Dataset, FitConfig, InitHeights};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: PathLossParams,
    pub obstacles: ObstacleMap,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Index of the law closest to each observation, lower index on ties.
pub fn nearest_law_labels(d: &[f64], y: &[f64], theta: &PathLossParams) -> Vec<usize> {
    d.iter()
        .zip(y)
        .map(|(&d, &y)| {
            (0..=theta.classes())
                .min_by(|&a, &b| {
                    (y - theta.law(a, d))
                        .abs()
                        .total_cmp(&(y - theta.law(b, d)).abs())
                        .then(a.cmp(&b))
                })
                .unwrap_or(0)
        })
        .collect()
}

/// Alternating estimation of `(theta, H)`. Heights start from
/// `cfg.init_heights` and are swept class by class (most severe first), cell by cell, each set to the
/// supremum of its objective basin; the parameters are then re-solved in
/// closed form. Runs single-threaded so results are bit-reproducible.
pub fn fit(
    data: &Dataset,
    grid: &GridSpec,
    filter: &SoftFilter,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    grid.validate()?;
    let classes = cfg.classes;
    if data.len() < 2 * classes + 2 {
        return Err(Error::Precondition(format!(
            "need at least {} records for {} classes, got {}",
            2 * classes + 2,
            classes,
            data.len()
        )));
    }
    let mut theta = match &cfg.theta_init {
        Some(t) => t.clone(),
        None => init_theta(data, classes, cfg.em_iters)?,
    };

    let start = Instant::now();
    let td = TracedData::new(data, grid, filter);
    let h_max = grid.h_max_m;
    let zs = uniform_heights(h_max, cfg.z_grid_size);
    let (b, eps) = (cfg.bandwidth(h_max), cfg.eps_height(h_max));
    let mut map = match cfg.init_heights {
        InitHeights::Max => ObstacleMap::filled(*grid, classes, h_max),
        InitHeights::Envelope => {
            let labels = nearest_law_labels(td.log_distances(), td.ys(), &theta);
            td.label_envelope(&labels, grid, classes)
        }
    };
    let mut trace = Vec::new();
    let mut converged = false;

    for t in 1..=cfg.max_outer_iters {
        let prev = map.clone();
        let mut tap_classes = td.classes(&map);
        let mut sq = td.squared_residuals(&theta, &tap_classes);
        for k in (1..=classes).rev() {
            for m in 0..grid.len() {
                let problem = td.cell_problem(&theta, &map, &tap_classes, &sq, m, k);
                let h = if cfg.safeguard {
                    problem.descend(map.get(m, k), &zs, b, eps)
                } else {
                    problem.bisect(&zs, b, eps)
                };
                map.set(m, k, h);
                problem.commit(map.get(m, k), &mut tap_classes, &mut sq);
            }
        }
        map.enforce_ordering();
        let tap_classes = td.classes(&map);
        if !cfg.freeze_theta {
            let s = td.likelihoods(&tap_classes, classes);
            theta = solve_theta_raw(td.log_distances(), td.ys(), &s, cfg.ridge)?;
        }
        let objective = td.objective_with(&theta, &tap_classes);
        trace.push(objective);
        let delta = map.normalized_frobenius_distance(&prev);
        log::info!(
            "iter {t}: objective {objective:.6} dH {delta:.6} elapsed {:.2}s",
            start.elapsed().as_secs_f64()
        );
        if delta < cfg.eps_outer {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        theta,
        obstacles: map,
        iterations: trace.len(),
        objective_trace: trace,
        converged,
    })
}
