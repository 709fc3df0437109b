use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::propagation::PathLossParams;

use super::Dataset;

const MIN_CLASS_MASS: f64 = 1e-9;

/// Closed-form least squares for the path-loss parameters given likelihood
/// rows `s` (one per record, `K + 1` entries each). Classes with no likelihood
/// mass are pruned and inherit the nearest surviving class's law.
pub fn solve_theta(data: &Dataset, s: &[Vec<f64>], ridge: f64) -> Result<PathLossParams> {
    solve_theta_raw(data.log_distances(), &data.ys(), s, ridge)
}

pub(crate) fn solve_theta_raw(
    d: &[f64],
    y: &[f64],
    s: &[Vec<f64>],
    ridge: f64,
) -> Result<PathLossParams> {
    let n_laws = s.first().map_or(0, Vec::len);
    if n_laws == 0 || s.len() != d.len() || d.len() != y.len() {
        return Err(Error::InvalidInput(
            "likelihood matrix does not match the dataset".into(),
        ));
    }
    let mass: Vec<f64> = (0..n_laws).map(|k| s.iter().map(|row| row[k]).sum()).collect();
    let alive: Vec<usize> = (0..n_laws).filter(|&k| mass[k] >= MIN_CLASS_MASS).collect();
    if alive.is_empty() {
        return Err(Error::NoMeasurementMass);
    }

    let p = 2 * alive.len();
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut aty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for ((sk, &di), &yi) in s.iter().zip(d).zip(y) {
        for (c, &k) in alive.iter().enumerate() {
            row[2 * c] = sk[k] * di;
            row[2 * c + 1] = sk[k];
        }
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            aty[a] += row[a] * yi;
            for b in a..p {
                ata[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            ata[(a, b)] = ata[(b, a)];
        }
        ata[(a, a)] += ridge;
    }
    let sol = ata
        .clone()
        .cholesky()
        .map(|c| c.solve(&aty))
        .or_else(|| ata.lu().solve(&aty))
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::Precondition("normal equations are singular".into()))?;

    let mut theta = vec![0.0; 2 * n_laws];
    for k in 0..n_laws {
        // nearest surviving class, lower index on ties
        let c = alive
            .iter()
            .enumerate()
            .min_by_key(|(_, &a)| (a.abs_diff(k), a))
            .map(|(c, _)| c)
            .expect("at least one class survives");
        theta[2 * k] = sol[2 * c];
        theta[2 * k + 1] = sol[2 * c + 1];
    }
    PathLossParams::new(theta)
}

/// Ordinary least-squares line `y = beta + alpha d` over the selected points.
/// Degenerate spreads in `d` give a flat line through the mean.
pub fn fit_line(d: &[f64], y: &[f64], idx: &[usize]) -> (f64, f64) {
    if idx.is_empty() {
        return (0.0, 0.0);
    }
    let n = idx.len() as f64;
    let md = idx.iter().map(|&i| d[i]).sum::<f64>() / n;
    let my = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    let (sxy, sxx) = idx.iter().fold((0.0, 0.0), |(sxy, sxx), &i| {
        let dx = d[i] - md;
        (sxy + dx * (y[i] - my), sxx + dx * dx)
    });
    if sxx <= 1e-12 * n {
        return (0.0, my);
    }
    let alpha = sxy / sxx;
    (alpha, my - alpha * md)
}

/// Lloyd-style initialization of `K + 1` path-loss laws: residual quantile
/// bands around one global line, then alternating per-band line fits and
/// nearest-line reassignment. Class 0 is the strongest law at the median
/// distance.
pub fn init_theta(data: &Dataset, classes: usize, em_iters: usize) -> Result<PathLossParams> {
    let n_laws = classes + 1;
    if data.len() < 2 * n_laws {
        return Err(Error::Precondition(format!(
            "need at least {} records for {} classes, got {}",
            2 * n_laws,
            classes,
            data.len()
        )));
    }
    let d = data.log_distances();
    let y = data.ys();
    let all: Vec<usize> = (0..data.len()).collect();
    let global = fit_line(d, &y, &all);
    if classes == 0 {
        return Ok(PathLossParams::from_pairs(&[global]));
    }

    let resid = |line: (f64, f64), i: usize| y[i] - (line.1 + line.0 * d[i]);
    let mut order = all.clone();
    order.sort_by(|&a, &b| resid(global, b).total_cmp(&resid(global, a)).then(a.cmp(&b)));
    let n = order.len();
    let mut bands: Vec<Vec<usize>> = (0..n_laws)
        .map(|b| {
            let mut band = order[b * n / n_laws..(b + 1) * n / n_laws].to_vec();
            band.sort_unstable();
            band
        })
        .collect();
    let mut lines: Vec<(f64, f64)> = bands.iter().map(|b| fit_line(d, &y, b)).collect();

    for _ in 0..em_iters {
        let mut next: Vec<Vec<usize>> = vec![Vec::new(); n_laws];
        for i in 0..n {
            let best = (0..n_laws)
                .min_by(|&a, &b| {
                    resid(lines[a], i)
                        .powi(2)
                        .total_cmp(&resid(lines[b], i).powi(2))
                        .then(a.cmp(&b))
                })
                .expect("n_laws > 0");
            next[best].push(i);
        }
        reseed_empty(&mut next, &lines, &resid);
        let changed = next != bands;
        bands = next;
        lines = bands.iter().map(|b| fit_line(d, &y, b)).collect();
        if !changed {
            break;
        }
    }

    let mut sorted_d = d.to_vec();
    sorted_d.sort_by(f64::total_cmp);
    let d_med = sorted_d[n / 2];
    lines.sort_by(|a, b| (b.1 + b.0 * d_med).total_cmp(&(a.1 + a.0 * d_med)));
    Ok(PathLossParams::from_pairs(&lines))
}

/// Refills bands with fewer than two points from the extreme residuals of the
/// largest band: the most positive ones for bands ranked above it, the most
/// negative ones for bands below.
fn reseed_empty(
    bands: &mut [Vec<usize>],
    lines: &[(f64, f64)],
    resid: &dyn Fn((f64, f64), usize) -> f64,
) {
    let n_laws = bands.len();
    for b in 0..n_laws {
        if bands[b].len() >= 2 {
            continue;
        }
        let largest = (0..n_laws)
            .max_by_key(|&c| (bands[c].len(), std::cmp::Reverse(c)))
            .expect("n_laws > 0");
        if largest == b || bands[largest].len() < 4 {
            continue;
        }
        let mut src = std::mem::take(&mut bands[largest]);
        let line = lines[largest];
        src.sort_by(|&i, &j| resid(line, j).total_cmp(&resid(line, i)).then(i.cmp(&j)));
        let take = (src.len() / n_laws).max(2);
        let moved: Vec<usize> = if b < largest {
            src.drain(..take).collect()
        } else {
            src.drain(src.len() - take..).collect()
        };
        bands[b].extend(moved);
        bands[b].sort_unstable();
        src.sort_unstable();
        bands[largest] = src;
    }
}
