use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::squared_distance_6d;

use super::ResidualStore;

const N_BINS: usize = 20;
const RANGE_GRID: usize = 80;
const GN_ITERS: usize = 100;

/// Exponential semivariogram `alpha_s^2 (1 - exp(-u / alpha_r))` plus the
/// measurement-noise variance used on the kriging diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variogram {
    pub alpha_s: f64,
    pub alpha_r: f64,
    pub sigma_n2: f64,
}

impl Variogram {
    pub fn new(alpha_s: f64, alpha_r: f64, sigma_n2: f64) -> Result<Self> {
        let v = Self {
            alpha_s,
            alpha_r,
            sigma_n2,
        };
        v.validate()?;
        Ok(v)
    }

    /// Flat model: every residual is equally informative, kriging reduces to
    /// the neighborhood mean.
    pub fn flat() -> Self {
        Self {
            alpha_s: 0.0,
            alpha_r: 1.0,
            sigma_n2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_s >= 0.0 && self.alpha_r > 0.0 && self.sigma_n2 >= 0.0)
            || !self.alpha_s.is_finite()
            || !self.alpha_r.is_finite()
            || !self.sigma_n2.is_finite()
        {
            return Err(Error::InvalidInput(format!(
                "variogram parameters out of range: {self:?}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        self.alpha_s * self.alpha_s * (1.0 - (-u / self.alpha_r).exp())
    }

    pub fn sill(&self) -> f64 {
        self.alpha_s * self.alpha_s
    }

    pub fn is_flat(&self) -> bool {
        self.alpha_s == 0.0
    }
}

/// Empirical semivariance per equal-count distance bin: `(mean u, mean gamma)`.
pub fn empirical_bins(store: &ResidualStore, max_pairs: usize, seed: u64) -> Vec<(f64, f64)> {
    let n = store.len();
    let total = n * n.saturating_sub(1) / 2;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(total.min(max_pairs));
    let mut push = |i: usize, j: usize| {
        let u = squared_distance_6d(&store.points()[i], &store.points()[j]).sqrt();
        let dv = store.values()[i] - store.values()[j];
        pairs.push((u, 0.5 * dv * dv));
    };
    if total <= max_pairs {
        for i in 0..n {
            for j in i + 1..n {
                push(i, j);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_pairs {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            push(i, j);
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let p = pairs.len();
    let bins = N_BINS.min(p);
    (0..bins)
        .filter_map(|b| {
            let chunk = &pairs[b * p / bins..(b + 1) * p / bins];
            if chunk.is_empty() {
                return None;
            }
            let len = chunk.len() as f64;
            let u = chunk.iter().map(|c| c.0).sum::<f64>() / len;
            let g = chunk.iter().map(|c| c.1).sum::<f64>() / len;
            Some((u, g))
        })
        .collect()
}

/// Fits the exponential model to the binned empirical semivariogram. The nugget
/// is the gap between the first bin and the fitted curve there, clamped at 0.
pub fn fit_variogram(store: &ResidualStore, max_pairs: usize, seed: u64) -> Result<Variogram> {
    if store.len() < 10 {
        return Err(Error::Precondition(format!(
            "variogram fit needs at least 10 residuals, got {}",
            store.len()
        )));
    }
    let first = store.values()[0];
    if store.values().iter().all(|&v| v == first) {
        return Ok(Variogram::flat());
    }
    let bins = empirical_bins(store, max_pairs.max(1), seed);
    let (alpha_s2, alpha_r) = fit_exponential(&bins);
    let mut vg = Variogram {
        alpha_s: alpha_s2.sqrt(),
        alpha_r,
        sigma_n2: 0.0,
    };
    let (u0, g0) = bins[0];
    vg.sigma_n2 = (g0 - vg.value(u0)).max(0.0);
    Ok(vg)
}

fn sse(bins: &[(f64, f64)], s2: f64, r: f64) -> f64 {
    bins.iter()
        .map(|&(u, g)| {
            let e = s2 * (1.0 - (-u / r).exp()) - g;
            e * e
        })
        .sum()
}

/// Least-squares `(alpha_s^2, alpha_r)`: grid over the range with the sill in
/// closed form, then Gauss-Newton in log-parameters.
fn fit_exponential(bins: &[(f64, f64)]) -> (f64, f64) {
    let u_lo = bins
        .iter()
        .map(|b| b.0)
        .filter(|u| *u > 0.0)
        .fold(f64::INFINITY, f64::min);
    let u_hi = bins.iter().map(|b| b.0).fold(0.0, f64::max);
    if !u_lo.is_finite() || u_hi <= 0.0 {
        let mean = bins.iter().map(|b| b.1).sum::<f64>() / bins.len() as f64;
        return (mean, 1.0);
    }

    let (r_min, r_max) = (u_lo / 20.0, u_hi * 20.0);
    let mut best = (f64::INFINITY, 0.0, 1.0);
    for i in 0..RANGE_GRID {
        let r = r_min * (r_max / r_min).powf(i as f64 / (RANGE_GRID - 1) as f64);
        let (num, den) = bins.iter().fold((0.0, 0.0), |(n, d), &(u, g)| {
            let phi = 1.0 - (-u / r).exp();
            (n + phi * g, d + phi * phi)
        });
        let s2 = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
        let e = sse(bins, s2, r);
        if e < best.0 {
            best = (e, s2, r);
        }
    }
    let (mut err, s2, r) = best;
    if s2 <= 0.0 {
        return (0.0, r);
    }

    // parameters a = ln alpha_s^2, b = ln alpha_r
    let (mut a, mut b) = (s2.ln(), r.ln());
    for _ in 0..GN_ITERS {
        let (s2, r) = (a.exp(), b.exp());
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for &(u, g) in bins {
            let e = (-u / r).exp();
            let v = s2 * (1.0 - e);
            let j = [v, -s2 * e * u / r];
            let res = g - v;
            for p in 0..2 {
                jtr[p] += j[p] * res;
                for q in 0..2 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if !(det.abs() > 1e-300) {
            break;
        }
        let da = (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let db = (jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-6 {
            let (na, nb) = (a + step * da, b + step * db);
            let e = sse(bins, na.exp(), nb.exp());
            if e.is_finite() && e < err {
                a = na;
                b = nb;
                improved = e < err * (1.0 - 1e-12);
                err = e;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (a.exp(), b.exp())
}
