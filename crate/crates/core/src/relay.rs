//! Half-duplex decode-and-forward UAV relay: capacity under a gain oracle and
//! exhaustive placement over a candidate lattice.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{stat_predict, KnnModel, KrigingBaseline, StatModel};
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Link, Point3};
use crate::propagation::{full_gain, RadioMap};
use crate::synthdata::TruthModel;

/// Anything that predicts the channel gain (dB) of a ground-to-air link.
pub trait GainOracle: Sync {
    fn gain_db(&self, link: &Link) -> f64;
}

impl GainOracle for RadioMap {
    fn gain_db(&self, link: &Link) -> f64 {
        full_gain(link, self).unwrap_or(f64::NEG_INFINITY)
    }
}

impl GainOracle for TruthModel {
    fn gain_db(&self, link: &Link) -> f64 {
        self.gain(link).unwrap_or(f64::NEG_INFINITY)
    }
}

impl GainOracle for KnnModel {
    fn gain_db(&self, link: &Link) -> f64 {
        self.predict(link)
    }
}

impl GainOracle for KrigingBaseline {
    fn gain_db(&self, link: &Link) -> f64 {
        self.predict(link).unwrap_or(f64::NEG_INFINITY)
    }
}

impl GainOracle for StatModel {
    fn gain_db(&self, link: &Link) -> f64 {
        stat_predict(link, self).unwrap_or(f64::NEG_INFINITY)
    }
}

impl<F: Fn(&Link) -> f64 + Sync> GainOracle for F {
    fn gain_db(&self, link: &Link) -> f64 {
        self(link)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayParams {
    pub bandwidth_hz: f64,
    pub kappa: f64,
    /// Transmit power over noise power, dB, same for both hops. 104 dB is
    /// 20 dBm into -164 dBm/Hz over 100 MHz.
    pub power_db: f64,
    pub candidates: Vec<Point3>,
}

impl RelayParams {
    /// Default radio constants with an `nx x ny` horizontal lattice over the grid
    /// (cell-centered) at `n_alt` altitudes spread evenly over `altitudes`.
    pub fn lattice(grid: &GridSpec, nx: usize, ny: usize, altitudes: [f64; 2], n_alt: usize) -> Self {
        let (w, d) = (grid.width(), grid.depth());
        let mut candidates = Vec::with_capacity(nx * ny * n_alt);
        for a in 0..n_alt {
            let z = if n_alt == 1 {
                altitudes[0]
            } else {
                altitudes[0] + (altitudes[1] - altitudes[0]) * a as f64 / (n_alt - 1) as f64
            };
            for ix in 0..nx {
                for iy in 0..ny {
                    candidates.push(Point3::new(
                        grid.origin_x + (ix as f64 + 0.5) * w / nx as f64,
                        grid.origin_y + (iy as f64 + 0.5) * d / ny as f64,
                        z,
                    ));
                }
            }
        }
        Self {
            bandwidth_hz: 100e6,
            kappa: 0.5,
            power_db: 104.0,
            candidates,
        }
    }

    /// 15 x 15 horizontal positions at 4 altitudes between 20 m and 90 m.
    pub fn default_for(grid: &GridSpec) -> Self {
        Self::lattice(grid, 15, 15, [20.0, 90.0], 4)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) || !(self.kappa > 0.0 && self.kappa <= 1.0) || !self.power_db.is_finite() {
            return Err(Error::InvalidInput(format!(
                "relay needs W > 0, 0 < kappa <= 1 and finite P; got W={}, kappa={}, P={}",
                self.bandwidth_hz, self.kappa, self.power_db
            )));
        }
        if self.candidates.is_empty() {
            return Err(Error::InvalidInput("relay candidate grid is empty".into()));
        }
        Ok(())
    }
}

/// Capacity of one hop in bits/s per Hz at gain `g_db`.
fn hop_rate(g_db: f64, params: &RelayParams) -> f64 {
    let snr = params.kappa * 10f64.powf((params.power_db + g_db) / 10.0);
    (1.0 + snr).log2()
}

/// `W/2 min(log2(1 + kappa P g_a), log2(1 + kappa P g_b))` in bits/s.
pub fn df_capacity(
    relay: Point3,
    user_a: Point3,
    user_b: Point3,
    oracle: &dyn GainOracle,
    params: &RelayParams,
) -> f64 {
    let ga = oracle.gain_db(&Link { user: user_a, aerial: relay });
    let gb = oracle.gain_db(&Link { user: user_b, aerial: relay });
    0.5 * params.bandwidth_hz * hop_rate(ga, params).min(hop_rate(gb, params))
}

/// Higher capacity first, then lower altitude, then lexicographic `(x, y)`.
fn better(a: (Point3, f64), b: (Point3, f64)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then(b.0.z.total_cmp(&a.0.z))
        .then(b.0.x.total_cmp(&a.0.x))
        .then(b.0.y.total_cmp(&a.0.y))
}

/// Best candidate position for relaying between the two users, by
/// exhaustive search.
pub fn optimize_placement(
    user_a: Point3,
    user_b: Point3,
    oracle: &dyn GainOracle,
    params: &RelayParams,
) -> Result<(Point3, f64)> {
    params.validate()?;
    Ok(params
        .candidates
        .par_iter()
        .map(|&c| (c, df_capacity(c, user_a, user_b, oracle, params)))
        .max_by(|&a, &b| better(a, b))
        .expect("candidates validated nonempty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayRow {
    pub method: String,
    pub mean_capacity_bps: f64,
    pub n_pairs: usize,
}

/// For each method, places the relay with that method's map and scores the
/// chosen position on the true gains.
pub fn evaluate_relay_benchmark(
    pairs: &[(Point3, Point3)],
    truth: &dyn GainOracle,
    methods: &[(&str, &dyn GainOracle)],
    params: &RelayParams,
) -> Result<Vec<RelayRow>> {
    params.validate()?;
    methods
        .iter()
        .map(|&(name, oracle)| {
            let mut total = 0.0;
            for &(a, b) in pairs {
                let (pos, _) = optimize_placement(a, b, oracle, params)?;
                total += df_capacity(pos, a, b, truth, params);
            }
            Ok(RelayRow {
                method: name.to_string(),
                mean_capacity_bps: if pairs.is_empty() { 0.0 } else { total / pairs.len() as f64 },
                n_pairs: pairs.len(),
            })
        })
        .collect()
}

/// Random ground-user pairs inside the grid at height `z`.
pub fn sample_user_pairs(grid: &GridSpec, n: usize, z: f64, rng: &mut impl Rng) -> Vec<(Point3, Point3)> {
    let mut point = || {
        Point3::new(
            grid.origin_x + rng.random_range(0.0..grid.width()),
            grid.origin_y + rng.random_range(0.0..grid.depth()),
            z,
        )
    };
    (0..n).map(|_| (point(), point())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(candidates: Vec<Point3>) -> RelayParams {
        RelayParams {
            bandwidth_hz: 100e6,
            kappa: 0.5,
            power_db: 104.0,
            candidates,
        }
    }

    #[test]
    fn unit_snr_gives_half_bandwidth() {
        // kappa * P_lin * g = 1  <=>  g_db = -P - 10 log10(kappa)
        let g = -104.0 - 10.0 * 0.5f64.log10();
        let oracle = move |_: &Link| g;
        let p = params(vec![Point3::new(0.0, 0.0, 50.0)]);
        let c = df_capacity(p.candidates[0], Point3::new(0.0, 0.0, 1.5), Point3::new(9.0, 0.0, 1.5), &oracle, &p);
        assert!((c - 50e6).abs() < 1e-3);
    }

    #[test]
    fn dead_links_have_zero_capacity() {
        let oracle = |_: &Link| f64::NEG_INFINITY;
        let p = params(vec![Point3::new(0.0, 0.0, 50.0)]);
        let c = df_capacity(p.candidates[0], Point3::new(0.0, 0.0, 1.5), Point3::new(9.0, 0.0, 1.5), &oracle, &p);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn ties_prefer_low_then_lexicographic() {
        let oracle = |_: &Link| -80.0;
        let cands = vec![
            Point3::new(5.0, 0.0, 40.0),
            Point3::new(1.0, 9.0, 20.0),
            Point3::new(1.0, 2.0, 20.0),
            Point3::new(0.0, 0.0, 60.0),
        ];
        let (pos, _) = optimize_placement(Point3::new(0.0, 0.0, 1.5), Point3::new(5.0, 5.0, 1.5), &oracle, &params(cands)).unwrap();
        assert_eq!(pos, Point3::new(1.0, 2.0, 20.0));
    }
}
