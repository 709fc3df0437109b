//! Synthetic ground truth: building footprints rasterized into a virtual
//! obstacle map, random air-to-ground links, and simulated RSS with optional
//! correlated shadowing and measurement noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Dataset, Measurement};
use crate::geometry::{trace_link, GridSpec, Link, Point3};
use crate::obstacle::{hard_region, FilterSpec, ObstacleMap, SoftFilter};
use crate::propagation::{deterministic_gain, PathLossParams};

const USER_TRIES: usize = 10_000;
const RFF_FEATURES: usize = 2048;

// Independent random streams derived from one seed.
const STREAM_LINKS: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_FIELD: u64 = 3;
const STREAM_LAYOUT: u64 = 4;

/// Axis-aligned building footprint extruded to `height_m`, in obstruction
/// class `class` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub height_m: f64,
    #[serde(default = "default_class")]
    pub class: usize,
}

fn default_class() -> usize {
    1
}

impl Building {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    fn overlaps(&self, (x0, y0, x1, y1): (f64, f64, f64, f64)) -> bool {
        self.x_min < x1 && self.x_max > x0 && self.y_min < y1 && self.y_max > y0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shadowing {
    None,
    /// Independent per-measurement shadowing.
    Iid { sigma_db: f64 },
    /// Gaussian field over link space with covariance
    /// `alpha_s^2 exp(-u / alpha_r)`.
    Gp { alpha_s: f64, alpha_r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub grid: GridSpec,
    pub classes: usize,
    pub buildings: Vec<Building>,
    pub theta_true: PathLossParams,
    pub sigma_n: f64,
    pub shadowing: Shadowing,
    #[serde(default = "FilterSpec::point")]
    pub truth_filter: FilterSpec,
    pub n_users: usize,
    pub n_links: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    pub altitude_range: [f64; 2],
    #[serde(default = "default_user_height")]
    pub user_height_m: f64,
    pub seed: u64,
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_user_height() -> f64 {
    1.5
}

/// `(alpha, beta)` pairs of the reference environment; a third, harsher law
/// is used when two obstruction classes are requested.
pub fn reference_theta(classes: usize) -> PathLossParams {
    let laws = [(-22.0, -28.0), (-36.0, -22.0), (-40.0, -30.0)];
    PathLossParams::from_pairs(&laws[..=classes.min(2)])
}

impl EnvironmentSpec {
    /// 150 m x 150 m desk-scale scene on a 9 m grid with `n_buildings` random
    /// footprints, 20 users and UAV altitudes in `[20, 90]` m. Building edges
    /// are softened with a half-cell cross filter.
    pub fn desk_scale(seed: u64, classes: usize, n_buildings: usize) -> Self {
        let grid = GridSpec::new(0.0, 0.0, 9.0, 17, 17, 50.0).expect("valid grid");
        let mut rng = stream(seed, STREAM_LAYOUT);
        let (w, d) = (150.0, 150.0);
        let buildings = (0..n_buildings)
            .map(|_| {
                let bw = rng.random_range(12.0..32.0);
                let bd = rng.random_range(12.0..32.0);
                let x = rng.random_range(0.0..w - bw);
                let y = rng.random_range(0.0..d - bd);
                Building {
                    x_min: x,
                    y_min: y,
                    x_max: x + bw,
                    y_max: y + bd,
                    height_m: rng.random_range(10.0..45.0),
                    class: rng.random_range(1..=classes.max(1)),
                }
            })
            .collect();
        Self {
            grid,
            classes: classes.max(1),
            buildings,
            theta_true: reference_theta(classes.max(1)),
            sigma_n: 0.0,
            shadowing: Shadowing::None,
            truth_filter: FilterSpec::cross(4.5, 4.5),
            n_users: 20,
            n_links: 2500,
            train_fraction: 0.8,
            altitude_range: [20.0, 90.0],
            user_height_m: 1.5,
            seed,
        }
    }

    /// Desk-scale relay scene: ten buildings, correlated shadowing
    /// (3 dB, 30 m) and 3 dB measurement noise.
    pub fn relay_desk(seed: u64) -> Self {
        let mut spec = Self::desk_scale(seed, 1, 10);
        spec.sigma_n = 3.0;
        spec.shadowing = Shadowing::Gp {
            alpha_s: 3.0,
            alpha_r: 30.0,
        };
        spec
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.classes == 0 || self.theta_true.classes() != self.classes {
            return bad(format!(
                "theta_true has {} classes, spec has {}",
                self.theta_true.classes(),
                self.classes
            ));
        }
        let (x0, y0) = (self.grid.origin_x, self.grid.origin_y);
        let (x1, y1) = (x0 + self.grid.width(), y0 + self.grid.depth());
        for (i, b) in self.buildings.iter().enumerate() {
            if !(b.x_min < b.x_max && b.y_min < b.y_max) {
                return bad(format!("building {i}: empty footprint"));
            }
            if b.x_min < x0 || b.y_min < y0 || b.x_max > x1 || b.y_max > y1 {
                return bad(format!("building {i}: footprint outside the area"));
            }
            if !(0.0..=self.grid.h_max_m).contains(&b.height_m) {
                return bad(format!("building {i}: height outside [0, H_max]"));
            }
            if b.class == 0 || b.class > self.classes {
                return bad(format!("building {i}: class {} out of range", b.class));
            }
        }
        if !(self.sigma_n >= 0.0) {
            return bad("sigma_n must be non-negative".into());
        }
        match self.shadowing {
            Shadowing::Iid { sigma_db } if !(sigma_db >= 0.0) => {
                return bad("shadowing sigma must be non-negative".into())
            }
            Shadowing::Gp { alpha_s, alpha_r } if !(alpha_s >= 0.0 && alpha_r > 0.0) => {
                return bad("gp shadowing needs alpha_s >= 0 and alpha_r > 0".into())
            }
            _ => {}
        }
        let [lo, hi] = self.altitude_range;
        if !(lo >= 0.0 && hi >= lo) {
            return bad("altitude range must satisfy 0 <= lo <= hi".into());
        }
        if self.n_users == 0 || !(0.0..=1.0).contains(&self.train_fraction) {
            return bad("n_users must be positive and train_fraction in [0, 1]".into());
        }
        self.truth_filter.build()?;
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Ground-truth obstacle heights: the tallest class-`k` building overlapping
/// each cell with positive area, with lower classes lifted to keep the
/// column ordering.
pub fn rasterize_truth(spec: &EnvironmentSpec) -> ObstacleMap {
    let grid = spec.grid;
    let mut map = ObstacleMap::empty(grid, spec.classes);
    for m in 0..grid.len() {
        let cell = grid.cell_bounds(m);
        for b in &spec.buildings {
            if b.overlaps(cell) && b.height_m > map.get(m, b.class) {
                map.set(m, b.class, b.height_m);
            }
        }
    }
    map.lift_ordering();
    map
}

/// Ground users outside every footprint, then aerial points uniform in the
/// area box, each paired with a uniformly chosen user.
pub fn sample_links(
    spec: &EnvironmentSpec,
    n_users: usize,
    n_aerial: usize,
    altitude_range: [f64; 2],
    rng: &mut impl Rng,
) -> Result<Vec<Link>> {
    if n_users == 0 || n_aerial == 0 {
        return Err(Error::InvalidInput("link counts must be at least 1".into()));
    }
    let g = &spec.grid;
    let (x0, y0, w, d) = (g.origin_x, g.origin_y, g.width(), g.depth());
    let mut users = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let user = (0..USER_TRIES)
            .map(|_| (x0 + rng.random::<f64>() * w, y0 + rng.random::<f64>() * d))
            .find(|&(x, y)| !spec.buildings.iter().any(|b| b.contains(x, y)))
            .ok_or_else(|| {
                Error::Sampling(format!("no free ground location after {USER_TRIES} tries"))
            })?;
        users.push(Point3::new(user.0, user.1, spec.user_height_m));
    }
    let [lo, hi] = altitude_range;
    (0..n_aerial)
        .map(|_| {
            let aerial = Point3::new(
                x0 + rng.random::<f64>() * w,
                y0 + rng.random::<f64>() * d,
                lo + rng.random::<f64>() * (hi - lo),
            );
            let user = users[rng.random_range(0..n_users)];
            Link::new(user, aerial)
        })
        .collect()
}

/// Spatially correlated shadowing field over link space, drawn with random
/// Fourier features of the exponential covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowField {
    amplitude: f64,
    freqs: Vec<[f64; 6]>,
    phases: Vec<f64>,
}

impl ShadowField {
    pub fn new(alpha_s: f64, alpha_r: f64, features: usize, rng: &mut impl Rng) -> Self {
        // The exponential kernel's spectral density is multivariate Cauchy.
        let mut freqs = Vec::with_capacity(features);
        let mut phases = Vec::with_capacity(features);
        for _ in 0..features {
            let s: f64 = StandardNormal.sample(rng);
            let scale = 1.0 / (alpha_r * s.abs().max(1e-300));
            freqs.push(std::array::from_fn(|_| {
                let g: f64 = StandardNormal.sample(rng);
                g * scale
            }));
            phases.push(rng.random::<f64>() * std::f64::consts::TAU);
        }
        Self {
            amplitude: alpha_s * (2.0 / features as f64).sqrt(),
            freqs,
            phases,
        }
    }

    pub fn at(&self, link: &Link) -> f64 {
        let p = link.coords();
        self.amplitude
            * self
                .freqs
                .iter()
                .zip(&self.phases)
                .map(|(w, b)| (w.iter().zip(&p).map(|(a, x)| a * x).sum::<f64>() + b).cos())
                .sum::<f64>()
    }
}

/// Noise-free true channel: deterministic map plus the correlated shadowing
/// field when one is configured.
#[derive(Debug, Clone)]
pub struct TruthModel {
    pub theta: PathLossParams,
    pub obstacles: ObstacleMap,
    pub filter: SoftFilter,
    pub field: Option<ShadowField>,
}

impl TruthModel {
    pub fn new(spec: &EnvironmentSpec) -> Result<Self> {
        spec.validate()?;
        let field = match spec.shadowing {
            Shadowing::Gp { alpha_s, alpha_r } => Some(ShadowField::new(
                alpha_s,
                alpha_r,
                RFF_FEATURES,
                &mut stream(spec.seed, STREAM_FIELD),
            )),
            _ => None,
        };
        Ok(Self {
            theta: spec.theta_true.clone(),
            obstacles: rasterize_truth(spec),
            filter: spec.truth_filter.build()?,
            field,
        })
    }

    pub fn deterministic_gain(&self, link: &Link) -> Result<f64> {
        deterministic_gain(link, &self.theta, &self.obstacles, &self.filter)
    }

    pub fn gain(&self, link: &Link) -> Result<f64> {
        let shadow = self.field.as_ref().map_or(0.0, |f| f.at(link));
        Ok(self.deterministic_gain(link)? + shadow)
    }

    /// Whether each link is line of sight under the true obstacle map.
    pub fn los_labels(&self, links: &[Link]) -> Vec<bool> {
        links
            .iter()
            .map(|l| hard_region(&trace_link(l, self.obstacles.grid()), &self.obstacles) == 0)
            .collect()
    }
}

/// RSS observations at `links`: true gain plus i.i.d. shadowing (if
/// configured) plus measurement noise.
pub fn simulate_rss(
    links: &[Link],
    spec: &EnvironmentSpec,
    truth: &TruthModel,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    let noise = Normal::new(0.0, spec.sigma_n)
        .map_err(|e| Error::InvalidInput(format!("sigma_n: {e}")))?;
    let iid = match spec.shadowing {
        Shadowing::Iid { sigma_db } => Some(
            Normal::new(0.0, sigma_db).map_err(|e| Error::InvalidInput(format!("shadowing: {e}")))?,
        ),
        _ => None,
    };
    let records = links
        .iter()
        .map(|&link| {
            let mut y = truth.gain(&link)?;
            if let Some(s) = &iid {
                y += s.sample(rng);
            }
            if spec.sigma_n > 0.0 {
                y += noise.sample(rng);
            }
            Ok(Measurement { link, rss_db: y })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(records)
}

/// Everything one spec generates.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: TruthModel,
    pub train: Dataset,
    pub test: Dataset,
}

/// Truth, links, and measurements for `spec`, split into train and test by
/// `train_fraction`. Test rows carry noiseless true gains.
pub fn generate(spec: &EnvironmentSpec) -> Result<Scenario> {
    let truth = TruthModel::new(spec)?;
    let links = sample_links(
        spec,
        spec.n_users,
        spec.n_links,
        spec.altitude_range,
        &mut stream(spec.seed, STREAM_LINKS),
    )?;
    let n_train = (spec.n_links as f64 * spec.train_fraction).round() as usize;
    let (train_links, test_links) = links.split_at(n_train.min(links.len()));
    let train = simulate_rss(train_links, spec, &truth, &mut stream(spec.seed, STREAM_NOISE))?;
    let test = Dataset::new(
        test_links
            .iter()
            .map(|&link| Ok(Measurement { link, rss_db: truth.gain(&link)? }))
            .collect::<Result<Vec<_>>>()?,
    )?;
    Ok(Scenario { truth, train, test })
}
