//! Environment-aware air-to-ground radio maps: a per-class path-loss model
//! driven by a virtual obstacle map, learned jointly from RSS measurements,
//! with kriged residual shadowing on top.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod io;
pub mod kriging;
pub mod obstacle;
pub mod pipeline;
pub mod propagation;
pub mod relay;
pub mod synthdata;

pub use error::{Error, Result};
pub use estimator::{fit, Dataset, FitConfig, FitResult, Measurement};
pub use geometry::{trace_link, GridSpec, Link, LinkTrace, Point3};
pub use kriging::{krige, ResidualStore, Variogram};
pub use obstacle::{hard_region, make_filter, soft_likelihood, FilterMode, FilterSpec, ObstacleMap, SoftFilter};
pub use propagation::{deterministic_gain, full_gain, PathLossParams, RadioMap};
pub use pipeline::{build_radio_map, MapConfig};
