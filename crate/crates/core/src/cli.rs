//! Command-line front end: generate, fit, predict, eval, slice, relay.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{stat_fit, KnnModel, KrigingBaseline, StatModel, KNN_K, KNN_SCALE_M};
use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::geometry::{Link, Point3};
use crate::io;
use crate::kriging::{DEFAULT_MAX_PAIRS, DEFAULT_NEIGHBORS};
use crate::pipeline::{build_radio_map, MapConfig};
use crate::propagation::{full_gain, PathLossParams, RadioMap};
use crate::relay::{evaluate_relay_benchmark, sample_user_pairs, GainOracle, RelayParams};
use crate::synthdata::{generate, EnvironmentSpec, TruthModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "radiomap", version, about = "Air-to-ground radio map construction")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic environment with train/test measurements.
    Generate {
        /// Environment spec JSON; a desk-scale scene is used when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Desk scene: number of buildings.
        #[arg(long, default_value_t = 5)]
        buildings: usize,
        /// Desk scene: number of obstruction classes.
        #[arg(long, default_value_t = 1)]
        classes: usize,
        /// Desk scene: total links (train + test).
        #[arg(long)]
        n_links: Option<usize>,
        /// Desk scene: measurement noise standard deviation, dB.
        #[arg(long)]
        sigma_n: Option<f64>,
    },
    /// Fit a radio map to training measurements.
    Fit {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the kriging pair-sampling seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict gains at the links of a CSV.
    Predict {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        links: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Proposed)]
        method: Method,
        /// Training measurements, required by the baselines.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean absolute error of one or more methods over test measurements.
    Eval {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, num_args = 1.., default_values_t = [Method::Proposed])]
        method: Vec<Method>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Gains from one user position to a horizontal plane of UAV positions.
    Slice {
        #[arg(long)]
        map: PathBuf,
        /// User position "x,y,z".
        #[arg(long, value_parser = parse_point)]
        user: Point3,
        #[arg(long)]
        altitude: f64,
        #[arg(long)]
        out: PathBuf,
        /// Samples per axis; defaults to the grid's cell counts.
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
    },
    /// Relay placement benchmark scored against the true channel.
    Relay {
        /// Environment spec JSON used to generate the data.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Proposed,
    Knn,
    Kriging,
    Statistical,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Knn => "knn",
            Method::Kriging => "kriging",
            Method::Statistical => "statistical",
        }
    }
}

fn parse_point(s: &str) -> std::result::Result<Point3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(Point3::new(x, y, z)),
        _ => Err(format!("expected x,y,z, got {s:?}")),
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("RADIOMAP_LOG", "warn"))
        .format_timestamp(None)
        .try_init();

    let outcome = match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Failure::Usage(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Generate {
            spec,
            out,
            seed,
            buildings,
            classes,
            n_links,
            sigma_n,
        } => {
            let mut spec = match spec {
                Some(p) => io::read_json::<EnvironmentSpec>(&p)?,
                None => {
                    let mut s = EnvironmentSpec::desk_scale(seed.unwrap_or(0), classes, buildings);
                    s.n_links = n_links.unwrap_or(s.n_links);
                    s.sigma_n = sigma_n.unwrap_or(s.sigma_n);
                    s
                }
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            cmd_generate(&spec, &out)
        }
        Command::Fit { train, config, out, seed } => cmd_fit(&train, &config, &out, seed),
        Command::Predict {
            map,
            links,
            out,
            method,
            train,
            seed,
        } => {
            let model = Model::load(method, map.as_deref(), train.as_deref(), seed)?;
            let links = io::read_links(&links)?;
            let mut body = String::from("xu,yu,zu,xd,yd,zd,gain_db\n");
            for l in &links {
                let c = l.coords();
                let g = model.predict(l)?;
                body.push_str(&format!("{},{},{},{},{},{},{}\n", c[0], c[1], c[2], c[3], c[4], c[5], g));
            }
            write_text(&out, &body)
        }
        Command::Eval {
            map,
            test,
            method,
            train,
            out,
            seed,
        } => cmd_eval(map.as_deref(), &test, &method, train.as_deref(), &out, seed),
        Command::Slice {
            map,
            user,
            altitude,
            out,
            nx,
            ny,
        } => cmd_slice(&map, user, altitude, &out, nx, ny),
        Command::Relay {
            spec,
            map,
            train,
            out,
            pairs,
            seed,
        } => cmd_relay(&spec, &map, &train, &out, pairs, seed),
    }
}

fn write_text(path: &Path, body: &str) -> CmdResult {
    std::fs::write(path, body).map_err(|e| Failure::Data(Error::io(path, e)))
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    classes: usize,
    theta_true: &'a PathLossParams,
    n_train: usize,
    n_test: usize,
    files: [&'a str; 5],
}

pub fn cmd_generate_files(spec: &EnvironmentSpec, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let sc = generate(spec)?;
    io::write_json(&out.join("spec.json"), spec)?;
    io::write_heights(&out.join("truth.heights.csv"), &sc.truth.obstacles)?;
    io::write_measurements(&out.join("train.csv"), &sc.train)?;
    io::write_measurements(&out.join("test.csv"), &sc.test)?;
    let cfg = MapConfig::new(spec.grid, spec.classes).soft();
    io::write_json(&out.join("config.json"), &cfg)?;
    io::write_json(
        &out.join("manifest.json"),
        &Manifest {
            seed: spec.seed,
            classes: spec.classes,
            theta_true: &spec.theta_true,
            n_train: sc.train.len(),
            n_test: sc.test.len(),
            files: ["spec.json", "truth.heights.csv", "train.csv", "test.csv", "config.json"],
        },
    )
}

fn cmd_generate(spec: &EnvironmentSpec, out: &Path) -> CmdResult {
    cmd_generate_files(spec, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_fit(train: &Path, config: &Path, out: &Path, seed: Option<u64>) -> CmdResult {
    let data = io::read_measurements(train)?;
    let mut cfg: MapConfig = io::read_json(config)?;
    if let Some(s) = seed {
        cfg.kriging.seed = s;
    }
    let (map, result) = build_radio_map(&data, &cfg)?;
    io::save_radio_map(out, &map)?;
    println!(
        "objective {} iterations {} converged {}",
        result.objective_trace.last().copied().unwrap_or(f64::NAN),
        result.iterations,
        result.converged
    );
    Ok(())
}

/// A fitted predictor of any supported method.
enum Model {
    Proposed(Box<RadioMap>),
    Knn(KnnModel),
    Kriging(Box<KrigingBaseline>),
    Statistical(StatModel),
}

impl Model {
    fn load(method: Method, map: Option<&Path>, train: Option<&Path>, seed: u64) -> std::result::Result<Self, Failure> {
        if method == Method::Proposed {
            let map = map.ok_or_else(|| Failure::Usage("--map is required for method proposed".into()))?;
            return Ok(Model::Proposed(Box::new(io::load_radio_map(map)?)));
        }
        let train = train.ok_or_else(|| Failure::Usage(format!("--train is required for method {}", method.name())))?;
        let data = io::read_measurements(train)?;
        Ok(Self::from_data(method, &data, seed)?)
    }

    fn from_data(method: Method, data: &Dataset, seed: u64) -> Result<Self> {
        Ok(match method {
            Method::Proposed => unreachable!("proposed maps are loaded, not fitted here"),
            Method::Knn => Model::Knn(KnnModel::new(data, KNN_K.min(data.len().max(1)), KNN_SCALE_M)?),
            Method::Kriging => Model::Kriging(Box::new(KrigingBaseline::fit(data, DEFAULT_NEIGHBORS, DEFAULT_MAX_PAIRS, seed)?)),
            Method::Statistical => Model::Statistical(stat_fit(data, None)?),
        })
    }

    fn predict(&self, link: &Link) -> Result<f64> {
        match self {
            Model::Proposed(m) => full_gain(link, m),
            Model::Knn(m) => Ok(m.predict(link)),
            Model::Kriging(m) => m.predict(link),
            Model::Statistical(m) => crate::baselines::stat_predict(link, m),
        }
    }
}

fn cmd_eval(map: Option<&Path>, test: &Path, methods: &[Method], train: Option<&Path>, out: &Path, seed: u64) -> CmdResult {
    let test = io::read_measurements(test)?;
    let mut body = String::from("method,mae_db,n\n");
    let mut seen = Vec::new();
    for &m in methods {
        if seen.contains(&m) {
            continue;
        }
        seen.push(m);
        let model = Model::load(m, map, train, seed)?;
        let mut total = 0.0;
        for r in test.records() {
            total += (model.predict(&r.link)? - r.rss_db).abs();
        }
        let mae = if test.is_empty() { 0.0 } else { total / test.len() as f64 };
        println!("{}: MAE {mae:.4} dB over {} links", m.name(), test.len());
        body.push_str(&format!("{},{},{}\n", m.name(), mae, test.len()));
    }
    write_text(out, &body)
}

fn cmd_slice(map: &Path, user: Point3, altitude: f64, out: &Path, nx: Option<usize>, ny: Option<usize>) -> CmdResult {
    let map = io::load_radio_map(map)?;
    let grid = *map.grid();
    let (nx, ny) = (nx.unwrap_or(grid.nx), ny.unwrap_or(grid.ny));
    if nx == 0 || ny == 0 {
        return Err(Failure::Usage("--nx and --ny must be at least 1".into()));
    }
    if let Some(r) = &map.residual {
        let top = r.store.points().iter().map(|p| p[5]).fold(f64::NEG_INFINITY, f64::max);
        if altitude > top {
            log::warn!("altitude {altitude} m is above every training UAV altitude ({top} m)");
        }
    }
    if altitude < grid.h_max_m {
        log::warn!("altitude {altitude} m is below the obstacle ceiling {} m", grid.h_max_m);
    }
    let mut body = String::from("x,y,gain_db\n");
    for iy in 0..ny {
        for ix in 0..nx {
            let x = grid.origin_x + (ix as f64 + 0.5) * grid.width() / nx as f64;
            let y = grid.origin_y + (iy as f64 + 0.5) * grid.depth() / ny as f64;
            let link = Link::new(user, Point3::new(x, y, altitude))?;
            body.push_str(&format!("{x},{y},{}\n", full_gain(&link, &map)?));
        }
    }
    write_text(out, &body)
}

fn cmd_relay(spec: &Path, map: &Path, train: &Path, out: &Path, pairs: usize, seed: u64) -> CmdResult {
    let spec: EnvironmentSpec = io::read_json(spec)?;
    let truth = TruthModel::new(&spec)?;
    let map = io::load_radio_map(map)?;
    let data = io::read_measurements(train)?;
    let knn = KnnModel::new(&data, KNN_K.min(data.len().max(1)), KNN_SCALE_M)?;
    let kriging = KrigingBaseline::fit(&data, DEFAULT_NEIGHBORS, DEFAULT_MAX_PAIRS, seed)?;
    let stat = stat_fit(&data, None)?;
    let pairs = sample_user_pairs(&spec.grid, pairs, spec.user_height_m, &mut ChaCha8Rng::seed_from_u64(seed));
    let params = RelayParams::default_for(&spec.grid);
    let methods: [(&str, &dyn GainOracle); 5] = [
        ("true", &truth),
        ("proposed", &map),
        ("knn", &knn),
        ("kriging", &kriging),
        ("statistical", &stat),
    ];
    let rows = evaluate_relay_benchmark(&pairs, &truth, &methods, &params)?;
    let mut body = String::from("method,mean_capacity_bps,n_pairs\n");
    for r in &rows {
        println!("{}: {:.3} Mbit/s", r.method, r.mean_capacity_bps / 1e6);
        body.push_str(&format!("{},{},{}\n", r.method, r.mean_capacity_bps, r.n_pairs));
    }
    write_text(out, &body)
}
