//! File formats: measurement and height CSVs, JSON configs, and the radio map
//! bundle (JSON plus CSV sidecars).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Dataset, Measurement};
use crate::geometry::{GridSpec, Link};
use crate::kriging::{ResidualStore, Variogram};
use crate::obstacle::{FilterSpec, ObstacleMap};
use crate::propagation::{PathLossParams, RadioMap, ResidualModel};

pub const MEASUREMENT_HEADER: [&str; 7] = ["xu", "yu", "zu", "xd", "yd", "zd", "rss_db"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_error(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses every row of a headed numeric CSV, checking the header exactly.
fn read_rows(path: &Path, header: &[String]) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut rdr = csv_reader(path)?;
    let got: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(csv_error(
            path,
            1,
            format!("expected header {}, got {}", header.join(","), got.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_error(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| csv_error(path, line, format!("not a finite number: {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, vals));
    }
    Ok(rows)
}

pub fn read_measurements(path: &Path) -> Result<Dataset> {
    let header: Vec<String> = MEASUREMENT_HEADER.iter().map(|s| s.to_string()).collect();
    let mut records = Vec::new();
    for (line, v) in read_rows(path, &header)? {
        let link = Link::from_coords([v[0], v[1], v[2], v[3], v[4], v[5]]);
        link.validate().map_err(|e| csv_error(path, line, e.to_string()))?;
        records.push(Measurement { link, rss_db: v[6] });
    }
    Dataset::new(records)
}

/// Links from a CSV with the measurement columns; `rss_db` may be omitted.
pub fn read_links(path: &Path) -> Result<Vec<Link>> {
    let mut rdr = csv_reader(path)?;
    let n_cols = rdr.headers().map_err(|e| csv_error(path, 1, e.to_string()))?.len();
    drop(rdr);
    let cols = if n_cols == 6 { 6 } else { 7 };
    let header: Vec<String> = MEASUREMENT_HEADER[..cols].iter().map(|s| s.to_string()).collect();
    read_rows(path, &header)?
        .into_iter()
        .map(|(line, v)| {
            let link = Link::from_coords([v[0], v[1], v[2], v[3], v[4], v[5]]);
            link.validate().map_err(|e| csv_error(path, line, e.to_string()))?;
            Ok(link)
        })
        .collect()
}

pub fn write_measurements(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    let mut body = MEASUREMENT_HEADER.join(",");
    body.push('\n');
    for r in data.records() {
        let c = r.link.coords();
        body.push_str(&format!("{},{},{},{},{},{},{}\n", c[0], c[1], c[2], c[3], c[4], c[5], r.rss_db));
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn heights_header(classes: usize) -> Vec<String> {
    std::iter::once("cell".to_string())
        .chain((1..=classes).map(|k| format!("h_{k}")))
        .collect()
}

pub fn write_heights(path: &Path, map: &ObstacleMap) -> Result<()> {
    let mut w = create(path)?;
    let mut body = heights_header(map.classes()).join(",");
    body.push('\n');
    for m in 0..map.cells() {
        body.push_str(&m.to_string());
        for k in 1..=map.classes() {
            body.push_str(&format!(",{}", map.get(m, k)));
        }
        body.push('\n');
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_heights(path: &Path, grid: GridSpec, classes: usize) -> Result<ObstacleMap> {
    let rows = read_rows(path, &heights_header(classes))?;
    if rows.len() != grid.len() {
        return Err(csv_error(
            path,
            rows.last().map_or(1, |r| r.0),
            format!("expected {} cells, got {}", grid.len(), rows.len()),
        ));
    }
    let mut heights = Vec::with_capacity(grid.len() * classes);
    for (m, (line, v)) in rows.iter().enumerate() {
        if v[0] != m as f64 {
            return Err(csv_error(path, *line, format!("expected cell {m}, got {}", v[0])));
        }
        heights.extend_from_slice(&v[1..]);
    }
    ObstacleMap::from_heights(grid, classes, heights)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// JSON part of a saved radio map; heights and residuals live in sidecars
/// named relative to the JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MapFile {
    grid: GridSpec,
    classes: usize,
    theta: PathLossParams,
    filter: FilterSpec,
    heights_file: String,
    residual: Option<ResidualFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResidualFile {
    variogram: Variogram,
    n_neighbors: usize,
    records_file: String,
}

fn sidecar(path: &Path, suffix: &str) -> (PathBuf, String) {
    let stem = path.file_stem().map_or_else(|| "map".into(), |s| s.to_string_lossy().into_owned());
    let name = format!("{stem}.{suffix}");
    (path.with_file_name(&name), name)
}

const RESIDUAL_HEADER: [&str; 7] = ["xu", "yu", "zu", "xd", "yd", "zd", "residual_db"];

pub fn save_radio_map(path: &Path, map: &RadioMap) -> Result<()> {
    let (hpath, hname) = sidecar(path, "heights.csv");
    write_heights(&hpath, &map.obstacles)?;
    let residual = match &map.residual {
        Some(r) => {
            let (rpath, rname) = sidecar(path, "residuals.csv");
            let mut w = create(&rpath)?;
            let mut body = RESIDUAL_HEADER.join(",");
            body.push('\n');
            for (p, v) in r.store.points().iter().zip(r.store.values()) {
                body.push_str(&format!("{},{},{},{},{},{},{}\n", p[0], p[1], p[2], p[3], p[4], p[5], v));
            }
            w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(&rpath, e))?;
            Some(ResidualFile {
                variogram: r.variogram,
                n_neighbors: r.n_neighbors,
                records_file: rname,
            })
        }
        None => None,
    };
    write_json(
        path,
        &MapFile {
            grid: *map.grid(),
            classes: map.obstacles.classes(),
            theta: map.theta.clone(),
            filter: map.filter_spec,
            heights_file: hname,
            residual,
        },
    )
}

pub fn load_radio_map(path: &Path) -> Result<RadioMap> {
    let f: MapFile = read_json(path)?;
    f.grid.validate()?;
    let obstacles = read_heights(&path.with_file_name(&f.heights_file), f.grid, f.classes)?;
    let mut map = RadioMap::new(f.theta, obstacles, f.filter)?;
    if let Some(r) = f.residual {
        r.variogram.validate()?;
        let rpath = path.with_file_name(&r.records_file);
        let header: Vec<String> = RESIDUAL_HEADER.iter().map(|s| s.to_string()).collect();
        let rows = read_rows(&rpath, &header)?;
        let links: Vec<Link> = rows
            .iter()
            .map(|(_, v)| Link::from_coords([v[0], v[1], v[2], v[3], v[4], v[5]]))
            .collect();
        let values = rows.iter().map(|(_, v)| v[6]).collect();
        map = map.with_residual(ResidualModel {
            variogram: r.variogram,
            store: ResidualStore::new(&links, values)?,
            n_neighbors: r.n_neighbors,
        });
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "xu,yu,zu,xd,yd,zd,rss_db\n0,0,1.5,10,0,30,-60\n0,0,1.5,x,0,30,-60\n").unwrap();
        let err = read_measurements(&p).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn heights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let grid = GridSpec::new(0.0, 0.0, 10.0, 2, 2, 50.0).unwrap();
        let map = ObstacleMap::from_heights(grid, 2, vec![1.0, 0.5, 2.0, 0.0, 0.0, 0.0, 49.5, 3.25]).unwrap();
        write_heights(&p, &map).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("cell,h_1,h_2\n"));
        assert_eq!(read_heights(&p, grid, 2).unwrap(), map);
    }
}
