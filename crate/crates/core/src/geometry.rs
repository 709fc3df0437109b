//! Ground grid, 6D links, and the ray-over-grid traversal that yields the
//! cells a link passes over together with the link's lowest altitude above
//! each of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (in cell units) for deciding that a point lies on a
/// grid line.
const ON_LINE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

/// A ground-user / aerial-node position pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub user: Point3,
    pub aerial: Point3,
}

impl Link {
    pub fn new(user: Point3, aerial: Point3) -> Result<Self> {
        let link = Self { user, aerial };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = self.coords();
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("link coordinates must be finite".into()));
        }
        if self.user.z < 0.0 || self.aerial.z < 0.0 {
            return Err(Error::InvalidInput("link altitudes must be non-negative".into()));
        }
        if self.user == self.aerial {
            return Err(Error::DegenerateLink);
        }
        Ok(())
    }

    /// The link as a point in 6D: `(xu, yu, zu, xd, yd, zd)`.
    pub fn coords(&self) -> [f64; 6] {
        [
            self.user.x,
            self.user.y,
            self.user.z,
            self.aerial.x,
            self.aerial.y,
            self.aerial.z,
        ]
    }

    pub fn from_coords(c: [f64; 6]) -> Self {
        Self {
            user: Point3::new(c[0], c[1], c[2]),
            aerial: Point3::new(c[3], c[4], c[5]),
        }
    }

    pub fn length(&self) -> f64 {
        self.user.distance(&self.aerial)
    }

    /// Euclidean distance between two links in 6D.
    pub fn distance_6d(&self, other: &Link) -> f64 {
        squared_distance_6d(&self.coords(), &other.coords()).sqrt()
    }

    /// Displaces both endpoints by a 6D offset; altitudes are clamped at the
    /// ground.
    pub fn offset(&self, eps: &[f64; 6]) -> Link {
        let c = self.coords();
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = c[i] + eps[i];
        }
        out[2] = out[2].max(0.0);
        out[5] = out[5].max(0.0);
        Link::from_coords(out)
    }

    /// Elevation angle of the aerial node as seen from the user, in radians.
    pub fn elevation_angle(&self) -> f64 {
        let len = self.length();
        if len == 0.0 {
            return 0.0;
        }
        ((self.aerial.z - self.user.z) / len).clamp(-1.0, 1.0).asin()
    }
}

pub(crate) fn squared_distance_6d(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// log10 of the 3D link length in meters.
pub fn log_distance(link: &Link) -> Result<f64> {
    let d = link.length();
    if d <= 0.0 || !d.is_finite() {
        return Err(Error::DegenerateLink);
    }
    Ok(d.log10())
}

/// Uniform square grid over the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub spacing_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub h_max_m: f64,
}

impl GridSpec {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        spacing_m: f64,
        nx: usize,
        ny: usize,
        h_max_m: f64,
    ) -> Result<Self> {
        let grid = Self {
            origin_x,
            origin_y,
            spacing_m,
            nx,
            ny,
            h_max_m,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_m > 0.0 && self.spacing_m.is_finite()) {
            return Err(Error::InvalidGrid("spacing_m must be positive".into()));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidGrid("nx and ny must be at least 1".into()));
        }
        if !(self.h_max_m > 0.0 && self.h_max_m.is_finite()) {
            return Err(Error::InvalidGrid("h_max_m must be positive".into()));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    /// Number of cells M.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn cell_coords(&self, m: usize) -> (usize, usize) {
        (m % self.nx, m / self.nx)
    }

    /// Footprint `(x_min, y_min, x_max, y_max)` of cell `m`.
    pub fn cell_bounds(&self, m: usize) -> (f64, f64, f64, f64) {
        let (ix, iy) = self.cell_coords(m);
        let x0 = self.origin_x + ix as f64 * self.spacing_m;
        let y0 = self.origin_y + iy as f64 * self.spacing_m;
        (x0, y0, x0 + self.spacing_m, y0 + self.spacing_m)
    }

    pub fn cell_center(&self, m: usize) -> (f64, f64) {
        let (x0, y0, x1, y1) = self.cell_bounds(m);
        (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.spacing_m
    }

    pub fn depth(&self) -> f64 {
        self.ny as f64 * self.spacing_m
    }

    /// Cell containing `(x, y)` with half-open footprints; points on the far
    /// edges of the grid belong to the last row/column.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let ix = half_open_index((x - self.origin_x) / self.spacing_m, self.nx)?;
        let iy = half_open_index((y - self.origin_y) / self.spacing_m, self.ny)?;
        Some(self.cell_index(ix, iy))
    }

    /// Every cell whose closed footprint contains `(x, y)`: one cell in the
    /// interior, two on an edge, four at a vertex.
    fn closed_cells(&self, x: f64, y: f64, out: &mut Vec<usize>) {
        out.clear();
        let xs = closed_indices((x - self.origin_x) / self.spacing_m, self.nx);
        let ys = closed_indices((y - self.origin_y) / self.spacing_m, self.ny);
        for iy in ys.iter().flatten() {
            for ix in xs.iter().flatten() {
                out.push(self.cell_index(*ix, *iy));
            }
        }
    }
}

fn half_open_index(f: f64, n: usize) -> Option<usize> {
    if !(f >= 0.0) {
        return None;
    }
    let i = f.floor() as usize;
    if i < n {
        Some(i)
    } else if i == n && f == n as f64 {
        Some(n - 1)
    } else {
        None
    }
}

fn closed_indices(f: f64, n: usize) -> [Option<usize>; 2] {
    let r = f.round();
    let in_range = |i: f64| (i >= 0.0 && i < n as f64).then_some(i as usize);
    if (f - r).abs() <= ON_LINE_TOL {
        [in_range(r - 1.0), in_range(r)]
    } else {
        [in_range(f.floor()), None]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracedCell {
    pub cell: usize,
    /// Lowest altitude of the direct path above this cell.
    pub z: f64,
}

/// Cells crossed by a link's ground projection, in order of first visit from
/// the user end.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkTrace {
    pub cells: Vec<TracedCell>,
}

impl LinkTrace {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn z_at(&self, cell: usize) -> Option<f64> {
        self.cells.iter().find(|c| c.cell == cell).map(|c| c.z)
    }

    fn record(&mut self, cell: usize, z: f64) {
        match self.cells.iter_mut().find(|c| c.cell == cell) {
            Some(c) => c.z = c.z.min(z),
            None => self.cells.push(TracedCell { cell, z }),
        }
    }
}

/// Supercover traversal of the link's ground projection. Each traced cell
/// carries the minimum altitude of the segment over that cell's footprint.
/// Cells outside the grid are dropped.
pub fn trace_link(link: &Link, grid: &GridSpec) -> LinkTrace {
    let (x0, y0, z0) = (link.user.x, link.user.y, link.user.z);
    let (x1, y1, z1) = (link.aerial.x, link.aerial.y, link.aerial.z);
    let (dx, dy, dz) = (x1 - x0, y1 - y0, z1 - z0);
    let mut trace = LinkTrace::default();

    if dx.hypot(dy) <= ON_LINE_TOL * grid.spacing_m {
        if let Some(m) = grid.locate(x0, y0) {
            trace.record(m, z0.min(z1));
        }
        return trace;
    }

    let s = grid.spacing_m;
    let mut ts = vec![0.0, 1.0];
    crossings(x0, dx, grid.origin_x, s, grid.nx, &mut ts);
    crossings(y0, dy, grid.origin_y, s, grid.ny, &mut ts);
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup();

    let at = |t: f64| (x0 + t * dx, y0 + t * dy, z0 + t * dz);
    let mut cells = Vec::with_capacity(4);
    for (w, &t) in ts.iter().enumerate() {
        let (x, y, z) = at(t);
        grid.closed_cells(x, y, &mut cells);
        for &m in &cells {
            trace.record(m, z);
        }
        if let Some(&t_next) = ts.get(w + 1) {
            let (xm, ym, _) = at(0.5 * (t + t_next));
            let z_lo = at(t).2.min(at(t_next).2);
            grid.closed_cells(xm, ym, &mut cells);
            for &m in &cells {
                trace.record(m, z_lo);
            }
        }
    }
    trace
}

/// Parameters in (0, 1) at which `start + t * delta` crosses a grid line.
fn crossings(start: f64, delta: f64, origin: f64, spacing: f64, n: usize, ts: &mut Vec<f64>) {
    if delta == 0.0 {
        return;
    }
    let end = start + delta;
    let lo = ((start.min(end) - origin) / spacing).ceil().max(0.0) as i64;
    let hi = ((start.max(end) - origin) / spacing).floor().min(n as f64) as i64;
    for i in lo..=hi {
        let t = (origin + i as f64 * spacing - start) / delta;
        if t > 0.0 && t < 1.0 {
            ts.push(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new(0.0, 0.0, 1.0, n, n, 100.0).unwrap()
    }

    fn link(u: (f64, f64, f64), d: (f64, f64, f64)) -> Link {
        Link::new(Point3::new(u.0, u.1, u.2), Point3::new(d.0, d.1, d.2)).unwrap()
    }

    /// Samples the segment densely and buckets samples by (half-open) cell,
    /// keeping the minimum altitude seen per cell.
    fn dense_oracle(link: &Link, grid: &GridSpec, n: usize) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for i in 0..n {
            let t = i as f64 / (n - 1) as f64;
            let x = link.user.x + t * (link.aerial.x - link.user.x);
            let y = link.user.y + t * (link.aerial.y - link.user.y);
            let z = link.user.z + t * (link.aerial.z - link.user.z);
            if let Some(m) = grid.locate(x, y) {
                let e = out.entry(m).or_insert(f64::INFINITY);
                *e = f64::min(*e, z);
            }
        }
        out
    }

    #[test]
    fn single_cell_link_takes_lower_endpoint() {
        let grid = GridSpec::new(0.0, 0.0, 9.0, 3, 3, 50.0).unwrap();
        let l = link((10.0, 10.0, 2.0), (12.0, 14.0, 30.0));
        let t = trace_link(&l, &grid);
        assert_eq!(t.cells, vec![TracedCell { cell: 4, z: 2.0 }]);
    }

    #[test]
    fn vertical_link_is_one_cell() {
        let grid = GridSpec::new(0.0, 0.0, 1.0, 4, 4, 50.0).unwrap();
        // cell 7 = (ix 3, iy 1)
        let l = link((3.5, 1.5, 0.0), (3.5, 1.5, 50.0));
        let t = trace_link(&l, &grid);
        assert_eq!(t.cells, vec![TracedCell { cell: 7, z: 0.0 }]);
    }

    #[test]
    fn diagonal_through_vertex_matches_dense_oracle() {
        let grid = unit_grid(2);
        let l = link((0.1, 0.1, 0.0), (1.9, 1.9, 20.0));
        let t = trace_link(&l, &grid);
        let oracle = dense_oracle(&l, &grid, 10_000);
        // The oracle only sees the two cells the interior of the path visits.
        assert_eq!(oracle.keys().copied().collect::<Vec<_>>(), vec![0, 3]);
        let step = 20.0 / 9_999.0;
        for (m, z) in &oracle {
            let zt = t.z_at(*m).expect("oracle cell missing from trace");
            assert!(zt <= z + 1e-9 && z - zt <= step + 1e-9, "cell {m}: {zt} vs {z}");
        }
        assert!((t.z_at(0).unwrap() - 0.0).abs() < 1e-12);
        assert!((t.z_at(3).unwrap() - 10.0).abs() < 1e-9);
        // Supercover also keeps the two cells touched at the vertex (1, 1).
        assert_eq!(t.len(), 4);
        assert!((t.z_at(1).unwrap() - 10.0).abs() < 1e-9);
        assert!((t.z_at(2).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn segment_along_grid_line_covers_both_sides() {
        let grid = unit_grid(3);
        let l = link((0.5, 1.0, 5.0), (2.5, 1.0, 5.0));
        let t = trace_link(&l, &grid);
        let mut cells: Vec<_> = t.cells.iter().map(|c| c.cell).collect();
        cells.sort();
        assert_eq!(cells, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn cells_outside_grid_are_dropped() {
        let grid = unit_grid(2);
        let l = link((0.5, 0.5, 0.0), (5.5, 0.5, 10.0));
        let t = trace_link(&l, &grid);
        let mut cells: Vec<_> = t.cells.iter().map(|c| c.cell).collect();
        cells.sort();
        assert_eq!(cells, vec![0, 1]);
    }

    #[test]
    fn log_distance_examples() {
        let ten = link((0.0, 0.0, 0.0), (0.0, 0.0, 10.0));
        assert!((log_distance(&ten).unwrap() - 1.0).abs() < 1e-15);
        let one = link((0.0, 0.0, 1.0), (1.0, 0.0, 1.0));
        assert_eq!(log_distance(&one).unwrap(), 0.0);
        let tri = link((0.0, 0.0, 0.0), (3.0, 4.0, 0.0));
        assert!((log_distance(&tri).unwrap() - 0.698_970_004_336_018_8).abs() < 1e-12);
        let degenerate = Link::from_coords([1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(log_distance(&degenerate), Err(Error::DegenerateLink)));
        assert!(Link::new(Point3::new(0.0, 0.0, 1.0), Point3::new(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(0.0, 0.0, 0.0, 1, 1, 1.0).is_err());
        assert!(GridSpec::new(0.0, 0.0, 1.0, 0, 1, 1.0).is_err());
        assert!(GridSpec::new(0.0, 0.0, 1.0, 1, 1, 0.0).is_err());
    }

    fn arb_link() -> impl Strategy<Value = Link> {
        (
            0.0..40.0f64,
            0.0..40.0f64,
            0.0..5.0f64,
            0.0..40.0f64,
            0.0..40.0f64,
            5.0..80.0f64,
        )
            .prop_map(|(a, b, c, d, e, f)| Link::from_coords([a, b, c, d, e, f]))
    }

    proptest! {
        #[test]
        fn supercover_contains_every_sampled_cell(l in arb_link()) {
            let grid = GridSpec::new(0.0, 0.0, 4.0, 10, 10, 50.0).unwrap();
            let t = trace_link(&l, &grid);
            let oracle = dense_oracle(&l, &grid, 2_000);
            for (m, z) in oracle {
                let zt = t.z_at(m);
                prop_assert!(zt.is_some(), "sampled cell {} missing", m);
                prop_assert!(zt.unwrap() <= z + 1e-6);
            }
            let mut seen = std::collections::HashSet::new();
            let (zlo, zhi) = (l.user.z.min(l.aerial.z), l.user.z.max(l.aerial.z));
            for c in &t.cells {
                prop_assert!(c.cell < grid.len());
                prop_assert!(seen.insert(c.cell));
                prop_assert!(c.z >= zlo - 1e-9 && c.z <= zhi + 1e-9);
            }
        }

        #[test]
        fn trace_is_direction_symmetric(l in arb_link()) {
            let grid = GridSpec::new(0.0, 0.0, 4.0, 10, 10, 50.0).unwrap();
            let rev = Link { user: l.aerial, aerial: l.user };
            let a: BTreeMap<usize, f64> =
                trace_link(&l, &grid).cells.iter().map(|c| (c.cell, c.z)).collect();
            let b: BTreeMap<usize, f64> =
                trace_link(&rev, &grid).cells.iter().map(|c| (c.cell, c.z)).collect();
            prop_assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
            for (m, z) in &a {
                prop_assert!((z - b[m]).abs() < 1e-9);
            }
        }
    }
}
