//! Great-circle distance and a latitude-banded grid for radius queries.

use std::collections::BTreeMap;

/// Mean Earth radius, metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Haversine distance in metres.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Buckets points into cells roughly `side_m` metres on a side. Rows are
/// latitude bands; each row's longitude width is widened by the row's most
/// poleward latitude so a cell is never narrower than `side_m`.
///
/// Longitudes are not wrapped at the antimeridian.
#[derive(Debug, Clone)]
pub struct Grid {
    cell_deg: f64,
    cells: BTreeMap<(i64, i64), Vec<u32>>,
}

impl Grid {
    pub fn new(side_m: f64) -> Self {
        Grid {
            cell_deg: (side_m / EARTH_RADIUS_M).to_degrees(),
            cells: BTreeMap::new(),
        }
    }

    fn row(&self, lat: f64) -> i64 {
        (lat / self.cell_deg).floor() as i64
    }

    fn row_width(&self, row: i64) -> f64 {
        let edge = (row as f64 * self.cell_deg)
            .abs()
            .max(((row + 1) as f64 * self.cell_deg).abs())
            .min(90.0);
        let c = edge.to_radians().cos();
        if c < 1e-9 {
            360.0
        } else {
            (self.cell_deg / c).min(360.0)
        }
    }

    fn key(&self, lat: f64, lon: f64) -> (i64, i64) {
        let row = self.row(lat);
        (row, (lon / self.row_width(row)).floor() as i64)
    }

    pub fn insert(&mut self, lat: f64, lon: f64, id: u32) {
        let key = self.key(lat, lon);
        self.cells.entry(key).or_default().push(id);
    }

    /// Ids of every point that may lie within `radius_m` of (`lat`, `lon`).
    /// The caller still applies the exact distance test.
    pub fn candidates(&self, lat: f64, lon: f64, radius_m: f64, out: &mut Vec<u32>) {
        out.clear();
        let d = radius_m / EARTH_RADIUS_M;
        let dlat = d.to_degrees();
        let (lat_lo, lat_hi) = ((lat - dlat).max(-90.0), (lat + dlat).min(90.0));
        // widest longitude offset reachable within the radius
        let poleward = lat_lo.abs().max(lat_hi.abs()).to_radians();
        let s = d.sin() / poleward.cos();
        let dlon = if s >= 1.0 || !s.is_finite() {
            f64::INFINITY
        } else {
            s.asin().to_degrees()
        };
        for row in self.row(lat_lo)..=self.row(lat_hi) {
            let (lo, hi) = if dlon.is_finite() {
                let w = self.row_width(row);
                (((lon - dlon) / w).floor() as i64, ((lon + dlon) / w).floor() as i64)
            } else {
                (i64::MIN, i64::MAX)
            };
            for ids in self.cells.range((row, lo)..=(row, hi)).map(|(_, v)| v) {
                out.extend_from_slice(ids);
            }
        }
    }
}
