//! Discrete location areas laid out on a regular lat/lon grid.
//!
//! Each grid cell stands in for a census area: points are bucketed into the
//! cell that contains them and trips are measured between cell centroids.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used by the haversine distance.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

const NULL_ID: &str = "null";

/// Opaque identifier of a location area.
///
/// The reserved value [`AreaId::null`] marks hours for which a device
/// reported no data; it never has a centroid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AreaId(String);

impl AreaId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id == NULL_ID {
            return Err(Error::Domain(format!("`{id}` is not a valid area id")));
        }
        Ok(AreaId(id))
    }

    pub fn null() -> Self {
        AreaId(NULL_ID.to_owned())
    }

    pub fn is_null(&self) -> bool {
        self.0 == NULL_ID
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Identifier of grid cell `(row, col)`; lexical order equals row-major order.
    pub fn grid(row: usize, col: usize) -> Self {
        AreaId(format!("r{row:03}c{col:03}"))
    }
}

impl fmt::Display for AreaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub id: AreaId,
    pub lat: f64,
    pub lon: f64,
}

/// Immutable grid of areas. Row 0 is the southernmost row, column 0 the westernmost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AreaMapRepr", into = "AreaMapRepr")]
pub struct AreaMap {
    bbox: BoundingBox,
    grid_rows: usize,
    grid_cols: usize,
    areas: Vec<Area>,
}

#[derive(Serialize, Deserialize)]
struct AreaMapRepr {
    bbox: BoundingBox,
    grid_rows: usize,
    grid_cols: usize,
    areas: Vec<Area>,
}

impl From<AreaMap> for AreaMapRepr {
    fn from(m: AreaMap) -> Self {
        AreaMapRepr { bbox: m.bbox, grid_rows: m.grid_rows, grid_cols: m.grid_cols, areas: m.areas }
    }
}

impl TryFrom<AreaMapRepr> for AreaMap {
    type Error = Error;

    fn try_from(r: AreaMapRepr) -> Result<Self> {
        let map = AreaMap::grid(r.bbox, r.grid_rows, r.grid_cols)?;
        if r.areas.len() != map.areas.len() {
            return Err(Error::Format(format!(
                "area map lists {} areas, grid has {}",
                r.areas.len(),
                map.areas.len()
            )));
        }
        for (idx, area) in r.areas.iter().enumerate() {
            if area.id.is_null() {
                return Err(Error::Format("area map contains the reserved null id".into()));
            }
            if map.cell_of(area.lat, area.lon) != Some(idx) {
                return Err(Error::Format(format!("centroid of {} lies outside its cell", area.id)));
            }
        }
        let mut ids: Vec<&AreaId> = r.areas.iter().map(|a| &a.id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != r.areas.len() {
            return Err(Error::Format("duplicate area ids".into()));
        }
        Ok(AreaMap { areas: r.areas, ..map })
    }
}

impl AreaMap {
    /// Regular grid with cell centroids at the cell midpoints.
    pub fn grid(bbox: BoundingBox, grid_rows: usize, grid_cols: usize) -> Result<Self> {
        if grid_rows == 0 || grid_cols == 0 || grid_rows * grid_cols < 2 {
            return Err(Error::Config(format!(
                "grid {grid_rows}x{grid_cols} must contain at least two areas"
            )));
        }
        let finite = [bbox.min_lat, bbox.max_lat, bbox.min_lon, bbox.max_lon]
            .iter()
            .all(|v| v.is_finite());
        if !finite
            || bbox.min_lat >= bbox.max_lat
            || bbox.min_lon >= bbox.max_lon
            || bbox.min_lat < -90.0
            || bbox.max_lat > 90.0
            || bbox.min_lon < -180.0
            || bbox.max_lon > 180.0
        {
            return Err(Error::Config(format!("invalid bounding box {bbox:?}")));
        }
        let cell_h = (bbox.max_lat - bbox.min_lat) / grid_rows as f64;
        let cell_w = (bbox.max_lon - bbox.min_lon) / grid_cols as f64;
        let mut areas = Vec::with_capacity(grid_rows * grid_cols);
        for row in 0..grid_rows {
            for col in 0..grid_cols {
                areas.push(Area {
                    id: AreaId::grid(row, col),
                    lat: bbox.min_lat + (row as f64 + 0.5) * cell_h,
                    lon: bbox.min_lon + (col as f64 + 0.5) * cell_w,
                });
            }
        }
        Ok(AreaMap { bbox, grid_rows, grid_cols, areas })
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    /// Areas in row-major order.
    pub fn areas(&self) -> &[Area] {
        &self.areas
    }

    pub fn area(&self, idx: usize) -> &Area {
        &self.areas[idx]
    }

    pub fn index_of(&self, id: &AreaId) -> Option<usize> {
        self.areas.iter().position(|a| &a.id == id)
    }

    /// Latitude/longitude extent of cell `idx`: `(lat_lo, lat_hi, lon_lo, lon_hi)`.
    pub fn cell_bounds(&self, idx: usize) -> (f64, f64, f64, f64) {
        let (row, col) = (idx / self.grid_cols, idx % self.grid_cols);
        let h = (self.bbox.max_lat - self.bbox.min_lat) / self.grid_rows as f64;
        let w = (self.bbox.max_lon - self.bbox.min_lon) / self.grid_cols as f64;
        (
            self.bbox.min_lat + row as f64 * h,
            self.bbox.min_lat + (row + 1) as f64 * h,
            self.bbox.min_lon + col as f64 * w,
            self.bbox.min_lon + (col + 1) as f64 * w,
        )
    }

    fn cell_of(&self, lat: f64, lon: f64) -> Option<usize> {
        if !self.bbox.contains(lat, lon) {
            return None;
        }
        // Points on a shared edge belong to the lower-index cell.
        let axis = |v: f64, lo: f64, hi: f64, n: usize| -> usize {
            let scaled = (v - lo) / (hi - lo) * n as f64;
            (scaled.ceil() as usize).saturating_sub(1).min(n - 1)
        };
        let row = axis(lat, self.bbox.min_lat, self.bbox.max_lat, self.grid_rows);
        let col = axis(lon, self.bbox.min_lon, self.bbox.max_lon, self.grid_cols);
        Some(row * self.grid_cols + col)
    }

    /// Index of the area containing the point.
    pub fn area_index_of_point(&self, lat: f64, lon: f64) -> Result<usize> {
        self.cell_of(lat, lon).ok_or(Error::OutOfRegion { lat, lon })
    }

    pub fn area_of_point(&self, lat: f64, lon: f64) -> Result<&AreaId> {
        self.area_index_of_point(lat, lon).map(|idx| &self.areas[idx].id)
    }

    pub fn centroid(&self, id: &AreaId) -> Result<(f64, f64)> {
        if id.is_null() {
            return Err(Error::Domain("the null area has no centroid".into()));
        }
        let idx = self
            .index_of(id)
            .ok_or_else(|| Error::Domain(format!("unknown area {id}")))?;
        Ok((self.areas[idx].lat, self.areas[idx].lon))
    }

    /// Great-circle distance between two area centroids.
    pub fn centroid_distance_km(&self, a: &AreaId, b: &AreaId) -> Result<f64> {
        let (lat1, lon1) = self.centroid(a)?;
        let (lat2, lon2) = self.centroid(b)?;
        Ok(haversine_km(lat1, lon1, lat2, lon2))
    }
}

pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}
