//! Planar coordinates, the analysis grid and region lookup.
//!
//! All geometry is done in planar meters. Longitude/latitude inputs go through
//! [`Projection`] exactly once, at ingestion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

pub type CellId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> PlanarPoint {
        PlanarPoint::new(self.x + dx, self.y + dy)
    }
}

/// Local equirectangular projection around a declared origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub ref_lat: f64,
}

impl Projection {
    pub fn new(origin_lon: f64, origin_lat: f64, ref_lat: f64) -> Result<Self> {
        for (name, v) in [
            ("origin_lon", origin_lon),
            ("origin_lat", origin_lat),
            ("ref_lat", ref_lat),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidCoordinate(format!("{name} = {v}")));
            }
        }
        if ref_lat.abs() >= 90.0 || origin_lat.abs() >= 90.0 {
            return Err(Error::InvalidCoordinate(format!(
                "latitude out of range: origin {origin_lat}, reference {ref_lat}"
            )));
        }
        Ok(Projection {
            origin_lon,
            origin_lat,
            ref_lat,
        })
    }

    /// Projection whose reference latitude is the origin latitude.
    pub fn at_origin(origin_lon: f64, origin_lat: f64) -> Result<Self> {
        Self::new(origin_lon, origin_lat, origin_lat)
    }

    pub fn project(&self, lon: f64, lat: f64) -> Result<PlanarPoint> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::InvalidCoordinate(format!("({lon}, {lat})")));
        }
        if lat.abs() >= 90.0 {
            return Err(Error::InvalidCoordinate(format!(
                "latitude {lat} out of range"
            )));
        }
        let x =
            EARTH_RADIUS_M * self.ref_lat.to_radians().cos() * (lon - self.origin_lon).to_radians();
        let y = EARTH_RADIUS_M * (lat - self.origin_lat).to_radians();
        Ok(PlanarPoint::new(x, y))
    }

    /// Inverse of [`Projection::project`]; returns `(lon, lat)`.
    pub fn unproject(&self, p: PlanarPoint) -> (f64, f64) {
        let lat = self.origin_lat + (p.y / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin_lon
            + (p.x / (EARTH_RADIUS_M * self.ref_lat.to_radians().cos())).to_degrees();
        (lon, lat)
    }
}

/// Regular grid of square cells over a rectangular observation window.
///
/// Cells are half-open `[a, b)` along both axes and numbered row-major from
/// the origin corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    origin: PlanarPoint,
    cell_size: f64,
    n_cols: usize,
    n_rows: usize,
}

impl Grid {
    pub fn new(origin: PlanarPoint, cell_size: f64, n_cols: usize, n_rows: usize) -> Result<Self> {
        if !origin.is_finite() {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(Error::InvalidGrid(format!("empty grid {n_cols}x{n_rows}")));
        }
        if n_cols.checked_mul(n_rows).is_none() {
            return Err(Error::InvalidGrid("cell count overflows".into()));
        }
        Ok(Grid {
            origin,
            cell_size,
            n_cols,
            n_rows,
        })
    }

    pub fn origin(&self) -> PlanarPoint {
        self.origin
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cells(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn width(&self) -> f64 {
        self.n_cols as f64 * self.cell_size
    }
    pub fn height(&self) -> f64 {
        self.n_rows as f64 * self.cell_size
    }

    pub fn cell_id(&self, col: usize, row: usize) -> CellId {
        row * self.n_cols + col
    }

    pub fn col_row(&self, cell: CellId) -> (usize, usize) {
        (cell % self.n_cols, cell / self.n_cols)
    }

    pub fn centroid(&self, cell: CellId) -> PlanarPoint {
        let (col, row) = self.col_row(cell);
        PlanarPoint::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Column index of `x`, possibly outside `0..n_cols`.
    fn axis_index(&self, v: f64, origin: f64) -> i64 {
        ((v - origin) / self.cell_size).floor() as i64
    }

    /// Cell containing `p`, or `None` when `p` lies outside the window.
    pub fn locate(&self, p: PlanarPoint) -> Option<CellId> {
        if !p.is_finite() {
            return None;
        }
        let col = self.axis_index(p.x, self.origin.x);
        let row = self.axis_index(p.y, self.origin.y);
        if col < 0 || row < 0 || col >= self.n_cols as i64 || row >= self.n_rows as i64 {
            return None;
        }
        Some(self.cell_id(col as usize, row as usize))
    }

    /// All cells whose centroid lies within `r` of `p`, sorted by cell id,
    /// with exact Euclidean centroid distances.
    ///
    /// Only the block of columns/rows that can intersect the disc is scanned.
    pub fn radius_query(&self, p: PlanarPoint, r: f64) -> Vec<(CellId, f64)> {
        let mut out = Vec::new();
        if !(r >= 0.0) || !p.is_finite() {
            return out;
        }
        // centroid of column c is at origin + (c + 0.5) * size
        let lo = |v: f64, o: f64| (((v - r - o) / self.cell_size) - 0.5).floor() as i64;
        let hi = |v: f64, o: f64| (((v + r - o) / self.cell_size) - 0.5).ceil() as i64;
        let c0 = lo(p.x, self.origin.x).max(0);
        let c1 = hi(p.x, self.origin.x).min(self.n_cols as i64 - 1);
        let r0 = lo(p.y, self.origin.y).max(0);
        let r1 = hi(p.y, self.origin.y).min(self.n_rows as i64 - 1);
        if c0 > c1 || r0 > r1 {
            return out;
        }
        for row in r0..=r1 {
            for col in c0..=c1 {
                let id = self.cell_id(col as usize, row as usize);
                let d = self.centroid(id).distance(&p);
                if d <= r {
                    out.push((id, d));
                }
            }
        }
        out
    }
}

/// Uniform bucket index over a fixed set of points, for radius queries.
///
/// Query results are indices into the original point slice in ascending
/// order, so callers can sum in a fixed order.
#[derive(Debug, Clone)]
pub struct PointIndex {
    min: PlanarPoint,
    bucket: f64,
    n_cols: usize,
    n_rows: usize,
    // CSR layout: points of bucket b are entries[starts[b]..starts[b + 1]]
    starts: Vec<usize>,
    entries: Vec<usize>,
    points: Vec<PlanarPoint>,
}

impl PointIndex {
    /// `bucket_size` is typically the query radius.
    pub fn new(points: &[PlanarPoint], bucket_size: f64) -> Result<Self> {
        if !(bucket_size.is_finite() && bucket_size > 0.0) {
            return Err(Error::InvalidArgument(format!("bucket size {bucket_size}")));
        }
        if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidCoordinate(format!(
                "point #{bad} is not finite"
            )));
        }
        let (mut min, mut max) = (PlanarPoint::new(0.0, 0.0), PlanarPoint::new(0.0, 0.0));
        if let Some(first) = points.first() {
            min = *first;
            max = *first;
            for p in points {
                min.x = min.x.min(p.x);
                min.y = min.y.min(p.y);
                max.x = max.x.max(p.x);
                max.y = max.y.max(p.y);
            }
        }
        let n_cols = (((max.x - min.x) / bucket_size).floor() as usize + 1).max(1);
        let n_rows = (((max.y - min.y) / bucket_size).floor() as usize + 1).max(1);
        let mut counts = vec![0usize; n_cols * n_rows + 1];
        let bucket_of = |p: &PlanarPoint| {
            let c = (((p.x - min.x) / bucket_size).floor() as usize).min(n_cols - 1);
            let r = (((p.y - min.y) / bucket_size).floor() as usize).min(n_rows - 1);
            r * n_cols + c
        };
        for p in points {
            counts[bucket_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut entries = vec![0usize; points.len()];
        for (i, p) in points.iter().enumerate() {
            let b = bucket_of(p);
            entries[fill[b]] = i;
            fill[b] += 1;
        }
        Ok(PointIndex {
            min,
            bucket: bucket_size,
            n_cols,
            n_rows,
            starts,
            entries,
            points: points.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of points within distance `r` of `q` (inclusive), ascending.
    pub fn within(&self, q: PlanarPoint, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_into(q, r, &mut out);
        out
    }

    pub fn within_into(&self, q: PlanarPoint, r: f64, out: &mut Vec<usize>) {
        out.clear();
        if self.points.is_empty() || !(r >= 0.0) {
            return;
        }
        let span = |v: f64, m: f64, n: usize| {
            let lo = ((v - r - m) / self.bucket).floor();
            let hi = ((v + r - m) / self.bucket).floor();
            if hi < 0.0 || lo > (n - 1) as f64 {
                None
            } else {
                Some((lo.max(0.0) as usize, (hi as usize).min(n - 1)))
            }
        };
        let (Some((c0, c1)), Some((r0, r1))) = (
            span(q.x, self.min.x, self.n_cols),
            span(q.y, self.min.y, self.n_rows),
        ) else {
            return;
        };
        for row in r0..=r1 {
            for col in c0..=c1 {
                let b = row * self.n_cols + col;
                for &i in &self.entries[self.starts[b]..self.starts[b + 1]] {
                    if self.points[i].distance(&q) <= r {
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// A polygon with an exterior ring and optional holes. Rings are stored open
/// (the closing vertex is not repeated).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    rings: Vec<Vec<PlanarPoint>>,
    bbox: (PlanarPoint, PlanarPoint),
}

impl Polygon {
    pub fn new(exterior: Vec<PlanarPoint>) -> Result<Self> {
        Self::with_holes(exterior, Vec::new())
    }

    pub fn with_holes(exterior: Vec<PlanarPoint>, holes: Vec<Vec<PlanarPoint>>) -> Result<Self> {
        let mut rings = Vec::with_capacity(1 + holes.len());
        for ring in std::iter::once(exterior).chain(holes) {
            rings.push(normalize_ring(ring)?);
        }
        for ring in &rings {
            if let Some((a, b)) = first_self_intersection(ring) {
                return Err(Error::InvalidPolygon(format!(
                    "ring edges {a} and {b} intersect"
                )));
            }
        }
        let mut lo = rings[0][0];
        let mut hi = rings[0][0];
        for p in &rings[0] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        Ok(Polygon {
            rings,
            bbox: (lo, hi),
        })
    }

    pub fn exterior(&self) -> &[PlanarPoint] {
        &self.rings[0]
    }

    pub fn rings(&self) -> &[Vec<PlanarPoint>] {
        &self.rings
    }

    pub fn bbox(&self) -> (PlanarPoint, PlanarPoint) {
        self.bbox
    }

    /// Even-odd rule over all rings.
    pub fn contains(&self, p: PlanarPoint) -> bool {
        let (lo, hi) = self.bbox;
        if p.x < lo.x || p.x > hi.x || p.y < lo.y || p.y > hi.y {
            return false;
        }
        let mut inside = false;
        for ring in &self.rings {
            let n = ring.len();
            let mut j = n - 1;
            for i in 0..n {
                let (a, b) = (ring[i], ring[j]);
                if (a.y > p.y) != (b.y > p.y) {
                    let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                    if p.x < x_cross {
                        inside = !inside;
                    }
                }
                j = i;
            }
        }
        inside
    }

    /// Vertex average of the exterior ring.
    pub fn vertex_centroid(&self) -> PlanarPoint {
        let ext = self.exterior();
        let n = ext.len() as f64;
        PlanarPoint::new(
            ext.iter().map(|p| p.x).sum::<f64>() / n,
            ext.iter().map(|p| p.y).sum::<f64>() / n,
        )
    }
}

fn normalize_ring(mut ring: Vec<PlanarPoint>) -> Result<Vec<PlanarPoint>> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidPolygon("non-finite vertex".into()));
    }
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    if ring.len() < 3 {
        return Err(Error::InvalidPolygon(format!(
            "ring has {} distinct vertices",
            ring.len()
        )));
    }
    Ok(ring)
}

fn orient(a: PlanarPoint, b: PlanarPoint, c: PlanarPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: PlanarPoint, b: PlanarPoint, p: PlanarPoint) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: PlanarPoint, p2: PlanarPoint, q1: PlanarPoint, q2: PlanarPoint) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// First pair of non-adjacent ring edges that touch, if any.
fn first_self_intersection(ring: &[PlanarPoint]) -> Option<(usize, usize)> {
    let n = ring.len();
    if n < 4 {
        return None;
    }
    let edge = |i: usize| (ring[i], ring[(i + 1) % n]);
    // sweep edges by min x so that only overlapping x-ranges are compared
    let mut order: Vec<usize> = (0..n).collect();
    let min_x = |i: usize| {
        let (a, b) = edge(i);
        a.x.min(b.x)
    };
    order.sort_by(|&a, &b| min_x(a).total_cmp(&min_x(b)));
    for (k, &i) in order.iter().enumerate() {
        let (a, b) = edge(i);
        let max_xi = a.x.max(b.x);
        for &j in &order[k + 1..] {
            if min_x(j) > max_xi {
                break;
            }
            let adjacent = (i + 1) % n == j || (j + 1) % n == i;
            if adjacent {
                continue;
            }
            let (c, d) = edge(j);
            if segments_intersect(a, b, c, d) {
                return Some((i.min(j), i.max(j)));
            }
        }
    }
    None
}

/// A region made of one or more polygons.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub polygons: Vec<Polygon>,
}

impl Region {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        Region { polygons }
    }

    pub fn contains(&self, p: PlanarPoint) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }
}

impl From<Polygon> for Region {
    fn from(p: Polygon) -> Self {
        Region { polygons: vec![p] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionLookup {
    InsideStudyArea,
    District(String),
    Unmapped,
}

/// Study area plus districts outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionIndex {
    study_area: Region,
    districts: BTreeMap<String, Region>,
}

impl RegionIndex {
    pub fn new(study_area: Region, districts: BTreeMap<String, Region>) -> Result<Self> {
        if study_area.polygons.is_empty() {
            return Err(Error::InvalidPolygon("study area has no polygon".into()));
        }
        Ok(RegionIndex {
            study_area,
            districts,
        })
    }

    pub fn study_area(&self) -> &Region {
        &self.study_area
    }

    pub fn districts(&self) -> &BTreeMap<String, Region> {
        &self.districts
    }

    /// Study area first, then districts in ascending id order.
    pub fn region_of(&self, p: PlanarPoint) -> RegionLookup {
        if !p.is_finite() {
            return RegionLookup::Unmapped;
        }
        if self.study_area.contains(p) {
            return RegionLookup::InsideStudyArea;
        }
        for (id, region) in &self.districts {
            if region.contains(p) {
                return RegionLookup::District(id.clone());
            }
        }
        RegionLookup::Unmapped
    }

    /// Parse a GeoJSON `FeatureCollection`.
    ///
    /// The study area is the feature whose `kind` property is `"study_area"`
    /// (several such features are merged); every other feature must carry a
    /// `district_id` (string or number). Geometries are `Polygon` or
    /// `MultiPolygon` in lon/lat and are projected with `proj`.
    pub fn from_geojson(text: &str, proj: &Projection) -> Result<Self> {
        let root: Value =
            serde_json::from_str(text).map_err(|e| Error::RegionFile(e.to_string()))?;
        let features = root
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| {
                Error::RegionFile("expected a FeatureCollection with `features`".into())
            })?;
        let mut study = Vec::new();
        let mut districts: BTreeMap<String, Region> = BTreeMap::new();
        for (i, feature) in features.iter().enumerate() {
            let props = feature.get("properties").cloned().unwrap_or(Value::Null);
            let geometry = feature
                .get("geometry")
                .ok_or_else(|| Error::RegionFile(format!("feature #{i} has no geometry")))?;
            let polys = parse_geometry(geometry, proj)
                .map_err(|e| Error::RegionFile(format!("feature #{i}: {e}")))?;
            let is_study = props.get("kind").and_then(Value::as_str) == Some("study_area");
            if is_study {
                study.extend(polys);
                continue;
            }
            let id = match props.get("district_id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => {
                    return Err(Error::RegionFile(format!(
                        "feature #{i} lacks a district_id property"
                    )))
                }
            };
            districts
                .entry(id)
                .or_insert_with(|| Region::new(Vec::new()))
                .polygons
                .extend(polys);
        }
        if study.is_empty() {
            return Err(Error::RegionFile(
                "no feature with kind = \"study_area\"".into(),
            ));
        }
        RegionIndex::new(Region::new(study), districts)
    }

    /// Serialize back to GeoJSON (lon/lat via `proj`).
    pub fn to_geojson(&self, proj: &Projection) -> Value {
        let poly_json = |poly: &Polygon| {
            Value::Array(
                poly.rings()
                    .iter()
                    .map(|ring| {
                        let mut coords: Vec<Value> = ring
                            .iter()
                            .map(|p| {
                                let (lon, lat) = proj.unproject(*p);
                                serde_json::json!([lon, lat])
                            })
                            .collect();
                        coords.push(coords[0].clone());
                        Value::Array(coords)
                    })
                    .collect(),
            )
        };
        let region_geom = |region: &Region| {
            serde_json::json!({
                "type": "MultiPolygon",
                "coordinates": region.polygons.iter().map(poly_json).collect::<Vec<_>>(),
            })
        };
        let mut features = vec![serde_json::json!({
            "type": "Feature",
            "properties": { "kind": "study_area" },
            "geometry": region_geom(&self.study_area),
        })];
        for (id, region) in &self.districts {
            features.push(serde_json::json!({
                "type": "Feature",
                "properties": { "district_id": id },
                "geometry": region_geom(region),
            }));
        }
        serde_json::json!({ "type": "FeatureCollection", "features": features })
    }
}

fn parse_ring(v: &Value, proj: &Projection) -> Result<Vec<PlanarPoint>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::RegionFile("ring is not an array".into()))?;
    arr.iter()
        .map(|pos| {
            let pair = pos.as_array().filter(|a| a.len() >= 2);
            let (lon, lat) = match pair.map(|a| (a[0].as_f64(), a[1].as_f64())) {
                Some((Some(lon), Some(lat))) => (lon, lat),
                _ => return Err(Error::RegionFile("position is not [lon, lat]".into())),
            };
            proj.project(lon, lat)
        })
        .collect()
}

fn parse_polygon(v: &Value, proj: &Projection) -> Result<Polygon> {
    let rings = v
        .as_array()
        .ok_or_else(|| Error::RegionFile("polygon is not an array of rings".into()))?;
    let mut parsed = rings
        .iter()
        .map(|r| parse_ring(r, proj))
        .collect::<Result<Vec<_>>>()?;
    if parsed.is_empty() {
        return Err(Error::RegionFile("polygon without rings".into()));
    }
    let exterior = parsed.remove(0);
    Polygon::with_holes(exterior, parsed)
}

fn parse_geometry(geom: &Value, proj: &Projection) -> Result<Vec<Polygon>> {
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| Error::RegionFile("geometry without coordinates".into()))?;
    match geom.get("type").and_then(Value::as_str) {
        Some("Polygon") => Ok(vec![parse_polygon(coords, proj)?]),
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| Error::RegionFile("MultiPolygon coordinates must be an array".into()))?
            .iter()
            .map(|p| parse_polygon(p, proj))
            .collect(),
        other => Err(Error::RegionFile(format!(
            "unsupported geometry type {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid(n_cols: usize, n_rows: usize) -> Grid {
        Grid::new(PlanarPoint::new(0.0, 0.0), 100.0, n_cols, n_rows).unwrap()
    }

    #[test]
    fn projection_examples() {
        let proj = Projection::at_origin(32.2, -28.4).unwrap();
        let p = proj.project(32.2, -28.4).unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));

        let y = proj.project(32.2, -28.4 + 0.0009).unwrap().y;
        assert_abs_diff_eq!(
            y,
            6_371_000.0 * 0.0009 * std::f64::consts::PI / 180.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(y, 100.07, epsilon = 1e-2);

        let proj60 = Projection::new(10.0, 60.0, 60.0).unwrap();
        let x = proj60.project(10.001, 60.0).unwrap().x;
        assert_abs_diff_eq!(x, 55.60, epsilon = 5e-3);
    }

    #[test]
    fn projection_rejects_non_finite() {
        let proj = Projection::at_origin(0.0, 0.0).unwrap();
        assert!(matches!(
            proj.project(f64::NAN, 0.0),
            Err(Error::InvalidCoordinate(_))
        ));
        assert!(matches!(
            proj.project(0.0, f64::INFINITY),
            Err(Error::InvalidCoordinate(_))
        ));
        assert!(Projection::new(0.0, 0.0, 90.0).is_err());
    }

    #[test]
    fn unproject_inverts_project() {
        let proj = Projection::new(32.1, -28.3, -28.4).unwrap();
        let p = proj.project(32.35, -28.51).unwrap();
        let (lon, lat) = proj.unproject(p);
        assert_abs_diff_eq!(lon, 32.35, epsilon = 1e-10);
        assert_abs_diff_eq!(lat, -28.51, epsilon = 1e-10);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::new(PlanarPoint::new(0.0, 0.0), 0.0, 1, 1).is_err());
        assert!(Grid::new(PlanarPoint::new(0.0, 0.0), 10.0, 0, 1).is_err());
        assert!(Grid::new(PlanarPoint::new(f64::NAN, 0.0), 10.0, 1, 1).is_err());
    }

    #[test]
    fn locate_examples() {
        let g = grid(3, 2);
        assert_eq!(g.locate(PlanarPoint::new(0.0, 0.0)), Some(0));
        assert_eq!(g.locate(PlanarPoint::new(100.0, 50.0)), Some(1));
        assert_eq!(g.locate(PlanarPoint::new(50.0, 100.0)), Some(3));
        assert_eq!(g.locate(PlanarPoint::new(-0.1, 50.0)), None);
        assert_eq!(g.locate(PlanarPoint::new(300.0, 50.0)), None);
        assert_eq!(g.locate(PlanarPoint::new(50.0, 200.0)), None);
    }

    #[test]
    fn locate_inverts_centroid() {
        let g = Grid::new(PlanarPoint::new(-1234.5, 987.25), 100.0, 37, 23).unwrap();
        for id in 0..g.n_cells() {
            assert_eq!(g.locate(g.centroid(id)), Some(id));
        }
    }

    #[test]
    fn radius_query_examples() {
        let g = grid(5, 5);
        let c = g.centroid(12);
        assert_eq!(g.radius_query(c, 40.0), vec![(12, 0.0)]);

        let ids: Vec<_> = g
            .radius_query(c, 150.0)
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ids, vec![6, 7, 8, 11, 12, 13, 16, 17, 18]);
        let ids: Vec<_> = g
            .radius_query(c, 120.0)
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ids, vec![7, 11, 12, 13, 17]);

        assert_eq!(g.radius_query(c, 1e6).len(), 25);
    }

    fn brute_radius(g: &Grid, p: PlanarPoint, r: f64) -> Vec<(CellId, f64)> {
        (0..g.n_cells())
            .filter_map(|id| {
                let d = g.centroid(id).distance(&p);
                (d <= r).then_some((id, d))
            })
            .collect()
    }

    #[test]
    fn radius_query_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let n_cols = rng.gen_range(1..=200);
            let n_rows = rng.gen_range(1..=200);
            let g = Grid::new(
                PlanarPoint::new(rng.gen_range(-500.0..500.0), 0.0),
                100.0,
                n_cols,
                n_rows,
            )
            .unwrap();
            let p = PlanarPoint::new(
                g.origin().x + rng.gen_range(-2000.0..g.width() + 2000.0),
                rng.gen_range(-2000.0..g.height() + 2000.0),
            );
            let r = rng.gen_range(1.0..3500.0);
            assert_eq!(g.radius_query(p, r), brute_radius(&g, p, r));
        }
        // exact-hit distances on the lattice
        let g = grid(50, 50);
        assert_eq!(
            g.radius_query(g.centroid(1275), 300.0),
            brute_radius(&g, g.centroid(1275), 300.0)
        );
    }

    #[test]
    fn locate_partitions_window() {
        let g = Grid::new(PlanarPoint::new(10.0, -20.0), 100.0, 40, 30).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let p = PlanarPoint::new(
                g.origin().x + rng.gen_range(0.0..g.width()),
                g.origin().y + rng.gen_range(0.0..g.height()),
            );
            let id = g.locate(p).expect("inside window");
            let c = g.centroid(id);
            let half = g.cell_size() / 2.0;
            // exactly one cell: the half-open box around this centroid
            assert!(p.x >= c.x - half && p.x < c.x + half && p.y >= c.y - half && p.y < c.y + half);
        }
    }

    #[test]
    fn point_index_matches_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..800)
            .map(|_| PlanarPoint::new(rng.gen_range(0.0..5000.0), rng.gen_range(-100.0..4000.0)))
            .collect();
        let idx = PointIndex::new(&pts, 700.0).unwrap();
        for _ in 0..200 {
            let q = PlanarPoint::new(
                rng.gen_range(-1000.0..6000.0),
                rng.gen_range(-1000.0..5000.0),
            );
            let r = rng.gen_range(0.0..1500.0);
            let expect: Vec<usize> = (0..pts.len())
                .filter(|&i| pts[i].distance(&q) <= r)
                .collect();
            assert_eq!(idx.within(q, r), expect);
        }
        assert!(PointIndex::new(&[], 10.0)
            .unwrap()
            .within(PlanarPoint::new(0.0, 0.0), 5.0)
            .is_empty());
    }

    fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        Polygon::new(vec![
            PlanarPoint::new(x0, y0),
            PlanarPoint::new(x0 + side, y0),
            PlanarPoint::new(x0 + side, y0 + side),
            PlanarPoint::new(x0, y0 + side),
        ])
        .unwrap()
    }

    fn sample_index() -> RegionIndex {
        let mut districts = BTreeMap::new();
        districts.insert("D2".to_string(), Region::from(square(20.0, 0.0, 10.0)));
        districts.insert("D1".to_string(), Region::from(square(10.0, 0.0, 10.0)));
        RegionIndex::new(Region::from(square(0.0, 0.0, 10.0)), districts).unwrap()
    }

    #[test]
    fn region_of_examples() {
        let idx = sample_index();
        assert_eq!(
            idx.region_of(PlanarPoint::new(5.0, 5.0)),
            RegionLookup::InsideStudyArea
        );
        assert_eq!(
            idx.region_of(PlanarPoint::new(25.0, 5.0)),
            RegionLookup::District("D2".into())
        );
        assert_eq!(
            idx.region_of(PlanarPoint::new(15.0, 5.0)),
            RegionLookup::District("D1".into())
        );
        assert_eq!(
            idx.region_of(PlanarPoint::new(50.0, 5.0)),
            RegionLookup::Unmapped
        );
    }

    #[test]
    fn overlapping_districts_resolve_to_lowest_id() {
        let mut districts = BTreeMap::new();
        districts.insert("b".to_string(), Region::from(square(10.0, 0.0, 10.0)));
        districts.insert("a".to_string(), Region::from(square(15.0, 0.0, 10.0)));
        let idx = RegionIndex::new(Region::from(square(0.0, 0.0, 10.0)), districts).unwrap();
        assert_eq!(
            idx.region_of(PlanarPoint::new(17.0, 5.0)),
            RegionLookup::District("a".into())
        );
        assert_eq!(
            idx.region_of(PlanarPoint::new(12.0, 5.0)),
            RegionLookup::District("b".into())
        );
    }

    #[test]
    fn polygon_holes_use_even_odd() {
        let outer = vec![
            PlanarPoint::new(0.0, 0.0),
            PlanarPoint::new(10.0, 0.0),
            PlanarPoint::new(10.0, 10.0),
            PlanarPoint::new(0.0, 10.0),
        ];
        let hole = vec![
            PlanarPoint::new(4.0, 4.0),
            PlanarPoint::new(6.0, 4.0),
            PlanarPoint::new(6.0, 6.0),
            PlanarPoint::new(4.0, 6.0),
        ];
        let poly = Polygon::with_holes(outer, vec![hole]).unwrap();
        assert!(poly.contains(PlanarPoint::new(2.0, 2.0)));
        assert!(!poly.contains(PlanarPoint::new(5.0, 5.0)));
    }

    #[test]
    fn self_intersecting_polygon_rejected() {
        let bowtie = vec![
            PlanarPoint::new(0.0, 0.0),
            PlanarPoint::new(10.0, 10.0),
            PlanarPoint::new(10.0, 0.0),
            PlanarPoint::new(0.0, 10.0),
        ];
        assert!(matches!(
            Polygon::new(bowtie),
            Err(Error::InvalidPolygon(_))
        ));
        assert!(
            Polygon::new(vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(1.0, 0.0)]).is_err()
        );
    }

    #[test]
    fn geojson_round_trip() {
        let proj = Projection::at_origin(32.0, -28.0).unwrap();
        let idx = sample_index();
        let text = idx.to_geojson(&proj).to_string();
        let back = RegionIndex::from_geojson(&text, &proj).unwrap();
        assert_eq!(back.districts().len(), 2);
        for p in [(5.0, 5.0), (15.0, 2.0), (25.0, 9.0), (40.0, 1.0)] {
            let p = PlanarPoint::new(p.0, p.1);
            assert_eq!(back.region_of(p), idx.region_of(p));
        }
    }

    #[test]
    fn geojson_errors() {
        let proj = Projection::at_origin(0.0, 0.0).unwrap();
        assert!(RegionIndex::from_geojson("{}", &proj).is_err());
        let no_study = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"district_id":"X"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}]}"#;
        assert!(RegionIndex::from_geojson(no_study, &proj).is_err());
        let numeric = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"kind":"study_area"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[0.01,0],[0.01,0.01],[0,0]]]}},
            {"type":"Feature","properties":{"district_id":7},
             "geometry":{"type":"Polygon","coordinates":[[[1,0],[1.01,0],[1.01,0.01],[1,0]]]}}]}"#;
        let idx = RegionIndex::from_geojson(numeric, &proj).unwrap();
        assert!(idx.districts().contains_key("7"));
    }

    proptest! {
        #[test]
        fn region_of_is_total_and_deterministic(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let idx = sample_index();
            let p = PlanarPoint::new(x, y);
            prop_assert_eq!(idx.region_of(p), idx.region_of(p));
        }
    }
}
