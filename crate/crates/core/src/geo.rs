//! Geodesic distances, polygon membership, and buffer-membership predicates.
//!
//! Distances are haversine on a sphere of radius [`EARTH_RADIUS_M`]. Buffer
//! membership around event locations is evaluated analytically (minimum
//! geodesic distance to any center <= radius) instead of materializing
//! dissolved circle polygons. All membership tests are boundary-inclusive.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// A longitude/latitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !lat.is_finite() || !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Invalid(format!(
                "invalid coordinates: lon {lon}, lat {lat}"
            )));
        }
        Ok(GeoPoint { lon, lat })
    }
}

/// Great-circle distance in meters between two points.
///
/// Symmetric, non-negative, and exactly zero for identical coordinates.
pub fn haversine_m(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let s = (dlat / 2.0).sin().powi(2) + lat_a.cos() * lat_b.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * s.sqrt().min(1.0).asin()
}

/// A polygon on the lon/lat plane: one exterior ring plus optional holes.
/// Rings are implicitly closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
}

fn validate_ring(ring: &[GeoPoint]) -> Result<()> {
    let mut distinct: Vec<(u64, u64)> = ring
        .iter()
        .map(|p| (p.lon.to_bits(), p.lat.to_bits()))
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Invalid(format!(
            "polygon ring needs at least 3 distinct vertices, got {}",
            distinct.len()
        )));
    }
    Ok(())
}

impl Polygon {
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self> {
        validate_ring(&exterior)?;
        for hole in &holes {
            validate_ring(hole)?;
        }
        Ok(Polygon { exterior, holes })
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    fn rings(&self) -> impl Iterator<Item = &[GeoPoint]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }
}

/// True if `p` lies exactly on the closed segment a-b (exact arithmetic, no
/// epsilon, so membership stays deterministic).
fn on_segment(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    if cross != 0.0 {
        return false;
    }
    p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn ray_crossings(p: &GeoPoint, ring: &[GeoPoint]) -> usize {
    let n = ring.len();
    let mut crossings = 0;
    for i in 0..n {
        let a = &ring[i];
        let b = &ring[(i + 1) % n];
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
            if p.lon < x {
                crossings += 1;
            }
        }
    }
    crossings
}

/// Even-odd membership test on the lon/lat plane. Hole interiors are
/// excluded; points on any ring boundary count as inside.
pub fn in_polygon(p: &GeoPoint, poly: &Polygon) -> bool {
    for ring in poly.rings() {
        let n = ring.len();
        for i in 0..n {
            if on_segment(p, &ring[i], &ring[(i + 1) % n]) {
                return true;
            }
        }
    }
    let crossings: usize = poly.rings().map(|r| ray_crossings(p, r)).sum();
    crossings % 2 == 1
}

/// A union of polygons (e.g. a GeoJSON MultiPolygon).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPolygon {
    polygons: Vec<Polygon>,
}

impl MultiPolygon {
    pub fn new(polygons: Vec<Polygon>) -> Result<Self> {
        if polygons.is_empty() {
            return Err(Error::Invalid("empty multipolygon".into()));
        }
        Ok(MultiPolygon { polygons })
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        self.polygons.iter().any(|poly| in_polygon(p, poly))
    }
}

impl From<Polygon> for MultiPolygon {
    fn from(poly: Polygon) -> Self {
        MultiPolygon {
            polygons: vec![poly],
        }
    }
}

/// Event-buffer membership: within `radius_m` of any center. Dissolution of
/// overlapping buffers is implicit in the min-distance rule.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferSet {
    centers: Vec<GeoPoint>,
    radius_m: f64,
}

impl BufferSet {
    pub fn new(centers: Vec<GeoPoint>, radius_m: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Invalid("buffer set needs at least one center".into()));
        }
        if !radius_m.is_finite() || radius_m <= 0.0 {
            return Err(Error::Invalid(format!("buffer radius must be > 0, got {radius_m}")));
        }
        Ok(BufferSet { centers, radius_m })
    }

    pub fn centers(&self) -> &[GeoPoint] {
        &self.centers
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }
}

/// True iff the minimum distance from `p` to any buffer center is <= radius
/// (boundary inclusive).
pub fn in_buffer(p: &GeoPoint, buf: &BufferSet) -> bool {
    buf.centers
        .iter()
        .any(|c| haversine_m(p, c) <= buf.radius_m)
}

/// Inside the region but outside every buffer.
pub fn region_minus_buffer(p: &GeoPoint, region: &Polygon, buf: &BufferSet) -> bool {
    in_polygon(p, region) && !in_buffer(p, buf)
}

/// A named region loaded from GeoJSON (one feature).
#[derive(Debug, Clone)]
pub struct NamedRegion {
    pub name: String,
    pub region: MultiPolygon,
}

fn ring_from_json(coords: &Value, path: &Path) -> Result<Vec<GeoPoint>> {
    let arr = coords
        .as_array()
        .ok_or_else(|| Error::Invalid(format!("{}: ring is not an array", path.display())))?;
    let mut ring = Vec::with_capacity(arr.len());
    for pos in arr {
        let xy = pos
            .as_array()
            .filter(|v| v.len() >= 2)
            .ok_or_else(|| Error::Invalid(format!("{}: position is not [lon, lat]", path.display())))?;
        let lon = xy[0].as_f64().ok_or_else(|| Error::Invalid(format!("{}: non-numeric coordinate", path.display())))?;
        let lat = xy[1].as_f64().ok_or_else(|| Error::Invalid(format!("{}: non-numeric coordinate", path.display())))?;
        ring.push(GeoPoint::new(lon, lat)?);
    }
    // GeoJSON rings repeat the first vertex; we treat rings as implicitly closed.
    if ring.len() >= 2 && ring.first() == ring.last() {
        ring.pop();
    }
    Ok(ring)
}

fn polygon_from_json(coords: &Value, path: &Path) -> Result<Polygon> {
    let rings = coords
        .as_array()
        .ok_or_else(|| Error::Invalid(format!("{}: polygon coordinates are not an array", path.display())))?;
    if rings.is_empty() {
        return Err(Error::Invalid(format!("{}: polygon has no rings", path.display())));
    }
    let exterior = ring_from_json(&rings[0], path)?;
    let holes = rings[1..]
        .iter()
        .map(|r| ring_from_json(r, path))
        .collect::<Result<Vec<_>>>()?;
    Polygon::new(exterior, holes)
}

fn geometry_from_json(geom: &Value, path: &Path) -> Result<MultiPolygon> {
    let gtype = geom
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Invalid(format!("{}: geometry without type", path.display())))?;
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| Error::Invalid(format!("{}: geometry without coordinates", path.display())))?;
    match gtype {
        "Polygon" => Ok(polygon_from_json(coords, path)?.into()),
        "MultiPolygon" => {
            let parts = coords
                .as_array()
                .ok_or_else(|| Error::Invalid(format!("{}: multipolygon coordinates are not an array", path.display())))?;
            let polygons = parts
                .iter()
                .map(|p| polygon_from_json(p, path))
                .collect::<Result<Vec<_>>>()?;
            MultiPolygon::new(polygons)
        }
        other => Err(Error::Invalid(format!(
            "{}: unsupported geometry type {other:?} (expected Polygon or MultiPolygon)",
            path.display()
        ))),
    }
}

fn feature_name(feature: &Value, index: usize) -> String {
    let props = feature.get("properties");
    for key in ["name", "NAME", "Name", "zone", "ZONE"] {
        if let Some(v) = props.and_then(|p| p.get(key)).and_then(Value::as_str) {
            return v.to_string();
        }
    }
    if let Some(id) = feature.get("id") {
        if let Some(s) = id.as_str() {
            return s.to_string();
        }
        if let Some(n) = id.as_i64() {
            return n.to_string();
        }
    }
    format!("feature-{index}")
}

/// Load named regions from a GeoJSON file. Accepts a FeatureCollection, a
/// single Feature, or a bare Polygon/MultiPolygon geometry (named after the
/// file stem).
pub fn load_zones(path: &Path) -> Result<Vec<NamedRegion>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("{}: invalid JSON: {e}", path.display())))?;
    let rtype = root.get("type").and_then(Value::as_str).unwrap_or("");
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "region".to_string());
    match rtype {
        "FeatureCollection" => {
            let features = root
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Invalid(format!("{}: FeatureCollection without features", path.display())))?;
            let mut zones = Vec::with_capacity(features.len());
            for (i, feature) in features.iter().enumerate() {
                let geom = feature
                    .get("geometry")
                    .ok_or_else(|| Error::Invalid(format!("{}: feature {i} without geometry", path.display())))?;
                zones.push(NamedRegion {
                    name: feature_name(feature, i),
                    region: geometry_from_json(geom, path)?,
                });
            }
            if zones.is_empty() {
                return Err(Error::Invalid(format!("{}: no features", path.display())));
            }
            Ok(zones)
        }
        "Feature" => {
            let geom = root
                .get("geometry")
                .ok_or_else(|| Error::Invalid(format!("{}: feature without geometry", path.display())))?;
            Ok(vec![NamedRegion {
                name: feature_name(&root, 0),
                region: geometry_from_json(geom, path)?,
            }])
        }
        "Polygon" | "MultiPolygon" => Ok(vec![NamedRegion {
            name: stem,
            region: geometry_from_json(&root, path)?,
        }]),
        other => Err(Error::Invalid(format!(
            "{}: unsupported GeoJSON root type {other:?}",
            path.display()
        ))),
    }
}

/// Union of every feature in a zones file, for use as the whole-region
/// boundary.
pub fn union_of_zones(zones: &[NamedRegion]) -> Result<MultiPolygon> {
    let polygons: Vec<Polygon> = zones
        .iter()
        .flat_map(|z| z.region.polygons().iter().cloned())
        .collect();
    MultiPolygon::new(polygons)
}
