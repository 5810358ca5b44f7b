//! Positions, great-circle distance, geohash cells and region filters.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

const GEOHASH_ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";
pub const MAX_GEOHASH_PRECISION: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("the not-found sentinel (-180, -180) is not a position")]
    Sentinel,
    #[error("coordinates out of range: lat {lat}, lon {lon}")]
    OutOfRange { lat: f64, lon: f64 },
    #[error("geohash precision must be 1..={MAX_GEOHASH_PRECISION}, got {0}")]
    Precision(usize),
    #[error("invalid geohash character {0:?}")]
    GeohashChar(char),
    #[error("invalid region: {0}")]
    Region(String),
}

/// A latitude/longitude pair in degrees. May hold the WPS not-found sentinel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct GeoPosition {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPosition {
    /// What the WPS reports for a BSSID it has no record of.
    pub const NOT_FOUND: GeoPosition = GeoPosition { lat: -180.0, lon: -180.0 };
    pub const NULL_ISLAND: GeoPosition = GeoPosition { lat: 0.0, lon: 0.0 };

    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = GeoPosition { lat, lon };
        if p.is_sentinel() {
            return Err(GeoError::Sentinel);
        }
        if !p.is_valid() {
            return Err(GeoError::OutOfRange { lat, lon });
        }
        Ok(p)
    }

    pub fn is_sentinel(&self) -> bool {
        self.lat == -180.0 && self.lon == -180.0
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    /// Either a valid position or exactly the sentinel.
    pub fn is_wire_valid(&self) -> bool {
        self.is_valid() || self.is_sentinel()
    }

    fn checked(&self) -> Result<Self, GeoError> {
        if self.is_sentinel() {
            Err(GeoError::Sentinel)
        } else if !self.is_valid() {
            Err(GeoError::OutOfRange { lat: self.lat, lon: self.lon })
        } else {
            Ok(*self)
        }
    }

    /// Rounds both coordinates to 8 decimal places, the precision the WPS reports.
    pub fn rounded(&self) -> Self {
        GeoPosition { lat: round8(self.lat), lon: round8(self.lon) }
    }

    /// The point `distance_km` away along the initial bearing `bearing_deg`.
    pub fn destination(&self, bearing_deg: f64, distance_km: f64) -> Self {
        let delta = distance_km / EARTH_RADIUS_KM;
        let theta = bearing_deg.to_radians();
        let (phi1, lambda1) = (self.lat.to_radians(), self.lon.to_radians());
        let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
        let lambda2 = lambda1
            + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
        let lon = (lambda2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
        GeoPosition { lat: phi2.to_degrees().clamp(-90.0, 90.0), lon }
    }

    /// Unit vector on the sphere, used by the spatial index.
    pub(crate) fn to_unit_vector(self) -> [f64; 3] {
        let (phi, lambda) = (self.lat.to_radians(), self.lon.to_radians());
        [phi.cos() * lambda.cos(), phi.cos() * lambda.sin(), phi.sin()]
    }
}

impl fmt::Display for GeoPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.8},{:.8}", self.lat, self.lon)
    }
}

/// Rounds to 8 decimals. Dividing the exact integer by 1e8 yields the double
/// nearest the decimal value, so the result is stable under repeated rounding
/// and under a `{:.8}` format/parse cycle.
pub fn round8(v: f64) -> f64 {
    (v * 1e8).round() / 1e8
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoPosition, b: GeoPosition) -> Result<f64, GeoError> {
    let (a, b) = (a.checked()?, b.checked()?);
    Ok(haversine_unchecked(a, b))
}

pub(crate) fn haversine_unchecked(a: GeoPosition, b: GeoPosition) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Standard base-32 geohash.
pub fn geohash(pos: GeoPosition, precision: usize) -> Result<String, GeoError> {
    let pos = pos.checked()?;
    if !(1..=MAX_GEOHASH_PRECISION).contains(&precision) {
        return Err(GeoError::Precision(precision));
    }
    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let mut out = String::with_capacity(precision);
    let mut even = true;
    while out.len() < precision {
        let mut idx = 0usize;
        for _ in 0..5 {
            let (lo, hi, v) = if even {
                (&mut lon_lo, &mut lon_hi, pos.lon)
            } else {
                (&mut lat_lo, &mut lat_hi, pos.lat)
            };
            let mid = (*lo + *hi) / 2.0;
            idx <<= 1;
            if v >= mid {
                idx |= 1;
                *lo = mid;
            } else {
                *hi = mid;
            }
            even = !even;
        }
        out.push(GEOHASH_ALPHABET[idx] as char);
    }
    Ok(out)
}

/// The cell a geohash names, as `(min, max)` corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeohashCell {
    pub min: GeoPosition,
    pub max: GeoPosition,
}

impl GeohashCell {
    pub fn center(&self) -> GeoPosition {
        GeoPosition {
            lat: (self.min.lat + self.max.lat) / 2.0,
            lon: (self.min.lon + self.max.lon) / 2.0,
        }
    }

    pub fn contains(&self, p: GeoPosition) -> bool {
        (self.min.lat..=self.max.lat).contains(&p.lat) && (self.min.lon..=self.max.lon).contains(&p.lon)
    }
}

pub fn geohash_decode(hash: &str) -> Result<GeohashCell, GeoError> {
    if !(1..=MAX_GEOHASH_PRECISION).contains(&hash.len()) {
        return Err(GeoError::Precision(hash.len()));
    }
    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let mut even = true;
    for ch in hash.chars() {
        let idx = GEOHASH_ALPHABET
            .iter()
            .position(|&c| c as char == ch)
            .ok_or(GeoError::GeohashChar(ch))?;
        for bit in (0..5).rev() {
            let (lo, hi) = if even { (&mut lon_lo, &mut lon_hi) } else { (&mut lat_lo, &mut lat_hi) };
            let mid = (*lo + *hi) / 2.0;
            if idx >> bit & 1 == 1 {
                *lo = mid;
            } else {
                *hi = mid;
            }
            even = !even;
        }
    }
    Ok(GeohashCell {
        min: GeoPosition { lat: lat_lo, lon: lon_lo },
        max: GeoPosition { lat: lat_hi, lon: lon_hi },
    })
}

/// Counts positions per geohash cell. Keys iterate in lexicographic order.
pub fn bin_counts<'a, I>(positions: I, precision: usize) -> Result<BTreeMap<String, usize>, GeoError>
where
    I: IntoIterator<Item = &'a GeoPosition>,
{
    let mut bins = BTreeMap::new();
    for p in positions {
        *bins.entry(geohash(*p, precision)?).or_insert(0) += 1;
    }
    Ok(bins)
}

/// A geographic filter: an inclusive bounding box or a simple polygon.
///
/// Region files are JSON in one of these shapes (polygon coordinates are
/// `[lon, lat]` pairs as in GeoJSON; a closing vertex equal to the first is
/// optional):
///
/// ```json
/// {"type": "box", "min_lat": 44.0, "max_lat": 46.5, "min_lon": 32.5, "max_lon": 36.7}
/// {"type": "Polygon", "coordinates": [[[37.0, 47.0], [40.0, 47.0], [40.0, 49.5], [37.0, 47.0]]]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionFile", into = "RegionFile")]
pub enum GeoRegion {
    Box { min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64 },
    Polygon { vertices: Vec<GeoPosition> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type")]
enum RegionFile {
    #[serde(rename = "box")]
    Box { min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64 },
    Polygon { coordinates: Vec<Vec<[f64; 2]>> },
}

impl TryFrom<RegionFile> for GeoRegion {
    type Error = GeoError;

    fn try_from(file: RegionFile) -> Result<Self, GeoError> {
        match file {
            RegionFile::Box { min_lat, max_lat, min_lon, max_lon } => {
                GeoRegion::bbox(min_lat, max_lat, min_lon, max_lon)
            }
            RegionFile::Polygon { coordinates } => {
                let ring = coordinates
                    .into_iter()
                    .next()
                    .ok_or_else(|| GeoError::Region("polygon without rings".into()))?;
                GeoRegion::polygon(ring.into_iter().map(|[lon, lat]| GeoPosition { lat, lon }).collect())
            }
        }
    }
}

impl From<GeoRegion> for RegionFile {
    fn from(region: GeoRegion) -> Self {
        match region {
            GeoRegion::Box { min_lat, max_lat, min_lon, max_lon } => {
                RegionFile::Box { min_lat, max_lat, min_lon, max_lon }
            }
            GeoRegion::Polygon { mut vertices } => {
                vertices.push(vertices[0]);
                RegionFile::Polygon {
                    coordinates: vec![vertices.into_iter().map(|p| [p.lon, p.lat]).collect()],
                }
            }
        }
    }
}

impl GeoRegion {
    pub fn bbox(min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64) -> Result<Self, GeoError> {
        for (lat, lon) in [(min_lat, min_lon), (max_lat, max_lon)] {
            if !(GeoPosition { lat, lon }).is_valid() {
                return Err(GeoError::OutOfRange { lat, lon });
            }
        }
        if min_lat > max_lat || min_lon > max_lon {
            return Err(GeoError::Region(
                "box minimum exceeds maximum (split antimeridian boxes in two)".into(),
            ));
        }
        Ok(GeoRegion::Box { min_lat, max_lat, min_lon, max_lon })
    }

    pub fn polygon(mut vertices: Vec<GeoPosition>) -> Result<Self, GeoError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeoError::Region(format!("polygon needs 3 vertices, got {}", vertices.len())));
        }
        if let Some(bad) = vertices.iter().find(|p| !p.is_valid()) {
            return Err(GeoError::OutOfRange { lat: bad.lat, lon: bad.lon });
        }
        let n = vertices.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(GeoError::Region(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(GeoRegion::Polygon { vertices })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeoError::Region(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GeoError::Region(format!("{}: {e}", path.display())))
    }

    /// Inclusive membership; polygon edges and vertices count as inside.
    pub fn contains(&self, p: GeoPosition) -> bool {
        if !p.is_valid() {
            return false;
        }
        match self {
            GeoRegion::Box { min_lat, max_lat, min_lon, max_lon } => {
                (*min_lat..=*max_lat).contains(&p.lat) && (*min_lon..=*max_lon).contains(&p.lon)
            }
            GeoRegion::Polygon { vertices } => {
                let n = vertices.len();
                let mut inside = false;
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    if on_segment(a, b, p) {
                        return true;
                    }
                    if (a.lat > p.lat) != (b.lat > p.lat) {
                        let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                        if p.lon < x {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }
}

pub fn contains(region: &GeoRegion, pos: GeoPosition) -> bool {
    region.contains(pos)
}

fn cross(o: GeoPosition, a: GeoPosition, b: GeoPosition) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn on_segment(a: GeoPosition, b: GeoPosition, p: GeoPosition) -> bool {
    let scale = (b.lon - a.lon).abs().max((b.lat - a.lat).abs()).max(1.0);
    cross(a, b, p).abs() <= 1e-12 * scale
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn segments_intersect(a: GeoPosition, b: GeoPosition, c: GeoPosition, d: GeoPosition) -> bool {
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64) -> GeoPosition {
        GeoPosition { lat, lon }
    }

    #[test]
    fn haversine_reference_values() {
        assert_eq!(haversine_km(p(10.0, 20.0), p(10.0, 20.0)).unwrap(), 0.0);
        // One degree of arc and half a circumference, 2*pi*R/360 and pi*R.
        let one_degree = 2.0 * std::f64::consts::PI * EARTH_RADIUS_KM / 360.0;
        assert!((haversine_km(p(0.0, 0.0), p(0.0, 1.0)).unwrap() - one_degree).abs() < 1e-9);
        assert!((one_degree - 111.195).abs() < 0.001);
        let half = std::f64::consts::PI * EARTH_RADIUS_KM;
        assert!((haversine_km(p(0.0, 0.0), p(0.0, 180.0)).unwrap() - half).abs() < 1e-6);
        assert!((half - 20015.1).abs() < 0.1);
    }

    #[test]
    fn haversine_rejects_sentinel() {
        assert_eq!(haversine_km(GeoPosition::NOT_FOUND, p(0.0, 0.0)), Err(GeoError::Sentinel));
        assert!(GeoPosition::new(-180.0, -180.0).is_err());
        assert!(GeoPosition::new(91.0, 0.0).is_err());
    }

    #[test]
    fn geohash_known_vectors() {
        assert_eq!(geohash(p(57.64911, 10.40744), 4).unwrap(), "u4pr");
        assert_eq!(geohash(p(57.64911, 10.40744), 11).unwrap(), "u4pruydqqvj");
        assert_eq!(geohash(p(0.0, 0.0), 1).unwrap(), "s");
        assert_eq!(geohash(p(42.6, -5.6), 5).unwrap(), "ezs42");
        assert_eq!(geohash(p(0.0, 0.0), 0), Err(GeoError::Precision(0)));
        assert_eq!(geohash(p(0.0, 0.0), 13), Err(GeoError::Precision(13)));
        assert_eq!(geohash(GeoPosition::NOT_FOUND, 4), Err(GeoError::Sentinel));
    }

    #[test]
    fn box_and_polygon_membership() {
        let b = GeoRegion::bbox(0.0, 10.0, 0.0, 10.0).unwrap();
        assert!(b.contains(p(5.0, 5.0)));
        assert!(b.contains(p(10.0, 10.0)));
        assert!(!b.contains(p(10.1, 5.0)));
        assert!(GeoRegion::bbox(10.0, 0.0, 0.0, 1.0).is_err());

        let tri = GeoRegion::polygon(vec![p(0.0, 0.0), p(0.0, 10.0), p(10.0, 0.0)]).unwrap();
        assert!(!tri.contains(p(8.0, 8.0)));
        assert!(tri.contains(p(2.0, 2.0)));
        assert!(tri.contains(p(5.0, 5.0)), "hypotenuse counts as inside");
        assert!(tri.contains(p(0.0, 0.0)));
    }

    #[test]
    fn polygon_validation() {
        assert!(GeoRegion::polygon(vec![p(0.0, 0.0), p(1.0, 1.0)]).is_err());
        // bow tie
        let bow = vec![p(0.0, 0.0), p(1.0, 1.0), p(0.0, 1.0), p(1.0, 0.0)];
        assert!(GeoRegion::polygon(bow).is_err());
    }

    #[test]
    fn region_file_schema() {
        let b: GeoRegion =
            serde_json::from_str(r#"{"type":"box","min_lat":0,"max_lat":1,"min_lon":2,"max_lon":3}"#).unwrap();
        assert!(b.contains(p(0.5, 2.5)));
        let poly: GeoRegion = serde_json::from_str(
            r#"{"type":"Polygon","coordinates":[[[0,0],[10,0],[0,10],[0,0]]]}"#,
        )
        .unwrap();
        assert!(poly.contains(p(1.0, 1.0)));
        assert!(!poly.contains(p(8.0, 8.0)));
        let back: GeoRegion = serde_json::from_str(&serde_json::to_string(&poly).unwrap()).unwrap();
        assert_eq!(back, poly);
        assert!(serde_json::from_str::<GeoRegion>(r#"{"type":"box","min_lat":5,"max_lat":1,"min_lon":2,"max_lon":3}"#).is_err());
    }

    #[test]
    fn bins() {
        assert!(bin_counts([].iter(), 4).unwrap().is_empty());
        let pts = [p(1.0, 1.0); 3];
        let bins = bin_counts(pts.iter(), 4).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins.values().sum::<usize>(), 3);
        assert!(bin_counts([GeoPosition::NOT_FOUND].iter(), 4).is_err());
    }

    #[test]
    fn rounding_is_stable() {
        for v in [12.345678915, -0.000000005, 179.99999999, 57.64911] {
            let r = round8(v);
            assert_eq!(round8(r), r);
            assert_eq!(format!("{r:.8}").parse::<f64>().unwrap(), r);
        }
    }

    #[test]
    fn destination_distance() {
        let start = p(48.0, 37.5);
        for bearing in [0.0, 45.0, 170.0, 300.0] {
            let end = start.destination(bearing, 4.5);
            assert!((haversine_km(start, end).unwrap() - 4.5).abs() < 1e-9);
        }
    }

    fn pos() -> impl Strategy<Value = GeoPosition> {
        (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(lat, lon)| p(lat, lon))
    }

    proptest! {
        #[test]
        fn haversine_metric(a in pos(), b in pos(), c in pos()) {
            let ab = haversine_km(a, b).unwrap();
            let ba = haversine_km(b, a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!(ab >= 0.0);
            prop_assert!(haversine_km(a, a).unwrap() < 1e-9);
            let ac = haversine_km(a, c).unwrap();
            let cb = haversine_km(c, b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-6);
        }

        #[test]
        fn geohash_cell_contains_point(a in pos(), k in 1usize..=12) {
            let h = geohash(a, k).unwrap();
            prop_assert!(geohash_decode(&h).unwrap().contains(a));
            if k < 12 {
                let longer = geohash(a, k + 1).unwrap();
                prop_assert!(longer.starts_with(&h));
            }
        }

        #[test]
        fn bins_conserve_count(pts in proptest::collection::vec(pos(), 0..200)) {
            let bins = bin_counts(pts.iter(), 3).unwrap();
            prop_assert_eq!(bins.values().sum::<usize>(), pts.len());
        }

        #[test]
        fn rounding_round_trips_text(v in -180.0f64..180.0) {
            let r = round8(v);
            prop_assert_eq!(format!("{r:.8}").parse::<f64>().unwrap(), r);
        }
    }
}
