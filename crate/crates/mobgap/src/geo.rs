//! Geographic primitives: WGS84 points, great-circle distance, a local
//! planar projection for grid math, and point-in-polygon tests.
//!
//! All distances are in statute miles. City-scale analyses never span more
//! than a few tens of miles, so a spherical Earth and a local projection are
//! well inside the tolerances of every downstream filter.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MI: f64 = 3958.8;

/// Feet per statute mile.
pub const FEET_PER_MILE: f64 = 5280.0;

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Builds a point without validating bounds. Use [`GeoPoint::checked`]
    /// for untrusted input.
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// Builds a point only if it lies within valid WGS84 bounds.
    pub fn checked(lat: f64, lon: f64) -> Option<Self> {
        if lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Some(Self { lat, lon })
        } else {
            None
        }
    }

    /// Great-circle (haversine) distance to `other`, in miles.
    pub fn haversine_mi(&self, other: &GeoPoint) -> f64 {
        let lat1 = self.lat.to_radians();
        let lat2 = other.lat.to_radians();
        let dlat = (other.lat - self.lat).to_radians();
        let dlon = (other.lon - self.lon).to_radians();
        let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_MI * a.sqrt().min(1.0).asin()
    }

    /// Distance to `other` in feet.
    pub fn distance_ft(&self, other: &GeoPoint) -> f64 {
        self.haversine_mi(other) * FEET_PER_MILE
    }
}

/// Azimuthal-equidistant projection centered on a reference point.
///
/// Distances from the center are exact great-circle distances; distances
/// between off-center points distort by O((d/R)^2), negligible at city scale.
/// Planar coordinates are in miles, x east, y north.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    center: GeoPoint,
    sin_lat0: f64,
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn new(center: GeoPoint) -> Self {
        let lat0 = center.lat.to_radians();
        Self { center, sin_lat0: lat0.sin(), cos_lat0: lat0.cos() }
    }

    pub fn center(&self) -> GeoPoint {
        self.center
    }

    /// Projects a point to planar (x, y) miles relative to the center.
    pub fn project(&self, p: &GeoPoint) -> (f64, f64) {
        let lat = p.lat.to_radians();
        let dlon = (p.lon - self.center.lon).to_radians();
        let cos_c = (self.sin_lat0 * lat.sin() + self.cos_lat0 * lat.cos() * dlon.cos()).clamp(-1.0, 1.0);
        let c = cos_c.acos();
        // c/sin(c) -> 1 as c -> 0
        let k = if c < 1e-12 { 1.0 } else { c / c.sin() };
        let x = EARTH_RADIUS_MI * k * lat.cos() * dlon.sin();
        let y = EARTH_RADIUS_MI * k * (self.cos_lat0 * lat.sin() - self.sin_lat0 * lat.cos() * dlon.cos());
        (x, y)
    }

    /// Inverse projection from planar miles back to a WGS84 point.
    pub fn unproject(&self, x: f64, y: f64) -> GeoPoint {
        let rho = x.hypot(y);
        if rho < 1e-12 {
            return self.center;
        }
        let c = rho / EARTH_RADIUS_MI;
        let (sin_c, cos_c) = (c.sin(), c.cos());
        let lat = (cos_c * self.sin_lat0 + y * sin_c * self.cos_lat0 / rho).clamp(-1.0, 1.0).asin();
        let lon = self.center.lon.to_radians()
            + (x * sin_c).atan2(rho * self.cos_lat0 * cos_c - y * self.sin_lat0 * sin_c);
        GeoPoint::new(lat.to_degrees(), lon.to_degrees())
    }
}

/// A closed simple polygon in lat/lon degrees. The ring is stored without a
/// repeated closing vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    ring: Vec<GeoPoint>,
}

/// Errors building geometry from untrusted input.
#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("polygon needs at least 3 distinct vertices, got {0}")]
    DegeneratePolygon(usize),
    #[error("polygon ring is self-intersecting")]
    SelfIntersecting,
}

impl Polygon {
    /// Builds a polygon from a vertex ring, accepting either open or closed
    /// input (a repeated last vertex is dropped). Rejects rings with fewer
    /// than three distinct vertices or with self-intersections.
    pub fn new(mut ring: Vec<GeoPoint>) -> Result<Self, GeoError> {
        if ring.len() >= 2 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 {
            return Err(GeoError::DegeneratePolygon(ring.len()));
        }
        let poly = Self { ring };
        if poly.self_intersects() {
            return Err(GeoError::SelfIntersecting);
        }
        Ok(poly)
    }

    pub fn ring(&self) -> &[GeoPoint] {
        &self.ring
    }

    /// Even-odd (ray casting) containment test in the lon/lat plane.
    /// Points exactly on an edge may fall on either side.
    pub fn contains(&self, p: &GeoPoint) -> bool {
        let mut inside = false;
        let n = self.ring.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (&self.ring[i], &self.ring[j]);
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x_cross = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
                if p.lon < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    fn self_intersects(&self) -> bool {
        let n = self.ring.len();
        let seg = |i: usize| (self.ring[i], self.ring[(i + 1) % n]);
        for i in 0..n {
            for k in (i + 1)..n {
                // adjacent segments share an endpoint, skip them
                if k == i || (k + 1) % n == i || (i + 1) % n == k {
                    continue;
                }
                let (a1, a2) = seg(i);
                let (b1, b2) = seg(k);
                if segments_cross(a1, a2, b1, b2) {
                    return true;
                }
            }
        }
        false
    }
}

fn orient(a: GeoPoint, b: GeoPoint, c: GeoPoint) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn segments_cross(a1: GeoPoint, a2: GeoPoint, b1: GeoPoint, b2: GeoPoint) -> bool {
    let d1 = orient(a1, a2, b1);
    let d2 = orient(a1, a2, b2);
    let d3 = orient(b1, b2, a1);
    let d4 = orient(b1, b2, a2);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_rejects_out_of_range() {
        assert!(GeoPoint::checked(91.0, 0.0).is_none());
        assert!(GeoPoint::checked(-91.0, 0.0).is_none());
        assert!(GeoPoint::checked(0.0, 181.0).is_none());
        assert!(GeoPoint::checked(0.0, f64::NAN).is_none());
        assert!(GeoPoint::checked(90.0, -180.0).is_some());
    }

    #[test]
    fn haversine_zero_for_same_point() {
        let p = GeoPoint::new(38.9072, -77.0369);
        assert_eq!(p.haversine_mi(&p), 0.0);
    }

    #[test]
    fn haversine_quarter_circumference() {
        // pole to equator is a quarter of the great circle
        let pole = GeoPoint::new(90.0, 0.0);
        let eq = GeoPoint::new(0.0, 0.0);
        let expect = EARTH_RADIUS_MI * std::f64::consts::FRAC_PI_2;
        assert!((pole.haversine_mi(&eq) - expect).abs() < 1e-9);
    }

    #[test]
    fn haversine_small_arc_matches_plane() {
        // 0.01 deg of latitude is R * 0.01deg in radians, to first order
        let a = GeoPoint::new(38.90, -77.03);
        let b = GeoPoint::new(38.91, -77.03);
        let expect = EARTH_RADIUS_MI * 0.01f64.to_radians();
        assert!((a.haversine_mi(&b) - expect).abs() < 1e-9);
    }

    #[test]
    fn projection_center_is_origin() {
        let proj = LocalProjection::new(GeoPoint::new(38.9, -77.0));
        let (x, y) = proj.project(&GeoPoint::new(38.9, -77.0));
        assert!(x.abs() < 1e-12 && y.abs() < 1e-12);
    }

    #[test]
    fn projection_preserves_distance_from_center() {
        let center = GeoPoint::new(38.9, -77.0);
        let proj = LocalProjection::new(center);
        for (lat, lon) in [(38.95, -77.10), (38.80, -76.95), (39.0, -77.0), (38.9, -76.8)] {
            let p = GeoPoint::new(lat, lon);
            let (x, y) = proj.project(&p);
            let planar = x.hypot(y);
            let sphere = center.haversine_mi(&p);
            assert!((planar - sphere).abs() < 1e-9, "{planar} vs {sphere}");
        }
    }

    #[test]
    fn projection_round_trips() {
        let proj = LocalProjection::new(GeoPoint::new(38.9, -77.0));
        for (lat, lon) in [(38.95, -77.10), (38.80, -76.95), (38.9001, -77.0001)] {
            let p = GeoPoint::new(lat, lon);
            let (x, y) = proj.project(&p);
            let q = proj.unproject(x, y);
            assert!((q.lat - p.lat).abs() < 1e-10 && (q.lon - p.lon).abs() < 1e-10);
        }
    }

    #[test]
    fn polygon_contains_square() {
        let sq = Polygon::new(vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(0.0, 1.0),
            GeoPoint::new(1.0, 1.0),
            GeoPoint::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(sq.contains(&GeoPoint::new(0.5, 0.5)));
        assert!(!sq.contains(&GeoPoint::new(1.5, 0.5)));
        assert!(!sq.contains(&GeoPoint::new(-0.1, 0.5)));
    }

    #[test]
    fn polygon_accepts_closed_ring() {
        let sq = Polygon::new(vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(0.0, 1.0),
            GeoPoint::new(1.0, 1.0),
            GeoPoint::new(0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(sq.ring().len(), 3);
    }

    #[test]
    fn polygon_rejects_degenerate_and_crossing() {
        assert!(matches!(
            Polygon::new(vec![GeoPoint::new(0.0, 0.0), GeoPoint::new(1.0, 1.0)]),
            Err(GeoError::DegeneratePolygon(_))
        ));
        // bowtie
        assert!(matches!(
            Polygon::new(vec![
                GeoPoint::new(0.0, 0.0),
                GeoPoint::new(1.0, 1.0),
                GeoPoint::new(1.0, 0.0),
                GeoPoint::new(0.0, 1.0),
            ]),
            Err(GeoError::SelfIntersecting)
        ));
    }
}
