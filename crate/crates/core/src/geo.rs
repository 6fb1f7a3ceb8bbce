//! Great-circle and local planar geometry helpers.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters (IUGG).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// WGS84 coordinates in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub lat: f64,
    pub lon: f64,
}

impl Coord {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Coord { lat, lon }
    }
}

/// Haversine great-circle distance in meters.
pub fn haversine_m(a: Coord, b: Coord) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Sum of haversine lengths along a polyline.
pub fn polyline_length_m(points: &[Coord]) -> f64 {
    points.windows(2).map(|w| haversine_m(w[0], w[1])).sum()
}

/// Local equirectangular projection around an origin, in meters east/north.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    origin: Coord,
    cos_lat: f64,
}

impl LocalProjection {
    pub fn new(origin: Coord) -> Self {
        LocalProjection {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    pub fn project(&self, c: Coord) -> [f64; 2] {
        let x = (c.lon - self.origin.lon).to_radians() * self.cos_lat * EARTH_RADIUS_M;
        let y = (c.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M;
        [x, y]
    }

    pub fn unproject(&self, p: [f64; 2]) -> Coord {
        Coord {
            lat: self.origin.lat + (p[1] / EARTH_RADIUS_M).to_degrees(),
            lon: self.origin.lon + (p[0] / (EARTH_RADIUS_M * self.cos_lat)).to_degrees(),
        }
    }
}

/// Foot of the perpendicular from `p` onto the segment `a`-`b`.
///
/// Returns the clamped segment parameter in `[0, 1]` and the distance to the foot.
pub fn project_onto_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let fx = a[0] + t * dx - p[0];
    let fy = a[1] + t * dy - p[1];
    (t, (fx * fx + fy * fy).sqrt())
}
