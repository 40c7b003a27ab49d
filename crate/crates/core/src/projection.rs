//! Longitude/latitude to local planar meters.
//!
//! Each city is projected with an azimuthal-equidistant mapping centered on
//! the city centroid. The unit-sphere mapping is scaled by the WGS84
//! meridional (north-south) and prime-vertical (east-west) radii of
//! curvature at the center, so distances are exact at the center and within
//! 0.1 % up to 100 km away.

use geo::{Coord, LineString, MultiPolygon, Polygon};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    lon0: f64,
    lat0: f64,
    sin_lat0: f64,
    cos_lat0: f64,
    /// Prime-vertical radius, scales easting.
    radius_x: f64,
    /// Meridional radius, scales northing.
    radius_y: f64,
}

impl LocalProjection {
    /// Projection centered at `(lon, lat)` in degrees.
    pub fn centered_at(lon: f64, lat: f64) -> Self {
        let lat_r = lat.to_radians();
        let e2 = WGS84_F * (2.0 - WGS84_F);
        let w = 1.0 - e2 * lat_r.sin().powi(2);
        LocalProjection {
            lon0: lon.to_radians(),
            lat0: lat_r,
            sin_lat0: lat_r.sin(),
            cos_lat0: lat_r.cos(),
            radius_x: WGS84_A / w.sqrt(),
            radius_y: WGS84_A * (1.0 - e2) / w.powf(1.5),
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.lon0.to_degrees(), self.lat0.to_degrees())
    }

    /// Degrees to local meters.
    pub fn forward(&self, c: Coord<f64>) -> Coord<f64> {
        let lam = c.x.to_radians() - self.lon0;
        let phi = c.y.to_radians();
        let (sin_phi, cos_phi) = phi.sin_cos();
        let dphi = phi - self.lat0;
        let h = (dphi / 2.0).sin().powi(2) + self.cos_lat0 * cos_phi * (lam / 2.0).sin().powi(2);
        let angle = 2.0 * h.sqrt().min(1.0).asin();
        let k = if angle < 1e-12 { 1.0 } else { angle / angle.sin() };
        let x = k * cos_phi * lam.sin();
        let y = k * (self.cos_lat0 * sin_phi - self.sin_lat0 * cos_phi * lam.cos());
        Coord {
            x: x * self.radius_x,
            y: y * self.radius_y,
        }
    }

    /// Local meters back to degrees.
    pub fn inverse(&self, c: Coord<f64>) -> Coord<f64> {
        let x = c.x / self.radius_x;
        let y = c.y / self.radius_y;
        let rho = x.hypot(y);
        if rho < 1e-15 {
            return Coord {
                x: self.lon0.to_degrees(),
                y: self.lat0.to_degrees(),
            };
        }
        let (sin_c, cos_c) = rho.sin_cos();
        let phi = (cos_c * self.sin_lat0 + y * sin_c * self.cos_lat0 / rho).asin();
        let lam = (x * sin_c).atan2(rho * self.cos_lat0 * cos_c - y * self.sin_lat0 * sin_c);
        Coord {
            x: (self.lon0 + lam).to_degrees(),
            y: phi.to_degrees(),
        }
    }

    pub fn forward_polygon(&self, p: &Polygon<f64>) -> Polygon<f64> {
        map_polygon(p, |c| self.forward(c))
    }

    pub fn inverse_polygon(&self, p: &Polygon<f64>) -> Polygon<f64> {
        map_polygon(p, |c| self.inverse(c))
    }

    pub fn forward_multi_polygon(&self, mp: &MultiPolygon<f64>) -> MultiPolygon<f64> {
        MultiPolygon(mp.0.iter().map(|p| self.forward_polygon(p)).collect())
    }
}

fn map_polygon(p: &Polygon<f64>, f: impl Fn(Coord<f64>) -> Coord<f64>) -> Polygon<f64> {
    let map_ring = |r: &LineString<f64>| LineString::new(r.0.iter().map(|c| f(*c)).collect());
    Polygon::new(
        map_ring(p.exterior()),
        p.interiors().iter().map(map_ring).collect(),
    )
}

/// Coordinate reference handling for inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputCrs {
    /// Decide from the coordinate values, see [`looks_like_lon_lat`].
    #[default]
    Auto,
    LonLat,
    Projected,
}

/// Heuristic used by [`InputCrs::Auto`]: every coordinate lies inside the
/// longitude/latitude domain and the whole dataset spans less than ten units
/// on both axes (no real city spans less than ten meters, and no city spans
/// ten degrees).
pub fn looks_like_lon_lat<'a>(coords: impl IntoIterator<Item = &'a Coord<f64>>) -> bool {
    let mut min = Coord {
        x: f64::INFINITY,
        y: f64::INFINITY,
    };
    let mut max = Coord {
        x: f64::NEG_INFINITY,
        y: f64::NEG_INFINITY,
    };
    let mut any = false;
    for c in coords {
        if !(-180.0..=180.0).contains(&c.x) || !(-90.0..=90.0).contains(&c.y) {
            return false;
        }
        min.x = min.x.min(c.x);
        min.y = min.y.min(c.y);
        max.x = max.x.max(c.x);
        max.y = max.y.max(c.y);
        any = true;
    }
    any && max.x - min.x < 10.0 && max.y - min.y < 10.0
}
