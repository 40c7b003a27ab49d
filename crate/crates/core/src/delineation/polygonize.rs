use std::fmt;

use geo::{unary_union, BooleanOps, BoundingRect, Polygon, Validation};
use serde::{Deserialize, Serialize};

use super::buffer::RoadSpace;
use super::cities::CityId;
use crate::error::{Error, Result};
use crate::geom::{polygon_area, polygon_perimeter, validate_polygon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParcelId(pub u32);

impl fmt::Display for ParcelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Area being processed, in projected meters.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyExtent {
    polygon: Polygon<f64>,
}

impl StudyExtent {
    pub fn new(polygon: Polygon<f64>) -> Result<Self> {
        validate_polygon(&polygon).map_err(Error::InvalidGeometry)?;
        if !polygon.is_valid() {
            return Err(Error::InvalidGeometry(
                "study extent must be a simple polygon".into(),
            ));
        }
        Ok(StudyExtent { polygon })
    }

    pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        Self::new(crate::geom::rectangle(min_x, min_y, max_x, max_y))
    }

    pub fn polygon(&self) -> &Polygon<f64> {
        &self.polygon
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParcelGeometry {
    pub parcel_id: ParcelId,
    pub polygon: Polygon<f64>,
    pub area_m2: f64,
    pub perimeter_m: f64,
    pub city_id: Option<CityId>,
}

impl ParcelGeometry {
    pub fn new(parcel_id: ParcelId, polygon: Polygon<f64>) -> Self {
        ParcelGeometry {
            parcel_id,
            area_m2: polygon_area(&polygon),
            perimeter_m: polygon_perimeter(&polygon),
            polygon,
            city_id: None,
        }
    }
}

/// Size filters applied to the pieces left after removing road space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolygonizeOptions {
    /// Pieces below this area are boolean-operation slivers.
    pub sliver_m2: f64,
    /// Pieces below this area are folded into road space.
    pub min_parcel_m2: f64,
}

impl Default for PolygonizeOptions {
    fn default() -> Self {
        PolygonizeOptions {
            sliver_m2: 1.0,
            min_parcel_m2: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delineation {
    pub parcels: Vec<ParcelGeometry>,
    /// Road space clipped to the extent, including folded-in small pieces.
    pub road_space: RoadSpace,
}

/// Parcels are the connected pieces of the extent once road space is
/// removed. Ids follow the south-west corner of each parcel's bounding box
/// (south first).
pub fn polygonize_parcels(
    extent: &StudyExtent,
    road_space: &RoadSpace,
    options: &PolygonizeOptions,
) -> Delineation {
    if road_space.is_empty() {
        return Delineation {
            parcels: vec![ParcelGeometry::new(ParcelId(0), extent.polygon.clone())],
            road_space: RoadSpace::default(),
        };
    }
    let remainder = extent.polygon.difference(&road_space.0);
    let clipped_roads = road_space.0.intersection(&extent.polygon);

    let threshold = options.min_parcel_m2.max(options.sliver_m2);
    let (mut kept, small): (Vec<Polygon<f64>>, Vec<Polygon<f64>>) = remainder
        .0
        .into_iter()
        .partition(|p| polygon_area(p) >= threshold);

    let road_space = if small.is_empty() {
        RoadSpace(clipped_roads)
    } else {
        let mut all = clipped_roads.0;
        all.extend(small);
        RoadSpace(unary_union(&all))
    };

    let corner = |p: &Polygon<f64>| {
        p.bounding_rect()
            .map(|r| (r.min().y, r.min().x))
            .unwrap_or((f64::NAN, f64::NAN))
    };
    kept.sort_by(|a, b| {
        let (ay, ax) = corner(a);
        let (by, bx) = corner(b);
        ay.total_cmp(&by).then(ax.total_cmp(&bx))
    });
    let parcels = kept
        .into_iter()
        .enumerate()
        .map(|(i, p)| ParcelGeometry::new(ParcelId(i as u32), p))
        .collect();
    Delineation { parcels, road_space }
}
