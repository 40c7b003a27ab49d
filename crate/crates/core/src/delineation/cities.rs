use std::fmt;
use std::str::FromStr;

use geo::{BooleanOps, BoundingRect, MultiPolygon, Validation};
use serde::{Deserialize, Serialize};

use super::polygonize::ParcelGeometry;
use crate::error::{Error, Result};
use crate::geom::{multi_polygon_area, rect_to_aabb, validate_polygon};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CityId(String);

impl CityId {
    pub fn new(id: impl Into<String>) -> Self {
        CityId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Administrative tier of a city.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AdminLevel {
    /// Municipality directly under the central government.
    Md,
    /// Sub-provincial city.
    Spc,
    /// Other provincial capital city.
    Opcc,
    /// Prefecture-level city.
    Plc,
    /// County-level city.
    Clc,
}

impl FromStr for AdminLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MD" => Ok(AdminLevel::Md),
            "SPC" => Ok(AdminLevel::Spc),
            "OPCC" => Ok(AdminLevel::Opcc),
            "PLC" => Ok(AdminLevel::Plc),
            "CLC" => Ok(AdminLevel::Clc),
            other => Err(Error::InvalidInput(format!("unknown admin level `{other}`"))),
        }
    }
}

impl fmt::Display for AdminLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdminLevel::Md => "MD",
            AdminLevel::Spc => "SPC",
            AdminLevel::Opcc => "OPCC",
            AdminLevel::Plc => "PLC",
            AdminLevel::Clc => "CLC",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityBoundary {
    pub city_id: CityId,
    pub name: String,
    pub polygons: MultiPolygon<f64>,
    /// Built-up area the automaton must allocate.
    pub total_urban_area_km2: f64,
    pub admin_level: Option<AdminLevel>,
}

impl CityBoundary {
    pub fn new(
        city_id: CityId,
        name: impl Into<String>,
        polygons: MultiPolygon<f64>,
        total_urban_area_km2: f64,
    ) -> Result<Self> {
        if !(total_urban_area_km2.is_finite() && total_urban_area_km2 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "city {city_id}: urban area must be non-negative, got {total_urban_area_km2}"
            )));
        }
        for p in &polygons {
            validate_polygon(p).map_err(|e| Error::InvalidGeometry(format!("city {city_id}: {e}")))?;
        }
        if polygons.0.is_empty() || !polygons.is_valid() {
            return Err(Error::InvalidGeometry(format!(
                "city {city_id}: boundary is empty or self-intersecting"
            )));
        }
        Ok(CityBoundary {
            city_id,
            name: name.into(),
            polygons,
            total_urban_area_km2,
            admin_level: None,
        })
    }

    pub fn with_admin_level(mut self, level: AdminLevel) -> Self {
        self.admin_level = Some(level);
        self
    }

    pub fn area_m2(&self) -> f64 {
        multi_polygon_area(&self.polygons)
    }
}

/// Assigns each parcel to the city holding the largest share of its area.
/// Equal shares go to the lower city id; parcels touching no city keep
/// `city_id = None`.
pub fn clip_to_cities(mut parcels: Vec<ParcelGeometry>, cities: &[CityBoundary]) -> Vec<ParcelGeometry> {
    let mut order: Vec<&CityBoundary> = cities.iter().collect();
    order.sort_by(|a, b| a.city_id.cmp(&b.city_id));
    let envelopes: Vec<_> = order
        .iter()
        .map(|c| c.polygons.bounding_rect().map(rect_to_aabb))
        .collect();

    use rayon::prelude::*;
    let assigned: Vec<Option<CityId>> = parcels
        .par_iter()
        .map(|parcel| {
            let env = crate::geom::polygon_envelope(&parcel.polygon);
            let mut best: Option<(f64, &CityId)> = None;
            for (city, city_env) in order.iter().zip(&envelopes) {
                if !city_env.is_some_and(|e| rstar::Envelope::intersects(&e, &env)) {
                    continue;
                }
                let share = multi_polygon_area(&city.polygons.intersection(&parcel.polygon));
                if share > 0.0 && best.is_none_or(|(b, _)| share > b) {
                    best = Some((share, &city.city_id));
                }
            }
            best.map(|(_, id)| id.clone())
        })
        .collect();
    for (p, c) in parcels.iter_mut().zip(assigned) {
        p.city_id = c;
    }
    parcels
}
