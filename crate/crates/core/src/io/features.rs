use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use geo::{Coord, LineString, MultiPolygon, Polygon};
use geojson::{Feature, FeatureCollection, GeoJson, Geometry, JsonObject, JsonValue, Position, Value};
use serde::{Deserialize, Serialize};

use super::LoadReport;
use crate::delineation::{AdminLevel, CityBoundary, CityId, RoadClass, RoadSegment};
use crate::error::{Error, Result};

/// Property keys of road features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadFields {
    pub class_key: String,
}

impl Default for RoadFields {
    fn default() -> Self {
        RoadFields {
            class_key: "highway".into(),
        }
    }
}

/// Property keys of city features. Id and urban area are required.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CityFields {
    pub id_key: String,
    pub name_key: String,
    pub urban_area_key: String,
    pub admin_level_key: String,
}

impl Default for CityFields {
    fn default() -> Self {
        CityFields {
            id_key: "city_id".into(),
            name_key: "name".into(),
            urban_area_key: "total_urban_area_km2".into(),
            admin_level_key: "admin_level".into(),
        }
    }
}

pub fn read_feature_collection(path: &Path) -> Result<FeatureCollection> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let geojson: GeoJson = text
        .parse()
        .map_err(|e: geojson::Error| Error::file(path, e.to_string()))?;
    match geojson {
        GeoJson::FeatureCollection(fc) => Ok(fc),
        GeoJson::Feature(f) => Ok(FeatureCollection {
            bbox: None,
            features: vec![f],
            foreign_members: None,
        }),
        GeoJson::Geometry(_) => Err(Error::file(
            path,
            "expected a feature collection, found a bare geometry",
        )),
    }
}

fn coord(p: &Position) -> std::result::Result<Coord<f64>, String> {
    match p.as_slice() {
        [x, y, ..] if x.is_finite() && y.is_finite() => Ok(Coord { x: *x, y: *y }),
        [_, _, ..] => Err("non-finite coordinate".into()),
        _ => Err("position with fewer than two coordinates".into()),
    }
}

fn ring(positions: &[Position]) -> std::result::Result<LineString<f64>, String> {
    let coords = positions
        .iter()
        .map(coord)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if coords.len() < 4 {
        return Err(format!("ring has {} positions, at least 4 needed", coords.len()));
    }
    if coords.first() != coords.last() {
        return Err("unclosed ring".into());
    }
    Ok(LineString::new(coords))
}

fn polygon(rings: &[Vec<Position>]) -> std::result::Result<Polygon<f64>, String> {
    let mut rings = rings.iter().map(|r| ring(r));
    let exterior = rings.next().ok_or("polygon without rings")??;
    Ok(Polygon::new(
        exterior,
        rings.collect::<std::result::Result<_, _>>()?,
    ))
}

fn polygons(geometry: Option<&Geometry>) -> std::result::Result<Vec<Polygon<f64>>, String> {
    match geometry.map(|g| &g.value) {
        Some(Value::Polygon(p)) => Ok(vec![polygon(p)?]),
        Some(Value::MultiPolygon(ps)) => ps.iter().map(|p| polygon(p)).collect(),
        Some(_) => Err("geometry is not a polygon".into()),
        None => Err("feature has no geometry".into()),
    }
}

fn property_text(value: &JsonValue) -> Option<String> {
    match value {
        JsonValue::String(s) => Some(s.clone()),
        JsonValue::Number(n) => Some(n.to_string()),
        JsonValue::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn property_number(value: &JsonValue) -> Option<f64> {
    match value {
        JsonValue::Number(n) => n.as_f64(),
        JsonValue::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn property<'a>(feature: &'a Feature, key: &str) -> Option<&'a JsonValue> {
    feature
        .properties
        .as_ref()
        .and_then(|p| p.get(key))
        .filter(|v| !v.is_null())
}

/// Road lines; multi-line features yield one segment per part. Segments are
/// numbered in file order.
pub fn load_roads(path: &Path, fields: &RoadFields) -> Result<(Vec<RoadSegment>, LoadReport)> {
    let fc = read_feature_collection(path)?;
    let mut report = LoadReport::default();
    let mut roads = Vec::new();
    for (index, feature) in fc.features.iter().enumerate() {
        let lines: Vec<&Vec<Position>> = match feature.geometry.as_ref().map(|g| &g.value) {
            Some(Value::LineString(l)) => vec![l],
            Some(Value::MultiLineString(ls)) => ls.iter().collect(),
            Some(_) => {
                report.skip(format!(
                    "{}: road feature {index}: geometry is not a line",
                    path.display()
                ));
                continue;
            }
            None => {
                report.skip(format!("{}: road feature {index}: no geometry", path.display()));
                continue;
            }
        };
        let class = property(feature, &fields.class_key)
            .and_then(property_text)
            .unwrap_or_else(|| "unknown".into());
        let parsed: std::result::Result<Vec<RoadSegment>, String> = lines
            .iter()
            .enumerate()
            .map(|(k, line)| {
                let pts = line
                    .iter()
                    .map(coord)
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                RoadSegment::new((roads.len() + k) as u64, pts, RoadClass::new(class.as_str()))
                    .map_err(|e| e.to_string())
            })
            .collect();
        match parsed {
            Ok(segments) => {
                roads.extend(segments);
                report.loaded += 1;
            }
            Err(e) => report.skip(format!("{}: road feature {index}: {e}", path.display())),
        }
    }
    Ok((roads, report))
}

/// City boundaries with their urban-area budgets.
pub fn load_cities(path: &Path, fields: &CityFields) -> Result<(Vec<CityBoundary>, LoadReport)> {
    let fc = read_feature_collection(path)?;
    let mut report = LoadReport::default();
    let mut cities = Vec::new();
    let mut seen = BTreeSet::new();
    for (index, feature) in fc.features.iter().enumerate() {
        let missing = |key: &str| {
            Error::file(
                path,
                format!("city feature {index}: missing or malformed required property `{key}`"),
            )
        };
        let id = property(feature, &fields.id_key)
            .and_then(property_text)
            .ok_or_else(|| missing(&fields.id_key))?;
        let urban_km2 = property(feature, &fields.urban_area_key)
            .and_then(property_number)
            .ok_or_else(|| missing(&fields.urban_area_key))?;
        if !seen.insert(id.clone()) {
            return Err(Error::file(path, format!("duplicate city id `{id}`")));
        }
        let name = property(feature, &fields.name_key)
            .and_then(property_text)
            .unwrap_or_else(|| id.clone());
        let city = polygons(feature.geometry.as_ref()).and_then(|ps| {
            let mut city =
                CityBoundary::new(CityId::new(id.as_str()), name, MultiPolygon::new(ps), urban_km2)
                    .map_err(|e| e.to_string())?;
            if let Some(level) = property(feature, &fields.admin_level_key).and_then(property_text) {
                city = city.with_admin_level(level.parse::<AdminLevel>().map_err(|e| e.to_string())?);
            }
            Ok(city)
        });
        match city {
            Ok(c) => {
                cities.push(c);
                report.loaded += 1;
            }
            Err(e) => report.skip(format!("{}: city feature {index} ({id}): {e}", path.display())),
        }
    }
    Ok((cities, report))
}

/// Every polygon of every feature; multi-polygons are split into parts.
pub fn load_polygons(path: &Path) -> Result<(Vec<Polygon<f64>>, LoadReport)> {
    let fc = read_feature_collection(path)?;
    let mut report = LoadReport::default();
    let mut out = Vec::new();
    for (index, feature) in fc.features.iter().enumerate() {
        let parsed = polygons(feature.geometry.as_ref()).and_then(|ps| {
            for p in &ps {
                crate::geom::validate_polygon(p)?;
            }
            Ok(ps)
        });
        match parsed {
            Ok(ps) => {
                out.extend(ps);
                report.loaded += 1;
            }
            Err(e) => report.skip(format!("{}: feature {index}: {e}", path.display())),
        }
    }
    Ok((out, report))
}

fn positions(ring: &LineString<f64>) -> Vec<Position> {
    ring.0.iter().map(|c| vec![c.x, c.y]).collect()
}

/// Polygon feature with the given properties.
pub fn polygon_feature(polygon: &Polygon<f64>, properties: JsonObject) -> Feature {
    let rings = std::iter::once(polygon.exterior())
        .chain(polygon.interiors())
        .map(positions)
        .collect();
    Feature {
        bbox: None,
        geometry: Some(Geometry::new(Value::Polygon(rings))),
        id: None,
        properties: Some(properties),
        foreign_members: None,
    }
}

/// Line feature carrying the road class under `fields.class_key`.
pub fn road_feature(road: &RoadSegment, fields: &RoadFields) -> Feature {
    let mut props = JsonObject::new();
    props.insert(
        fields.class_key.clone(),
        JsonValue::from(road.road_class.as_str()),
    );
    props.insert("id".into(), JsonValue::from(road.id));
    Feature {
        bbox: None,
        geometry: Some(Geometry::new(Value::LineString(
            road.polyline().iter().map(|c| vec![c.x, c.y]).collect(),
        ))),
        id: None,
        properties: Some(props),
        foreign_members: None,
    }
}

/// Multi-polygon feature with the id, name, budget and tier of `city`.
pub fn city_feature(city: &CityBoundary, fields: &CityFields) -> Feature {
    let mut props = JsonObject::new();
    props.insert(fields.id_key.clone(), JsonValue::from(city.city_id.as_str()));
    props.insert(fields.name_key.clone(), JsonValue::from(city.name.as_str()));
    props.insert(
        fields.urban_area_key.clone(),
        JsonValue::from(city.total_urban_area_km2),
    );
    if let Some(level) = city.admin_level {
        props.insert(fields.admin_level_key.clone(), JsonValue::from(level.to_string()));
    }
    let polygons = city
        .polygons
        .iter()
        .map(|p| {
            std::iter::once(p.exterior())
                .chain(p.interiors())
                .map(positions)
                .collect()
        })
        .collect();
    Feature {
        bbox: None,
        geometry: Some(Geometry::new(Value::MultiPolygon(polygons))),
        id: None,
        properties: Some(props),
        foreign_members: None,
    }
}

pub fn write_feature_collection(path: &Path, features: Vec<Feature>) -> Result<()> {
    let fc = FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &fc).map_err(|e| Error::file(path, e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
