use std::path::Path;

use geojson::{feature::Id, JsonValue, Value};
use serde::{Deserialize, Serialize};

use super::features::read_feature_collection;
use super::LoadReport;
use crate::error::{Error, Result};
use crate::poi::{CategoryMapping, Poi};

/// Property keys (GeoJSON) or column names (delimited text) of POIs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoiFields {
    pub id_key: String,
    pub category_key: String,
}

impl Default for PoiFields {
    fn default() -> Self {
        PoiFields {
            id_key: "id".into(),
            category_key: "category".into(),
        }
    }
}

/// Delimited text for `.csv`, `.tsv` and `.txt`; GeoJSON otherwise.
pub fn load_pois(
    path: &Path,
    fields: &PoiFields,
    mapping: &CategoryMapping,
) -> Result<(Vec<Poi>, LoadReport)> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("csv" | "tsv" | "txt") => load_pois_csv(path, fields, mapping),
        _ => load_pois_geojson(path, fields, mapping),
    }
}

fn text(v: &JsonValue) -> Option<String> {
    match v {
        JsonValue::String(s) => Some(s.clone()),
        JsonValue::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Point features. A label the mapping does not know skips the POI.
pub fn load_pois_geojson(
    path: &Path,
    fields: &PoiFields,
    mapping: &CategoryMapping,
) -> Result<(Vec<Poi>, LoadReport)> {
    let fc = read_feature_collection(path)?;
    let mut report = LoadReport::default();
    let mut pois = Vec::new();
    for (index, feature) in fc.features.iter().enumerate() {
        let props = feature.properties.as_ref();
        let id = props
            .and_then(|p| p.get(&fields.id_key))
            .and_then(text)
            .or_else(|| match &feature.id {
                Some(Id::String(s)) => Some(s.clone()),
                Some(Id::Number(n)) => Some(n.to_string()),
                None => None,
            })
            .unwrap_or_else(|| index.to_string());
        let location = match feature.geometry.as_ref().map(|g| &g.value) {
            Some(Value::Point(p)) if p.len() >= 2 && p[0].is_finite() && p[1].is_finite() => (p[0], p[1]),
            _ => {
                report.skip(format!(
                    "{}: POI {id}: geometry is not a finite point",
                    path.display()
                ));
                continue;
            }
        };
        let label = props.and_then(|p| p.get(&fields.category_key)).and_then(text);
        match label.as_deref().map(|l| (l, mapping.lookup(l))) {
            Some((_, Some(category))) => {
                pois.push(Poi::new(id, location.0, location.1, category));
                report.loaded += 1;
            }
            Some((l, None)) => report.skip(format!("{}: POI {id}: unmapped category `{l}`", path.display())),
            None => report.skip(format!("{}: POI {id}: no category", path.display())),
        }
    }
    Ok((pois, report))
}

const X_NAMES: [&str; 4] = ["x", "lon", "lng", "longitude"];
const Y_NAMES: [&str; 3] = ["y", "lat", "latitude"];

/// Delimited text with a header naming an id column, an x/lon column, a
/// y/lat column and a category column. Tab-separated when the extension is
/// `.tsv`.
pub fn load_pois_csv(
    path: &Path,
    fields: &PoiFields,
    mapping: &CategoryMapping,
) -> Result<(Vec<Poi>, LoadReport)> {
    let delimiter = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv")) {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::file(path, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::file(path, e.to_string()))?
        .clone();
    let column = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let missing = |what: &str| Error::file(path, format!("no {what} column in header"));
    let id_col = column(&[fields.id_key.as_str()]);
    let x_col = column(&X_NAMES).ok_or_else(|| missing("x/lon"))?;
    let y_col = column(&Y_NAMES).ok_or_else(|| missing("y/lat"))?;
    let cat_col = column(&[fields.category_key.as_str()]).ok_or_else(|| missing("category"))?;

    let mut report = LoadReport::default();
    let mut pois = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.skip(format!("{}: line {line}: {e}", path.display()));
                continue;
            }
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = id_col.map_or_else(|| (row + 1).to_string(), |i| field(i).to_string());
        let (x, y) = match (field(x_col).parse::<f64>(), field(y_col).parse::<f64>()) {
            (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => (x, y),
            _ => {
                report.skip(format!("{}: line {line}: bad coordinates", path.display()));
                continue;
            }
        };
        match mapping.lookup(field(cat_col)) {
            Some(category) => {
                pois.push(Poi::new(id, x, y, category));
                report.loaded += 1;
            }
            None => report.skip(format!(
                "{}: line {line}: unmapped category `{}`",
                path.display(),
                field(cat_col)
            )),
        }
    }
    Ok((pois, report))
}

/// Comma-separated `id,x,y,category` table with category codes.
pub fn write_pois_csv(path: &Path, pois: &[Poi]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::file(path, e.to_string()))?;
    let fail = |e: csv::Error| Error::file(path, e.to_string());
    writer.write_record(["id", "x", "y", "category"]).map_err(fail)?;
    for p in pois {
        writer
            .write_record([
                p.id.clone(),
                p.location.x.to_string(),
                p.location.y.to_string(),
                p.category.code().to_string(),
            ])
            .map_err(fail)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
