use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use geo::{BoundingRect, Intersects, Polygon};
use geojson::JsonObject;
use rayon::prelude::*;
use serde_json::json;

use super::config::PipelineConfig;
use super::run::{localize, output_polygons, BatchResult, CityResult, CityRunSummary};
use crate::error::{Error, Result};
use crate::io::{polygon_feature, write_feature_collection};
use crate::poi::Category;
use crate::validation::area_overlap_ratio;

/// Paths written for one city.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutputFiles {
    pub parcels: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub validation: Option<PathBuf>,
}

/// City ids reduced to characters safe in file names.
fn file_stem(city: &str) -> String {
    let stem: String = city
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() {
        "city".into()
    } else {
        stem
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(create(path)?);
    let fail = |e: csv::Error| Error::file(path, e.to_string());
    writer.write_record(header).map_err(fail)?;
    for row in rows {
        writer.write_record(&row).map_err(fail)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn parcel_features(result: &CityResult) -> Vec<geojson::Feature> {
    output_polygons(result)
        .iter()
        .zip(&result.parcels)
        .zip(result.attributes.iter().zip(&result.urban))
        .map(|((polygon, parcel), (attr, urban))| {
            let mut props = JsonObject::new();
            props.insert("parcel_id".into(), json!(parcel.parcel_id.0));
            props.insert("city_id".into(), json!(result.summary.city_id.as_str()));
            props.insert("area_m2".into(), json!(parcel.area_m2));
            props.insert("perimeter_m".into(), json!(parcel.perimeter_m));
            props.insert("d".into(), json!(attr.d));
            props.insert("dominant".into(), json!(attr.dominant.map(Category::code)));
            props.insert("mix_norm".into(), json!(attr.mix_norm));
            props.insert("urban".into(), json!(urban));
            polygon_feature(polygon, props)
        })
        .collect()
}

fn attribute_rows(result: &CityResult) -> impl Iterator<Item = Vec<String>> + '_ {
    result.attributes.iter().map(|a| {
        let mut row = vec![a.parcel_id.0.to_string()];
        row.extend(Category::ALL.iter().map(|&c| a.poi_counts.get(c).to_string()));
        row.extend([
            a.d_raw.to_string(),
            a.d.to_string(),
            a.dominant.map_or(String::new(), |c| c.code().to_string()),
            a.mix_raw.to_string(),
            a.mix_norm.to_string(),
        ]);
        row
    })
}

/// Writes the parcel collection, attribute table and trace of one city, and
/// its overlap report against `references` when given. Cities without
/// parcels get no files.
pub fn write_city_outputs(
    result: &CityResult,
    out_dir: &Path,
    references: Option<&[Polygon<f64>]>,
) -> Result<OutputFiles> {
    let mut files = OutputFiles::default();
    if result.parcels.is_empty() {
        return Ok(files);
    }
    let stem = file_stem(result.summary.city_id.as_str());

    let path = out_dir.join("parcels").join(format!("{stem}.geojson"));
    create(&path)?;
    write_feature_collection(&path, parcel_features(result))?;
    files.parcels = Some(path);

    let path = out_dir.join("attributes").join(format!("{stem}.csv"));
    let mut header = vec!["parcel_id"];
    header.extend(Category::ALL.iter().map(|c| c.code()));
    header.extend(["d_raw", "d", "dominant", "mix_raw", "mix_norm"]);
    write_csv(&path, &header, attribute_rows(result))?;
    files.attributes = Some(path);

    let path = out_dir.join("traces").join(format!("{stem}.csv"));
    write_csv(
        &path,
        &["iteration", "parcel_id", "probability", "converted"],
        result.trace.iter().map(|t| {
            vec![
                t.iteration.to_string(),
                t.parcel_id.0.to_string(),
                t.probability.to_string(),
                t.converted.to_string(),
            ]
        }),
    )?;
    files.trace = Some(path);

    if let Some(references) = references {
        let local = localize(result, references);
        let parcels: Vec<Polygon<f64>> = result.parcels.iter().map(|p| p.polygon.clone()).collect();
        let Some(bounds) = geo::MultiPolygon::new(parcels.clone()).bounding_rect() else {
            return Ok(files);
        };
        let nearby: Vec<Polygon<f64>> = local
            .into_iter()
            .filter(|q| q.bounding_rect().is_some_and(|r| r.intersects(&bounds)))
            .collect();
        let path = out_dir.join("validation").join(format!("{stem}.csv"));
        let report = area_overlap_ratio(&parcels, &nearby);
        report.write_csv("delineated", "reference", create(&path)?)?;
        files.validation = Some(path);
    }
    Ok(files)
}

fn summary_row(s: &CityRunSummary) -> Vec<String> {
    vec![
        s.city_id.to_string(),
        s.name.clone(),
        s.parcel_count.to_string(),
        s.urban_parcel_count.to_string(),
        s.urban_area_km2.to_string(),
        s.target_km2.to_string(),
        s.converged.to_string(),
        s.iterations.to_string(),
        s.success.to_string(),
        s.error.clone().unwrap_or_default(),
    ]
}

/// Per-city files written in parallel, then `summary.csv` and `timings.csv`
/// in input order. Wall times live only in `timings.csv` so that the
/// summary is reproducible.
pub fn write_outputs(
    batch: &BatchResult,
    config: &PipelineConfig,
    references: Option<&[Polygon<f64>]>,
) -> Result<Vec<OutputFiles>> {
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = batch
        .cities
        .par_iter()
        .map(|c| write_city_outputs(c, out, references))
        .collect::<Result<Vec<_>>>()?;
    write_csv(
        &out.join("summary.csv"),
        &[
            "city_id",
            "name",
            "parcel_count",
            "urban_parcel_count",
            "urban_area_km2",
            "target_km2",
            "converged",
            "iterations",
            "success",
            "error",
        ],
        batch.cities.iter().map(|c| summary_row(&c.summary)),
    )?;
    write_csv(
        &out.join("timings.csv"),
        &["city_id", "wall_time_s"],
        batch.cities.iter().map(|c| {
            vec![
                c.summary.city_id.to_string(),
                format!("{:.3}", c.summary.wall_time_s),
            ]
        }),
    )?;
    let mut log = create(&out.join("dataset.txt"))?;
    writeln!(log, "density_max_per_km2 = {}", batch.density.d_max()).map_err(|e| Error::io(out, e))?;
    log.flush().map_err(|e| Error::io(out, e))?;
    Ok(files)
}
