use std::time::Instant;

use geo::{BoundingRect, Coord, Intersects, Polygon, Rect};
use log::{info, warn};
use rayon::prelude::*;
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};

use super::config::PipelineConfig;
use crate::ca::{fit_logit, run_constrained_ca, CaConfig, CalibratedLogit, Cell, NeighborGraph, TraceRecord};
use crate::delineation::{
    clip_to_cities, delineate, CityBoundary, CityId, ParcelGeometry, ParcelId, RoadSegment, StudyExtent,
};
use crate::error::{Error, Result};
use crate::io::{self, LoadReport};
use crate::poi::{
    assign_pois_to_parcels, characterize, raw_density, CategoryCounts, CategoryMapping, DensityContext,
    ParcelAttributes, Poi,
};
use crate::projection::{looks_like_lon_lat, InputCrs, LocalProjection};

/// Attribute model shipped with the library, fitted on synthetic parcels.
pub const DEFAULT_MODEL_TOML: &str = include_str!("../../data/default_logit.toml");

pub fn default_model() -> CalibratedLogit {
    CalibratedLogit::from_toml_str(DEFAULT_MODEL_TOML).expect("bundled model parses")
}

/// Roads, POIs and cities in their file coordinates.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub roads: Vec<RoadSegment>,
    pub pois: Vec<Poi>,
    pub cities: Vec<CityBoundary>,
    /// Coordinates are longitude/latitude degrees.
    pub lon_lat: bool,
    /// Per input file: its name and what was skipped.
    pub reports: Vec<(String, LoadReport)>,
    road_index: RTree<GeomWithData<Rectangle<[f64; 2]>, usize>>,
    poi_index: RTree<GeomWithData<[f64; 2], usize>>,
}

fn line_envelope(points: &[Coord<f64>]) -> AABB<[f64; 2]> {
    AABB::from_points(points.iter().map(|c| [c.x, c.y]).collect::<Vec<_>>().iter())
}

impl Inputs {
    /// Indexes the data and settles the coordinate system. `Auto` picks
    /// longitude/latitude when every city boundary looks like it.
    pub fn new(
        roads: Vec<RoadSegment>,
        pois: Vec<Poi>,
        cities: Vec<CityBoundary>,
        crs: InputCrs,
    ) -> Result<Self> {
        let lon_lat = match crs {
            InputCrs::LonLat => true,
            InputCrs::Projected => false,
            InputCrs::Auto => {
                let votes: Vec<bool> = cities
                    .iter()
                    .map(|c| looks_like_lon_lat(c.polygons.iter().flat_map(|p| p.exterior().0.iter())))
                    .collect();
                if votes.iter().all(|&v| v) != votes.iter().any(|&v| v) {
                    return Err(Error::Config(
                        "some city boundaries look like longitude/latitude and some do not; set `crs`".into(),
                    ));
                }
                votes.first().copied().unwrap_or(false)
            }
        };
        let road_index = RTree::bulk_load(
            roads
                .iter()
                .enumerate()
                .map(|(i, r)| GeomWithData::new(Rectangle::from_aabb(line_envelope(r.polyline())), i))
                .collect(),
        );
        let poi_index = RTree::bulk_load(
            pois.iter()
                .enumerate()
                .map(|(i, p)| GeomWithData::new([p.location.x, p.location.y], i))
                .collect(),
        );
        Ok(Inputs {
            roads,
            pois,
            cities,
            lon_lat,
            reports: Vec::new(),
            road_index,
            poi_index,
        })
    }

    pub fn total_skipped(&self) -> usize {
        self.reports.iter().map(|(_, r)| r.skipped).sum()
    }
}

/// Reads every input named in `config`.
pub fn load_inputs(config: &PipelineConfig) -> Result<Inputs> {
    let required = |p: &Option<std::path::PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| Error::Config(format!("no {what} input configured")))
    };
    let roads_path = required(&config.inputs.roads, "roads")?;
    let cities_path = required(&config.inputs.cities, "cities")?;
    let (roads, road_report) = io::load_roads(&roads_path, &config.fields.roads)?;
    let (cities, city_report) = io::load_cities(&cities_path, &config.fields.cities)?;
    let mut reports = vec![
        (roads_path.display().to_string(), road_report),
        (cities_path.display().to_string(), city_report),
    ];
    let pois = match &config.inputs.pois {
        Some(path) => {
            let mapping = match &config.inputs.category_mapping {
                Some(m) => CategoryMapping::load(m)?,
                None => CategoryMapping::default(),
            };
            let (pois, report) = io::load_pois(path, &config.fields.pois, &mapping)?;
            reports.push((path.display().to_string(), report));
            pois
        }
        None => {
            warn!("no POI input; every parcel gets the floor density");
            Vec::new()
        }
    };
    for (name, r) in &reports {
        info!("loaded {name}: {} features, {} skipped", r.loaded, r.skipped);
    }
    let mut inputs = Inputs::new(roads, pois, cities, config.crs)?;
    inputs.reports = reports;
    Ok(inputs)
}

/// Attribute model for a run: fitted from calibration samples when given,
/// else loaded from the configured file, else the bundled default.
pub fn resolve_model(config: &PipelineConfig) -> Result<CalibratedLogit> {
    if let Some(path) = &config.inputs.calibration_samples {
        let (samples, _) = io::load_logit_samples(path)?;
        let fit = fit_logit(&samples, &config.calibration)?;
        info!(
            "fitted attribute model on {} samples in {} iterations",
            samples.len(),
            fit.iterations
        );
        return Ok(fit.model);
    }
    if let Some(path) = &config.inputs.model {
        return CalibratedLogit::load(path);
    }
    warn!("no calibration samples or model given; using the bundled synthetic default model");
    Ok(default_model())
}

/// Summary line of one city.
#[derive(Debug, Clone, PartialEq)]
pub struct CityRunSummary {
    pub city_id: CityId,
    pub name: String,
    pub parcel_count: usize,
    pub urban_parcel_count: usize,
    pub urban_area_km2: f64,
    pub target_km2: f64,
    pub converged: bool,
    /// Automaton steps, seeding included.
    pub iterations: usize,
    /// At least the configured number of urban parcels.
    pub success: bool,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl CityRunSummary {
    fn failed(city: &CityBoundary, error: Option<String>, wall_time_s: f64) -> Self {
        CityRunSummary {
            city_id: city.city_id.clone(),
            name: city.name.clone(),
            parcel_count: 0,
            urban_parcel_count: 0,
            urban_area_km2: 0.0,
            target_km2: city.total_urban_area_km2,
            converged: false,
            iterations: 0,
            success: false,
            error,
            wall_time_s,
        }
    }
}

/// A city after delineation and POI assignment, before standardization.
#[derive(Debug, Clone)]
pub struct PreparedCity {
    pub city: CityBoundary,
    pub projection: Option<LocalProjection>,
    /// The city's parcels in local meters, numbered from 0.
    pub parcels: Vec<ParcelGeometry>,
    pub counts: Vec<CategoryCounts>,
    pub d_raw: Vec<f64>,
    pub road_count: usize,
    pub pois_outside_extent: usize,
    pub elapsed_s: f64,
}

/// Per-city output of a run.
#[derive(Debug, Clone)]
pub struct CityResult {
    pub summary: CityRunSummary,
    pub projection: Option<LocalProjection>,
    pub parcels: Vec<ParcelGeometry>,
    pub attributes: Vec<ParcelAttributes>,
    pub urban: Vec<bool>,
    pub trace: Vec<TraceRecord>,
}

impl CityResult {
    fn failed(summary: CityRunSummary) -> Self {
        CityResult {
            summary,
            projection: None,
            parcels: Vec::new(),
            attributes: Vec::new(),
            urban: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn urban_parcels(&self) -> impl Iterator<Item = &ParcelGeometry> {
        self.parcels
            .iter()
            .zip(&self.urban)
            .filter(|(_, u)| **u)
            .map(|(p, _)| p)
    }
}

fn expand(rect: Rect<f64>, margin_m: f64, lon_lat: bool) -> AABB<[f64; 2]> {
    let (dx, dy) = if lon_lat {
        let max_lat = rect.min().y.abs().max(rect.max().y.abs()).min(89.0);
        (
            margin_m / (111_320.0 * max_lat.to_radians().cos()),
            margin_m / 110_574.0,
        )
    } else {
        (margin_m, margin_m)
    };
    AABB::from_corners(
        [rect.min().x - dx, rect.min().y - dy],
        [rect.max().x + dx, rect.max().y + dy],
    )
}

fn project_city(city: &CityBoundary, projection: Option<&LocalProjection>) -> CityBoundary {
    match projection {
        Some(p) => CityBoundary {
            polygons: p.forward_multi_polygon(&city.polygons),
            ..city.clone()
        },
        None => city.clone(),
    }
}

/// Delineates one city's parcels and assigns its POIs.
pub fn prepare_city(city: &CityBoundary, inputs: &Inputs, config: &PipelineConfig) -> Result<PreparedCity> {
    let start = Instant::now();
    let raw_box = city
        .polygons
        .bounding_rect()
        .ok_or_else(|| Error::InvalidGeometry(format!("city {} has no extent", city.city_id)))?;
    let projection = inputs
        .lon_lat
        .then(|| LocalProjection::centered_at(raw_box.center().x, raw_box.center().y));
    let to_m = |c: Coord<f64>| projection.as_ref().map_or(c, |p| p.forward(c));
    let city_m = project_city(city, projection.as_ref());

    let max_width = config
        .buffer
        .widths
        .values()
        .copied()
        .fold(config.buffer.default_width, f64::max);
    let margin_m = config.network.trim_threshold_m + config.network.extension_m + 2.0 * max_width + 50.0;
    let road_box = expand(raw_box, margin_m, inputs.lon_lat);
    let mut road_ids: Vec<usize> = inputs
        .road_index
        .locate_in_envelope_intersecting(&road_box)
        .map(|g| g.data)
        .collect();
    road_ids.sort_unstable();
    let roads: Vec<RoadSegment> = road_ids
        .iter()
        .filter_map(|&i| {
            let r = &inputs.roads[i];
            RoadSegment::new(
                r.id,
                r.polyline().iter().map(|&c| to_m(c)).collect(),
                r.road_class.clone(),
            )
            .ok()
        })
        .collect();

    let empty = |start: Instant| PreparedCity {
        city: city.clone(),
        projection,
        parcels: Vec::new(),
        counts: Vec::new(),
        d_raw: Vec::new(),
        road_count: 0,
        pois_outside_extent: 0,
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    if roads.is_empty() {
        warn!("city {}: no road data", city.city_id);
        return Ok(empty(start));
    }

    let box_m = city_m
        .polygons
        .bounding_rect()
        .ok_or_else(|| Error::InvalidGeometry(format!("city {} has no extent", city.city_id)))?;
    let extent = StudyExtent::rectangle(box_m.min().x, box_m.min().y, box_m.max().x, box_m.max().y)?;
    let delineation = delineate(
        &extent,
        &roads,
        &config.network,
        &config.buffer,
        &config.polygonize,
    )?;

    let mut neighbours: Vec<CityBoundary> = inputs
        .cities
        .iter()
        .filter(|c| {
            c.city_id == city.city_id || c.polygons.bounding_rect().is_some_and(|r| r.intersects(&raw_box))
        })
        .map(|c| project_city(c, projection.as_ref()))
        .collect();
    neighbours.sort_by(|a, b| a.city_id.cmp(&b.city_id));
    let parcels: Vec<ParcelGeometry> = clip_to_cities(delineation.parcels, &neighbours)
        .into_iter()
        .filter(|p| p.city_id.as_ref() == Some(&city.city_id))
        .enumerate()
        .map(|(i, mut p)| {
            p.parcel_id = ParcelId(i as u32);
            p
        })
        .collect();
    if parcels.is_empty() {
        warn!("city {}: no parcels inside the boundary", city.city_id);
        return Ok(PreparedCity {
            road_count: roads.len(),
            ..empty(start)
        });
    }

    let poi_box = expand(raw_box, 1.0, inputs.lon_lat);
    let mut poi_ids: Vec<usize> = inputs
        .poi_index
        .locate_in_envelope(&poi_box)
        .map(|g| g.data)
        .collect();
    poi_ids.sort_unstable();
    let pois: Vec<Poi> = poi_ids
        .iter()
        .map(|&i| {
            let p = &inputs.pois[i];
            Poi {
                location: to_m(p.location),
                ..p.clone()
            }
        })
        .filter(|p| city_m.polygons.intersects(&p.location))
        .collect();
    let assignment = assign_pois_to_parcels(&pois, &parcels, &extent);
    let counts: Vec<CategoryCounts> = parcels.iter().map(|p| assignment.counts(p.parcel_id)).collect();
    let d_raw = parcels
        .iter()
        .zip(&counts)
        .map(|(p, c)| raw_density(c.total(), p.area_m2))
        .collect::<Result<Vec<f64>>>()?;

    info!(
        "city {}: delineated roads={} parcels={} pois={} elapsed={:.2}s",
        city.city_id,
        roads.len(),
        parcels.len(),
        assignment.assigned(),
        start.elapsed().as_secs_f64()
    );
    Ok(PreparedCity {
        city: city.clone(),
        projection,
        parcels,
        counts,
        d_raw,
        road_count: roads.len(),
        pois_outside_extent: assignment.outside_extent,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Characterizes the parcels of a prepared city and runs the automaton.
pub fn simulate_city(
    prepared: PreparedCity,
    density: &DensityContext,
    model: &CalibratedLogit,
    config: &PipelineConfig,
) -> Result<CityResult> {
    let start = Instant::now();
    let city = &prepared.city;
    if prepared.parcels.is_empty() {
        return Ok(CityResult::failed(CityRunSummary::failed(
            city,
            None,
            prepared.elapsed_s,
        )));
    }
    let attributes = prepared
        .parcels
        .iter()
        .zip(&prepared.counts)
        .map(|(p, c)| characterize(p.parcel_id, *c, p.area_m2, density))
        .collect::<Result<Vec<_>>>()?;
    let cells = prepared
        .parcels
        .iter()
        .zip(&attributes)
        .map(|(p, a)| Cell::from_parcel(p, a.d))
        .collect::<Result<Vec<_>>>()?;
    let polygons: Vec<Polygon<f64>> = prepared.parcels.iter().map(|p| p.polygon.clone()).collect();
    let graph = NeighborGraph::build(&polygons, config.ca.neighborhood_radius_m)?;
    let ca = CaConfig {
        target_urban_area_m2: city.total_urban_area_km2 * 1e6,
        ..config.ca
    };
    let outcome = run_constrained_ca(cells, model, &graph, &ca)?;
    let urban: Vec<bool> = outcome.state.cells.iter().map(|c| c.urban).collect();
    let urban_count = urban.iter().filter(|u| **u).count();
    let wall_time_s = prepared.elapsed_s + start.elapsed().as_secs_f64();
    info!(
        "city {}: simulated urban={} steps={} converged={} elapsed={:.2}s",
        city.city_id, urban_count, outcome.state.iteration, outcome.converged, wall_time_s
    );
    let summary = CityRunSummary {
        city_id: city.city_id.clone(),
        name: city.name.clone(),
        parcel_count: prepared.parcels.len(),
        urban_parcel_count: urban_count,
        urban_area_km2: outcome.state.urban_area_m2 / 1e6,
        target_km2: city.total_urban_area_km2,
        converged: outcome.converged,
        iterations: outcome.state.iteration,
        success: urban_count >= config.min_urban_parcels,
        error: None,
        wall_time_s,
    };
    Ok(CityResult {
        summary,
        projection: prepared.projection,
        parcels: prepared.parcels,
        attributes,
        urban,
        trace: outcome.state.trace.unwrap_or_default(),
    })
}

/// One city on its own, standardizing density against its own maximum.
pub fn run_city(
    city: &CityBoundary,
    roads: &[RoadSegment],
    pois: &[Poi],
    model: &CalibratedLogit,
    config: &PipelineConfig,
) -> Result<CityResult> {
    let inputs = Inputs::new(roads.to_vec(), pois.to_vec(), vec![city.clone()], config.crs)?;
    let prepared = prepare_city(city, &inputs, config)?;
    let density = DensityContext::from_raw(prepared.d_raw.iter().copied())?;
    simulate_city(prepared, &density, model, config)
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// In input city order.
    pub cities: Vec<CityResult>,
    pub density: DensityContext,
}

impl BatchResult {
    pub fn failures(&self) -> usize {
        self.cities.iter().filter(|c| c.summary.error.is_some()).count()
    }

    pub fn successes(&self) -> usize {
        self.cities.iter().filter(|c| c.summary.success).count()
    }
}

fn record_failure(city: &CityBoundary, error: Error, elapsed_s: f64) -> CityResult {
    warn!("city {}: {error}", city.city_id);
    CityResult::failed(CityRunSummary::failed(city, Some(error.to_string()), elapsed_s))
}

/// Every city of `inputs`: delineation and POI assignment in parallel, one
/// dataset-wide density maximum, then the automaton in parallel. A failing
/// city is recorded in its summary and does not stop the others.
pub fn run_batch(inputs: &Inputs, model: &CalibratedLogit, config: &PipelineConfig) -> Result<BatchResult> {
    config.ca.validate()?;
    model.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        let prepared: Vec<std::result::Result<PreparedCity, Box<CityResult>>> = inputs
            .cities
            .par_iter()
            .map(|city| {
                let start = Instant::now();
                prepare_city(city, inputs, config)
                    .map_err(|e| Box::new(record_failure(city, e, start.elapsed().as_secs_f64())))
            })
            .collect();
        let density = DensityContext::from_raw(
            prepared
                .iter()
                .filter_map(|p| p.as_ref().ok())
                .flat_map(|p| p.d_raw.iter().copied()),
        )?;
        info!("dataset maximum density {:.3} POIs/km²", density.d_max());
        let cities = prepared
            .into_par_iter()
            .map(|p| match p {
                Err(failed) => *failed,
                Ok(p) => {
                    let city = p.city.clone();
                    let elapsed = p.elapsed_s;
                    simulate_city(p, &density, model, config)
                        .unwrap_or_else(|e| record_failure(&city, e, elapsed))
                }
            })
            .collect();
        Ok(BatchResult { cities, density })
    })
}

/// Parcels of `result` converted back to input coordinates.
pub fn output_polygons(result: &CityResult) -> Vec<Polygon<f64>> {
    result
        .parcels
        .iter()
        .map(|p| match &result.projection {
            Some(proj) => proj.inverse_polygon(&p.polygon),
            None => p.polygon.clone(),
        })
        .collect()
}

/// Reference polygons near `result`'s city, in its local frame.
pub fn localize(result: &CityResult, polygons: &[Polygon<f64>]) -> Vec<Polygon<f64>> {
    match &result.projection {
        Some(p) => polygons.iter().map(|q| p.forward_polygon(q)).collect(),
        None => polygons.to_vec(),
    }
}
