use std::fs;
use std::path::Path;

use geo::Coord;
use urban_parcels::ca::CalibratedLogit;
use urban_parcels::delineation::{CityBoundary, CityId};
use urban_parcels::io::load_polygons;
use urban_parcels::pipeline::{
    default_model, load_inputs, run_batch, run_city, write_outputs, Inputs, PipelineConfig,
};
use urban_parcels::projection::{InputCrs, LocalProjection};
use urban_parcels::synthetic::{Dataset, GridCity};

fn grid(x: f64) -> GridCity {
    GridCity::new(Coord { x, y: 4_000_000.0 }, 5, 5, 200.0)
}

fn config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        output_dir: out.to_path_buf(),
        ..PipelineConfig::default()
    }
}

fn two_city_dataset() -> Dataset {
    let mut d = Dataset::default();
    d.add_grid(&grid(500_000.0), "alpha", 0.15, 400, 1).unwrap();
    d.add_grid(&grid(510_000.0), "beta", 0.25, 300, 2).unwrap();
    d
}

#[test]
fn grid_city_selects_exactly_eight_parcels() {
    let g = grid(500_000.0);
    let roads = g.roads(0, "residential");
    let pois = g.pois(500, 7);
    let probe = run_city(
        &g.city("probe", 0.0).unwrap(),
        &roads,
        &pois,
        &default_model(),
        &PipelineConfig::default(),
    )
    .unwrap();
    assert_eq!(probe.parcels.len(), 25);
    let areas: Vec<f64> = probe.parcels.iter().map(|p| p.area_m2).collect();
    let nominal = areas.iter().sum::<f64>() / 25.0;
    assert!(areas.iter().all(|a| (a - nominal).abs() < 1e-6 * nominal));

    let city = g.city("grid", 8.0 * nominal * (1.0 - 1e-6) / 1e6).unwrap();
    let result = run_city(&city, &roads, &pois, &default_model(), &PipelineConfig::default()).unwrap();
    assert_eq!(result.summary.urban_parcel_count, 8);
    assert!(result.summary.converged);
    assert!(!result.summary.success);
    assert_eq!(result.urban.iter().filter(|u| **u).count(), 8);
}

#[test]
fn few_urban_parcels_is_not_a_success() {
    let g = grid(500_000.0);
    let city = g.city("small", 0.05).unwrap();
    let result = run_city(
        &city,
        &g.roads(0, "primary"),
        &g.pois(100, 3),
        &default_model(),
        &PipelineConfig::default(),
    )
    .unwrap();
    assert!(result.summary.urban_parcel_count < 10);
    assert!(!result.summary.success);
    assert!(result.summary.error.is_none());
}

#[test]
fn city_without_roads_yields_no_parcels() {
    let g = grid(500_000.0);
    let result = run_city(
        &g.city("empty", 0.1).unwrap(),
        &[],
        &[],
        &default_model(),
        &PipelineConfig::default(),
    )
    .unwrap();
    assert_eq!(result.summary.parcel_count, 0);
    assert!(!result.summary.success);
}

#[test]
fn excessive_target_fails_one_city_only() {
    let mut d = two_city_dataset();
    d.cities[0].total_urban_area_km2 = 50.0;
    let inputs = Inputs::new(d.roads, d.pois, d.cities, InputCrs::Auto).unwrap();
    let batch = run_batch(&inputs, &default_model(), &PipelineConfig::default()).unwrap();
    assert_eq!(batch.failures(), 1);
    assert!(batch.cities[0]
        .summary
        .error
        .as_deref()
        .unwrap()
        .contains("exceeds"));
    assert!(batch.cities[1].summary.error.is_none());
    assert!(batch.cities[1].summary.converged);
}

#[test]
fn two_city_batch_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut d = two_city_dataset();
    let failed = CityBoundary::new(
        CityId::new("gamma"),
        "gamma",
        geo::MultiPolygon::new(vec![grid(530_000.0).boundary()]),
        0.1,
    )
    .unwrap();
    d.cities.push(failed);
    let paths = d.write(dir.path()).unwrap();
    let mut config = config(&dir.path().join("out"));
    config.inputs.roads = Some(paths.roads);
    config.inputs.pois = Some(paths.pois);
    config.inputs.cities = Some(paths.cities);
    let inputs = load_inputs(&config).unwrap();
    assert_eq!(inputs.total_skipped(), 0);
    let batch = run_batch(&inputs, &default_model(), &config).unwrap();
    write_outputs(&batch, &config, None).unwrap();

    let out = dir.path().join("out");
    let listing = |sub: &str| {
        let mut names: Vec<String> = fs::read_dir(out.join(sub))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        names
    };
    assert_eq!(listing("parcels"), ["alpha.geojson", "beta.geojson"]);
    assert_eq!(listing("attributes"), ["alpha.csv", "beta.csv"]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.lines().any(|l| l.starts_with("gamma,gamma,0,0,")));
    let alpha = &batch.cities[0];
    let header = fs::read_to_string(out.join("attributes/alpha.csv")).unwrap();
    assert!(
        header.starts_with("parcel_id,COM,OBS,TRA,OTH,GOV,EDU,RES,GRE,d_raw,d,dominant,mix_raw,mix_norm\n")
    );
    assert_eq!(header.lines().count(), alpha.parcels.len() + 1);
}

#[test]
fn written_parcels_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let projection = LocalProjection::centered_at(116.4, 39.9);
    let d = two_city_dataset();
    let shift = |c: Coord<f64>| Coord {
        x: c.x - 505_000.0,
        y: c.y - 4_000_500.0,
    };
    let local = Dataset {
        roads: d
            .roads
            .iter()
            .map(|r| {
                urban_parcels::delineation::RoadSegment::new(
                    r.id,
                    r.polyline().iter().map(|&c| shift(c)).collect(),
                    r.road_class.clone(),
                )
                .unwrap()
            })
            .collect(),
        pois: d
            .pois
            .iter()
            .map(|p| urban_parcels::poi::Poi {
                location: shift(p.location),
                ..p.clone()
            })
            .collect(),
        cities: d
            .cities
            .iter()
            .map(|c| CityBoundary {
                polygons: geo::MultiPolygon::new(
                    c.polygons
                        .iter()
                        .map(|p| geo::MapCoords::map_coords(p, shift))
                        .collect(),
                ),
                ..c.clone()
            })
            .collect(),
    };
    let lon_lat = local.to_lon_lat(&projection).unwrap();
    let inputs = Inputs::new(lon_lat.roads, lon_lat.pois, lon_lat.cities, InputCrs::Auto).unwrap();
    assert!(inputs.lon_lat);
    let config = config(dir.path());
    let batch = run_batch(&inputs, &default_model(), &config).unwrap();
    let files = write_outputs(&batch, &config, None).unwrap();
    for (city, files) in batch.cities.iter().zip(&files) {
        let (reloaded, report) = load_polygons(files.parcels.as_ref().unwrap()).unwrap();
        assert_eq!(report.skipped, 0);
        let written = urban_parcels::pipeline::output_polygons(city);
        assert_eq!(reloaded.len(), written.len());
        for (a, b) in reloaded.iter().zip(&written) {
            assert_eq!(a.exterior().0.len(), b.exterior().0.len());
            for (p, q) in a.exterior().0.iter().zip(&b.exterior().0) {
                assert!((p.x - q.x).abs() <= 1e-9 * q.x.abs().max(1.0));
                assert!((p.y - q.y).abs() <= 1e-9 * q.y.abs().max(1.0));
                assert!((80.0..180.0).contains(&p.x) && (0.0..90.0).contains(&p.y));
            }
        }
    }
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let paths = two_city_dataset().write(dir.path()).unwrap();
    let text = fs::read_to_string(&paths.cities).unwrap();
    let mut fc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let ring = &mut fc["features"][1]["geometry"]["coordinates"][0][0];
    ring.as_array_mut().unwrap().pop();
    fs::write(&paths.cities, fc.to_string()).unwrap();

    let mut config = config(dir.path());
    config.inputs.roads = Some(paths.roads.clone());
    config.inputs.cities = Some(paths.cities.clone());
    let inputs = load_inputs(&config).unwrap();
    assert_eq!(inputs.cities.len(), 1);
    assert_eq!(inputs.total_skipped(), 1);

    config.inputs.roads = Some(dir.path().join("missing.geojson"));
    let err = load_inputs(&config).unwrap_err().to_string();
    assert!(err.contains("missing.geojson"), "{err}");
}

#[test]
fn model_selection_prefers_samples_then_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::default();
    assert_eq!(
        urban_parcels::pipeline::resolve_model(&config).unwrap(),
        default_model()
    );
    let model = CalibratedLogit::unscaled(0.1, -0.2, 0.3, 0.4);
    let path = dir.path().join("model.toml");
    model.save(&path).unwrap();
    config.inputs.model = Some(path);
    assert_eq!(urban_parcels::pipeline::resolve_model(&config).unwrap(), model);
}
