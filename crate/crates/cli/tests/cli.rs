use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geo::Coord;
use urban_parcels::synthetic::{Dataset, GridCity};

fn parcels(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parcels"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn dataset(dir: &Path, targets: [f64; 2]) -> urban_parcels::synthetic::DatasetPaths {
    let mut d = Dataset::default();
    for (i, (id, target)) in ["north", "south"].iter().zip(targets).enumerate() {
        let grid = GridCity::new(
            Coord {
                x: 300_000.0,
                y: 3_000_000.0 + 5_000.0 * i as f64,
            },
            6,
            4,
            150.0,
        );
        d.add_grid(&grid, id, target, 300, i as u64).unwrap();
    }
    d.write(dir).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset(dir.path(), [0.1, 0.2]);
    let mut outputs = Vec::new();
    for jobs in ["1", "8"] {
        let out = dir.path().join(format!("out{jobs}"));
        let o = parcels(&[
            "run",
            "--roads",
            s(&paths.roads),
            "--pois",
            s(&paths.pois),
            "--cities",
            s(&paths.cities),
            "--out",
            s(&out),
            "--jobs",
            jobs,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out);
    }
    for file in [
        "summary.csv",
        "attributes/north.csv",
        "attributes/south.csv",
        "parcels/north.geojson",
    ] {
        assert_eq!(
            fs::read(outputs[0].join(file)).unwrap(),
            fs::read(outputs[1].join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), [0.1, 0.2]);
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "output_dir = \"results\"\n[inputs]\nroads = \"roads.geojson\"\ncities = \"cities.geojson\"\npois = \"pois.csv\"\n[ca]\nthreshold = 0.9\n",
    )
    .unwrap();
    let o = parcels(&[
        "run",
        "--config",
        s(&config),
        "--threshold",
        "0.4",
        "--radius",
        "300",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("results/summary.csv").exists());
}

#[test]
fn failed_city_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset(dir.path(), [0.1, 99.0]);
    let out = dir.path().join("out");
    let o = parcels(&[
        "run",
        "--roads",
        s(&paths.roads),
        "--cities",
        s(&paths.cities),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("exceeds"));
    assert!(out.join("parcels/north.geojson").exists());
    assert!(!out.join("parcels/south.geojson").exists());
}

#[test]
fn missing_input_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let o = parcels(&[
        "run",
        "--roads",
        s(&dir.path().join("nowhere.geojson")),
        "--cities",
        s(&dir.path().join("cities.geojson")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.geojson"));
}

#[test]
fn calibrate_validate_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.csv");
    let mut text = String::from("size_ha,compactness,density,urban\n");
    for i in 0..200 {
        let size = 0.5 + (i % 17) as f64;
        let density = (i % 11) as f64 / 10.0;
        let urban = (i * 7919) % 100 < (30.0 + 50.0 * density) as usize;
        text.push_str(&format!(
            "{size},{},{density},{}\n",
            0.3 + (i % 5) as f64 / 10.0,
            urban as u8
        ));
    }
    fs::write(&samples, text).unwrap();
    let model = dir.path().join("model.toml");
    let o = parcels(&["calibrate", "--samples", s(&samples), "--out", s(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(urban_parcels::ca::CalibratedLogit::load(&model).is_ok());

    let paths = dataset(dir.path(), [0.1, 0.2]);
    let out = dir.path().join("out");
    let o = parcels(&[
        "run",
        "--roads",
        s(&paths.roads),
        "--cities",
        s(&paths.cities),
        "--model",
        s(&model),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let north = out.join("parcels/north.geojson");

    let csv = dir.path().join("overlap.csv");
    let o = parcels(&["validate", s(&north), s(&north), "--csv", s(&csv)]);
    assert!(o.status.success());
    let report = fs::read_to_string(&csv).unwrap();
    assert!(report.lines().nth(1).unwrap().ends_with(",1.000000"), "{report}");

    let o = parcels(&["stats", s(&north), "--rings", "200,400,2000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("parcels        24"), "{stdout}");
    assert!(stdout.contains("ring_3"));
}
