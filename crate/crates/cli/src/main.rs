use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use geo::{BoundingRect, Coord, MultiPolygon, Polygon};
use log::{info, warn};
use urban_parcels::ca::fit_logit;
use urban_parcels::io::{load_logit_samples, load_polygons};
use urban_parcels::pipeline::{load_inputs, resolve_model, run_batch, write_outputs, PipelineConfig};
use urban_parcels::projection::{looks_like_lon_lat, LocalProjection};
use urban_parcels::validation::{
    area_overlap_ratio, size_distribution_stats, zone_areas, zone_distribution, Zone, ZonePartition,
};

/// Urban parcel delineation, characterization and simulation.
#[derive(Debug, Parser)]
#[command(name = "parcels", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Delineate, characterize and simulate every city.
    Run(RunArgs),
    /// Fit the attribute model from a labeled feature table.
    Calibrate(CalibrateArgs),
    /// Compare two parcel datasets by area overlap.
    Validate(ValidateArgs),
    /// Size statistics and per-zone areas of a parcel dataset.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    roads: Option<PathBuf>,
    #[arg(long)]
    pois: Option<PathBuf>,
    #[arg(long)]
    cities: Option<PathBuf>,
    /// Reference parcels for per-city overlap reports.
    #[arg(long)]
    references: Option<PathBuf>,
    /// Labeled samples to fit the attribute model on.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// A fitted attribute model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Transition probability needed to convert.
    #[arg(long)]
    threshold: Option<f64>,
    /// Neighborhood radius in meters.
    #[arg(long)]
    radius: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Disable seeding and the single-cell fallback.
    #[arg(long)]
    seedless: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// CSV with size_ha, compactness, density and urban columns.
    #[arg(long)]
    samples: PathBuf,
    /// Where to write the fitted model.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Parcels under test.
    a: PathBuf,
    /// Reference parcels.
    b: PathBuf,
    #[arg(long, default_value = "a")]
    label_a: String,
    #[arg(long, default_value = "b")]
    label_b: String,
    /// Also write the comparison as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    parcels: PathBuf,
    /// Second dataset for per-zone ratios.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Ring radii in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    rings: Vec<f64>,
    /// Ring center as `x,y` in input coordinates; the bounding box center
    /// by default.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    center: Option<Vec<f64>>,
    /// Zone polygons, named zone_1, zone_2 and so on in file order.
    #[arg(long, conflicts_with = "rings")]
    zones: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Calibrate(args) => calibrate(args).map(|()| true),
        Command::Validate(args) => validate(args).map(|()| true),
        Command::Stats(args) => stats(args).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run_config(args: &RunArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let inputs = &mut config.inputs;
    for (slot, flag) in [
        (&mut inputs.roads, &args.roads),
        (&mut inputs.pois, &args.pois),
        (&mut inputs.cities, &args.cities),
        (&mut inputs.reference_parcels, &args.references),
        (&mut inputs.calibration_samples, &args.samples),
        (&mut inputs.model, &args.model),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(out) = &args.out {
        config.output_dir.clone_from(out);
    }
    if let Some(t) = args.threshold {
        config.ca.threshold = t;
    }
    if let Some(r) = args.radius {
        config.ca.neighborhood_radius_m = r;
    }
    if let Some(j) = args.jobs {
        config.jobs = j;
    }
    if args.seedless {
        config.ca.seeding = false;
    }
    config.validate()?;
    Ok(config)
}

/// `Ok(false)` when any city failed.
fn run(args: RunArgs) -> Result<bool> {
    let config = run_config(&args)?;
    let inputs = load_inputs(&config)?;
    let model = resolve_model(&config)?;
    let references = match &config.inputs.reference_parcels {
        Some(path) => Some(load_polygons(path)?.0),
        None => None,
    };
    let batch = run_batch(&inputs, &model, &config)?;
    write_outputs(&batch, &config, references.as_deref())?;
    info!(
        "{} cities, {} successful, {} failed; results in {}",
        batch.cities.len(),
        batch.successes(),
        batch.failures(),
        config.output_dir.display()
    );
    Ok(batch.failures() == 0)
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let (samples, _) = load_logit_samples(&args.samples)?;
    let fit = fit_logit(&samples, &Default::default())?;
    if !fit.converged {
        warn!(
            "fit stopped after {} iterations without converging",
            fit.iterations
        );
    }
    fit.model.save(&args.out)?;
    let raw = fit.model.raw_coefficients();
    let se = fit.raw_std_errors();
    println!("samples     {}", samples.len());
    println!("iterations  {}", fit.iterations);
    println!("log-lik     {:.4}", fit.log_likelihood);
    for (i, name) in ["intercept", "size_ha", "compactness", "density"]
        .iter()
        .enumerate()
    {
        match se {
            Some(se) => println!("{name:<11} {:>12.6}  (se {:.6})", raw[i], se[i]),
            None => println!("{name:<11} {:>12.6}", raw[i]),
        }
    }
    println!("model written to {}", args.out.display());
    Ok(())
}

/// Projects every dataset to one local frame when all are lon/lat.
fn common_frame(sets: &mut [&mut Vec<Polygon<f64>>]) -> Result<Option<LocalProjection>> {
    let votes: Vec<bool> = sets
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| looks_like_lon_lat(s.iter().flat_map(|p| p.exterior().0.iter())))
        .collect();
    if !votes.iter().any(|v| *v) {
        return Ok(None);
    }
    if !votes.iter().all(|v| *v) {
        bail!("datasets mix longitude/latitude and projected coordinates");
    }
    let all = MultiPolygon::new(sets.iter().flat_map(|s| s.iter().cloned()).collect());
    let center = all.bounding_rect().context("no geometry")?.center();
    let projection = LocalProjection::centered_at(center.x, center.y);
    for set in sets.iter_mut() {
        for p in set.iter_mut() {
            *p = projection.forward_polygon(p);
        }
    }
    Ok(Some(projection))
}

fn load(path: &Path) -> Result<Vec<Polygon<f64>>> {
    let (polygons, report) = load_polygons(path)?;
    if report.skipped > 0 {
        warn!("{}: skipped {} features", path.display(), report.skipped);
    }
    Ok(polygons)
}

fn validate(args: ValidateArgs) -> Result<()> {
    let mut a = load(&args.a)?;
    let mut b = load(&args.b)?;
    common_frame(&mut [&mut a, &mut b])?;
    let report = area_overlap_ratio(&a, &b);
    print!("{}", report.summary_block(&args.label_a, &args.label_b));
    if let Some(path) = &args.csv {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(&args.label_a, &args.label_b, file)?;
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let mut parcels = load(&args.parcels)?;
    let mut other = match &args.compare {
        Some(path) => load(path)?,
        None => Vec::new(),
    };
    let mut zone_polys = match &args.zones {
        Some(path) => load(path)?,
        None => Vec::new(),
    };
    let input_box = MultiPolygon::new(parcels.clone())
        .bounding_rect()
        .context("no parcels")?;
    let center = args
        .center
        .as_ref()
        .map_or(input_box.center(), |c| Coord { x: c[0], y: c[1] });
    let projection = common_frame(&mut [&mut parcels, &mut other, &mut zone_polys])?;

    let sizes: Vec<f64> = parcels.iter().map(urban_parcels::geom::polygon_area).collect();
    let s = size_distribution_stats(&sizes)?;
    println!("parcels        {}", s.count);
    println!("mean size ha   {:.4}", s.mean_ha);
    println!("mean ln(ha)    {:.4}", s.mean_log);
    println!("sd ln(ha)      {:.4}", s.sd_log);

    let zones = if !args.rings.is_empty() {
        let center = projection.map_or(center, |p| p.forward(center));
        Some(ZonePartition::rings(center, &args.rings, 128)?)
    } else if args.zones.is_some() {
        let zones = zone_polys
            .into_iter()
            .enumerate()
            .map(|(i, p)| Zone {
                name: format!("zone_{}", i + 1),
                area: MultiPolygon::new(vec![p]),
            })
            .collect();
        Some(ZonePartition::new(zones)?)
    } else {
        None
    };
    if let Some(zones) = zones {
        if other.is_empty() {
            for (name, km2) in zones.names().iter().zip(zone_areas(&parcels, &zones)) {
                println!("{name:<14} {km2:.4} km2");
            }
        } else {
            print!(
                "{}",
                zone_distribution(&parcels, &other, &zones).summary_block("parcels", "compare")
            );
        }
    }
    Ok(())
}
