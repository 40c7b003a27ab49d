//! Batch driver: loads inputs, runs delineation, characterization and the
//! automaton per city, and writes the results.

mod config;
mod output;
mod run;

pub use config::{FieldConfig, InputPaths, PipelineConfig};
pub use output::{write_city_outputs, write_outputs, OutputFiles};
pub use run::{
    default_model, load_inputs, localize, output_polygons, prepare_city, resolve_model, run_batch, run_city,
    simulate_city, BatchResult, CityResult, CityRunSummary, Inputs, PreparedCity, DEFAULT_MODEL_TOML,
};
