//! GeoJSON and delimited-text ingestion, and GeoJSON parcel output.
//!
//! Readers keep coordinates as found in the file; projection to meters
//! happens per city in the pipeline. Malformed features are skipped and
//! counted in a [`LoadReport`]; unreadable files and missing required
//! properties are fatal.

mod features;
mod pois;
mod samples;

pub use features::{
    city_feature, load_cities, load_polygons, load_roads, polygon_feature, read_feature_collection,
    road_feature, write_feature_collection, CityFields, RoadFields,
};
pub use pois::{load_pois, load_pois_csv, load_pois_geojson, write_pois_csv, PoiFields};
pub use samples::load_logit_samples;

/// Outcome of reading one input file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
    /// One line per skipped feature.
    pub messages: Vec<String>,
}

impl LoadReport {
    pub(crate) fn skip(&mut self, message: String) {
        log::warn!("{message}");
        self.skipped += 1;
        self.messages.push(message);
    }
}
