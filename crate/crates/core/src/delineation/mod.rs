//! Road network to road space and parcels.
//!
//! The stages run in order: [`merge_network`] nodes the raw lines,
//! [`trim_dangles`] drops short hanging edges, [`extend_endpoints`] bridges
//! small gaps, [`buffer_road_space`] turns the network into a footprint,
//! [`polygonize_parcels`] keeps what is left of the extent, and
//! [`clip_to_cities`] assigns parcels to administrative areas.

pub mod buffer;
pub mod cities;
pub mod network;
pub mod polygonize;

pub use buffer::{buffer_road_space, BufferProfile, RoadSpace};
pub use cities::{clip_to_cities, AdminLevel, CityBoundary, CityId};
pub use network::{
    extend_endpoints, merge_network, trim_dangles, Edge, NodeId, RoadClass, RoadNetwork, RoadSegment,
};
pub use polygonize::{
    polygonize_parcels, Delineation, ParcelGeometry, ParcelId, PolygonizeOptions, StudyExtent,
};

use crate::error::Result;

/// Thresholds for the line-work stages.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NetworkOptions {
    pub trim_threshold_m: f64,
    pub extension_m: f64,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            trim_threshold_m: 200.0,
            extension_m: 20.0,
        }
    }
}

/// Runs noding, trimming, extension, buffering and polygonization.
pub fn delineate(
    extent: &StudyExtent,
    roads: &[RoadSegment],
    network: &NetworkOptions,
    profile: &BufferProfile,
    polygonize: &PolygonizeOptions,
) -> Result<Delineation> {
    profile.validate()?;
    let merged = merge_network(roads);
    let trimmed = trim_dangles(&merged, network.trim_threshold_m);
    let extended = extend_endpoints(&trimmed, network.extension_m);
    let road_space = buffer_road_space(&extended, profile)?;
    Ok(polygonize_parcels(extent, &road_space, polygonize))
}
