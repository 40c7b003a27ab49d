use std::collections::BTreeMap;

use geo::{unary_union, MultiPolygon, Polygon};
use serde::{Deserialize, Serialize};

use super::network::{RoadClass, RoadNetwork};
use crate::error::{Error, Result};
use crate::geom::capsule;

/// Half-widths (meters) used to buffer each road class into road space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BufferProfile {
    /// Deserialized entries add to or replace the default classes.
    #[serde(deserialize_with = "merge_with_default_widths")]
    pub widths: BTreeMap<String, f64>,
    /// Width for classes missing from `widths`.
    pub default_width: f64,
    /// Chords per half-circle in the round caps.
    pub arc_segments: usize,
}

fn merge_with_default_widths<'de, D>(deserializer: D) -> Result<BTreeMap<String, f64>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let mut widths = BufferProfile::default().widths;
    widths.extend(BTreeMap::<String, f64>::deserialize(deserializer)?);
    Ok(widths)
}

impl Default for BufferProfile {
    fn default() -> Self {
        let widths = [
            ("highway", 30.0),
            ("motorway", 30.0),
            ("trunk", 30.0),
            ("primary", 20.0),
            ("secondary", 12.0),
            ("tertiary", 8.0),
            ("local", 4.0),
            ("residential", 4.0),
            ("unclassified", 4.0),
            ("living_street", 4.0),
            ("service", 4.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        BufferProfile {
            widths,
            default_width: 2.0,
            arc_segments: 8,
        }
    }
}

impl BufferProfile {
    pub fn uniform(width: f64) -> Self {
        BufferProfile {
            widths: BTreeMap::new(),
            default_width: width,
            ..BufferProfile::default()
        }
    }

    pub fn with_width(mut self, class: &str, width: f64) -> Self {
        self.widths.insert(class.to_string(), width);
        self
    }

    pub fn width_for(&self, class: &RoadClass) -> f64 {
        self.widths
            .get(class.as_str())
            .copied()
            .unwrap_or(self.default_width)
    }

    /// Rejects non-positive or non-finite widths.
    pub fn validate(&self) -> Result<()> {
        let bad = |w: f64| !(w.is_finite() && w > 0.0);
        if bad(self.default_width) {
            return Err(Error::Config(format!(
                "default buffer width must be positive, got {}",
                self.default_width
            )));
        }
        if let Some((class, w)) = self.widths.iter().find(|(_, w)| bad(**w)) {
            return Err(Error::Config(format!(
                "buffer width for `{class}` must be positive, got {w}"
            )));
        }
        if self.arc_segments < 2 {
            return Err(Error::Config("arc_segments must be at least 2".into()));
        }
        Ok(())
    }

    /// Same profile with every width multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        BufferProfile {
            widths: self.widths.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
            default_width: self.default_width * factor,
            arc_segments: self.arc_segments,
        }
    }
}

/// Buffered footprint of the road network.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSpace(pub MultiPolygon<f64>);

impl Default for RoadSpace {
    fn default() -> Self {
        RoadSpace(MultiPolygon::new(vec![]))
    }
}

impl RoadSpace {
    pub fn area(&self) -> f64 {
        crate::geom::multi_polygon_area(&self.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 .0.is_empty()
    }
}

/// Union of round-capped buffers around every straight stretch of every edge.
pub fn buffer_road_space(network: &RoadNetwork, profile: &BufferProfile) -> Result<RoadSpace> {
    profile.validate()?;
    let capsules: Vec<Polygon<f64>> = network
        .edges()
        .iter()
        .flat_map(|e| {
            let w = profile.width_for(&e.road_class);
            e.polyline
                .windows(2)
                .map(move |s| capsule(s[0], s[1], w, profile.arc_segments))
        })
        .collect();
    if capsules.is_empty() {
        return Ok(RoadSpace::default());
    }
    Ok(RoadSpace(unary_union(&capsules)))
}
