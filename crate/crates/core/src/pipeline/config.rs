use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ca::{CaConfig, FitOptions};
use crate::delineation::{BufferProfile, NetworkOptions, PolygonizeOptions};
use crate::error::{Error, Result};
use crate::io::{CityFields, PoiFields, RoadFields};
use crate::projection::InputCrs;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub roads: Option<PathBuf>,
    pub pois: Option<PathBuf>,
    pub cities: Option<PathBuf>,
    /// Parcels to compare the result against.
    pub reference_parcels: Option<PathBuf>,
    /// Labeled feature table for fitting the attribute model.
    pub calibration_samples: Option<PathBuf>,
    /// A fitted attribute model, used when no samples are given.
    pub model: Option<PathBuf>,
    /// Two-column table from provider labels to categories.
    pub category_mapping: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub roads: RoadFields,
    pub cities: CityFields,
    pub pois: PoiFields,
}

/// Everything a batch run needs. Loaded from TOML; every table and key is
/// optional. The automaton's target is set per city and ignored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub output_dir: PathBuf,
    pub crs: InputCrs,
    pub fields: FieldConfig,
    pub network: NetworkOptions,
    pub buffer: BufferProfile,
    pub polygonize: PolygonizeOptions,
    pub ca: CaConfig,
    pub calibration: FitOptions,
    /// Cities with fewer urban parcels count as unsuccessful.
    pub min_urban_parcels: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: InputPaths::default(),
            output_dir: PathBuf::from("out"),
            crs: InputCrs::Auto,
            fields: FieldConfig::default(),
            network: NetworkOptions::default(),
            buffer: BufferProfile::default(),
            polygonize: PolygonizeOptions::default(),
            ca: CaConfig {
                record_trace: true,
                ..CaConfig::default()
            },
            calibration: FitOptions::default(),
            min_urban_parcels: 10,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Reads a TOML file; relative paths inside resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text).map_err(|e| Error::file(path, e.to_string()))?;
        if let Some(base) = path.parent() {
            config.resolve_relative_to(base);
        }
        Ok(config)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.roads,
            &mut i.pois,
            &mut i.cities,
            &mut i.reference_parcels,
            &mut i.calibration_samples,
            &mut i.model,
            &mut i.category_mapping,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("network.trim_threshold_m", self.network.trim_threshold_m)?;
        positive("network.extension_m", self.network.extension_m)?;
        positive("polygonize.min_parcel_m2", self.polygonize.min_parcel_m2)?;
        positive("polygonize.sliver_m2", self.polygonize.sliver_m2)?;
        self.buffer.validate()?;
        self.ca.validate()?;
        if self.min_urban_parcels == 0 {
            return Err(Error::Config("min_urban_parcels must be positive".into()));
        }
        if self.inputs.roads.is_none() || self.inputs.cities.is_none() {
            return Err(Error::Config("roads and cities inputs are required".into()));
        }
        Ok(())
    }
}
