//! Constrained vector cellular automaton that selects the urban parcels of a
//! city until its urban-area budget is met.
//!
//! Each parcel is a cell. A cell's transition probability is its attribute
//! probability (a logistic score of size, compactness and POI density) times
//! the urban share of the parcels within the neighborhood radius.

mod engine;
mod logit;
mod neighbors;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::delineation::{ParcelGeometry, ParcelId};
use crate::error::{Error, Result};

pub use engine::{
    attribute_probabilities, ca_step, run_constrained_ca, run_with_attributes, CaConfig, CaOutcome, CaState,
    StepKind, StepReport, TraceRecord,
};
pub use logit::{
    attribute_probability, fit_logit, sigmoid, CalibratedLogit, FeatureScaling, Features, FitOptions,
    LogitFit, LogitSample,
};
pub use neighbors::{transition_probability, NeighborGraph};

/// Isoperimetric quotient `4πA/P²`, capped at 1.
pub fn compactness(area_m2: f64, perimeter_m: f64) -> Result<f64> {
    if !(area_m2 > 0.0 && perimeter_m > 0.0 && area_m2.is_finite() && perimeter_m.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "compactness needs positive area and perimeter, got {area_m2} and {perimeter_m}"
        )));
    }
    Ok((4.0 * PI * area_m2 / (perimeter_m * perimeter_m)).min(1.0))
}

/// A parcel as seen by the automaton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub parcel_id: ParcelId,
    pub urban: bool,
    pub size_m2: f64,
    /// In `(0, 1]`.
    pub compactness: f64,
    /// Standardized POI density, in `[0, 1]`.
    pub density_std: f64,
}

impl Cell {
    /// Non-urban cell for a parcel.
    pub fn from_parcel(parcel: &ParcelGeometry, density_std: f64) -> Result<Cell> {
        Ok(Cell {
            parcel_id: parcel.parcel_id,
            urban: false,
            size_m2: parcel.area_m2,
            compactness: compactness(parcel.area_m2, parcel.perimeter_m)?,
            density_std,
        })
    }

    pub fn features(&self) -> Features {
        Features {
            size_ha: self.size_m2 / 1e4,
            compactness: self.compactness,
            density: self.density_std,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{polygon_area, polygon_perimeter, rectangle};
    use geo::{Coord, LineString, Polygon};

    #[test]
    fn compactness_examples() {
        let circle = Polygon::new(
            LineString::from(
                (0..=4096)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / 4096.0;
                        Coord {
                            x: t.cos(),
                            y: t.sin(),
                        }
                    })
                    .collect::<Vec<_>>(),
            ),
            vec![],
        );
        let c = compactness(polygon_area(&circle), polygon_perimeter(&circle)).unwrap();
        assert!((c - 1.0).abs() < 1e-6);
        let sq = rectangle(0.0, 0.0, 7.0, 7.0);
        let c = compactness(polygon_area(&sq), polygon_perimeter(&sq)).unwrap();
        assert!((c - PI / 4.0).abs() < 1e-15);
        let r = rectangle(0.0, 0.0, 10.0, 1.0);
        let c = compactness(polygon_area(&r), polygon_perimeter(&r)).unwrap();
        assert!((c - 40.0 * PI / 484.0).abs() < 1e-15);
        assert!((c - 0.2596).abs() < 1e-4);
        assert!(compactness(0.0, 1.0).is_err());
        assert!(compactness(1.0, -1.0).is_err());
        // A perimeter below the isoperimetric bound is capped.
        assert_eq!(compactness(1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn cell_from_parcel() {
        let p = ParcelGeometry::new(ParcelId(4), rectangle(0.0, 0.0, 100.0, 200.0));
        let c = Cell::from_parcel(&p, 0.25).unwrap();
        assert_eq!(c.parcel_id, ParcelId(4));
        assert!(!c.urban);
        assert_eq!(c.features().size_ha, 2.0);
        assert!((c.compactness - 4.0 * PI * 20_000.0 / 360_000.0).abs() < 1e-12);
    }
}
