use log::warn;

use super::{Category, CategoryCounts};
use crate::delineation::ParcelId;
use crate::error::{Error, Result};

/// POIs per km², floored at one POI per km².
pub fn raw_density(poi_count: u64, area_m2: f64) -> Result<f64> {
    if !(area_m2 > 0.0 && area_m2.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "parcel area must be positive, got {area_m2}"
        )));
    }
    Ok((poi_count as f64 / (area_m2 / 1e6)).max(1.0))
}

/// The largest raw density of the dataset being processed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityContext {
    d_max: f64,
}

impl DensityContext {
    pub fn new(d_max: f64) -> Result<Self> {
        if !(d_max >= 1.0 && d_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "maximum density must be finite and at least 1, got {d_max}"
            )));
        }
        if d_max == 1.0 {
            warn!("every parcel is at the floor density; standardized densities are all 0");
        }
        Ok(DensityContext { d_max })
    }

    /// Context from all raw densities of a run (empty input gives `d_max = 1`).
    pub fn from_raw(densities: impl IntoIterator<Item = f64>) -> Result<Self> {
        Self::new(densities.into_iter().fold(1.0, f64::max))
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }
}

/// `ln(d_raw) / ln(d_max)`, in `[0, 1]`.
pub fn standardize_density(d_raw: f64, context: &DensityContext) -> f64 {
    if context.d_max <= 1.0 {
        return 0.0;
    }
    debug_assert!(d_raw >= 1.0 && d_raw <= context.d_max * (1.0 + 1e-12));
    (d_raw.ln() / context.d_max.ln()).clamp(0.0, 1.0)
}

/// The classified category holding strictly more than half of the
/// classified POIs. `OTH` never dominates and is left out of the total.
pub fn dominant_function(counts: &CategoryCounts) -> Option<Category> {
    let total = counts.classified_total();
    Category::CLASSIFIED
        .into_iter()
        .find(|&c| 2 * counts.get(c) > total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandUseMix {
    /// Shannon entropy of the classified category shares, in nats.
    pub raw: f64,
    /// `raw / ln 7`.
    pub normalized: f64,
}

/// Entropy of the shares of the seven classified categories (`OTH` excluded).
pub fn mix_index(counts: &CategoryCounts) -> LandUseMix {
    let total = counts.classified_total();
    if total == 0 {
        return LandUseMix {
            raw: 0.0,
            normalized: 0.0,
        };
    }
    let total_f = total as f64;
    let raw: f64 = Category::CLASSIFIED
        .into_iter()
        .map(|c| counts.get(c))
        .filter(|&n| n > 0)
        .map(|n| {
            let p = n as f64 / total_f;
            p * (total_f / n as f64).ln()
        })
        .sum();
    let max = 7f64.ln();
    let raw = raw.clamp(0.0, max);
    LandUseMix {
        raw,
        normalized: (raw / max).clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParcelAttributes {
    pub parcel_id: ParcelId,
    pub poi_counts: CategoryCounts,
    pub d_raw: f64,
    pub d: f64,
    pub dominant: Option<Category>,
    pub mix_raw: f64,
    pub mix_norm: f64,
}

/// All POI-derived attributes of one parcel.
pub fn characterize(
    parcel_id: ParcelId,
    counts: CategoryCounts,
    area_m2: f64,
    context: &DensityContext,
) -> Result<ParcelAttributes> {
    let d_raw = raw_density(counts.total(), area_m2)?;
    let mix = mix_index(&counts);
    Ok(ParcelAttributes {
        parcel_id,
        poi_counts: counts,
        d_raw,
        d: standardize_density(d_raw, context),
        dominant: dominant_function(&counts),
        mix_raw: mix.raw,
        mix_norm: mix.normalized,
    })
}
