//! Comparison statistics between parcel datasets: area overlap, zonal
//! distribution, size distribution, correlation and classification scores.

use std::fmt::Write as _;
use std::io::Write;

use geo::{unary_union, BooleanOps, BoundingRect, Contains, Intersects, MultiPolygon, Polygon};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{multi_polygon_area, polygon_area};

const M2_PER_KM2: f64 = 1e6;
const M2_PER_HA: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub area_a_km2: f64,
    pub area_b_km2: f64,
    /// Area of the intersection of the two unions.
    pub intersection_km2: f64,
    /// Intersection over the area of A; absent when A is empty.
    pub ratio_of_a: Option<f64>,
    /// Intersection over the area of B; absent when B is empty.
    pub ratio_of_b: Option<f64>,
    pub count_a: usize,
    pub count_b: usize,
    pub mean_size_a_ha: Option<f64>,
    pub mean_size_b_ha: Option<f64>,
}

fn union(polygons: &[Polygon<f64>]) -> MultiPolygon<f64> {
    if polygons.is_empty() {
        MultiPolygon::new(vec![])
    } else {
        unary_union(polygons)
    }
}

fn mean_size_ha(polygons: &[Polygon<f64>]) -> Option<f64> {
    (!polygons.is_empty())
        .then(|| polygons.iter().map(polygon_area).sum::<f64>() / polygons.len() as f64 / M2_PER_HA)
}

/// Overlap of two datasets measured on the union of each.
pub fn area_overlap_ratio(a: &[Polygon<f64>], b: &[Polygon<f64>]) -> OverlapReport {
    let union_a = union(a);
    let union_b = union(b);
    let area_a = multi_polygon_area(&union_a);
    let area_b = multi_polygon_area(&union_b);
    let intersection = if area_a == 0.0 || area_b == 0.0 {
        0.0
    } else {
        // Operands in a fixed order keep the result symmetric in A and B.
        let (first, second) = if (area_a, a.len()) <= (area_b, b.len()) {
            (&union_a, &union_b)
        } else {
            (&union_b, &union_a)
        };
        multi_polygon_area(&first.intersection(second)).min(area_a.min(area_b))
    };
    let ratio = |area: f64| (area > 0.0).then(|| (intersection / area).clamp(0.0, 1.0));
    OverlapReport {
        area_a_km2: area_a / M2_PER_KM2,
        area_b_km2: area_b / M2_PER_KM2,
        intersection_km2: intersection / M2_PER_KM2,
        ratio_of_a: ratio(area_a),
        ratio_of_b: ratio(area_b),
        count_a: a.len(),
        count_b: b.len(),
        mean_size_a_ha: mean_size_ha(a),
        mean_size_b_ha: mean_size_ha(b),
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.digits$}"))
}

impl OverlapReport {
    /// One row per dataset: area, count, mean size, intersection, share.
    pub fn write_csv<W: Write>(&self, label_a: &str, label_b: &str, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let write = |w: &mut csv::Writer<W>, row: [String; 6]| {
            w.write_record(row)
                .map_err(|e| Error::InvalidInput(format!("writing report: {e}")))
        };
        write(
            &mut w,
            [
                "dataset",
                "area_km2",
                "count",
                "mean_size_ha",
                "intersection_km2",
                "overlap_ratio",
            ]
            .map(String::from),
        )?;
        for (label, area, count, mean, ratio) in [
            (
                label_a,
                self.area_a_km2,
                self.count_a,
                self.mean_size_a_ha,
                self.ratio_of_a,
            ),
            (
                label_b,
                self.area_b_km2,
                self.count_b,
                self.mean_size_b_ha,
                self.ratio_of_b,
            ),
        ] {
            write(
                &mut w,
                [
                    label.to_string(),
                    format!("{area:.6}"),
                    count.to_string(),
                    fmt_opt(mean, 4),
                    format!("{:.6}", self.intersection_km2),
                    fmt_opt(ratio, 6),
                ],
            )?;
        }
        w.flush()
            .map_err(|e| Error::InvalidInput(format!("writing report: {e}")))
    }

    /// Fixed-width table for terminals.
    pub fn summary_block(&self, label_a: &str, label_b: &str) -> String {
        let width = label_a.len().max(label_b.len()).max(7);
        let mut s = format!(
            "{:<width$}  {:>12}  {:>8}  {:>12}  {:>18}\n",
            "dataset", "area (km²)", "count", "mean (ha)", "intersection (km²)"
        );
        for (label, area, count, mean, ratio) in [
            (
                label_a,
                self.area_a_km2,
                self.count_a,
                self.mean_size_a_ha,
                self.ratio_of_a,
            ),
            (
                label_b,
                self.area_b_km2,
                self.count_b,
                self.mean_size_b_ha,
                self.ratio_of_b,
            ),
        ] {
            let share = ratio.map_or_else(|| "-".into(), |r| format!("{:.1}%", 100.0 * r));
            let _ = writeln!(
                s,
                "{:<width$}  {:>12.3}  {:>8}  {:>12}  {:>9.3} ({share:>6})",
                label,
                area,
                count,
                fmt_opt(mean, 2),
                self.intersection_km2,
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub name: String,
    pub area: MultiPolygon<f64>,
}

/// Named, pairwise interior-disjoint zones.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonePartition {
    zones: Vec<Zone>,
}

impl ZonePartition {
    /// Rejects zones whose interiors overlap by more than a relative 1e-9.
    pub fn new(zones: Vec<Zone>) -> Result<Self> {
        for (i, a) in zones.iter().enumerate() {
            for b in &zones[i + 1..] {
                if !a.area.intersects(&b.area) {
                    continue;
                }
                let shared = multi_polygon_area(&a.area.intersection(&b.area));
                let scale = multi_polygon_area(&a.area).min(multi_polygon_area(&b.area));
                if shared > 1e-9 * scale {
                    return Err(Error::InvalidInput(format!(
                        "zones `{}` and `{}` overlap by {shared:.3} m²",
                        a.name, b.name
                    )));
                }
            }
        }
        Ok(ZonePartition { zones })
    }

    /// Concentric annuli between successive radii around `center`, the
    /// first zone being the inner disc.
    pub fn rings(center: geo::Coord<f64>, radii_m: &[f64], arc_segments: usize) -> Result<Self> {
        if radii_m.is_empty() || radii_m.windows(2).any(|w| w[0] >= w[1]) || radii_m[0] <= 0.0 {
            return Err(Error::InvalidInput(
                "ring radii must be positive and increasing".into(),
            ));
        }
        let disc = |r: f64| {
            let n = arc_segments.max(8);
            let ring: Vec<geo::Coord<f64>> = (0..=n)
                .map(|i| {
                    let t = std::f64::consts::TAU * (i % n) as f64 / n as f64;
                    geo::Coord {
                        x: center.x + r * t.cos(),
                        y: center.y + r * t.sin(),
                    }
                })
                .collect();
            Polygon::new(ring.into(), vec![])
        };
        let mut zones = Vec::new();
        let mut inner: Option<Polygon<f64>> = None;
        for (i, &r) in radii_m.iter().enumerate() {
            let outer = disc(r);
            let area = match &inner {
                None => MultiPolygon::new(vec![outer.clone()]),
                Some(hole) => Polygon::new(outer.exterior().clone(), vec![hole.exterior().clone()]).into(),
            };
            zones.push(Zone {
                name: format!("ring_{}", i + 1),
                area,
            });
            inner = Some(outer);
        }
        Ok(ZonePartition { zones })
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn names(&self) -> Vec<&str> {
        self.zones.iter().map(|z| z.name.as_str()).collect()
    }
}

/// Area of `parcels` inside each zone, in km².
pub fn zone_areas(parcels: &[Polygon<f64>], zones: &ZonePartition) -> Vec<f64> {
    zones
        .zones
        .iter()
        .map(|zone| {
            let Some(zone_box) = zone.area.bounding_rect() else {
                return 0.0;
            };
            parcels
                .iter()
                .filter(|p| p.bounding_rect().is_some_and(|r| r.intersects(&zone_box)))
                .map(|p| {
                    if zone.area.contains(p) {
                        polygon_area(p)
                    } else {
                        multi_polygon_area(&zone.area.intersection(p))
                    }
                })
                .sum::<f64>()
                / M2_PER_KM2
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneDistribution {
    pub zones: Vec<String>,
    pub area_a_km2: Vec<f64>,
    pub area_b_km2: Vec<f64>,
    /// A over B per zone; absent where B has no area.
    pub ratio: Vec<Option<f64>>,
}

/// Per-zone areas of two datasets and their ratio.
pub fn zone_distribution(a: &[Polygon<f64>], b: &[Polygon<f64>], zones: &ZonePartition) -> ZoneDistribution {
    let area_a_km2 = zone_areas(a, zones);
    let area_b_km2 = zone_areas(b, zones);
    let ratio = area_a_km2
        .iter()
        .zip(&area_b_km2)
        .map(|(&x, &y)| (y > 0.0).then(|| x / y))
        .collect();
    ZoneDistribution {
        zones: zones.names().into_iter().map(String::from).collect(),
        area_a_km2,
        area_b_km2,
        ratio,
    }
}

impl ZoneDistribution {
    /// Rows: dataset A, dataset B, ratio. Columns: zones.
    pub fn summary_block(&self, label_a: &str, label_b: &str) -> String {
        let width = label_a.len().max(label_b.len()).max(5);
        let mut s = format!("{:<width$}", "");
        for z in &self.zones {
            let _ = write!(s, "  {z:>10}");
        }
        s.push('\n');
        for (label, row) in [(label_a, &self.area_a_km2), (label_b, &self.area_b_km2)] {
            let _ = write!(s, "{label:<width$}");
            for v in row {
                let _ = write!(s, "  {v:>10.3}");
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<width$}", "ratio");
        for r in &self.ratio {
            let _ = write!(s, "  {:>10}", fmt_opt(*r, 3));
        }
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeStats {
    pub count: usize,
    pub mean_ha: f64,
    /// Mean of the natural log of sizes in hectares.
    pub mean_log: f64,
    /// Sample standard deviation of the log sizes; 0 for a single parcel.
    pub sd_log: f64,
}

/// Arithmetic mean and lognormal moments of parcel sizes given in m².
pub fn size_distribution_stats(sizes_m2: &[f64]) -> Result<SizeStats> {
    if sizes_m2.is_empty() {
        return Err(Error::InvalidInput(
            "size statistics need at least one parcel".into(),
        ));
    }
    if let Some(s) = sizes_m2.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "parcel size must be positive, got {s}"
        )));
    }
    let n = sizes_m2.len() as f64;
    let ha: Vec<f64> = sizes_m2.iter().map(|s| s / M2_PER_HA).collect();
    let mean_ha = ha.iter().sum::<f64>() / n;
    let logs: Vec<f64> = ha.iter().map(|s| s.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let sd_log = if sizes_m2.len() < 2 {
        0.0
    } else {
        (logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(SizeStats {
        count: sizes_m2.len(),
        mean_ha,
        mean_log,
        sd_log,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "correlation needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("correlation needs at least two pairs".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::InvalidInput(
            "correlation is undefined for a constant series".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-class confusion counts with urban as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// Share of predicted-urban that is observed urban; absent when nothing
    /// is predicted urban.
    pub precision: Option<f64>,
    pub confusion: ConfusionMatrix,
}

/// Scores predicted labels against observed ones (`true` = urban).
pub fn classification_accuracy(predicted: &[bool], observed: &[bool]) -> Result<ClassificationReport> {
    if predicted.len() != observed.len() {
        return Err(Error::InvalidInput(format!(
            "{} predicted labels for {} observed",
            predicted.len(),
            observed.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidInput("no labels to compare".into()));
    }
    let mut c = ConfusionMatrix::default();
    for (&p, &o) in predicted.iter().zip(observed) {
        match (p, o) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_positive += 1,
            (false, false) => c.true_negative += 1,
            (false, true) => c.false_negative += 1,
        }
    }
    let predicted_urban = c.true_positive + c.false_positive;
    Ok(ClassificationReport {
        accuracy: (c.true_positive + c.true_negative) as f64 / c.total() as f64,
        precision: (predicted_urban > 0).then(|| c.true_positive as f64 / predicted_urban as f64),
        confusion: c,
    })
}
