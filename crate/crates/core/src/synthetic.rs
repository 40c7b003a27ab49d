//! Reproducible synthetic cities: a rectangular road grid, its bounding
//! boundary and seeded POIs. Used by tests, benchmarks and the guide.

use std::path::{Path, PathBuf};

use geo::{Coord, MultiPolygon, Polygon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::delineation::{CityBoundary, CityId, RoadClass, RoadSegment};
use crate::error::Result;
use crate::geom::rectangle;
use crate::io::{
    city_feature, road_feature, write_feature_collection, write_pois_csv, CityFields, RoadFields,
};
use crate::poi::{Category, Poi};
use crate::projection::LocalProjection;

/// `columns` × `rows` blocks bounded by `columns + 1` vertical and
/// `rows + 1` horizontal roads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCity {
    pub origin: Coord<f64>,
    pub columns: usize,
    pub rows: usize,
    pub spacing_m: f64,
}

impl GridCity {
    pub fn new(origin: Coord<f64>, columns: usize, rows: usize, spacing_m: f64) -> Self {
        GridCity {
            origin,
            columns,
            rows,
            spacing_m,
        }
    }

    pub fn width(&self) -> f64 {
        self.columns as f64 * self.spacing_m
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.spacing_m
    }

    /// One segment per block side, ids from `first_id`.
    pub fn roads(&self, first_id: u64, class: &str) -> Vec<RoadSegment> {
        let s = self.spacing_m;
        let at = |i: usize, j: usize| Coord {
            x: self.origin.x + i as f64 * s,
            y: self.origin.y + j as f64 * s,
        };
        let mut pieces = Vec::new();
        for j in 0..=self.rows {
            for i in 0..self.columns {
                pieces.push((at(i, j), at(i + 1, j)));
            }
        }
        for i in 0..=self.columns {
            for j in 0..self.rows {
                pieces.push((at(i, j), at(i, j + 1)));
            }
        }
        pieces
            .into_iter()
            .zip(first_id..)
            .map(|((a, b), id)| {
                RoadSegment::new(id, vec![a, b], RoadClass::new(class)).expect("distinct endpoints")
            })
            .collect()
    }

    /// Rectangle spanned by the outer roads.
    pub fn boundary(&self) -> Polygon<f64> {
        rectangle(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.width(),
            self.origin.y + self.height(),
        )
    }

    pub fn city(&self, id: &str, total_urban_area_km2: f64) -> Result<CityBoundary> {
        CityBoundary::new(
            CityId::new(id),
            id,
            MultiPolygon::new(vec![self.boundary()]),
            total_urban_area_km2,
        )
    }

    /// `count` POIs, half spread over the grid and half over its central
    /// third, with categories drawn uniformly.
    pub fn pois(&self, count: usize, seed: u64) -> Vec<Poi> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|k| {
                let (lo, span) = if k % 2 == 0 {
                    (0.0, 1.0)
                } else {
                    (1.0 / 3.0, 1.0 / 3.0)
                };
                let x = self.origin.x + self.width() * (lo + span * rng.gen::<f64>());
                let y = self.origin.y + self.height() * (lo + span * rng.gen::<f64>());
                let category = Category::ALL[rng.gen_range(0..Category::ALL.len())];
                Poi::new(format!("p{k}"), x, y, category)
            })
            .collect()
    }
}

/// Synthetic inputs ready to be written to disk.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub roads: Vec<RoadSegment>,
    pub pois: Vec<Poi>,
    pub cities: Vec<CityBoundary>,
}

/// Where [`Dataset::write`] put each file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub roads: PathBuf,
    pub pois: PathBuf,
    pub cities: PathBuf,
}

impl Dataset {
    /// Adds `grid` as city `id`; road ids continue from the existing ones.
    pub fn add_grid(
        &mut self,
        grid: &GridCity,
        id: &str,
        total_urban_area_km2: f64,
        poi_count: usize,
        seed: u64,
    ) -> Result<()> {
        let first = self.roads.iter().map(|r| r.id + 1).max().unwrap_or(0);
        self.roads.extend(grid.roads(first, "residential"));
        self.pois
            .extend(grid.pois(poi_count, seed).into_iter().map(|mut p| {
                p.id = format!("{id}-{}", p.id);
                p
            }));
        self.cities.push(grid.city(id, total_urban_area_km2)?);
        Ok(())
    }

    /// The same data in longitude/latitude, treating current coordinates as
    /// meters around `projection`'s center.
    pub fn to_lon_lat(&self, projection: &LocalProjection) -> Result<Dataset> {
        let roads = self
            .roads
            .iter()
            .map(|r| {
                RoadSegment::new(
                    r.id,
                    r.polyline().iter().map(|&c| projection.inverse(c)).collect(),
                    r.road_class.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let pois = self
            .pois
            .iter()
            .map(|p| Poi {
                location: projection.inverse(p.location),
                ..p.clone()
            })
            .collect();
        let cities = self
            .cities
            .iter()
            .map(|c| {
                let polygons =
                    MultiPolygon::new(c.polygons.iter().map(|p| projection.inverse_polygon(p)).collect());
                CityBoundary::new(
                    c.city_id.clone(),
                    c.name.clone(),
                    polygons,
                    c.total_urban_area_km2,
                )
                .map(|city| CityBoundary {
                    admin_level: c.admin_level,
                    ..city
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { roads, pois, cities })
    }

    /// `roads.geojson`, `pois.csv` and `cities.geojson` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetPaths> {
        let paths = DatasetPaths {
            roads: dir.join("roads.geojson"),
            pois: dir.join("pois.csv"),
            cities: dir.join("cities.geojson"),
        };
        let road_fields = RoadFields::default();
        let city_fields = CityFields::default();
        write_feature_collection(
            &paths.roads,
            self.roads.iter().map(|r| road_feature(r, &road_fields)).collect(),
        )?;
        write_feature_collection(
            &paths.cities,
            self.cities
                .iter()
                .map(|c| city_feature(c, &city_fields))
                .collect(),
        )?;
        write_pois_csv(&paths.pois, &self.pois)?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let g = GridCity::new(Coord { x: 0.0, y: 0.0 }, 3, 2, 100.0);
        assert_eq!(g.roads(0, "residential").len(), 3 * 3 + 4 * 2);
        let pois = g.pois(50, 1);
        assert_eq!(pois, g.pois(50, 1));
        assert!(pois
            .iter()
            .all(|p| (0.0..=300.0).contains(&p.location.x) && (0.0..=200.0).contains(&p.location.y)));
    }
}
