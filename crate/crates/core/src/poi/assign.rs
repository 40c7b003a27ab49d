use std::collections::BTreeMap;

use geo::{Coord, Intersects};
use rayon::prelude::*;
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::RTree;

use super::{CategoryCounts, Poi};
use crate::delineation::{ParcelGeometry, ParcelId, StudyExtent};
use crate::geom::{point_boundary_distance, polygon_envelope};

/// Distances closer than this are ties, broken by parcel id.
const TIE_TOLERANCE_M: f64 = 1e-9;

/// R-tree over parcel bounding boxes.
pub struct ParcelIndex<'a> {
    parcels: &'a [ParcelGeometry],
    tree: RTree<GeomWithData<Rectangle<[f64; 2]>, usize>>,
}

impl<'a> ParcelIndex<'a> {
    pub fn new(parcels: &'a [ParcelGeometry]) -> Self {
        let tree = RTree::bulk_load(
            parcels
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let env = polygon_envelope(&p.polygon);
                    GeomWithData::new(Rectangle::from_corners(env.lower(), env.upper()), i)
                })
                .collect(),
        );
        ParcelIndex { parcels, tree }
    }

    pub fn parcels(&self) -> &'a [ParcelGeometry] {
        self.parcels
    }

    /// Index of the parcel containing `p` (boundary included); lowest id on overlap.
    pub fn containing(&self, p: Coord<f64>) -> Option<usize> {
        self.tree
            .locate_all_at_point(&[p.x, p.y])
            .map(|g| g.data)
            .filter(|&i| self.parcels[i].polygon.intersects(&p))
            .min_by_key(|&i| self.parcels[i].parcel_id)
    }

    /// Index of the parcel whose boundary is closest to `p`, with the distance.
    pub fn nearest(&self, p: Coord<f64>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (g, d2) in self.tree.nearest_neighbor_iter_with_distance_2(&[p.x, p.y]) {
            if let Some((_, bd)) = best {
                if d2.sqrt() > bd + TIE_TOLERANCE_M {
                    break;
                }
            }
            let i = g.data;
            let d = point_boundary_distance(&self.parcels[i].polygon, p);
            best = match best {
                None => Some((i, d)),
                Some((bi, bd)) => {
                    if d < bd - TIE_TOLERANCE_M
                        || ((d - bd).abs() <= TIE_TOLERANCE_M
                            && self.parcels[i].parcel_id < self.parcels[bi].parcel_id)
                    {
                        Some((i, d))
                    } else {
                        Some((bi, bd))
                    }
                }
            };
        }
        best
    }

    /// Containing parcel, else the nearest one.
    pub fn locate(&self, p: Coord<f64>) -> Option<usize> {
        self.containing(p).or_else(|| self.nearest(p).map(|(i, _)| i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiAssignment<'a> {
    /// Every parcel appears, possibly with no POIs.
    pub by_parcel: BTreeMap<ParcelId, Vec<&'a Poi>>,
    /// POIs outside the study extent, not assigned.
    pub outside_extent: usize,
    /// POIs inside the extent that found no parcel (only when there are none).
    pub unassigned: usize,
}

impl PoiAssignment<'_> {
    pub fn counts(&self, parcel: ParcelId) -> CategoryCounts {
        let mut c = CategoryCounts::default();
        for poi in self.by_parcel.get(&parcel).into_iter().flatten() {
            c.add(poi.category);
        }
        c
    }

    pub fn assigned(&self) -> usize {
        self.by_parcel.values().map(Vec::len).sum()
    }
}

/// Gives every POI inside the extent to the parcel containing it, or to the
/// parcel with the nearest boundary when it falls in road space.
pub fn assign_pois_to_parcels<'a>(
    pois: &'a [Poi],
    parcels: &[ParcelGeometry],
    extent: &StudyExtent,
) -> PoiAssignment<'a> {
    let index = ParcelIndex::new(parcels);
    let targets: Vec<Result<Option<usize>, ()>> = pois
        .par_iter()
        .map(|poi| {
            if !extent.polygon().intersects(&poi.location) {
                return Err(());
            }
            Ok(index.locate(poi.location))
        })
        .collect();

    let mut by_parcel: BTreeMap<ParcelId, Vec<&'a Poi>> =
        parcels.iter().map(|p| (p.parcel_id, Vec::new())).collect();
    let mut outside_extent = 0;
    let mut unassigned = 0;
    for (poi, target) in pois.iter().zip(targets) {
        match target {
            Err(()) => outside_extent += 1,
            Ok(None) => unassigned += 1,
            Ok(Some(i)) => by_parcel.get_mut(&parcels[i].parcel_id).unwrap().push(poi),
        }
    }
    PoiAssignment {
        by_parcel,
        outside_extent,
        unassigned,
    }
}
