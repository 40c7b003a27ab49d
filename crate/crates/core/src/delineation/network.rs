//! Planar road network: noding, dangle trimming and endpoint extension.

use std::collections::{HashMap, HashSet};
use std::fmt;

use geo::Coord;
use log::warn;
use rayon::prelude::*;
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{dist, polyline_length, SNAP_TOLERANCE_M};

/// Functional class of a road, e.g. `primary` or `local`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoadClass(String);

impl RoadClass {
    pub fn new(name: impl Into<String>) -> Self {
        RoadClass(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RoadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RoadClass {
    fn from(s: &str) -> Self {
        RoadClass::new(s)
    }
}

/// One input road line in projected meters.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub id: u64,
    polyline: Vec<Coord<f64>>,
    pub road_class: RoadClass,
}

impl RoadSegment {
    /// Builds a segment, dropping exact consecutive duplicates. Fails when a
    /// coordinate is not finite or fewer than two distinct points remain.
    pub fn new(id: u64, polyline: Vec<Coord<f64>>, road_class: RoadClass) -> Result<Self> {
        if polyline.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "road {id} has non-finite coordinates"
            )));
        }
        let mut points: Vec<Coord<f64>> = Vec::with_capacity(polyline.len());
        for c in polyline {
            if points.last() != Some(&c) {
                points.push(c);
            }
        }
        if points.len() < 2 {
            return Err(Error::InvalidGeometry(format!(
                "road {id} has fewer than two distinct points"
            )));
        }
        Ok(RoadSegment {
            id,
            polyline: points,
            road_class,
        })
    }

    pub fn polyline(&self) -> &[Coord<f64>] {
        &self.polyline
    }

    pub fn length(&self) -> f64 {
        polyline_length(&self.polyline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// Network edge between two nodes. Interior polyline vertices are not nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub polyline: Vec<Coord<f64>>,
    pub road_class: RoadClass,
    /// Id of the input segment this edge was cut from.
    pub source_id: u64,
}

impl Edge {
    pub fn length(&self) -> f64 {
        polyline_length(&self.polyline)
    }
}

/// A noded line arrangement: crossings are shared nodes and no two edges
/// run along the same stretch of line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadNetwork {
    nodes: Vec<Coord<f64>>,
    edges: Vec<Edge>,
}

impl RoadNetwork {
    pub fn nodes(&self) -> &[Coord<f64>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Coord<f64> {
        self.nodes[id.0]
    }

    /// Number of edge ends incident to every node; a loop counts twice.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.from.0] += 1;
            deg[e.to.0] += 1;
        }
        deg
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.edges
            .iter()
            .map(|e| usize::from(e.from == id) + usize::from(e.to == id))
            .sum()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(Edge::length).sum()
    }

    /// Node closest to `p`, if any.
    pub fn nearest_node(&self, p: Coord<f64>) -> Option<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .min_by(|a, b| dist(*a.1, p).total_cmp(&dist(*b.1, p)))
            .map(|(i, _)| NodeId(i))
    }

    /// Edges as plain segments, numbered in edge order.
    pub fn to_segments(&self) -> Vec<RoadSegment> {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, e)| RoadSegment {
                id: i as u64,
                polyline: e.polyline.clone(),
                road_class: e.road_class.clone(),
            })
            .collect()
    }

    /// Keeps the given edges and drops nodes nobody uses any more.
    fn retain_edges(nodes: &[Coord<f64>], edges: Vec<Edge>) -> RoadNetwork {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut new_nodes = Vec::new();
        let mut id_for = |old: NodeId, new_nodes: &mut Vec<Coord<f64>>| {
            NodeId(*remap.entry(old.0).or_insert_with(|| {
                new_nodes.push(nodes[old.0]);
                new_nodes.len() - 1
            }))
        };
        let edges = edges
            .into_iter()
            .map(|mut e| {
                e.from = id_for(e.from, &mut new_nodes);
                e.to = id_for(e.to, &mut new_nodes);
                e
            })
            .collect();
        RoadNetwork {
            nodes: new_nodes,
            edges,
        }
    }
}

/// Snaps coordinates that lie within the tolerance onto one shared vertex.
struct SnapGrid {
    tolerance: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    coords: Vec<Coord<f64>>,
}

impl SnapGrid {
    fn new(tolerance: f64) -> Self {
        SnapGrid {
            tolerance,
            cells: HashMap::new(),
            coords: Vec::new(),
        }
    }

    fn cell(&self, c: Coord<f64>) -> (i64, i64) {
        (
            (c.x / self.tolerance).floor() as i64,
            (c.y / self.tolerance).floor() as i64,
        )
    }

    fn insert(&mut self, c: Coord<f64>) -> usize {
        let (cx, cy) = self.cell(c);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                    if let Some(&id) = ids.iter().find(|&&id| dist(self.coords[id], c) <= self.tolerance) {
                        return id;
                    }
                }
            }
        }
        self.coords.push(c);
        let id = self.coords.len() - 1;
        self.cells.entry((cx, cy)).or_default().push(id);
        id
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    segment: usize,
    index: usize,
    a: Coord<f64>,
    b: Coord<f64>,
}

impl Piece {
    fn len(&self) -> f64 {
        dist(self.a, self.b)
    }

    fn at(&self, t: f64) -> Coord<f64> {
        Coord {
            x: self.a.x + t * (self.b.x - self.a.x),
            y: self.a.y + t * (self.b.y - self.a.y),
        }
    }

    fn envelope(&self, pad: f64) -> AABB<[f64; 2]> {
        AABB::from_corners(
            [self.a.x.min(self.b.x) - pad, self.a.y.min(self.b.y) - pad],
            [self.a.x.max(self.b.x) + pad, self.a.y.max(self.b.y) + pad],
        )
    }

    /// Parameter of the orthogonal projection of `p` on the piece's line.
    fn project(&self, p: Coord<f64>) -> f64 {
        let dx = self.b.x - self.a.x;
        let dy = self.b.y - self.a.y;
        ((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / (dx * dx + dy * dy)
    }
}

/// Piece indices and the crossing parameters between them.
type Crossings = (usize, usize, Vec<(f64, f64)>);

/// Shared points of two straight pieces as `(t on p, u on q)` parameter
/// pairs: zero, one (crossing or touching) or two (collinear overlap).
fn piece_intersections(p: &Piece, q: &Piece, tol: f64) -> Vec<(f64, f64)> {
    let r = Coord {
        x: p.b.x - p.a.x,
        y: p.b.y - p.a.y,
    };
    let s = Coord {
        x: q.b.x - q.a.x,
        y: q.b.y - q.a.y,
    };
    let lp = p.len();
    let lq = q.len();
    let denom = r.x * s.y - r.y * s.x;
    let qa = Coord {
        x: q.a.x - p.a.x,
        y: q.a.y - p.a.y,
    };
    let dp = tol / lp;
    let dq = tol / lq;

    if denom.abs() > 1e-12 * lp * lq {
        let t = (qa.x * s.y - qa.y * s.x) / denom;
        let u = (qa.x * r.y - qa.y * r.x) / denom;
        if (-dp..=1.0 + dp).contains(&t) && (-dq..=1.0 + dq).contains(&u) {
            return vec![(t.clamp(0.0, 1.0), u.clamp(0.0, 1.0))];
        }
        return Vec::new();
    }

    // Parallel: only collinear pieces can share points.
    let offset = (qa.x * r.y - qa.y * r.x).abs() / lp;
    if offset > tol {
        return Vec::new();
    }
    let (t0, t1) = {
        let tc = p.project(q.a);
        let td = p.project(q.b);
        (tc.min(td).max(0.0), tc.max(td).min(1.0))
    };
    if t1 < t0 - dp {
        return Vec::new();
    }
    let mut hits = vec![(t0, q.project(p.at(t0)).clamp(0.0, 1.0))];
    if (t1 - t0) * lp > tol {
        hits.push((t1, q.project(p.at(t1)).clamp(0.0, 1.0)));
    }
    hits
}

/// Nodes a collection of road lines into one planar network.
///
/// Every crossing, touching or overlap between lines becomes a shared node,
/// coincident stretches are kept once, and input segments that collapse to
/// zero length are dropped with a warning.
pub fn merge_network(segments: &[RoadSegment]) -> RoadNetwork {
    let tol = SNAP_TOLERANCE_M;

    // Clean polylines at the snapping tolerance.
    let mut lines: Vec<(usize, Vec<Coord<f64>>)> = Vec::with_capacity(segments.len());
    for (si, seg) in segments.iter().enumerate() {
        let mut pts: Vec<Coord<f64>> = Vec::with_capacity(seg.polyline.len());
        for &c in &seg.polyline {
            if pts.last().is_none_or(|&l| dist(l, c) > tol) {
                pts.push(c);
            }
        }
        if pts.len() < 2 {
            warn!("dropping road {}: zero length after deduplication", seg.id);
            continue;
        }
        lines.push((si, pts));
    }

    let mut pieces = Vec::new();
    let mut line_pieces: Vec<std::ops::Range<usize>> = Vec::with_capacity(lines.len());
    for (li, (_, pts)) in lines.iter().enumerate() {
        let start = pieces.len();
        for (k, w) in pts.windows(2).enumerate() {
            pieces.push(Piece {
                segment: li,
                index: k,
                a: w[0],
                b: w[1],
            });
        }
        line_pieces.push(start..pieces.len());
    }

    let tree: RTree<GeomWithData<Rectangle<[f64; 2]>, usize>> = RTree::bulk_load(
        pieces
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let env = p.envelope(tol);
                GeomWithData::new(Rectangle::from_corners(env.lower(), env.upper()), i)
            })
            .collect(),
    );

    let hits: Vec<Crossings> = (0..pieces.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = &pieces[i];
            let mut found: Vec<Crossings> = tree
                .locate_in_envelope_intersecting(&p.envelope(tol))
                .filter(|g| g.data > i)
                .filter_map(|g| {
                    let j = g.data;
                    let q = &pieces[j];
                    let mut h = piece_intersections(p, q, tol);
                    if p.segment == q.segment && q.index == p.index + 1 {
                        // The shared joint of consecutive pieces is not a crossing.
                        h.retain(|&(t, u)| !((1.0 - t) * p.len() <= tol && u * q.len() <= tol));
                    }
                    (!h.is_empty()).then_some((i, j, h))
                })
                .collect();
            found.sort_by_key(|f| f.1);
            found.into_iter()
        })
        .collect();

    let mut splits: Vec<Vec<f64>> = vec![Vec::new(); pieces.len()];
    let mut crossing_points: Vec<Coord<f64>> = Vec::new();
    for (i, j, h) in &hits {
        for &(t, u) in h {
            splits[*i].push(t);
            splits[*j].push(u);
            crossing_points.push(pieces[*i].at(t));
        }
    }

    let mut grid = SnapGrid::new(tol);
    let mut marked: HashSet<usize> = HashSet::new();
    for (_, pts) in &lines {
        marked.insert(grid.insert(pts[0]));
        marked.insert(grid.insert(*pts.last().unwrap()));
    }
    for c in crossing_points {
        marked.insert(grid.insert(c));
    }

    // Cut pieces into sub-pieces between consecutive split points.
    let mut sub_pieces: Vec<Vec<(usize, usize)>> = vec![Vec::new(); lines.len()];
    for (pi, piece) in pieces.iter().enumerate() {
        let len = piece.len();
        let mut ts: Vec<f64> = splits[pi]
            .iter()
            .copied()
            .filter(|&t| t * len > tol && (1.0 - t) * len > tol)
            .collect();
        ts.sort_by(f64::total_cmp);
        let mut prev = grid.insert(piece.a);
        for t in ts.into_iter().chain(std::iter::once(1.0)) {
            let next = if t == 1.0 {
                grid.insert(piece.b)
            } else {
                grid.insert(piece.at(t))
            };
            if next != prev {
                sub_pieces[piece.segment].push((prev, next));
                prev = next;
            }
        }
    }

    // Keep each stretch of line once; the first input segment wins.
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut kept: Vec<Vec<Option<(usize, usize)>>> = Vec::with_capacity(lines.len());
    for subs in &sub_pieces {
        let mut row = Vec::with_capacity(subs.len());
        for &(a, b) in subs {
            if seen.insert((a.min(b), a.max(b))) {
                row.push(Some((a, b)));
            } else {
                marked.insert(a);
                marked.insert(b);
                row.push(None);
            }
        }
        kept.push(row);
    }

    let mut edges: Vec<Edge> = Vec::new();
    let mut flush = |chain: &mut Vec<usize>, line: usize| {
        if chain.len() >= 2 {
            let seg = &segments[lines[line].0];
            edges.push(Edge {
                from: NodeId(chain[0]),
                to: NodeId(*chain.last().unwrap()),
                polyline: chain.iter().map(|&n| grid.coords[n]).collect(),
                road_class: seg.road_class.clone(),
                source_id: seg.id,
            });
        }
        chain.clear();
    };
    for (li, row) in kept.iter().enumerate() {
        let mut chain: Vec<usize> = Vec::new();
        for sub in row {
            match *sub {
                None => flush(&mut chain, li),
                Some((a, b)) => {
                    if chain.last().is_some_and(|&l| l != a) {
                        flush(&mut chain, li);
                    }
                    if chain.is_empty() {
                        chain.push(a);
                    }
                    chain.push(b);
                    if marked.contains(&b) {
                        flush(&mut chain, li);
                    }
                }
            }
        }
        flush(&mut chain, li);
    }

    RoadNetwork::retain_edges(&grid.coords, edges)
}

/// Removes hanging edges shorter than `threshold_m`, repeating until no
/// short edge with a free (degree-1) end remains.
pub fn trim_dangles(network: &RoadNetwork, threshold_m: f64) -> RoadNetwork {
    let lengths: Vec<f64> = network.edges.iter().map(Edge::length).collect();
    let mut alive = vec![true; network.edges.len()];
    loop {
        let mut deg = vec![0usize; network.nodes.len()];
        for (e, _) in network.edges.iter().zip(&alive).filter(|(_, a)| **a) {
            deg[e.from.0] += 1;
            deg[e.to.0] += 1;
        }
        let doomed: Vec<usize> = (0..network.edges.len())
            .filter(|&i| {
                let e = &network.edges[i];
                alive[i] && (deg[e.from.0] == 1 || deg[e.to.0] == 1) && lengths[i] < threshold_m
            })
            .collect();
        if doomed.is_empty() {
            break;
        }
        for i in doomed {
            alive[i] = false;
        }
    }
    let edges = network
        .edges
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(e, _)| e.clone())
        .collect();
    RoadNetwork::retain_edges(&network.nodes, edges)
}

/// Extends every free end collinearly with its last segment by up to
/// `extension_m`. An extension stops at the first line it meets; one that
/// meets nothing stays as a stub. The result is re-noded.
pub fn extend_endpoints(network: &RoadNetwork, extension_m: f64) -> RoadNetwork {
    if network.is_empty() || extension_m <= 0.0 {
        return network.clone();
    }
    let tol = SNAP_TOLERANCE_M;
    let pieces: Vec<Piece> = network
        .edges
        .iter()
        .enumerate()
        .flat_map(|(ei, e)| {
            e.polyline.windows(2).enumerate().map(move |(k, w)| Piece {
                segment: ei,
                index: k,
                a: w[0],
                b: w[1],
            })
        })
        .collect();
    let tree: RTree<GeomWithData<Rectangle<[f64; 2]>, usize>> = RTree::bulk_load(
        pieces
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let env = p.envelope(tol);
                GeomWithData::new(Rectangle::from_corners(env.lower(), env.upper()), i)
            })
            .collect(),
    );

    let degrees = network.degrees();
    let mut extensions = Vec::new();
    for (ei, e) in network.edges.iter().enumerate() {
        let n = e.polyline.len();
        for (node, tip, prev) in [
            (e.from, e.polyline[0], e.polyline[1]),
            (e.to, e.polyline[n - 1], e.polyline[n - 2]),
        ] {
            if degrees[node.0] != 1 {
                continue;
            }
            let len = dist(tip, prev);
            let end = Coord {
                x: tip.x + (tip.x - prev.x) / len * extension_m,
                y: tip.y + (tip.y - prev.y) / len * extension_m,
            };
            let ray = Piece {
                segment: usize::MAX,
                index: 0,
                a: tip,
                b: end,
            };
            let first_hit = tree
                .locate_in_envelope_intersecting(&ray.envelope(tol))
                .flat_map(|g| piece_intersections(&ray, &pieces[g.data], tol))
                .map(|(t, _)| t)
                .filter(|&t| t * extension_m > tol)
                .fold(1.0_f64, f64::min);
            extensions.push((ei, vec![tip, ray.at(first_hit)]));
        }
    }

    let mut segments = network.to_segments();
    let base = segments.len() as u64;
    for (k, (ei, line)) in extensions.into_iter().enumerate() {
        if let Ok(s) = RoadSegment::new(base + k as u64, line, network.edges[ei].road_class.clone()) {
            segments.push(s);
        }
    }
    merge_network(&segments)
}
