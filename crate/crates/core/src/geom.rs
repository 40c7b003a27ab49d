//! Planar geometry kernels shared by the delineation, characterization and
//! automaton stages. Everything here works in projected meters.

use std::f64::consts::PI;

use geo::{Area, BoundingRect, Coord, LineString, MultiPolygon, Polygon, Rect};
use rstar::{Envelope, AABB};

/// Snapping tolerance used when noding line work, in meters.
pub const SNAP_TOLERANCE_M: f64 = 1e-6;

pub fn polygon_area(polygon: &Polygon<f64>) -> f64 {
    polygon.unsigned_area()
}

pub fn multi_polygon_area(mp: &MultiPolygon<f64>) -> f64 {
    mp.0.iter().map(polygon_area).sum()
}

/// Perimeter of a polygon, counting the exterior ring and every hole.
pub fn polygon_perimeter(polygon: &Polygon<f64>) -> f64 {
    std::iter::once(polygon.exterior())
        .chain(polygon.interiors())
        .map(ring_length)
        .sum()
}

pub fn ring_length(ring: &LineString<f64>) -> f64 {
    ring.0.windows(2).map(|w| dist(w[0], w[1])).sum()
}

pub fn polyline_length(points: &[Coord<f64>]) -> f64 {
    points.windows(2).map(|w| dist(w[0], w[1])).sum()
}

#[inline]
pub fn dist(a: Coord<f64>, b: Coord<f64>) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[inline]
fn cross(o: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

pub fn point_segment_distance(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    dist(
        p,
        Coord {
            x: a.x + t * dx,
            y: a.y + t * dy,
        },
    )
}

/// True when the closed segments `ab` and `cd` share at least one point.
pub fn segments_intersect(a: Coord<f64>, b: Coord<f64>, c: Coord<f64>, d: Coord<f64>) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn on_segment(a: Coord<f64>, b: Coord<f64>, p: Coord<f64>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

pub fn segment_segment_distance(a: Coord<f64>, b: Coord<f64>, c: Coord<f64>, d: Coord<f64>) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

fn rings(polygon: &Polygon<f64>) -> impl Iterator<Item = &LineString<f64>> {
    std::iter::once(polygon.exterior()).chain(polygon.interiors())
}

/// Distance from a point to the nearest boundary of a polygon (exterior or hole).
pub fn point_boundary_distance(polygon: &Polygon<f64>, p: Coord<f64>) -> f64 {
    rings(polygon)
        .flat_map(|r| r.0.windows(2))
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum boundary-to-boundary distance between two polygons.
pub fn boundary_distance(a: &Polygon<f64>, b: &Polygon<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for sa in rings(a).flat_map(|r| r.0.windows(2)) {
        for sb in rings(b).flat_map(|r| r.0.windows(2)) {
            best = best.min(segment_segment_distance(sa[0], sa[1], sb[0], sb[1]));
        }
    }
    best
}

/// Whether the boundaries of `a` and `b` come within `radius` of each other.
/// Stops at the first qualifying segment pair.
pub fn boundaries_within(a: &Polygon<f64>, b: &Polygon<f64>, radius: f64) -> bool {
    let b_segments: Vec<_> = rings(b)
        .flat_map(|r| r.0.windows(2))
        .map(|w| (w[0], w[1], segment_envelope(w[0], w[1])))
        .collect();
    for sa in rings(a).flat_map(|r| r.0.windows(2)) {
        let env = segment_envelope(sa[0], sa[1]);
        for (c, d, env_b) in &b_segments {
            if env.distance_2(&env_b.center()).sqrt() > radius + envelope_radius(env_b) {
                continue;
            }
            if segment_segment_distance(sa[0], sa[1], *c, *d) <= radius {
                return true;
            }
        }
    }
    false
}

fn envelope_radius(env: &AABB<[f64; 2]>) -> f64 {
    let lo = env.lower();
    let hi = env.upper();
    0.5 * (hi[0] - lo[0]).hypot(hi[1] - lo[1])
}

pub fn segment_envelope(a: Coord<f64>, b: Coord<f64>) -> AABB<[f64; 2]> {
    AABB::from_corners([a.x, a.y], [b.x, b.y])
}

pub fn rect_to_aabb(rect: Rect<f64>) -> AABB<[f64; 2]> {
    AABB::from_corners([rect.min().x, rect.min().y], [rect.max().x, rect.max().y])
}

pub fn polygon_envelope(polygon: &Polygon<f64>) -> AABB<[f64; 2]> {
    polygon
        .bounding_rect()
        .map(rect_to_aabb)
        .unwrap_or_else(|| AABB::from_point([f64::NAN, f64::NAN]))
}

/// Radius factor for the interior vertices of an equal-area arc.
///
/// A half-circle of radius `r` is drawn as a fan of `m` chords whose two end
/// vertices sit on the circle and whose `m - 1` interior vertices sit at
/// `ρ·r`. Choosing `ρ` so that
/// `½·sin(π/m)·(2ρ + (m-2)ρ²) = π/2` makes the fan's area equal the exact
/// half-disk area.
fn equal_area_arc_factor(m: usize) -> f64 {
    debug_assert!(m >= 2);
    let s = (PI / m as f64).sin();
    if m == 2 {
        return PI / (2.0 * s);
    }
    let k = (m - 2) as f64;
    (-1.0 + (1.0 + k * PI / s).sqrt()) / k
}

/// Round-capped buffer ("stadium") around a straight segment, wound
/// counterclockwise. The caps are equal-area arcs, so the polygon's area
/// equals `2·w·len + π·w²` up to floating-point rounding.
pub fn capsule(a: Coord<f64>, b: Coord<f64>, half_width: f64, arc_segments: usize) -> Polygon<f64> {
    let m = arc_segments.max(2);
    let len = dist(a, b);
    let (ux, uy) = if len > 0.0 {
        ((b.x - a.x) / len, (b.y - a.y) / len)
    } else {
        (1.0, 0.0)
    };
    // Angle of the right-hand normal.
    let start = (-ux).atan2(uy);
    let rho = equal_area_arc_factor(m);
    let mut ring = Vec::with_capacity(2 * m + 3);
    for (center, offset) in [(b, 0.0), (a, PI)] {
        for k in 0..=m {
            let theta = start + offset + PI * k as f64 / m as f64;
            let r = if k == 0 || k == m {
                half_width
            } else {
                half_width * rho
            };
            ring.push(Coord {
                x: center.x + r * theta.cos(),
                y: center.y + r * theta.sin(),
            });
        }
    }
    ring.push(ring[0]);
    Polygon::new(LineString::new(ring), vec![])
}

pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Polygon<f64> {
    Rect::new(Coord { x: min_x, y: min_y }, Coord { x: max_x, y: max_y }).to_polygon()
}

/// Checks ring closure, vertex count and finiteness.
pub fn validate_polygon(polygon: &Polygon<f64>) -> Result<(), String> {
    for (i, ring) in rings(polygon).enumerate() {
        let pts = &ring.0;
        if pts.len() < 4 {
            return Err(format!("ring {i} has fewer than 4 positions"));
        }
        if pts.first() != pts.last() {
            return Err(format!("ring {i} is not closed"));
        }
        if pts.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
            return Err(format!("ring {i} has non-finite coordinates"));
        }
    }
    if polygon_area(polygon) <= 0.0 {
        return Err("polygon has zero area".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use geo::coord;

    #[test]
    fn capsule_area_is_exact_for_every_resolution() {
        for m in [2, 3, 4, 8, 16, 64] {
            let cap = capsule(coord! {x: 0.0, y: 0.0}, coord! {x: 1000.0, y: 0.0}, 10.0, m);
            assert_relative_eq!(
                polygon_area(&cap),
                1000.0 * 20.0 + PI * 100.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn capsule_is_counterclockwise_and_closed() {
        let cap = capsule(coord! {x: 3.0, y: 1.0}, coord! {x: -2.0, y: 7.0}, 4.0, 8);
        assert!(validate_polygon(&cap).is_ok());
        let signed: f64 = cap
            .exterior()
            .0
            .windows(2)
            .map(|w| w[0].x * w[1].y - w[1].x * w[0].y)
            .sum();
        assert!(signed > 0.0);
    }

    #[test]
    fn wider_capsule_contains_narrower() {
        use geo::Contains;
        let a = coord! {x: 0.0, y: 0.0};
        let b = coord! {x: 50.0, y: 20.0};
        let outer = capsule(a, b, 10.0, 8);
        let inner = capsule(a, b, 6.0, 8);
        assert!(outer.contains(&inner));
    }

    #[test]
    fn segment_distances() {
        let o = coord! {x: 0.0, y: 0.0};
        let e = coord! {x: 10.0, y: 0.0};
        assert_eq!(point_segment_distance(coord! {x: 5.0, y: 3.0}, o, e), 3.0);
        assert_eq!(point_segment_distance(coord! {x: -4.0, y: 3.0}, o, e), 5.0);
        assert_eq!(
            segment_segment_distance(o, e, coord! {x: 5.0, y: -1.0}, coord! {x: 5.0, y: 1.0}),
            0.0
        );
        assert_eq!(
            segment_segment_distance(o, e, coord! {x: 12.0, y: 0.0}, coord! {x: 20.0, y: 0.0}),
            2.0
        );
    }

    #[test]
    fn boundary_distance_between_squares() {
        let a = rectangle(0.0, 0.0, 10.0, 10.0);
        let b = rectangle(25.0, 0.0, 35.0, 10.0);
        assert_eq!(boundary_distance(&a, &b), 15.0);
        assert!(boundaries_within(&a, &b, 15.0));
        assert!(!boundaries_within(&a, &b, 14.999));
    }

    #[test]
    fn perimeter_counts_holes() {
        let outer = rectangle(0.0, 0.0, 10.0, 10.0);
        let hole = rectangle(4.0, 4.0, 6.0, 6.0);
        let with_hole = Polygon::new(outer.exterior().clone(), vec![hole.exterior().clone()]);
        assert_eq!(polygon_perimeter(&with_hole), 48.0);
        assert_eq!(polygon_area(&with_hole), 96.0);
    }
}
