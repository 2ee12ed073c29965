//! Exact 2D oracle: does the convex hull of a point set contain the origin?

/// Points are snapped to an integer grid spanning ±2⁴⁰ (scaled by the
/// largest coordinate), after which every predicate is exact in `i128`.
/// The origin on the hull boundary counts as contained.
pub fn hull_contains_origin_2d(points: &[[f64; 2]]) -> bool {
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if points.is_empty() || !scale.is_finite() {
        return false;
    }
    if scale == 0.0 {
        return true;
    }
    let unit = (1u64 << 40) as f64 / scale;
    let mut grid: Vec<(i64, i64)> = points
        .iter()
        .map(|p| ((p[0] * unit).round() as i64, (p[1] * unit).round() as i64))
        .collect();
    grid.sort_unstable();
    grid.dedup();

    let hull = monotone_chain(&grid);
    match hull.len() {
        1 => hull[0] == (0, 0),
        2 => on_segment(hull[0], hull[1]),
        _ => (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], (0, 0)) >= 0),
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i128 {
    let (ax, ay) = ((a.0 - o.0) as i128, (a.1 - o.1) as i128);
    let (bx, by) = ((b.0 - o.0) as i128, (b.1 - o.1) as i128);
    ax * by - ay * bx
}

fn on_segment(a: (i64, i64), b: (i64, i64)) -> bool {
    if cross(a, b, (0, 0)) != 0 {
        return false;
    }
    let within = |lo: i64, hi: i64| lo.min(hi) <= 0 && 0 <= lo.max(hi);
    within(a.0, b.0) && within(a.1, b.1)
}

/// Counter-clockwise hull without collinear vertices; input sorted and
/// deduplicated. Collinear input yields its two extreme points.
fn monotone_chain(pts: &[(i64, i64)]) -> Vec<(i64, i64)> {
    if pts.len() < 3 {
        return pts.to_vec();
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for &p in pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_quadrant_excludes_origin() {
        assert!(!hull_contains_origin_2d(&[[1.0, 1.0], [2.0, 1.0], [1.0, 2.0]]));
    }

    #[test]
    fn triangle_around_origin() {
        assert!(hull_contains_origin_2d(&[[-1.0, -1.0], [1.0, -1.0], [0.0, 2.0]]));
    }

    #[test]
    fn collinear_boundary_counts() {
        assert!(hull_contains_origin_2d(&[[-1.0, 0.0], [2.0, 0.0]]));
        assert!(!hull_contains_origin_2d(&[[1.0, 0.0], [2.0, 0.0]]));
        assert!(hull_contains_origin_2d(&[[-1.0, -1.0], [0.5, 0.5], [2.0, 2.0]]));
    }

    #[test]
    fn origin_on_polygon_edge() {
        assert!(hull_contains_origin_2d(&[[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]));
    }

    #[test]
    fn single_points() {
        assert!(!hull_contains_origin_2d(&[[0.5, -0.1]]));
        assert!(hull_contains_origin_2d(&[[0.0, 0.0]]));
        assert!(!hull_contains_origin_2d(&[]));
    }
}
