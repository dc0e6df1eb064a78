use std::collections::BTreeMap;

use super::{Mesh, Point, OUTER_MARKER};
use crate::error::{Error, Result};

/// Polygonal domains the structured mesher knows how to triangulate.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// `[0,1]²`
    UnitSquare,
    /// `[0,3]² ∖ [1,2]²`, four reentrant corners of angle 3π/2.
    SquareAnnulus,
    /// `[0,7]×[0,3]` minus the unit squares at x ∈ [1,2], [3,4], [5,6], y ∈ [1,2].
    ThreeHoles,
    /// Axis-parallel polygon with axis-parallel polygonal holes.
    Polygon { outer: Vec<Point>, holes: Vec<Vec<Point>> },
}

impl Domain {
    pub fn outline(&self) -> (Vec<Point>, Vec<Vec<Point>>) {
        let rect = |x0: f64, y0: f64, x1: f64, y1: f64| vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
        match self {
            Domain::UnitSquare => (rect(0.0, 0.0, 1.0, 1.0), vec![]),
            Domain::SquareAnnulus => (rect(0.0, 0.0, 3.0, 3.0), vec![rect(1.0, 1.0, 2.0, 2.0)]),
            Domain::ThreeHoles => (
                rect(0.0, 0.0, 7.0, 3.0),
                vec![
                    rect(1.0, 1.0, 2.0, 2.0),
                    rect(3.0, 1.0, 4.0, 2.0),
                    rect(5.0, 1.0, 6.0, 2.0),
                ],
            ),
            Domain::Polygon { outer, holes } => (outer.clone(), holes.clone()),
        }
    }

    /// Vertices of the domain boundary whose interior angle exceeds π.
    pub fn reentrant_corners(&self) -> Vec<Point> {
        let (outer, holes) = self.outline();
        let mut corners = Vec::new();
        // the domain lies to the left of a counter-clockwise outer loop and
        // to the right of a counter-clockwise hole loop
        for (poly, domain_on_left) in std::iter::once((&outer, true)).chain(holes.iter().map(|h| (h, false))) {
            let ccw = polygon_area(poly) > 0.0;
            let n = poly.len();
            for i in 0..n {
                let (a, b, c) = (poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n]);
                let turn = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
                let left_turn = turn > 0.0;
                // walking with the domain on the left, a right turn is reentrant
                let domain_left = domain_on_left == ccw;
                if turn != 0.0 && (left_turn != domain_left) {
                    corners.push(b);
                }
            }
        }
        corners
    }

    /// Structured triangulation with a compatible newest-vertex labeling,
    /// after one uniform refinement of the raw cell split.
    pub fn build(&self) -> Result<Mesh> {
        Ok(self.build_raw()?.uniform_refine(1))
    }

    /// The raw triangulation: every grid cell split along its SW-NE diagonal,
    /// with the diagonal as refinement edge of both halves.
    pub fn build_raw(&self) -> Result<Mesh> {
        let (outer, holes) = self.outline();
        validate_polygon(&outer, "outer boundary")?;
        for (i, h) in holes.iter().enumerate() {
            validate_polygon(h, &format!("hole {}", i + 1))?;
        }
        for (i, h) in holes.iter().enumerate() {
            if h.iter().any(|&p| !point_in_polygon(p, &outer) && !point_on_polygon(p, &outer)) {
                return Err(Error::InvalidDomain(format!("hole {} is not inside the outer boundary", i + 1)));
            }
        }

        let mut xs: Vec<f64> = outer.iter().chain(holes.iter().flatten()).map(|p| p[0]).collect();
        let mut ys: Vec<f64> = outer.iter().chain(holes.iter().flatten()).map(|p| p[1]).collect();
        for v in [&mut xs, &mut ys] {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
        }

        let inside = |p: Point| point_in_polygon(p, &outer) && !holes.iter().any(|h| point_in_polygon(p, h));
        let mut cells = Vec::new();
        for j in 0..ys.len() - 1 {
            for i in 0..xs.len() - 1 {
                let c = [(xs[i] + xs[i + 1]) / 2.0, (ys[j] + ys[j + 1]) / 2.0];
                if inside(c) {
                    cells.push((i, j));
                }
            }
        }
        let cell_area: f64 = cells
            .iter()
            .map(|&(i, j)| (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]))
            .sum();
        let expected = polygon_area(&outer).abs() - holes.iter().map(|h| polygon_area(h).abs()).sum::<f64>();
        if (cell_area - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::InvalidDomain("holes overlap each other or the outer boundary".into()));
        }

        let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &(i, j) in &cells {
            for node in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                index.insert((node.1, node.0), 0);
            }
        }
        // number vertices row by row
        let mut vertices = Vec::with_capacity(index.len());
        for (k, (&(j, i), slot)) in index.iter_mut().enumerate() {
            *slot = k;
            vertices.push([xs[i], ys[j]]);
        }
        let id = |i: usize, j: usize| index[&(j, i)];

        let mut triangles = Vec::with_capacity(2 * cells.len());
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &(i, j) in &cells {
            let (p00, p10, p11, p01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([p10, p11, p00]);
            triangles.push([p01, p00, p11]);
            for (a, b) in [(p00, p10), (p10, p11), (p11, p01), (p01, p00)] {
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }

        let boundary: Vec<(usize, usize, u32)> = edge_count
            .into_iter()
            .filter(|&(_, n)| n == 1)
            .map(|((a, b), _)| {
                let mid = [(vertices[a][0] + vertices[b][0]) / 2.0, (vertices[a][1] + vertices[b][1]) / 2.0];
                let marker = if point_on_polygon(mid, &outer) {
                    OUTER_MARKER
                } else {
                    holes
                        .iter()
                        .position(|h| point_on_polygon(mid, h))
                        .map_or(u32::MAX, |k| k as u32 + 1)
                };
                (a, b, marker)
            })
            .collect();

        let mesh = Mesh::new(vertices, triangles, &boundary)?;
        if mesh.connected_components() != 1 {
            return Err(Error::InvalidDomain("domain is not connected".into()));
        }
        Ok(mesh)
    }
}

fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn validate_polygon(poly: &[Point], what: &str) -> Result<()> {
    let n = poly.len();
    if n < 3 {
        return Err(Error::InvalidDomain(format!("{what} has fewer than 3 vertices")));
    }
    if poly.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidDomain(format!("{what} has non-finite coordinates")));
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a == b {
            return Err(Error::InvalidDomain(format!("{what} has a zero-length side")));
        }
        if a[0] != b[0] && a[1] != b[1] {
            return Err(Error::InvalidDomain(format!("{what} has a side that is not axis-parallel")));
        }
    }
    if polygon_area(poly).abs() <= 0.0 {
        return Err(Error::InvalidDomain(format!("{what} has zero area")));
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_touch(a, b, c, d, adjacent) {
                return Err(Error::InvalidDomain(format!("{what} is self-intersecting")));
            }
        }
    }
    Ok(())
}

/// Intersection test for axis-parallel segments. Adjacent sides may share
/// their common endpoint but must not overlap.
fn segments_touch(a: Point, b: Point, c: Point, d: Point, adjacent: bool) -> bool {
    let lo = |p: Point, q: Point, k: usize| p[k].min(q[k]);
    let hi = |p: Point, q: Point, k: usize| p[k].max(q[k]);
    let overlap_x = lo(a, b, 0).max(lo(c, d, 0)) <= hi(a, b, 0).min(hi(c, d, 0));
    let overlap_y = lo(a, b, 1).max(lo(c, d, 1)) <= hi(a, b, 1).min(hi(c, d, 1));
    if !(overlap_x && overlap_y) {
        return false;
    }
    if !adjacent {
        return true;
    }
    // adjacent sides: only a collinear fold-back overlaps in more than a point
    let horizontal = |p: Point, q: Point| p[1] == q[1];
    if horizontal(a, b) != horizontal(c, d) {
        return false;
    }
    let k = if horizontal(a, b) { 0 } else { 1 };
    lo(a, b, k).max(lo(c, d, k)) < hi(a, b, k).min(hi(c, d, k))
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn point_on_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    (0..n).any(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        cross.abs() <= 1e-12 * (1.0 + a[0].abs() + a[1].abs())
            && p[0] >= a[0].min(b[0]) - 1e-12
            && p[0] <= a[0].max(b[0]) + 1e-12
            && p[1] >= a[1].min(b[1]) - 1e-12
            && p[1] <= a[1].max(b[1]) + 1e-12
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_characteristic_of_builtin_domains() {
        let square = Domain::UnitSquare.build().unwrap();
        assert_eq!(square.euler_characteristic(), 1);
        assert_eq!(square.betti_number().unwrap(), 0);

        // raw annulus: 16 lattice nodes, 8 cells -> 16 triangles; the edge
        // count is 4*8 cell sides minus 8 shared ones plus 8 diagonals = 32
        let raw = Domain::SquareAnnulus.build_raw().unwrap();
        assert_eq!((raw.num_vertices(), raw.num_edges(), raw.num_triangles()), (16, 32, 16));
        assert_eq!(raw.euler_characteristic(), 0);
        let annulus = Domain::SquareAnnulus.build().unwrap();
        assert_eq!(annulus.euler_characteristic(), 0);
        assert_eq!(annulus.betti_number().unwrap(), 1);

        let three = Domain::ThreeHoles.build().unwrap();
        assert_eq!(three.euler_characteristic(), -2);
        assert_eq!(three.betti_number().unwrap(), 3);
    }

    #[test]
    fn boundary_markers_identify_holes() {
        let m = Domain::ThreeHoles.build().unwrap();
        let mut markers: Vec<u32> = m.boundary_segments().iter().map(|s| s.2).collect();
        markers.sort();
        markers.dedup();
        assert_eq!(markers, vec![0, 1, 2, 3]);
        let comps = m.boundary_components();
        assert_eq!(comps.len(), 4);
        assert!(comps[0].is_outer);
        for e in &comps[0].edges {
            assert_eq!(m.boundary_marker(*e), Some(OUTER_MARKER));
        }
    }

    #[test]
    fn refinement_edges_are_compatible() {
        // every interior refinement edge is shared by a partner with the
        // same refinement edge
        let m = Domain::SquareAnnulus.build().unwrap();
        for t in 0..m.num_triangles() {
            let e = m.triangle_edges(t)[0];
            if let (a, Some(b)) = m.edge_triangles(e) {
                let other = if a == t { b } else { a };
                assert_eq!(m.triangle_edges(other)[0], e);
            }
        }
    }

    #[test]
    fn reentrant_corners() {
        let mut c = Domain::SquareAnnulus.reentrant_corners();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, vec![[1.0, 1.0], [1.0, 2.0], [2.0, 1.0], [2.0, 2.0]]);
        assert!(Domain::UnitSquare.reentrant_corners().is_empty());
        assert_eq!(Domain::ThreeHoles.reentrant_corners().len(), 12);
        let l_shape = Domain::Polygon {
            outer: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]],
            holes: vec![],
        };
        assert_eq!(l_shape.reentrant_corners(), vec![[1.0, 1.0]]);
    }

    #[test]
    fn rejects_degenerate_polygons() {
        let bowtie = Domain::Polygon {
            outer: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, -1.0], [0.0, -1.0]],
            holes: vec![],
        };
        assert!(matches!(bowtie.build(), Err(Error::InvalidDomain(_))));
        let flat = Domain::Polygon {
            outer: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            holes: vec![],
        };
        assert!(matches!(flat.build(), Err(Error::InvalidDomain(_))));
        let outside_hole = Domain::Polygon {
            outer: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]],
            holes: vec![vec![[3.0, 3.0], [4.0, 3.0], [4.0, 4.0], [3.0, 4.0]]],
        };
        assert!(outside_hole.build().is_err());
    }

    #[test]
    fn polygon_with_rectangular_hole() {
        let d = Domain::Polygon {
            outer: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [0.0, 2.0]],
            holes: vec![vec![[1.0, 0.5], [2.5, 0.5], [2.5, 1.5], [1.0, 1.5]]],
        };
        let m = d.build().unwrap();
        assert_eq!(m.betti_number().unwrap(), 1);
        assert!((m.total_area() - (8.0 - 1.5)).abs() < 1e-12);
    }
}
