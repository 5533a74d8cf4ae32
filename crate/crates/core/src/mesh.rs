//! Structured triangulations of axis-aligned rectangles.
//!
//! Boundary edges are tagged either `Gamma` (clamped / no fluid flux) or
//! `Sigma` (traction / drained). Edges are stored with the orientation they
//! carry inside their owning triangle, so the outward normal of a boundary
//! edge (a, b) is the right-hand rotation of b - a.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Boundary segment classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Gamma,
    Sigma,
}

/// Rectangle side, used to select which sides form Gamma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Oriented boundary edges with their tag.
    pub boundary_edges: Vec<([usize; 2], Tag)>,
    /// Longest edge length.
    pub h_max: f64,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed (positive for CCW) area of triangle `t`.
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = self.vertices[a];
        let q = self.vertices[b];
        let r = self.vertices[c];
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// Vertices lying on at least one edge carrying `tag`, sorted.
    pub fn boundary_vertices(&self, tag: Tag) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|(_, t)| *t == tag)
            .flat_map(|(e, _)| e.iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Outward unit normal and length of boundary edge `k`.
    pub fn boundary_edge_normal(&self, k: usize) -> ([f64; 2], f64) {
        let ([a, b], _) = self.boundary_edges[k];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        ([d[1] / len, -d[0] / len], len)
    }

    fn compute_h_max(vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> f64 {
        let mut h = 0.0f64;
        for tri in triangles {
            for k in 0..3 {
                let a = vertices[tri[k]];
                let b = vertices[tri[(k + 1) % 3]];
                let e = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                h = h.max(e);
            }
        }
        h
    }
}

/// Structured mesh of (x0,x1)x(y0,y1) with nx-by-ny cells, each split along
/// the bottom-left to top-right diagonal. Sides listed in `gamma_sides` are
/// tagged Gamma, the rest Sigma.
pub fn build_rect_mesh(
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    nx: usize,
    ny: usize,
    gamma_sides: &[Side],
) -> Result<Mesh> {
    if !(x1 > x0) || !(y1 > y0) {
        return Err(Error::InvalidArgument(format!(
            "rectangle extents must be positive: ({x0},{y0})-({x1},{y1})"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(
            "subdivision counts must be positive".into(),
        ));
    }

    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                x0 + (x1 - x0) * i as f64 / nx as f64,
                y0 + (y1 - y0) * j as f64 / ny as f64,
            ]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v11 = vid(i + 1, j + 1);
            let v01 = vid(i, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let tag_of = |side: Side| {
        if gamma_sides.contains(&side) {
            Tag::Gamma
        } else {
            Tag::Sigma
        }
    };
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    // Orientations chosen so that (dy, -dx) points outward.
    for i in 0..nx {
        boundary_edges.push(([vid(i, 0), vid(i + 1, 0)], tag_of(Side::Bottom)));
        boundary_edges.push(([vid(i + 1, ny), vid(i, ny)], tag_of(Side::Top)));
    }
    for j in 0..ny {
        boundary_edges.push(([vid(nx, j), vid(nx, j + 1)], tag_of(Side::Right)));
        boundary_edges.push(([vid(0, j + 1), vid(0, j)], tag_of(Side::Left)));
    }

    let h_max = Mesh::compute_h_max(&vertices, &triangles);
    Ok(Mesh {
        vertices,
        triangles,
        boundary_edges,
        h_max,
    })
}

/// Uniform red refinement: every triangle is split into four congruent
/// children using edge midpoints; boundary tags are inherited.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoint.entry(key).or_insert_with(|| {
            let pa = vertices[a];
            let pb = vertices[b];
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            vertices.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for &[a, b, c] in &mesh.triangles {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }

    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for &([a, b], tag) in &mesh.boundary_edges {
        let m = mid(a, b, &mut vertices);
        boundary_edges.push(([a, m], tag));
        boundary_edges.push(([m, b], tag));
    }

    let h_max = Mesh::compute_h_max(&vertices, &triangles);
    Mesh {
        vertices,
        triangles,
        boundary_edges,
        h_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn edge_counts(mesh: &Mesh) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &mesh.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    #[test]
    fn single_cell_split() {
        let m = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 1, 1, &[Side::Left, Side::Bottom]).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        let gamma = m.boundary_edges.iter().filter(|(_, t)| *t == Tag::Gamma).count();
        let sigma = m.boundary_edges.iter().filter(|(_, t)| *t == Tag::Sigma).count();
        assert_eq!(gamma, 2);
        assert_eq!(sigma, 2);
    }

    #[test]
    fn two_by_two_counts() {
        let m = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 2, 2, &[Side::Left]).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_triangles(), 8);
        assert!((m.h_max - 2.0f64.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn example2_sigma_is_right_side() {
        let m = build_rect_mesh(0.0, 0.0, 1.0, 0.6, 10, 6, &[Side::Left, Side::Bottom, Side::Top])
            .unwrap();
        let sigma: Vec<_> = m
            .boundary_edges
            .iter()
            .filter(|(_, t)| *t == Tag::Sigma)
            .collect();
        assert_eq!(sigma.len(), 6);
        for ([a, b], _) in sigma {
            assert!((m.vertices[*a][0] - 1.0).abs() < 1e-14);
            assert!((m.vertices[*b][0] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn positive_orientation_and_area() {
        let m = build_rect_mesh(0.0, 0.0, 2.0, 3.0, 4, 5, &[Side::Left]).unwrap();
        for t in 0..m.n_triangles() {
            assert!(m.area(t) > 0.0);
        }
        assert!((m.total_area() - 6.0).abs() < 1e-12 * 6.0);
    }

    #[test]
    fn edge_manifold_and_euler() {
        let m = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 3, 2, &[Side::Left]).unwrap();
        let counts = edge_counts(&m);
        let boundary: HashSet<(usize, usize)> = m
            .boundary_edges
            .iter()
            .map(|([a, b], _)| (*a.min(b), *a.max(b)))
            .collect();
        for (e, c) in &counts {
            if boundary.contains(e) {
                assert_eq!(*c, 1, "boundary edge in one triangle");
            } else {
                assert_eq!(*c, 2, "interior edge in two triangles");
            }
        }
        // union of tagged edges is the topological boundary
        let topological: HashSet<_> = counts
            .iter()
            .filter(|(_, c)| **c == 1)
            .map(|(e, _)| *e)
            .collect();
        assert_eq!(boundary, topological);
        // Euler relation V - E + T = 1 for a disk
        let v = m.n_vertices() as i64;
        let e = counts.len() as i64;
        let t = m.n_triangles() as i64;
        assert_eq!(v - e + t, 1);
    }

    #[test]
    fn refine_quadruples_and_halves_h() {
        let mut m = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 1, 1, &[Side::Left, Side::Bottom]).unwrap();
        let h0 = m.h_max;
        let a0 = m.total_area();
        m = refine_uniform(&m);
        assert_eq!(m.n_triangles(), 8);
        assert!((m.h_max - h0 / 2.0).abs() < 1e-14);
        assert!((m.total_area() - a0).abs() < 1e-14);
        for t in 0..m.n_triangles() {
            assert!(m.area(t) > 0.0);
        }
    }

    #[test]
    fn seven_refinements_count() {
        let mut m = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 1, 1, &[Side::Left]).unwrap();
        for _ in 0..7 {
            m = refine_uniform(&m);
        }
        assert_eq!(m.n_triangles(), 2 * 4usize.pow(7));
        assert_eq!(m.n_triangles(), 32768);
    }

    #[test]
    fn boundary_vertices_by_tag() {
        let m = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 1, 1, &[Side::Left, Side::Bottom]).unwrap();
        let gamma = m.boundary_vertices(Tag::Gamma);
        assert_eq!(gamma.len(), 3);
        let sigma = m.boundary_vertices(Tag::Sigma);
        assert_eq!(sigma.len(), 3);

        let all_gamma =
            build_rect_mesh(0.0, 0.0, 1.0, 1.0, 2, 2, &[Side::Left, Side::Right, Side::Bottom, Side::Top])
                .unwrap();
        assert!(all_gamma.boundary_vertices(Tag::Sigma).is_empty());

        let m2 = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 2, 2, &[Side::Left, Side::Bottom]).unwrap();
        assert_eq!(m2.boundary_vertices(Tag::Gamma).len(), 5);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_rect_mesh(0.0, 0.0, 0.0, 1.0, 1, 1, &[Side::Left]).is_err());
        assert!(build_rect_mesh(0.0, 0.0, 1.0, 1.0, 0, 1, &[Side::Left]).is_err());
    }

    #[test]
    fn boundary_normals_point_outward() {
        let m = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 2, 2, &[Side::Left]).unwrap();
        let centroid = [0.5, 0.5];
        for k in 0..m.boundary_edges.len() {
            let ([a, b], _) = m.boundary_edges[k];
            let (n, _) = m.boundary_edge_normal(k);
            let pa = m.vertices[a];
            let pb = m.vertices[b];
            let midpt = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let to_out = [midpt[0] - centroid[0], midpt[1] - centroid[1]];
            assert!(n[0] * to_out[0] + n[1] * to_out[1] > 0.0);
        }
    }
}
