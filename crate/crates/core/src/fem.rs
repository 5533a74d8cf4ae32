//! Reference-element machinery: P1 and bubble basis evaluation, triangle
//! quadrature, affine maps, and degree-of-freedom layouts for the five-field
//! block system.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Tag};

/// Quadrature rule in barycentric coordinates. Weights sum to one and are
/// multiplied by the physical element area on application.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Symmetric positive-weight rules (Dunavant). All weights are normalised so
/// they sum to 1.
pub fn quadrature_rule(degree: usize) -> Result<QuadRule> {
    let (points, weights): (Vec<[f64; 3]>, Vec<f64>) = match degree {
        1 => (vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]], vec![1.0]),
        2 => {
            let a = 2.0 / 3.0;
            let b = 1.0 / 6.0;
            (
                vec![[a, b, b], [b, a, b], [b, b, a]],
                vec![1.0 / 3.0; 3],
            )
        }
        3 | 4 => {
            // 6-point rule, exact to degree 4 (used for degree 3 as well to
            // keep all weights positive).
            let a = 0.445_948_490_915_965;
            let b = 0.091_576_213_509_771;
            let wa = 0.223_381_589_678_011;
            let wb = 0.109_951_743_655_322;
            (
                vec![
                    [1.0 - 2.0 * a, a, a],
                    [a, 1.0 - 2.0 * a, a],
                    [a, a, 1.0 - 2.0 * a],
                    [1.0 - 2.0 * b, b, b],
                    [b, 1.0 - 2.0 * b, b],
                    [b, b, 1.0 - 2.0 * b],
                ],
                vec![wa, wa, wa, wb, wb, wb],
            )
        }
        5 => {
            let a = 0.470_142_064_105_115;
            let b = 0.101_286_507_323_456;
            let wa = 0.132_394_152_788_506;
            let wb = 0.125_939_180_544_827;
            (
                vec![
                    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                    [1.0 - 2.0 * a, a, a],
                    [a, 1.0 - 2.0 * a, a],
                    [a, a, 1.0 - 2.0 * a],
                    [1.0 - 2.0 * b, b, b],
                    [b, 1.0 - 2.0 * b, b],
                    [b, b, 1.0 - 2.0 * b],
                ],
                vec![0.225, wa, wa, wa, wb, wb, wb],
            )
        }
        6 => {
            let a1 = 0.249_286_745_170_910;
            let a2 = 0.063_089_014_491_502;
            let b = 0.310_352_451_033_785;
            let c = 0.053_145_049_844_816;
            let w1 = 0.116_786_275_726_379;
            let w2 = 0.050_844_906_370_207;
            let w3 = 0.082_851_075_618_374;
            let mut pts = vec![
                [1.0 - 2.0 * a1, a1, a1],
                [a1, 1.0 - 2.0 * a1, a1],
                [a1, a1, 1.0 - 2.0 * a1],
                [1.0 - 2.0 * a2, a2, a2],
                [a2, 1.0 - 2.0 * a2, a2],
                [a2, a2, 1.0 - 2.0 * a2],
            ];
            let mut wts = vec![w1, w1, w1, w2, w2, w2];
            // 6 permutations of the asymmetric point (b, c, 1-b-c)
            let d = 1.0 - b - c;
            for p in [[b, c, d], [c, b, d], [b, d, c], [c, d, b], [d, b, c], [d, c, b]] {
                pts.push(p);
                wts.push(w3);
            }
            (pts, wts)
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unsupported quadrature degree {degree} (supported: 1..=6)"
            )))
        }
    };
    Ok(QuadRule {
        points,
        weights,
        degree,
    })
}

/// P1 basis values and reference gradients at a barycentric point.
/// Values are the barycentric coordinates themselves.
pub fn eval_p1(bary: [f64; 3]) -> ([f64; 3], [[f64; 2]; 3]) {
    (bary, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
}

/// Cubic bubble value and reference gradient at a barycentric point.
pub fn eval_bubble(bary: [f64; 3]) -> (f64, [f64; 2]) {
    let [l1, l2, l3] = bary;
    let value = l1 * l2 * l3;
    // grad(l1 l2 l3) = l2 l3 grad(l1) + l1 l3 grad(l2) + l1 l2 grad(l3)
    let grad = [
        -l2 * l3 + l1 * l3,
        -l2 * l3 + l1 * l2,
    ];
    (value, grad)
}

/// Affine map data for one triangle: the Jacobian, its inverse transpose
/// (maps reference gradients to physical ones), and |det J| (= 2 area).
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub jac: [[f64; 2]; 2],
    pub inv_t: [[f64; 2]; 2],
    pub det_abs: f64,
    pub origin: [f64; 2],
}

impl AffineMap {
    /// Physical coordinates of a barycentric point.
    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let (xi, eta) = (bary[1], bary[2]);
        [
            self.origin[0] + self.jac[0][0] * xi + self.jac[0][1] * eta,
            self.origin[1] + self.jac[1][0] * xi + self.jac[1][1] * eta,
        ]
    }

    /// Physical gradient from a reference gradient.
    pub fn grad(&self, g_ref: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g_ref[0] + self.inv_t[0][1] * g_ref[1],
            self.inv_t[1][0] * g_ref[0] + self.inv_t[1][1] * g_ref[1],
        ]
    }
}

pub fn affine_map(mesh: &Mesh, tri: usize) -> Result<AffineMap> {
    let [a, b, c] = mesh.triangles[tri];
    let pa = mesh.vertices[a];
    let pb = mesh.vertices[b];
    let pc = mesh.vertices[c];
    let jac = [
        [pb[0] - pa[0], pc[0] - pa[0]],
        [pb[1] - pa[1], pc[1] - pa[1]],
    ];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if det.abs() < 1e-14 {
        return Err(Error::DegenerateElement {
            element: tri,
            det: det.abs(),
        });
    }
    let inv_t = [
        [jac[1][1] / det, -jac[1][0] / det],
        [-jac[0][1] / det, jac[0][0] / det],
    ];
    Ok(AffineMap {
        jac,
        inv_t,
        det_abs: det.abs(),
        origin: pa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Vector P1 plus one vector bubble per triangle (MINI displacement).
    VectorMini,
    /// Continuous scalar P1.
    ScalarP1,
}

/// Per-field degree-of-freedom layout.
///
/// ScalarP1: dof i = vertex i. VectorMini: vertex v contributes dofs 2v
/// (x) and 2v+1 (y); triangle t contributes bubble dofs 2(nv+t), 2(nv+t)+1.
/// Bubble dofs are never constrained (bubbles vanish on edges).
#[derive(Debug, Clone)]
pub struct Space {
    pub kind: SpaceKind,
    pub constrained_tag: Option<Tag>,
    pub ndof: usize,
    pub n_vertices: usize,
    pub n_triangles: usize,
    /// Constrained dof indices, sorted.
    pub constrained: Vec<usize>,
}

impl Space {
    pub fn vertex_dof(&self, v: usize, comp: usize) -> usize {
        match self.kind {
            SpaceKind::ScalarP1 => v,
            SpaceKind::VectorMini => 2 * v + comp,
        }
    }

    pub fn bubble_dof(&self, tri: usize, comp: usize) -> usize {
        debug_assert_eq!(self.kind, SpaceKind::VectorMini);
        2 * (self.n_vertices + tri) + comp
    }
}

pub fn build_space(mesh: &Mesh, kind: SpaceKind, constrained_tag: Option<Tag>) -> Space {
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    let ndof = match kind {
        SpaceKind::ScalarP1 => nv,
        SpaceKind::VectorMini => 2 * (nv + nt),
    };
    let mut constrained = Vec::new();
    if let Some(tag) = constrained_tag {
        for v in mesh.boundary_vertices(tag) {
            match kind {
                SpaceKind::ScalarP1 => constrained.push(v),
                SpaceKind::VectorMini => {
                    constrained.push(2 * v);
                    constrained.push(2 * v + 1);
                }
            }
        }
    }
    constrained.sort_unstable();
    Space {
        kind,
        constrained_tag,
        ndof,
        n_vertices: nv,
        n_triangles: nt,
        constrained,
    }
}

/// Offsets of the five fields (u, p, psi, w1, w2) in the monolithic vector.
#[derive(Debug, Clone, Copy)]
pub struct BlockLayout {
    pub u: usize,
    pub p: usize,
    pub psi: usize,
    pub w1: usize,
    pub w2: usize,
    pub total: usize,
}

impl BlockLayout {
    pub fn new(nu: usize, np: usize, npsi: usize, nw: usize) -> Self {
        let u = 0;
        let p = u + nu;
        let psi = p + np;
        let w1 = psi + npsi;
        let w2 = w1 + nw;
        BlockLayout {
            u,
            p,
            psi,
            w1,
            w2,
            total: w2 + nw,
        }
    }
}

/// All five spaces plus the monolithic layout for one mesh.
#[derive(Debug, Clone)]
pub struct Spaces {
    pub u: Space,
    pub p: Space,
    pub psi: Space,
    pub w: Space,
    pub layout: BlockLayout,
}

impl Spaces {
    /// V_h constrained on Gamma, Q_h constrained on Sigma, Z_h and W_h free.
    pub fn build(mesh: &Mesh) -> Spaces {
        let u = build_space(mesh, SpaceKind::VectorMini, Some(Tag::Gamma));
        let p = build_space(mesh, SpaceKind::ScalarP1, Some(Tag::Sigma));
        let psi = build_space(mesh, SpaceKind::ScalarP1, None);
        let w = build_space(mesh, SpaceKind::ScalarP1, None);
        let layout = BlockLayout::new(u.ndof, p.ndof, psi.ndof, w.ndof);
        Spaces { u, p, psi, w, layout }
    }
}

/// Evaluate a VectorMini field (value and physical gradient) at a barycentric
/// point of triangle `tri` from its coefficient vector.
pub fn eval_mini_field(
    mesh: &Mesh,
    space: &Space,
    coeffs: &[f64],
    tri: usize,
    bary: [f64; 3],
    map: &AffineMap,
) -> ([f64; 2], [[f64; 2]; 2]) {
    let (vals, grads_ref) = eval_p1(bary);
    let (bval, bgrad_ref) = eval_bubble(bary);
    let tri_v = mesh.triangles[tri];
    let mut value = [0.0f64; 2];
    // grad[c][d] = d u_c / d x_d
    let mut grad = [[0.0f64; 2]; 2];
    for k in 0..3 {
        let g = map.grad(grads_ref[k]);
        for c in 0..2 {
            let coef = coeffs[space.vertex_dof(tri_v[k], c)];
            value[c] += coef * vals[k];
            grad[c][0] += coef * g[0];
            grad[c][1] += coef * g[1];
        }
    }
    let gb = map.grad(bgrad_ref);
    for c in 0..2 {
        let coef = coeffs[space.bubble_dof(tri, c)];
        value[c] += coef * bval;
        grad[c][0] += coef * gb[0];
        grad[c][1] += coef * gb[1];
    }
    (value, grad)
}

/// Evaluate a ScalarP1 field (value and physical gradient) at a barycentric
/// point of triangle `tri`.
pub fn eval_p1_field(
    mesh: &Mesh,
    coeffs: &[f64],
    tri: usize,
    bary: [f64; 3],
    map: &AffineMap,
) -> (f64, [f64; 2]) {
    let (vals, grads_ref) = eval_p1(bary);
    let tri_v = mesh.triangles[tri];
    let mut value = 0.0;
    let mut grad = [0.0f64; 2];
    for k in 0..3 {
        let g = map.grad(grads_ref[k]);
        let coef = coeffs[tri_v[k]];
        value += coef * vals[k];
        grad[0] += coef * g[0];
        grad[1] += coef * g[1];
    }
    (value, grad)
}
