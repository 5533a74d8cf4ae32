//! Manufactured-solution machinery: closed-form exact solutions, synthesis
//! of the matching volume sources and boundary data, error norms, and the
//! spatial/temporal convergence studies.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{affine_map, eval_mini_field, eval_p1_field, quadrature_rule, Spaces};
use crate::forms::{reaction_f, reaction_g, BoundaryData, ModelParams, Sources};
use crate::mesh::{build_rect_mesh, refine_uniform, Mesh, Side};
use crate::solver::{run_transient, NewtonOptions, State, StepReport, TimeStepper};

/// A smooth exact solution with every derivative the source synthesis needs.
/// Gradients are row-major: grad_u[c][d] = d u_c / d x_d.
pub trait ExactSolution: Send + Sync {
    fn u(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn grad_u(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2];
    fn u_t(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn grad_u_t(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2];
    fn lap_u(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn grad_div_u(&self, x: [f64; 2], t: f64) -> [f64; 2];

    fn p(&self, x: [f64; 2], t: f64) -> f64;
    fn grad_p(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn hess_p(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2];
    fn p_t(&self, x: [f64; 2], t: f64) -> f64;

    fn psi(&self, x: [f64; 2], t: f64) -> f64;
    fn grad_psi(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn psi_t(&self, x: [f64; 2], t: f64) -> f64;

    fn w1(&self, x: [f64; 2], t: f64) -> f64;
    fn grad_w1(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn hess_w1(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2];
    fn w1_t(&self, x: [f64; 2], t: f64) -> f64;

    fn w2(&self, x: [f64; 2], t: f64) -> f64;
    fn grad_w2(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn hess_w2(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2];
    fn w2_t(&self, x: [f64; 2], t: f64) -> f64;

    fn div_u(&self, x: [f64; 2], t: f64) -> f64 {
        let g = self.grad_u(x, t);
        g[0][0] + g[1][1]
    }
    fn div_u_t(&self, x: [f64; 2], t: f64) -> f64 {
        let g = self.grad_u_t(x, t);
        g[0][0] + g[1][1]
    }
}

/// Polynomial/trigonometric family used for the mesh-refinement study. All
/// fields vanish at t = 0 and have full spatial regularity; the total
/// pressure is taken as p - lambda div(u), and the mismatch with
/// alpha p - lambda div(u) is carried by the S_psi source.
pub struct MmsSpatial {
    pub u_inf: f64,
    pub lambda: f64,
}

const PI: f64 = std::f64::consts::PI;

impl ExactSolution for MmsSpatial {
    fn u(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let a = 0.5 * self.u_inf * t * t;
        [
            a * ((PI * x[0]).sin() * (PI * x[1]).cos() + x[0] * x[0] / self.lambda),
            a * (-(PI * x[0]).cos() * (PI * x[1]).sin() + x[1] * x[1] / self.lambda),
        ]
    }
    fn grad_u(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let a = 0.5 * self.u_inf * t * t;
        self.grad_profile(x, a)
    }
    fn u_t(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let a = self.u_inf * t;
        [
            a * ((PI * x[0]).sin() * (PI * x[1]).cos() + x[0] * x[0] / self.lambda),
            a * (-(PI * x[0]).cos() * (PI * x[1]).sin() + x[1] * x[1] / self.lambda),
        ]
    }
    fn grad_u_t(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        self.grad_profile(x, self.u_inf * t)
    }
    fn lap_u(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let a = 0.5 * self.u_inf * t * t;
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        [
            a * (-2.0 * PI * PI * sx * cy + 2.0 / self.lambda),
            a * (2.0 * PI * PI * cx * sy + 2.0 / self.lambda),
        ]
    }
    fn grad_div_u(&self, _x: [f64; 2], t: f64) -> [f64; 2] {
        let a = 0.5 * self.u_inf * t * t;
        [2.0 * a / self.lambda, 2.0 * a / self.lambda]
    }

    fn p(&self, x: [f64; 2], t: f64) -> f64 {
        t * (x[0].powi(3) - x[1].powi(4))
    }
    fn grad_p(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        [3.0 * t * x[0] * x[0], -4.0 * t * x[1].powi(3)]
    }
    fn hess_p(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        [[6.0 * t * x[0], 0.0], [0.0, -12.0 * t * x[1] * x[1]]]
    }
    fn p_t(&self, x: [f64; 2], _t: f64) -> f64 {
        x[0].powi(3) - x[1].powi(4)
    }

    fn psi(&self, x: [f64; 2], t: f64) -> f64 {
        self.p(x, t) - self.u_inf * t * t * (x[0] + x[1])
    }
    fn grad_psi(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let gp = self.grad_p(x, t);
        [gp[0] - self.u_inf * t * t, gp[1] - self.u_inf * t * t]
    }
    fn psi_t(&self, x: [f64; 2], t: f64) -> f64 {
        self.p_t(x, t) - 2.0 * self.u_inf * t * (x[0] + x[1])
    }

    fn w1(&self, x: [f64; 2], t: f64) -> f64 {
        t * (x[0].exp() + (PI * x[0]).cos() * (PI * x[1]).cos())
    }
    fn grad_w1(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        [
            t * (x[0].exp() - PI * (PI * x[0]).sin() * (PI * x[1]).cos()),
            t * (-PI * (PI * x[0]).cos() * (PI * x[1]).sin()),
        ]
    }
    fn hess_w1(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        let pp = PI * PI;
        [
            [t * (x[0].exp() - pp * cx * cy), t * pp * sx * sy],
            [t * pp * sx * sy, t * (-pp * cx * cy)],
        ]
    }
    fn w1_t(&self, x: [f64; 2], _t: f64) -> f64 {
        x[0].exp() + (PI * x[0]).cos() * (PI * x[1]).cos()
    }

    fn w2(&self, x: [f64; 2], t: f64) -> f64 {
        t * ((-x[1]).exp() + (PI * x[0]).sin() * (PI * x[1]).sin())
    }
    fn grad_w2(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        [
            t * PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
            t * (-(-x[1]).exp() + PI * (PI * x[0]).sin() * (PI * x[1]).cos()),
        ]
    }
    fn hess_w2(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        let pp = PI * PI;
        [
            [t * (-pp * sx * sy), t * pp * cx * cy],
            [t * pp * cx * cy, t * ((-x[1]).exp() - pp * sx * sy)],
        ]
    }
    fn w2_t(&self, x: [f64; 2], _t: f64) -> f64 {
        (-x[1]).exp() + (PI * x[0]).sin() * (PI * x[1]).sin()
    }
}

impl MmsSpatial {
    fn grad_profile(&self, x: [f64; 2], a: f64) -> [[f64; 2]; 2] {
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        [
            [
                a * (PI * cx * cy + 2.0 * x[0] / self.lambda),
                a * (-PI * sx * sy),
            ],
            [
                a * (PI * sx * sy),
                a * (-PI * cx * cy + 2.0 * x[1] / self.lambda),
            ],
        ]
    }
}

/// sin(t)-modulated spatially *linear* family used for the time-step study:
/// every field lies in its finite element space at every time, so the
/// semidiscrete Galerkin solution is exact and all measured error is
/// temporal.  Here psi = alpha p - lambda div(u) holds exactly (S_psi = 0),
/// div u is O(1/lambda) to keep the total pressure O(1), and the species
/// stay positive (no kinetics clamp) in a kinetically *stable* range, so
/// the implicit step operator is uniformly invertible for every dt.
pub struct MmsTemporal {
    pub u_inf: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl ExactSolution for MmsTemporal {
    fn u(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let a = self.u_inf * t.sin();
        [
            a * (2.0 * x[1] + x[0] / self.lambda),
            a * (2.0 * x[0] + x[1] / self.lambda),
        ]
    }
    fn grad_u(&self, _x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let a = self.u_inf * t.sin();
        [[a / self.lambda, 2.0 * a], [2.0 * a, a / self.lambda]]
    }
    fn u_t(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let a = self.u_inf * t.cos();
        [
            a * (2.0 * x[1] + x[0] / self.lambda),
            a * (2.0 * x[0] + x[1] / self.lambda),
        ]
    }
    fn grad_u_t(&self, _x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let a = self.u_inf * t.cos();
        [[a / self.lambda, 2.0 * a], [2.0 * a, a / self.lambda]]
    }
    fn lap_u(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn grad_div_u(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn p(&self, x: [f64; 2], t: f64) -> f64 {
        t.sin() * (x[0] + 2.0 * x[1])
    }
    fn grad_p(&self, _x: [f64; 2], t: f64) -> [f64; 2] {
        [t.sin(), 2.0 * t.sin()]
    }
    fn hess_p(&self, _x: [f64; 2], _t: f64) -> [[f64; 2]; 2] {
        [[0.0, 0.0], [0.0, 0.0]]
    }
    fn p_t(&self, x: [f64; 2], t: f64) -> f64 {
        t.cos() * (x[0] + 2.0 * x[1])
    }

    fn psi(&self, x: [f64; 2], t: f64) -> f64 {
        // lambda * div u = 2 u_inf sin(t)
        self.alpha * self.p(x, t) - 2.0 * self.u_inf * t.sin()
    }
    fn grad_psi(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let gp = self.grad_p(x, t);
        [self.alpha * gp[0], self.alpha * gp[1]]
    }
    fn psi_t(&self, x: [f64; 2], t: f64) -> f64 {
        self.alpha * self.p_t(x, t) - 2.0 * self.u_inf * t.cos()
    }

    fn w1(&self, x: [f64; 2], t: f64) -> f64 {
        0.9 + 0.1 * t.sin() * (x[0] - x[1])
    }
    fn grad_w1(&self, _x: [f64; 2], t: f64) -> [f64; 2] {
        [0.1 * t.sin(), -0.1 * t.sin()]
    }
    fn hess_w1(&self, _x: [f64; 2], _t: f64) -> [[f64; 2]; 2] {
        [[0.0, 0.0], [0.0, 0.0]]
    }
    fn w1_t(&self, x: [f64; 2], t: f64) -> f64 {
        0.1 * t.cos() * (x[0] - x[1])
    }

    fn w2(&self, x: [f64; 2], t: f64) -> f64 {
        // the (w1, w2) range keeps w1 w2 < 1/2, where the kinetics
        // linearisation is stable: at the Turing-unstable state the
        // backward-Euler operator M/dt - J is singular whenever 1/dt hits
        // the growth-rate band, stranding Newton at resonant step sizes
        0.4 + 0.1 * t.sin() * (x[0] + x[1] - 1.0)
    }
    fn grad_w2(&self, _x: [f64; 2], t: f64) -> [f64; 2] {
        [0.1 * t.sin(), 0.1 * t.sin()]
    }
    fn hess_w2(&self, _x: [f64; 2], _t: f64) -> [[f64; 2]; 2] {
        [[0.0, 0.0], [0.0, 0.0]]
    }
    fn w2_t(&self, x: [f64; 2], t: f64) -> f64 {
        0.1 * t.cos() * (x[0] + x[1] - 1.0)
    }
}

fn tensor_contract(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Volume sources that make `exact` a solution of the strong system with
/// parameters `p`. The species sources use the continuous velocity du/dt for
/// advection and div-rate, matching the backward-difference scheme to O(dt).
pub fn synthesize_sources(exact: Arc<dyn ExactSolution>, p: &ModelParams) -> Sources {
    let pp = p.clone();
    let e = exact.clone();
    let body_force = move |x: [f64; 2], t: f64| -> [f64; 2] {
        let lap = e.lap_u(x, t);
        let gdiv = e.grad_div_u(x, t);
        let gpsi = e.grad_psi(x, t);
        let gr1 = e.grad_w1(x, t);
        let gr2 = e.grad_w2(x, t);
        let k = pp.k_dir;
        let k_dot_gr = k[0] * (gr1[0] + gr2[0]) + k[1] * (gr1[1] + gr2[1]);
        let mut b = [0.0; 2];
        for c in 0..2 {
            // -div(2 mu eps(u)) = -mu (lap u + grad div u)
            b[c] = (-pp.mu * (lap[c] + gdiv[c]) + gpsi[c] + pp.tau * k[c] * k_dot_gr) / pp.rho;
        }
        b
    };

    let pp2 = p.clone();
    let e2 = exact.clone();
    let fluid_source = move |x: [f64; 2], t: f64| -> f64 {
        let cp = pp2.c0 + pp2.alpha * pp2.alpha / pp2.lambda;
        cp * e2.p_t(x, t) - pp2.alpha / pp2.lambda * e2.psi_t(x, t)
            - tensor_contract(pp2.kappa, e2.hess_p(x, t)) / pp2.eta
    };

    let pp3 = p.clone();
    let e3 = exact.clone();
    let s1 = move |x: [f64; 2], t: f64| -> f64 {
        let ut = e3.u_t(x, t);
        let g = e3.grad_w1(x, t);
        e3.w1_t(x, t) + ut[0] * g[0] + ut[1] * g[1]
            - tensor_contract(pp3.d1, e3.hess_w1(x, t))
            - reaction_f(e3.w1(x, t), e3.w2(x, t), e3.div_u_t(x, t), &pp3)
    };

    let pp4 = p.clone();
    let e4 = exact.clone();
    let s2 = move |x: [f64; 2], t: f64| -> f64 {
        let ut = e4.u_t(x, t);
        let g = e4.grad_w2(x, t);
        e4.w2_t(x, t) + ut[0] * g[0] + ut[1] * g[1]
            - tensor_contract(pp4.d2, e4.hess_w2(x, t))
            - reaction_g(e4.w1(x, t), e4.w2(x, t), e4.div_u_t(x, t), &pp4)
    };

    let pp5 = p.clone();
    let e5 = exact.clone();
    let s_psi = move |x: [f64; 2], t: f64| -> f64 {
        e5.psi(x, t) - pp5.alpha * e5.p(x, t) + pp5.lambda * e5.div_u(x, t)
    };

    Sources {
        body_force: Arc::new(body_force),
        fluid_source: Arc::new(fluid_source),
        s1: Arc::new(s1),
        s2: Arc::new(s2),
        s_psi: Arc::new(s_psi),
    }
}

/// Dirichlet traces and Neumann fluxes of `exact` on the tagged boundary.
pub fn boundary_data_from_exact(exact: Arc<dyn ExactSolution>, p: &ModelParams) -> BoundaryData {
    let e = exact.clone();
    let u_dirichlet = move |x: [f64; 2], t: f64| e.u(x, t);

    let pp = p.clone();
    let e2 = exact.clone();
    let fluid_flux = move |x: [f64; 2], t: f64, n: [f64; 2]| -> f64 {
        let g = e2.grad_p(x, t);
        let kg = [
            pp.kappa[0][0] * g[0] + pp.kappa[0][1] * g[1],
            pp.kappa[1][0] * g[0] + pp.kappa[1][1] * g[1],
        ];
        (kg[0] * n[0] + kg[1] * n[1]) / pp.eta
    };

    let e3 = exact.clone();
    let p_dirichlet = move |x: [f64; 2], t: f64| e3.p(x, t);

    let pp4 = p.clone();
    let e4 = exact.clone();
    let traction = move |x: [f64; 2], t: f64, n: [f64; 2]| -> [f64; 2] {
        let g = e4.grad_u(x, t);
        let psi = e4.psi(x, t);
        let r = e4.w1(x, t) + e4.w2(x, t);
        let k = pp4.k_dir;
        let mut sig = [[0.0f64; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                sig[a][b] = pp4.mu * (g[a][b] + g[b][a]) - pp4.tau * r * k[a] * k[b];
            }
            sig[a][a] -= psi;
        }
        [
            sig[0][0] * n[0] + sig[0][1] * n[1],
            sig[1][0] * n[0] + sig[1][1] * n[1],
        ]
    };

    let pp5 = p.clone();
    let e5 = exact.clone();
    let w1_flux = move |x: [f64; 2], t: f64, n: [f64; 2]| -> f64 {
        let g = e5.grad_w1(x, t);
        let dg = [
            pp5.d1[0][0] * g[0] + pp5.d1[0][1] * g[1],
            pp5.d1[1][0] * g[0] + pp5.d1[1][1] * g[1],
        ];
        dg[0] * n[0] + dg[1] * n[1]
    };

    let pp6 = p.clone();
    let e6 = exact;
    let w2_flux = move |x: [f64; 2], t: f64, n: [f64; 2]| -> f64 {
        let g = e6.grad_w2(x, t);
        let dg = [
            pp6.d2[0][0] * g[0] + pp6.d2[0][1] * g[1],
            pp6.d2[1][0] * g[0] + pp6.d2[1][1] * g[1],
        ];
        dg[0] * n[0] + dg[1] * n[1]
    };

    BoundaryData {
        u_dirichlet: Arc::new(u_dirichlet),
        fluid_flux: Arc::new(fluid_flux),
        p_dirichlet: Arc::new(p_dirichlet),
        traction: Arc::new(traction),
        w1_flux: Arc::new(w1_flux),
        w2_flux: Arc::new(w2_flux),
    }
}

/// Vertex interpolant of the exact solution (bubble coefficients zero).
pub fn interpolate_state(mesh: &Mesh, spaces: &Spaces, exact: &dyn ExactSolution, t: f64) -> State {
    let mut s = State::zeros(spaces, t);
    for (v, x) in mesh.vertices.iter().enumerate() {
        let uv = exact.u(*x, t);
        s.u[spaces.u.vertex_dof(v, 0)] = uv[0];
        s.u[spaces.u.vertex_dof(v, 1)] = uv[1];
        s.p[v] = exact.p(*x, t);
        s.psi[v] = exact.psi(*x, t);
        s.w1[v] = exact.w1(*x, t);
        s.w2[v] = exact.w2(*x, t);
    }
    s
}

/// L2 and H1 errors of every field at the state's own time.
#[derive(Debug, Clone, Copy, Default)]
pub struct FieldErrors {
    pub u_l2: f64,
    pub u_h1: f64,
    pub p_l2: f64,
    pub p_h1: f64,
    pub psi_l2: f64,
    pub w1_l2: f64,
    pub w1_h1: f64,
    pub w2_l2: f64,
    pub w2_h1: f64,
}

impl FieldErrors {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "u_l2" => self.u_l2,
            "u_h1" => self.u_h1,
            "p_l2" => self.p_l2,
            "p_h1" => self.p_h1,
            "psi_l2" => self.psi_l2,
            "w1_l2" => self.w1_l2,
            "w1_h1" => self.w1_h1,
            "w2_l2" => self.w2_l2,
            "w2_h1" => self.w2_h1,
            _ => return None,
        })
    }
}

pub fn error_norms(
    mesh: &Mesh,
    spaces: &Spaces,
    state: &State,
    exact: &dyn ExactSolution,
) -> Result<FieldErrors> {
    let rule = quadrature_rule(6)?;
    let t = state.t;
    let mut acc = [0.0f64; 9]; // squared accumulators in FieldErrors order
    for tri in 0..mesh.n_triangles() {
        let map = affine_map(mesh, tri)?;
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let wq = w * map.det_abs * 0.5;
            let x = map.point(*q);

            let (uh, guh) = eval_mini_field(mesh, &spaces.u, &state.u, tri, *q, &map);
            let ue = exact.u(x, t);
            let gue = exact.grad_u(x, t);
            let mut ul2 = 0.0;
            let mut uh1 = 0.0;
            for c in 0..2 {
                ul2 += (uh[c] - ue[c]) * (uh[c] - ue[c]);
                for d in 0..2 {
                    uh1 += (guh[c][d] - gue[c][d]) * (guh[c][d] - gue[c][d]);
                }
            }
            acc[0] += ul2 * wq;
            acc[1] += (ul2 + uh1) * wq;

            let (ph, gph) = eval_p1_field(mesh, &state.p, tri, *q, &map);
            let pe = exact.p(x, t);
            let gpe = exact.grad_p(x, t);
            let pl2 = (ph - pe) * (ph - pe);
            let ph1 = (gph[0] - gpe[0]).powi(2) + (gph[1] - gpe[1]).powi(2);
            acc[2] += pl2 * wq;
            acc[3] += (pl2 + ph1) * wq;

            let (psih, _) = eval_p1_field(mesh, &state.psi, tri, *q, &map);
            acc[4] += (psih - exact.psi(x, t)).powi(2) * wq;

            let (w1h, gw1h) = eval_p1_field(mesh, &state.w1, tri, *q, &map);
            let w1e = exact.w1(x, t);
            let gw1e = exact.grad_w1(x, t);
            let w1l2 = (w1h - w1e) * (w1h - w1e);
            let w1h1 = (gw1h[0] - gw1e[0]).powi(2) + (gw1h[1] - gw1e[1]).powi(2);
            acc[5] += w1l2 * wq;
            acc[6] += (w1l2 + w1h1) * wq;

            let (w2h, gw2h) = eval_p1_field(mesh, &state.w2, tri, *q, &map);
            let w2e = exact.w2(x, t);
            let gw2e = exact.grad_w2(x, t);
            let w2l2 = (w2h - w2e) * (w2h - w2e);
            let w2h1 = (gw2h[0] - gw2e[0]).powi(2) + (gw2h[1] - gw2e[1]).powi(2);
            acc[7] += w2l2 * wq;
            acc[8] += (w2l2 + w2h1) * wq;
        }
    }
    Ok(FieldErrors {
        u_l2: acc[0].sqrt(),
        u_h1: acc[1].sqrt(),
        p_l2: acc[2].sqrt(),
        p_h1: acc[3].sqrt(),
        psi_l2: acc[4].sqrt(),
        w1_l2: acc[5].sqrt(),
        w1_h1: acc[6].sqrt(),
        w2_l2: acc[7].sqrt(),
        w2_h1: acc[8].sqrt(),
    })
}

/// Squared L2 errors of the five fields, for the cumulative-in-time norm.
fn l2_errors_squared(
    mesh: &Mesh,
    spaces: &Spaces,
    state: &State,
    exact: &dyn ExactSolution,
) -> Result<[f64; 5]> {
    let rule = quadrature_rule(6)?;
    let t = state.t;
    let mut acc = [0.0f64; 5];
    for tri in 0..mesh.n_triangles() {
        let map = affine_map(mesh, tri)?;
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let wq = w * map.det_abs * 0.5;
            let x = map.point(*q);
            let (uh, _) = eval_mini_field(mesh, &spaces.u, &state.u, tri, *q, &map);
            let ue = exact.u(x, t);
            acc[0] += ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2)) * wq;
            let (ph, _) = eval_p1_field(mesh, &state.p, tri, *q, &map);
            acc[1] += (ph - exact.p(x, t)).powi(2) * wq;
            let (psih, _) = eval_p1_field(mesh, &state.psi, tri, *q, &map);
            acc[2] += (psih - exact.psi(x, t)).powi(2) * wq;
            let (w1h, _) = eval_p1_field(mesh, &state.w1, tri, *q, &map);
            acc[3] += (w1h - exact.w1(x, t)).powi(2) * wq;
            let (w2h, _) = eval_p1_field(mesh, &state.w2, tri, *q, &map);
            acc[4] += (w2h - exact.w2(x, t)).powi(2) * wq;
        }
    }
    Ok(acc)
}

/// Cumulative-in-time errors E(s) = sqrt(dt * sum_n ||s_h^n - s(t^n)||_0^2).
#[derive(Debug, Clone, Copy, Default)]
pub struct TimeErrors {
    pub u: f64,
    pub p: f64,
    pub psi: f64,
    pub w1: f64,
    pub w2: f64,
}

impl TimeErrors {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "u" => self.u,
            "p" => self.p,
            "psi" => self.psi,
            "w1" => self.w1,
            "w2" => self.w2,
            _ => return None,
        })
    }
}

/// One row per refinement level; `param` is h for spatial studies and dt for
/// temporal studies.
#[derive(Debug, Clone, Default)]
pub struct ErrorTable<R> {
    pub param: Vec<f64>,
    pub rows: Vec<R>,
    pub newton_iterations: Vec<Vec<usize>>,
    /// Per level, per time step: the Newton residual norms (index 0 is the
    /// initial residual).  Keeping the full histories lets callers count
    /// iterations against any stopping tolerance coarser than the one the
    /// study actually ran with.
    pub newton_histories: Vec<Vec<Vec<f64>>>,
}

impl<R> ErrorTable<R> {
    /// Observed orders between consecutive levels for the named error
    /// column: rate_i = ln(e_i / e_{i+1}) / ln(param_i / param_{i+1}).
    pub fn rates(&self, column: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..column.len().saturating_sub(1) {
            out.push(
                (column[i] / column[i + 1]).ln() / (self.param[i] / self.param[i + 1]).ln(),
            );
        }
        out
    }
}

/// Configuration of the mesh-refinement study on the unit square with
/// Gamma = bottom + left and Sigma = top + right.
#[derive(Debug, Clone)]
pub struct SpatialStudy {
    pub base_divisions: usize,
    pub levels: usize,
    pub dt: f64,
    pub t_final: f64,
}

impl Default for SpatialStudy {
    fn default() -> Self {
        SpatialStudy {
            base_divisions: 8,
            levels: 5,
            dt: 0.01,
            t_final: 0.04,
        }
    }
}

pub fn convergence_study_spatial(
    params: &ModelParams,
    study: &SpatialStudy,
    opts: &NewtonOptions,
) -> Result<ErrorTable<FieldErrors>> {
    let exact = mms_spatial_family(params);
    let sources = synthesize_sources(exact.clone(), params);
    let bdata = boundary_data_from_exact(exact.clone(), params);

    let mut mesh = build_rect_mesh(
        0.0,
        0.0,
        1.0,
        1.0,
        study.base_divisions,
        study.base_divisions,
        &[Side::Bottom, Side::Left],
    )?;
    let mut table = ErrorTable::default();
    for level in 0..study.levels {
        if level > 0 {
            mesh = refine_uniform(&mesh);
        }
        let spaces = Spaces::build(&mesh);
        let stepper = TimeStepper::new(&mesh, &spaces, params.clone(), study.dt, opts.clone())?;
        let initial = interpolate_state(&mesh, &spaces, exact.as_ref(), 0.0);
        let mut iters = Vec::new();
        let mut histories = Vec::new();
        let mut observer = |_: &State, rep: &StepReport| {
            iters.push(rep.newton_iterations);
            histories.push(rep.residual_history.clone());
        };
        let (final_state, _) = run_transient(
            &stepper,
            initial,
            study.t_final,
            &sources,
            &bdata,
            &mut observer,
        )?;
        let errs = error_norms(&mesh, &spaces, &final_state, exact.as_ref())?;
        table.param.push(mesh.h_max);
        table.rows.push(errs);
        table.newton_iterations.push(iters);
        table.newton_histories.push(histories);
    }
    Ok(table)
}

/// Configuration of the time-step study on a fixed mesh.
#[derive(Debug, Clone)]
pub struct TemporalStudy {
    pub divisions: usize,
    pub dt_list: Vec<f64>,
    pub t_final: f64,
}

impl Default for TemporalStudy {
    fn default() -> Self {
        TemporalStudy {
            divisions: 45,
            dt_list: vec![0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625],
            t_final: 1.0,
        }
    }
}

pub fn convergence_study_temporal(
    params: &ModelParams,
    study: &TemporalStudy,
    opts: &NewtonOptions,
) -> Result<ErrorTable<TimeErrors>> {
    let exact = mms_temporal_family(params);
    let sources = synthesize_sources(exact.clone(), params);
    let bdata = boundary_data_from_exact(exact.clone(), params);

    let mesh = build_rect_mesh(
        0.0,
        0.0,
        1.0,
        1.0,
        study.divisions,
        study.divisions,
        &[Side::Bottom, Side::Left],
    )?;
    let spaces = Spaces::build(&mesh);

    let mut table = ErrorTable::default();
    for &dt in &study.dt_list {
        let n_steps = (study.t_final / dt).round();
        if (n_steps * dt - study.t_final).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} does not divide t_final = {}",
                study.t_final
            )));
        }
        let stepper = TimeStepper::new(&mesh, &spaces, params.clone(), dt, opts.clone())?;
        let initial = interpolate_state(&mesh, &spaces, exact.as_ref(), 0.0);
        let mut acc = [0.0f64; 5];
        let mut iters = Vec::new();
        let mut err: Option<Error> = None;
        let mut histories = Vec::new();
        let mut observer = |s: &State, rep: &StepReport| {
            iters.push(rep.newton_iterations);
            histories.push(rep.residual_history.clone());
            match l2_errors_squared(&mesh, &spaces, s, exact.as_ref()) {
                Ok(e) => {
                    for k in 0..5 {
                        acc[k] += e[k];
                    }
                }
                Err(e) => err = Some(e),
            }
        };
        run_transient(
            &stepper,
            initial,
            study.t_final,
            &sources,
            &bdata,
            &mut observer,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        table.param.push(dt);
        table.rows.push(TimeErrors {
            u: (dt * acc[0]).sqrt(),
            p: (dt * acc[1]).sqrt(),
            psi: (dt * acc[2]).sqrt(),
            w1: (dt * acc[3]).sqrt(),
            w2: (dt * acc[4]).sqrt(),
        });
        table.newton_iterations.push(iters);
        table.newton_histories.push(histories);
    }
    Ok(table)
}

/// The polynomial/trigonometric family used by the mesh-refinement study.
pub fn mms_spatial_family(params: &ModelParams) -> Arc<dyn ExactSolution> {
    Arc::new(MmsSpatial {
        u_inf: params.u_inf,
        lambda: params.lambda,
    })
}

/// The sin(t) family used by the time-step study; its total pressure
/// satisfies the constitutive relation exactly, so S_psi vanishes.
pub fn mms_temporal_family(params: &ModelParams) -> Arc<dyn ExactSolution> {
    Arc::new(MmsTemporal {
        u_inf: params.u_inf,
        lambda: params.lambda,
        alpha: params.alpha,
    })
}

/// Cumulative in-time error E(s) = (dt sum_n ||s_h^n - s(t^n)||_0^2)^(1/2)
/// per field, over a stored trajectory of states (one per accepted step,
/// initial state excluded).
pub fn cumulative_time_error(
    mesh: &Mesh,
    spaces: &Spaces,
    trajectory: &[State],
    exact: &dyn ExactSolution,
    dt: f64,
) -> Result<TimeErrors> {
    let mut acc = [0.0f64; 5];
    for s in trajectory {
        let e = l2_errors_squared(mesh, spaces, s, exact)?;
        for k in 0..5 {
            acc[k] += e[k];
        }
    }
    Ok(TimeErrors {
        u: (dt * acc[0]).sqrt(),
        p: (dt * acc[1]).sqrt(),
        psi: (dt * acc[2]).sqrt(),
        w1: (dt * acc[3]).sqrt(),
        w2: (dt * acc[4]).sqrt(),
    })
}

/// Strong-form residuals of the five equations at one space-time point,
/// computed from the exact *values only* via second-order finite
/// differences plus the synthesized sources. All five residuals tend to
/// zero at second order in `h` when the sources are consistent.
pub fn strong_form_fd_residual(
    exact: &dyn ExactSolution,
    sources: &Sources,
    p: &ModelParams,
    x: [f64; 2],
    t: f64,
    h: f64,
) -> [f64; 5] {
    let f = |x: [f64; 2], t: f64, c: usize| -> f64 {
        match c {
            0 => exact.u(x, t)[0],
            1 => exact.u(x, t)[1],
            2 => exact.p(x, t),
            3 => exact.psi(x, t),
            4 => exact.w1(x, t),
            _ => exact.w2(x, t),
        }
    };
    let dx = |c: usize, d: usize, x: [f64; 2], t: f64| -> f64 {
        let mut xp = x;
        let mut xm = x;
        xp[d] += h;
        xm[d] -= h;
        (f(xp, t, c) - f(xm, t, c)) / (2.0 * h)
    };
    let dxx = |c: usize, d: usize, x: [f64; 2], t: f64| -> f64 {
        let mut xp = x;
        let mut xm = x;
        xp[d] += h;
        xm[d] -= h;
        (f(xp, t, c) - 2.0 * f(x, t, c) + f(xm, t, c)) / (h * h)
    };
    let dxy = |c: usize, x: [f64; 2], t: f64| -> f64 {
        let stencil = |sx: f64, sy: f64| f([x[0] + sx * h, x[1] + sy * h], t, c);
        (stencil(1.0, 1.0) - stencil(1.0, -1.0) - stencil(-1.0, 1.0) + stencil(-1.0, -1.0))
            / (4.0 * h * h)
    };
    let second = |c: usize, a: usize, b: usize, x: [f64; 2], t: f64| -> f64 {
        if a == b {
            dxx(c, a, x, t)
        } else {
            dxy(c, x, t)
        }
    };
    let dt_of = |c: usize, x: [f64; 2]| (f(x, t + h, c) - f(x, t - h, c)) / (2.0 * h);

    // momentum: -mu (lap u + grad div u) + grad psi + tau k (k.grad r) = rho b
    let mut r_mom = [0.0f64; 2];
    for c in 0..2 {
        let lap = dxx(c, 0, x, t) + dxx(c, 1, x, t);
        // grad div u, component c: d_c (d_x u1 + d_y u2)
        let gdiv = second(0, c, 0, x, t) + second(1, c, 1, x, t);
        let gpsi = dx(3, c, x, t);
        let k = p.k_dir;
        let k_dot_gr = k[0] * (dx(4, 0, x, t) + dx(5, 0, x, t))
            + k[1] * (dx(4, 1, x, t) + dx(5, 1, x, t));
        r_mom[c] = -p.mu * (lap + gdiv) + gpsi + p.tau * k[c] * k_dot_gr
            - p.rho * (sources.body_force)(x, t)[c];
    }
    let r_mom_norm = (r_mom[0] * r_mom[0] + r_mom[1] * r_mom[1]).sqrt();

    // fluid: cp p_t - (alpha/lambda) psi_t - (1/eta) kappa : hess p = ell
    let cp = p.c0 + p.alpha * p.alpha / p.lambda;
    let mut kh = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            kh += p.kappa[a][b] * second(2, a, b, x, t);
        }
    }
    let r_fluid =
        cp * dt_of(2, x) - p.alpha / p.lambda * dt_of(3, x) - kh / p.eta - (sources.fluid_source)(x, t);

    // total pressure: psi - alpha p + lambda div u = S_psi
    let div_u = dx(0, 0, x, t) + dx(1, 1, x, t);
    let r_psi = f(x, t, 3) - p.alpha * f(x, t, 2) + p.lambda * div_u - (sources.s_psi)(x, t);

    // species: w_t + u_t . grad w - D : hess w - reaction = S
    let ut = [dt_of(0, x), dt_of(1, x)];
    let div_ut = {
        // d/dt of div u by central differences of the spatial FD
        let d = |tt: f64| dx(0, 0, x, tt) + dx(1, 1, x, tt);
        (d(t + h) - d(t - h)) / (2.0 * h)
    };
    let mut species = [0.0f64; 2];
    for (slot, (c, dmat)) in [(4usize, p.d1), (5usize, p.d2)].iter().enumerate() {
        let mut dh = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                dh += dmat[a][b] * second(*c, a, b, x, t);
            }
        }
        let adv = ut[0] * dx(*c, 0, x, t) + ut[1] * dx(*c, 1, x, t);
        let reac = if *c == 4 {
            reaction_f(f(x, t, 4), f(x, t, 5), div_ut, p)
        } else {
            reaction_g(f(x, t, 4), f(x, t, 5), div_ut, p)
        };
        let src = if *c == 4 {
            (sources.s1)(x, t)
        } else {
            (sources.s2)(x, t)
        };
        species[slot] = dt_of(*c, x) + adv - dh - reac - src;
    }

    [r_mom_norm, r_fluid, r_psi, species[0], species[1]]
}
