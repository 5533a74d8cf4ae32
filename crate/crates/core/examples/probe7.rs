use porochem::fem::{affine_map, eval_mini_field, quadrature_rule, Spaces};
use porochem::forms::{BoundaryData, ModelParams, Sources};
use porochem::mesh::{build_rect_mesh, Side};
use porochem::scenarios::kinetic_steady_state;
use porochem::solver::{initial_state, NewtonOptions, TimeStepper};
use std::sync::Arc;

fn main() {
    let mut p = ModelParams::example1();
    p.tau = 100.0;
    p.gamma = 0.0;
    let amp = 400.0;
    let omega = 2.0 * std::f64::consts::PI;
    let mesh = build_rect_mesh(0.0, 0.0, 1.0, 0.6, 32, 19, &[Side::Left, Side::Bottom, Side::Top]).unwrap();
    let spaces = Spaces::build(&mesh);
    let dt = 0.01;
    let stepper = TimeStepper::new(&mesh, &spaces, p.clone(), dt, NewtonOptions::default()).unwrap();
    let (w1s, w2s) = kinetic_steady_state(&p);
    let mut state = initial_state(&mesh, &spaces, &|_| w1s, &|_| w2s);
    // perturb a little so a pattern forms
    for (i, v) in state.w1.iter_mut().enumerate() {
        *v *= 1.0 + 0.01 * ((i as f64 * 0.7).sin());
    }
    let bdata = BoundaryData {
        traction: Arc::new(move |_x, t, n| {
            let s = amp * (omega * t).sin();
            [s * n[0], s * n[1]]
        }),
        ..BoundaryData::homogeneous()
    };
    let sources = Sources::zero();
    let rule = quadrature_rule(2).unwrap();
    let mut prev_u = state.u.clone();
    for n in 1..=600usize {
        let (next, _) = stepper.solve_time_step(&state, &sources, &bdata).unwrap();
        state = next;
        state.t = n as f64 * dt;
        if n % 100 == 25 {
            // measure the dilation-rate and velocity fields
            let mut div_max = 0.0f64;
            let mut div_l2 = 0.0f64;
            let mut vel_max = 0.0f64;
            let du: Vec<f64> = state.u.iter().zip(&prev_u).map(|(a, b)| (a - b) / dt).collect();
            for tri in 0..mesh.n_triangles() {
                let map = affine_map(&mesh, tri).unwrap();
                for (q, w) in rule.points.iter().zip(&rule.weights) {
                    let (v, g) = eval_mini_field(&mesh, &spaces.u, &du, tri, *q, &map);
                    let d = g[0][0] + g[1][1];
                    div_max = div_max.max(d.abs());
                    div_l2 += w * map.det_abs * 0.5 * d * d;
                    vel_max = vel_max.max((v[0] * v[0] + v[1] * v[1]).sqrt());
                }
            }
            println!(
                "t={:.2} |divrate|_max={:.3e} |divrate|_L2={:.3e} |vel|_max={:.3e} gamma_term_max={:.3e}",
                state.t, div_max, div_l2.sqrt(), vel_max, 0.05 * 0.9 * div_max
            );
        }
        prev_u = state.u.clone();
    }
}
