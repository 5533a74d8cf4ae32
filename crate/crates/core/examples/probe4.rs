use porochem::fem::Spaces;
use porochem::forms::ModelParams;
use porochem::mesh::{build_rect_mesh, Side};
use porochem::solver::{NewtonOptions, TimeStepper};
use porochem::verification::{
    boundary_data_from_exact, error_norms, interpolate_state, synthesize_sources, MmsSpatial,
};
use std::sync::Arc;

fn lcg(seed: &mut u64) -> f64 {
    *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*seed >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
}

fn main() {
    let p = ModelParams::example1();
    let exact = Arc::new(MmsSpatial {
        u_inf: p.u_inf,
        lambda: p.lambda,
    });
    let sources = synthesize_sources(exact.clone(), &p);
    let bdata = boundary_data_from_exact(exact.clone(), &p);
    let opts = NewtonOptions {
        tol: 1e-8,
        ..NewtonOptions::default()
    };
    for level in 0..5usize {
        let nx = 8usize << level;
        let mut mesh =
            build_rect_mesh(0.0, 0.0, 1.0, 1.0, nx, nx, &[Side::Bottom, Side::Left]).unwrap();
        // jitter interior vertices by up to 25% of the grid spacing
        let h = 1.0 / nx as f64;
        let mut seed = 42u64 + level as u64;
        for v in mesh.vertices.iter_mut() {
            let eps = 1e-12;
            if v[0] > eps && v[0] < 1.0 - eps && v[1] > eps && v[1] < 1.0 - eps {
                v[0] += 0.25 * h * lcg(&mut seed);
                v[1] += 0.25 * h * lcg(&mut seed);
            }
        }
        // recompute h_max
        let mut hmax = 0.0f64;
        for tri in &mesh.triangles {
            for a in 0..3 {
                let i = tri[a];
                let j = tri[(a + 1) % 3];
                let dx = mesh.vertices[i][0] - mesh.vertices[j][0];
                let dy = mesh.vertices[i][1] - mesh.vertices[j][1];
                hmax = hmax.max((dx * dx + dy * dy).sqrt());
            }
        }
        mesh.h_max = hmax;
        let t0 = std::time::Instant::now();
        let spaces = Spaces::build(&mesh);
        let stepper = TimeStepper::new(&mesh, &spaces, p.clone(), 0.01, opts.clone()).unwrap();
        let mut state = interpolate_state(&mesh, &spaces, exact.as_ref(), 0.0);
        let mut newtons = Vec::new();
        for step in 1..=4 {
            match stepper.solve_time_step(&state, &sources, &bdata) {
                Ok((next, rep)) => {
                    state = next;
                    state.t = 0.01 * step as f64;
                    newtons.push(rep.newton_iterations);
                }
                Err(e) => {
                    println!("level {level} step {step}: FAILED {e:?}");
                    return;
                }
            }
        }
        let errs = error_norms(&mesh, &spaces, &state, exact.as_ref()).unwrap();
        println!(
            "level {level} h={:.4} newton {:?} elapsed {:?} u_h1={:.4e} psi_l2={:.4e} p_h1={:.4e} w1_h1={:.4e} w2_h1={:.4e}",
            mesh.h_max, newtons, t0.elapsed(),
            errs.u_h1, errs.psi_l2, errs.p_h1, errs.w1_h1, errs.w2_h1
        );
    }
}
