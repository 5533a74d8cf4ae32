use porochem::fem::Spaces;
use porochem::forms::ModelParams;
use porochem::mesh::{build_rect_mesh, refine_uniform, Side};
use porochem::solver::{NewtonOptions, TimeStepper};
use porochem::verification::{
    boundary_data_from_exact, error_norms, interpolate_state, synthesize_sources, MmsSpatial,
};
use std::sync::Arc;

fn main() {
    let p = ModelParams::example1();
    let exact = Arc::new(MmsSpatial {
        u_inf: p.u_inf,
        lambda: p.lambda,
    });
    let sources = synthesize_sources(exact.clone(), &p);
    let bdata = boundary_data_from_exact(exact.clone(), &p);
    let mut mesh =
        build_rect_mesh(0.0, 0.0, 1.0, 1.0, 8, 8, &[Side::Bottom, Side::Left]).unwrap();
    let opts = NewtonOptions {
        tol: 1e-8,
        ..NewtonOptions::default()
    };
    for level in 0..5 {
        if level > 0 {
            mesh = refine_uniform(&mesh);
        }
        let t0 = std::time::Instant::now();
        let spaces = Spaces::build(&mesh);
        let stepper = TimeStepper::new(&mesh, &spaces, p.clone(), 0.01, opts.clone()).unwrap();
        let mut state = interpolate_state(&mesh, &spaces, exact.as_ref(), 0.0);
        for step in 1..=4 {
            match stepper.solve_time_step(&state, &sources, &bdata) {
                Ok((next, rep)) => {
                    state = next;
                    state.t = 0.01 * step as f64;
                    let gm: Vec<usize> = rep.linear_reports.iter().map(|r| r.iterations).collect();
                    println!(
                        "level {level} step {step}: newton {} gmres {:?} last_res {:.2e}",
                        rep.newton_iterations,
                        gm,
                        rep.residual_history.last().unwrap()
                    );
                }
                Err(e) => {
                    println!("level {level} step {step}: FAILED {e:?}");
                    return;
                }
            }
        }
        let errs = error_norms(&mesh, &spaces, &state, exact.as_ref()).unwrap();
        println!(
            "level {level} h={:.4} elapsed {:?} u_h1={:.4e} psi_l2={:.4e} p_h1={:.4e} w1_h1={:.4e} w2_h1={:.4e}",
            mesh.h_max,
            t0.elapsed(),
            errs.u_h1,
            errs.psi_l2,
            errs.p_h1,
            errs.w1_h1,
            errs.w2_h1
        );
    }
}
