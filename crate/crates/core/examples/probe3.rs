use porochem::fem::Spaces;
use porochem::forms::ModelParams;
use porochem::mesh::{build_rect_mesh, refine_uniform, Side};
use porochem::verification::{error_norms, interpolate_state, MmsSpatial};
use std::sync::Arc;

fn main() {
    let p = ModelParams::example1();
    let exact = Arc::new(MmsSpatial {
        u_inf: p.u_inf,
        lambda: p.lambda,
    });
    let mut mesh =
        build_rect_mesh(0.0, 0.0, 1.0, 1.0, 8, 8, &[Side::Bottom, Side::Left]).unwrap();
    for level in 0..7 {
        if level > 0 {
            mesh = refine_uniform(&mesh);
        }
        let spaces = Spaces::build(&mesh);
        let state = interpolate_state(&mesh, &spaces, exact.as_ref(), 0.04);
        let errs = error_norms(&mesh, &spaces, &state, exact.as_ref()).unwrap();
        println!(
            "level {level} h={:.4} interp: u_h1={:.4e} psi_l2={:.4e} p_h1={:.4e} w1_h1={:.4e}",
            mesh.h_max, errs.u_h1, errs.psi_l2, errs.p_h1, errs.w1_h1
        );
    }
}
