use porochem::forms::ModelParams;
use porochem::solver::NewtonOptions;
use porochem::verification::{convergence_study_spatial, SpatialStudy};

fn main() {
    let p = ModelParams::example1();
    let study = SpatialStudy {
        base_divisions: 8,
        levels: 5,
        dt: 0.01,
        t_final: 0.04,
    };
    {
        // interpolation floor at t_final
        use porochem::fem::Spaces;
        use porochem::mesh::{build_rect_mesh, refine_uniform, Side};
        use porochem::verification::{error_norms, interpolate_state, MmsSpatial};
        let exact = MmsSpatial { u_inf: p.u_inf, lambda: p.lambda };
        let mut mesh = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 8, 8, &[Side::Bottom, Side::Left]).unwrap();
        let _ = &mut mesh;
    }
    let t0 = std::time::Instant::now();
    let table = convergence_study_spatial(&p, &study, &NewtonOptions { tol: 1e-7, ..NewtonOptions::default() }).unwrap();
    println!("elapsed {:?}", t0.elapsed());
    for (i, r) in table.rows.iter().enumerate() {
        println!(
            "h={:.4} u_h1={:.4e} psi_l2={:.4e} p_h1={:.4e} w1_h1={:.4e} w2_h1={:.4e} iters={:?}",
            table.param[i], r.u_h1, r.psi_l2, r.p_h1, r.w1_h1, r.w2_h1, table.newton_iterations[i]
        );
    }
    for name in ["u_h1", "psi_l2", "p_h1", "w1_h1", "w2_h1"] {
        let col: Vec<f64> = table.rows.iter().map(|r| r.get(name).unwrap()).collect();
        println!("{name} rates: {:?}", table.rates(&col));
    }
}
