use porochem::forms::ModelParams;
use porochem::solver::NewtonOptions;
use porochem::verification::{convergence_study_spatial, SpatialStudy};

fn main() {
    let lambdas = [9.9e2, 9.9e5, 9.9e8];
    for lam in lambdas {
        let mut params = ModelParams::example1();
        params.lambda = lam;
        let study = SpatialStudy::default();
        let mut opts = NewtonOptions::default();
        opts.tol = 1e-8;
        opts.max_iter = 20;
        let t0 = std::time::Instant::now();
        match convergence_study_spatial(&params, &study, &opts) {
            Ok(table) => {
                println!("lambda={lam:e} elapsed {:?}", t0.elapsed());
                for (i, r) in table.rows.iter().enumerate() {
                    println!(
                        "  h={:.5} u_h1={:.4e} p_h1={:.4e} psi_l2={:.4e} w1_h1={:.4e} w2_h1={:.4e}",
                        table.param[i], r.u_h1, r.p_h1, r.psi_l2, r.w1_h1, r.w2_h1
                    );
                }
                for name in ["u_h1", "p_h1", "psi_l2", "w1_h1", "w2_h1"] {
                    let col: Vec<f64> =
                        table.rows.iter().map(|r| r.get(name).unwrap()).collect();
                    println!("  {name} rates: {:?}", table.rates(&col));
                }
            }
            Err(e) => println!("lambda={lam:e} FAILED: {e:?}"),
        }
    }
}
