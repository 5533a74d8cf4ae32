use porochem::forms::ModelParams;
use porochem::solver::NewtonOptions;
use porochem::verification::{convergence_study_temporal, TemporalStudy};

fn main() {
    let params = ModelParams::example1();
    let study = TemporalStudy::default();
    let mut opts = NewtonOptions::default();
    opts.tol = 1e-5;
    opts.max_iter = 30;
    opts.max_line_search = 14;
    let t0 = std::time::Instant::now();
    let table = convergence_study_temporal(&params, &study, &opts).unwrap();
    println!("elapsed {:?}", t0.elapsed());
    for (i, r) in table.rows.iter().enumerate() {
        println!(
            "dt={:.6} u={:.4e} p={:.4e} psi={:.4e} w1={:.4e} w2={:.4e}",
            table.param[i], r.u, r.p, r.psi, r.w1, r.w2
        );
    }
    for name in ["u", "p", "psi", "w1", "w2"] {
        let col: Vec<f64> = table.rows.iter().map(|r| r.get(name).unwrap()).collect();
        let rates = table.rates(&col);
        println!("{name} rates: {:?}", rates);
    }
}
