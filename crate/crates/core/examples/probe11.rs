use porochem::fem::Spaces;
use porochem::forms::ModelParams;
use porochem::mesh::{build_rect_mesh, Side};
use porochem::solver::{run_transient, NewtonOptions, StepReport, State, TimeStepper};
use porochem::verification::{
    boundary_data_from_exact, interpolate_state, mms_temporal_family, synthesize_sources,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(45);
    let dt: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let params = ModelParams::example1();
    let exact = mms_temporal_family(&params);
    let sources = synthesize_sources(exact.clone(), &params);
    let bdata = boundary_data_from_exact(exact.clone(), &params);
    let mesh = build_rect_mesh(0.0, 0.0, 1.0, 1.0, n, n, &[Side::Bottom, Side::Left]).unwrap();
    let spaces = Spaces::build(&mesh);
    let mut opts = NewtonOptions::default();
    opts.tol = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-5);
    opts.max_iter = 30;
    opts.max_line_search = 14;
    let stepper = TimeStepper::new(&mesh, &spaces, params.clone(), dt, opts).unwrap();
    let initial = interpolate_state(&mesh, &spaces, exact.as_ref(), 0.0);
    let mut obs = |s: &State, rep: &StepReport| {
        println!("t={:.3} iters={} hist={:?}", s.t, rep.newton_iterations, rep.residual_history);
    };
    match run_transient(&stepper, initial, 1.0, &sources, &bdata, &mut obs) {
        Ok(_) => println!("ok"),
        Err(e) => println!("ERR {e:?}"),
    }
}
