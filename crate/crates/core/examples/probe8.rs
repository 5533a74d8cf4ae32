use porochem::scenarios::{run_pattern, steady_state_time, PatternRunSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let nx: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(32);
    let ny: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(19);
    let amp: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(400.0);
    let t_final: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(10.0);
    for gamma in [0.0, 0.05] {
        let spec = PatternRunSpec {
            nx,
            ny,
            gamma,
            traction_amplitude: amp,
            t_final,
            ..PatternRunSpec::default()
        };
        let t0 = std::time::Instant::now();
        let run = run_pattern(&spec).unwrap();
        if let Some(e) = &run.failure {
            println!("gamma={gamma}: FAILED at step {} {e:?}", run.series.len());
            continue;
        }
        let v = &run.series.values;
        let n = v.len();
        let tail = &v[n - 100..];
        let mean: f64 = tail.iter().sum::<f64>() / 100.0;
        let vmin = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let vmax = tail.iter().cloned().fold(0.0f64, f64::max);
        let v0 = v[0];
        println!(
            "gamma={gamma} amp={amp} v0={v0:.6e} tail mean={mean:.9e} min={vmin:.9e} max={vmax:.9e} steady(1e-4v0)={:?} minw={:.3e} elapsed {:?}",
            steady_state_time(&run.series, 1e-4 * v0),
            run.min_concentration,
            t0.elapsed()
        );
    }
}
