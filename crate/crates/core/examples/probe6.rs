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
            println!("gamma={gamma}: FAILED {e:?}");
            continue;
        }
        let v0 = run.series.values[0];
        let thr = 1e-4 * v0;
        let sst = steady_state_time(&run.series, thr);
        println!(
            "gamma={gamma} amp={amp} nx={nx} v0={v0:.4e} thr={thr:.4e} steady={sst:?} minw={:.4e} elapsed {:?}",
            run.min_concentration,
            t0.elapsed()
        );
        for (i, (t, v)) in run.series.times.iter().zip(&run.series.values).enumerate() {
            if i % 50 == 49 || i < 3 {
                println!("  t={t:.2} v={v:.4e}");
            }
        }
    }
}
