//! Pattern-formation experiment on a rectangular slab: periodic traction on
//! the right edge, chemistry seeded at the kinetic steady state plus a small
//! random perturbation, and a scalar time series that quantifies whether the
//! concentrations settle into a stationary pattern.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::fem::{affine_map, eval_p1, quadrature_rule, Spaces};
use crate::forms::{BoundaryData, ModelParams, Sources};
use crate::mesh::{build_rect_mesh, Mesh, Side};
use crate::solver::{initial_state, NewtonOptions, State, StepReport, TimeStepper};

/// Frozen description of one pattern run on (0,1) x (0,0.6) with the
/// traction edge Sigma = {x = 1}.
#[derive(Debug, Clone)]
pub struct PatternRunSpec {
    pub nx: usize,
    pub ny: usize,
    pub gamma: f64,
    pub tau: f64,
    /// Traction t = amplitude * sin(omega t) * n on Sigma.
    pub traction_amplitude: f64,
    pub traction_omega: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Seed of the +-1% perturbation of the kinetic steady state.
    pub seed: u64,
    /// Times at which the full state is kept (matched to the nearest step).
    pub snapshot_times: Vec<f64>,
    pub newton: NewtonOptions,
}

impl Default for PatternRunSpec {
    fn default() -> Self {
        PatternRunSpec {
            nx: 32,
            ny: 19,
            gamma: 0.05,
            tau: 100.0,
            traction_amplitude: 0.5,
            traction_omega: 2.0 * std::f64::consts::PI,
            dt: 0.01,
            t_final: 10.0,
            seed: 20260826,
            snapshot_times: Vec::new(),
            newton: NewtonOptions::default(),
        }
    }
}

impl PatternRunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidArgument("mesh resolution must be positive".into()));
        }
        if !(self.dt > 0.0) || !(self.t_final >= 1.0) {
            return Err(Error::InvalidArgument(
                "need dt > 0 and t_final >= 1".into(),
            ));
        }
        if !self.traction_amplitude.is_finite() || !self.traction_omega.is_finite() {
            return Err(Error::InvalidArgument("traction waveform must be finite".into()));
        }
        Ok(())
    }

    /// Model parameters of the run: the convergence-test set with the
    /// pattern-specific active-stress modulus and dilation feedback.
    pub fn params(&self) -> ModelParams {
        let mut p = ModelParams::example1();
        p.tau = self.tau;
        p.gamma = self.gamma;
        p
    }
}

/// Per-step stabilisation indicator
/// v(t^n) = (||w1^n - w1^{n-1}|| + ||w2^n - w2^{n-1}||) / dt.
#[derive(Debug, Clone, Default)]
pub struct VariationSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl VariationSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Everything a pattern run produces. A solver failure mid-run is reported
/// here together with the series accumulated up to the failing step.
pub struct PatternRun {
    pub mesh: Mesh,
    pub series: VariationSeries,
    pub snapshots: Vec<(f64, State)>,
    pub min_concentration: f64,
    pub failure: Option<Error>,
}

/// Kinetic steady state of the reaction terms: f = g = 0 at
/// w1 = beta2 + beta3, w2 = beta3 / (beta2 + beta3)^2.
pub fn kinetic_steady_state(p: &ModelParams) -> (f64, f64) {
    let w1 = p.beta2 + p.beta3;
    (w1, p.beta3 / (w1 * w1))
}

/// L2 norm of a P1 vertex field.
fn l2_norm_p1(mesh: &Mesh, d: &[f64]) -> f64 {
    let rule = quadrature_rule(2).expect("degree-2 rule exists");
    let mut acc = 0.0f64;
    for tri in 0..mesh.n_triangles() {
        let map = affine_map(mesh, tri).expect("valid element");
        let vs = mesh.triangles[tri];
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let (vals, _) = eval_p1(*q);
            let mut v = 0.0;
            for k in 0..3 {
                v += vals[k] * d[vs[k]];
            }
            acc += w * map.det_abs * 0.5 * v * v;
        }
    }
    acc.sqrt()
}

/// Run the pattern experiment: homogeneous data everywhere except the
/// periodic traction on Sigma (p = 0 held there as well), zero volume
/// sources, and seeded near-uniform initial concentrations.
pub fn run_pattern(spec: &PatternRunSpec) -> Result<PatternRun> {
    spec.validate()?;
    let params = spec.params();
    params.validate()?;
    let mesh = build_rect_mesh(
        0.0,
        0.0,
        1.0,
        0.6,
        spec.nx,
        spec.ny,
        &[Side::Left, Side::Bottom, Side::Top],
    )?;
    let spaces = Spaces::build(&mesh);
    let stepper = TimeStepper::new(&mesh, &spaces, params.clone(), spec.dt, spec.newton.clone())?;

    let (w1s, w2s) = kinetic_steady_state(&params);
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let mut initial = initial_state(&mesh, &spaces, &|_| w1s, &|_| w2s);
    for v in initial.w1.iter_mut() {
        *v *= 1.0 + 0.01 * rng.gen_range(-1.0..1.0);
    }
    for v in initial.w2.iter_mut() {
        *v *= 1.0 + 0.01 * rng.gen_range(-1.0..1.0);
    }

    let amp = spec.traction_amplitude;
    let omega = spec.traction_omega;
    let bdata = BoundaryData {
        traction: Arc::new(move |_x, t, n| {
            let s = amp * (omega * t).sin();
            [s * n[0], s * n[1]]
        }),
        ..BoundaryData::homogeneous()
    };
    let sources = Sources::zero();

    let n_steps = (spec.t_final / spec.dt).round() as usize;
    if n_steps == 0 || (n_steps as f64 * spec.dt - spec.t_final).abs() > 1e-9 * spec.t_final {
        return Err(Error::InvalidArgument(format!(
            "t_final = {} is not an integer number of steps dt = {}",
            spec.t_final, spec.dt
        )));
    }

    let mut run = PatternRun {
        mesh: mesh.clone(),
        series: VariationSeries::default(),
        snapshots: Vec::new(),
        min_concentration: f64::INFINITY,
        failure: None,
    };
    let mut snap_iter = spec
        .snapshot_times
        .iter()
        .map(|&t| (t / spec.dt).round().max(1.0) as usize)
        .collect::<Vec<_>>();
    snap_iter.sort_unstable();
    snap_iter.dedup();

    let mut state = initial;
    for n in 1..=n_steps {
        let (next, _rep): (State, StepReport) =
            match stepper.solve_time_step(&state, &sources, &bdata) {
                Ok(ok) => ok,
                Err(e) => {
                    run.failure = Some(e);
                    return Ok(run);
                }
            };
        let t = n as f64 * spec.dt;
        let d1: Vec<f64> = next.w1.iter().zip(&state.w1).map(|(a, b)| a - b).collect();
        let d2: Vec<f64> = next.w2.iter().zip(&state.w2).map(|(a, b)| a - b).collect();
        let v = (l2_norm_p1(&mesh, &d1) + l2_norm_p1(&mesh, &d2)) / spec.dt;
        run.series.times.push(t);
        run.series.values.push(v);
        for w in next.w1.iter().chain(&next.w2) {
            run.min_concentration = run.min_concentration.min(*w);
        }
        state = next;
        state.t = t;
        if snap_iter.binary_search(&n).is_ok() {
            run.snapshots.push((t, state.clone()));
        }
    }
    Ok(run)
}

/// First time at which the series stays below `threshold` for 10
/// consecutive steps (the time of the tenth step), if any.
pub fn steady_state_time(series: &VariationSeries, threshold: f64) -> Option<f64> {
    if threshold <= 0.0 {
        return None;
    }
    const PERSIST: usize = 10;
    let mut below = 0;
    for (i, &v) in series.values.iter().enumerate() {
        if v < threshold {
            below += 1;
            if below >= PERSIST {
                return Some(series.times[i]);
            }
        } else {
            below = 0;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{reaction_f, reaction_g};

    #[test]
    fn steady_state_kills_the_kinetics() {
        let p = ModelParams::example1();
        let (w1, w2) = kinetic_steady_state(&p);
        assert!((w1 - 0.9).abs() < 1e-12);
        assert!((w2 - 0.95).abs() < 1e-12);
        assert!(reaction_f(w1, w2, 0.0, &p).abs() < 1e-10);
        assert!(reaction_g(w1, w2, 0.0, &p).abs() < 1e-10);
    }

    #[test]
    fn persistence_rule_on_synthetic_series() {
        let mut s = VariationSeries::default();
        for n in 1..=60 {
            s.times.push(n as f64 * 0.01);
            // drops below 1.0 at step 37 and stays
            s.values.push(if n < 37 { 5.0 } else { 0.5 });
        }
        // 10th consecutive step below threshold is step 46
        assert_eq!(steady_state_time(&s, 1.0), Some(0.46));
        // monotone-increasing series never qualifies
        let mut inc = VariationSeries::default();
        for n in 1..=30 {
            inc.times.push(n as f64 * 0.01);
            inc.values.push(n as f64);
        }
        assert_eq!(steady_state_time(&inc, 1.0), None);
        // all-zero series qualifies at the first eligible time
        let mut z = VariationSeries::default();
        for n in 1..=30 {
            z.times.push(n as f64 * 0.01);
            z.values.push(0.0);
        }
        assert_eq!(steady_state_time(&z, 1e-6), Some(0.10));
        assert_eq!(steady_state_time(&z, 0.0), None);
    }

    #[test]
    fn unperturbed_steady_state_stays_put() {
        // tau = 0, traction = 0, no perturbation: nothing moves at all
        let spec = PatternRunSpec {
            nx: 8,
            ny: 5,
            tau: 0.0,
            traction_amplitude: 0.0,
            t_final: 1.0,
            dt: 0.1,
            ..PatternRunSpec::default()
        };
        // bypass the seeded perturbation by running the transient directly
        let params = spec.params();
        let mesh = build_rect_mesh(
            0.0,
            0.0,
            1.0,
            0.6,
            spec.nx,
            spec.ny,
            &[Side::Left, Side::Bottom, Side::Top],
        )
        .unwrap();
        let spaces = Spaces::build(&mesh);
        let stepper =
            TimeStepper::new(&mesh, &spaces, params.clone(), spec.dt, spec.newton.clone()).unwrap();
        let (w1s, w2s) = kinetic_steady_state(&params);
        let mut state = initial_state(&mesh, &spaces, &|_| w1s, &|_| w2s);
        for n in 1..=10 {
            let (next, _) = stepper
                .solve_time_step(&state, &Sources::zero(), &BoundaryData::homogeneous())
                .unwrap();
            state = next;
            state.t = n as f64 * spec.dt;
            let d1: Vec<f64> = state.w1.iter().map(|v| v - w1s).collect();
            let v = l2_norm_p1(&mesh, &d1) / spec.dt;
            assert!(v < 1e-8, "variation {v} at step {n}");
        }
        assert!(state.u.iter().all(|&v| v.abs() < 1e-8));
    }

    #[test]
    fn pattern_run_is_deterministic_and_records_series() {
        // note dt: the kinetics have growth rates of order beta1, so the
        // implicit step must resolve them for Newton to stay in its basin
        let spec = PatternRunSpec {
            nx: 6,
            ny: 4,
            t_final: 1.0,
            dt: 0.01,
            traction_amplitude: 10.0,
            snapshot_times: vec![0.5, 1.0],
            ..PatternRunSpec::default()
        };
        let a = run_pattern(&spec).unwrap();
        let b = run_pattern(&spec).unwrap();
        assert!(a.failure.is_none(), "{:?}", a.failure);
        assert_eq!(a.series.len(), 100);
        assert!(a.series.values.iter().all(|&v| v >= 0.0));
        assert_eq!(a.snapshots.len(), 2);
        assert_eq!(a.series.values, b.series.values);
        assert_eq!(a.snapshots[0].1.w1, b.snapshots[0].1.w1);
    }
}
