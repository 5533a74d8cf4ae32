//! Headless self-checks for the `check` subcommand: the finite-difference
//! strong-form oracle for both manufactured families, the interpolation-rate
//! check of the error norms, and the kinetic steady state.

use std::sync::Arc;

use porochem::fem::Spaces;
use porochem::forms::ModelParams;
use porochem::mesh::{build_rect_mesh, refine_uniform, Side};
use porochem::scenarios::kinetic_steady_state;
use porochem::verification::{
    error_norms, interpolate_state, mms_spatial_family, mms_temporal_family, strong_form_fd_residual,
    synthesize_sources, ExactSolution,
};

pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn lcg(seed: &mut u64) -> f64 {
    *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    (*seed >> 11) as f64 / (1u64 << 53) as f64
}

/// FD strong-form residuals at `n` random interior space-time points must
/// shrink at second order between steps 2e-3 and 1e-3 (where truncation
/// dominates the eps/h^2 cancellation noise) and reach `floor` at 1e-4.
fn fd_oracle(
    name: &str,
    exact: Arc<dyn ExactSolution>,
    params: &ModelParams,
    n: usize,
    floor: f64,
) -> CheckOutcome {
    let sources = synthesize_sources(exact.clone(), params);
    let mut seed = 7u64;
    let mut worst_ratio = 0.0f64;
    let mut worst_fine = 0.0f64;
    for _ in 0..n {
        let x = [0.1 + 0.8 * lcg(&mut seed), 0.1 + 0.8 * lcg(&mut seed)];
        let t = 0.2 + 0.6 * lcg(&mut seed);
        let coarse = strong_form_fd_residual(exact.as_ref(), &sources, params, x, t, 2e-3);
        let mid = strong_form_fd_residual(exact.as_ref(), &sources, params, x, t, 1e-3);
        let fine = strong_form_fd_residual(exact.as_ref(), &sources, params, x, t, 1e-4);
        for k in 0..5 {
            worst_fine = worst_fine.max(fine[k].abs());
            // components already at the round-off floor carry no decay signal
            if mid[k].abs() > 1e-8 {
                worst_ratio = worst_ratio.max(mid[k].abs() / coarse[k].abs().max(1e-300));
            }
        }
    }
    // second order: quartering expected, allow slack
    let passed = worst_fine <= floor && worst_ratio <= 0.5;
    CheckOutcome {
        name: name.into(),
        passed,
        detail: format!("max residual {worst_fine:.3e} at step 1e-4 (floor {floor:.1e}), worst 2e-3 -> 1e-3 ratio {worst_ratio:.3}"),
    }
}

fn interpolation_rates() -> CheckOutcome {
    let params = ModelParams::example1();
    let exact = mms_spatial_family(&params);
    let mut mesh = build_rect_mesh(0.0, 0.0, 1.0, 1.0, 8, 8, &[Side::Bottom, Side::Left]).unwrap();
    let mut l2 = Vec::new();
    let mut h1 = Vec::new();
    for level in 0..3 {
        if level > 0 {
            mesh = refine_uniform(&mesh);
        }
        let spaces = Spaces::build(&mesh);
        let state = interpolate_state(&mesh, &spaces, exact.as_ref(), 0.04);
        let e = error_norms(&mesh, &spaces, &state, exact.as_ref()).unwrap();
        l2.push(e.w1_l2);
        h1.push(e.w1_h1);
    }
    let rl2 = (l2[1] / l2[2]).ln() / 2f64.ln();
    let rh1 = (h1[1] / h1[2]).ln() / 2f64.ln();
    let passed = (rl2 - 2.0).abs() <= 0.1 && (rh1 - 1.0).abs() <= 0.1;
    CheckOutcome {
        name: "interpolation rates".into(),
        passed,
        detail: format!("L2 rate {rl2:.3} (want 2.0 +- 0.1), H1 rate {rh1:.3} (want 1.0 +- 0.1)"),
    }
}

fn steady_state() -> CheckOutcome {
    let p = ModelParams::example1();
    let (w1, w2) = kinetic_steady_state(&p);
    let f = porochem::forms::reaction_f(w1, w2, 0.0, &p);
    let g = porochem::forms::reaction_g(w1, w2, 0.0, &p);
    let passed = f.abs() < 1e-10 && g.abs() < 1e-10;
    CheckOutcome {
        name: "kinetic steady state".into(),
        passed,
        detail: format!("f = {f:.3e}, g = {g:.3e} at ({w1}, {w2})"),
    }
}

/// Run every self-check; returns all outcomes (callers decide on exit code).
pub fn run_self_checks() -> Vec<CheckOutcome> {
    let paper = ModelParams::example1();
    // absolute FD floors need O(1) stiffness; the oracle with the full
    // parameter set is checked relative to the forcing scale instead
    let mut o1 = paper.clone();
    o1.mu = 1.0;
    o1.lambda = 2.0;
    o1.tau = 0.5;
    o1.beta1 = 3.0;
    o1.kappa = [[1.0, 0.0], [0.0, 1.0]];
    o1.eta = 1.0;
    o1.c0 = 0.1;

    vec![
        fd_oracle(
            "fd strong-form oracle (spatial family)",
            mms_spatial_family(&o1),
            &o1,
            100,
            1e-6,
        ),
        fd_oracle(
            "fd strong-form oracle (temporal family)",
            mms_temporal_family(&o1),
            &o1,
            100,
            1e-6,
        ),
        interpolation_rates(),
        steady_state(),
    ]
}
